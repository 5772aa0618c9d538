#include "edmgen/networks.hpp"

#include <cmath>
#include <stdexcept>

#include "edmgen/kernels.hpp"

namespace edmgen {

using diff::Tape;
using diff::Var;

Vec rbf_centers(const CriticConfig& cfg) {
    if (cfg.rbf_n_basis < 2) throw std::invalid_argument("rbf: n_basis must be >= 2");
    if (!(cfg.rbf_min < cfg.rbf_max)) throw std::invalid_argument("rbf: r_min must be < r_max");
    Vec c(cfg.rbf_n_basis);
    const double step = (cfg.rbf_max - cfg.rbf_min) / (cfg.rbf_n_basis - 1);
    for (int i = 0; i < cfg.rbf_n_basis; ++i) c(i) = cfg.rbf_min + i * step;
    return c;
}

Mat rbf_expand(const Mat& distances, const CriticConfig& cfg) {
    const int n = static_cast<int>(distances.rows());
    Mat flat(1, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) flat(0, i * n + j) = distances(i, j);
    Mat out;
    kernels::rbf_forward(flat, rbf_centers(cfg), cfg.rbf_gamma, out);
    return out;
}

namespace {
Mat glorot(int rows, int cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

void add_dense(ParameterStore& store, const std::string& name, int in, int out,
               std::mt19937_64& rng) {
    store.add(name + "/w", glorot(in, out, rng));
    store.add(name + "/b", Mat::Zero(1, out));
}

Var dense(Tape& tape, Var x, const ParamVars& p, const std::string& name) {
    return tape.affine(x, p.at(name + "/w"), p.at(name + "/b"));
}
}  // namespace

void init_generator_params(ParameterStore& store, const GeneratorConfig& cfg,
                           std::mt19937_64& rng) {
    int in = cfg.noise_dim;
    for (size_t i = 0; i < cfg.hidden.size(); ++i) {
        add_dense(store, "gen/trunk" + std::to_string(i), in, cfg.hidden[i], rng);
        in = cfg.hidden[i];
    }
    const int k = cfg.n - 1;
    add_dense(store, "gen/head_matrix", in, k * k, rng);
    add_dense(store, "gen/head_types", in, cfg.n * cfg.n_types, rng);
}

void init_critic_params(ParameterStore& store, const CriticConfig& cfg, int n_types,
                        std::mt19937_64& rng) {
    const int f = cfg.feature_dim;
    store.add("critic/embedding", glorot(n_types, f, rng));
    for (int b = 0; b < cfg.n_interactions; ++b) {
        const std::string pre = "critic/block" + std::to_string(b);
        add_dense(store, pre + "/filter0", cfg.rbf_n_basis, f, rng);
        add_dense(store, pre + "/filter1", f, f, rng);
        add_dense(store, pre + "/in2f", f, f, rng);
        add_dense(store, pre + "/out0", f, f, rng);
        add_dense(store, pre + "/out1", f, f, rng);
    }
    add_dense(store, "critic/readout0", f, f / 2, rng);
    add_dense(store, "critic/readout1", f / 2, 1, rng);
}

ParamVars insert_params(Tape& tape, const ParameterStore& store,
                        const std::string& prefix, bool requires_grad) {
    ParamVars vars;
    for (const auto& [name, t] : store)
        if (name.rfind(prefix, 0) == 0)
            vars.emplace(name, tape.leaf(t.value, requires_grad));
    return vars;
}

void accumulate_param_grads(Tape& tape, const ParamVars& vars, ParameterStore& store) {
    for (const auto& [name, v] : vars) {
        const Mat& g = tape.grad(v);
        if (g.size() != 0) store.at(name).grad += g;
    }
}

GeneratorHeads generator_forward(Tape& tape, Var z, const ParamVars& params,
                                 const GeneratorConfig& cfg) {
    if (tape.value(z).cols() != cfg.noise_dim)
        throw std::invalid_argument("generator_forward: noise dimension mismatch");
    Var h = z;
    for (size_t i = 0; i < cfg.hidden.size(); ++i)
        h = tape.leaky_relu(dense(tape, h, params, "gen/trunk" + std::to_string(i)));
    return GeneratorHeads{dense(tape, h, params, "gen/head_matrix"),
                          dense(tape, h, params, "gen/head_types")};
}

SampleBatchVars generate_sample_batch(Tape& tape, const GeneratorHeads& heads,
                                      const GeneratorConfig& cfg, SpdMode mode, int d) {
    const int k = cfg.n - 1;
    Var l_sym = tape.sym_batch(heads.x_rows, k);
    Var l_psd = tape.spd_project_batch(l_sym, k, mode, d);
    Var m_rows = tape.gram_pad_batch(l_psd, k);
    Var d_rows = tape.edm_from_gram_batch(m_rows, cfg.n);
    const int m = static_cast<int>(tape.value(heads.logits).rows());
    Var t_rows = tape.row_softmax(
        tape.reshape_rowmajor(heads.logits, m * cfg.n, cfg.n_types));
    return SampleBatchVars{d_rows, m_rows, t_rows};
}

Var critic_forward(Tape& tape, Var d_rows, Var t_rows, const ParamVars& params,
                   const CriticConfig& cfg, int n) {
    const Vec centers = rbf_centers(cfg);
    Var r = tape.sqrt_safe(d_rows);
    Var features = tape.rbf_expand(r, centers, cfg.rbf_gamma);
    Var x = tape.matmul(t_rows, params.at("critic/embedding"));
    for (int b = 0; b < cfg.n_interactions; ++b) {
        const std::string pre = "critic/block" + std::to_string(b);
        Var w = tape.shifted_softplus(dense(tape, features, params, pre + "/filter0"));
        w = tape.shifted_softplus(dense(tape, w, params, pre + "/filter1"));
        Var h = dense(tape, x, params, pre + "/in2f");
        Var conv = tape.cfconv(w, h, n);
        Var v = tape.shifted_softplus(dense(tape, conv, params, pre + "/out0"));
        v = dense(tape, v, params, pre + "/out1");
        x = tape.add(x, v);
    }
    Var a = tape.shifted_softplus(dense(tape, x, params, "critic/readout0"));
    Var per_atom = dense(tape, a, params, "critic/readout1");
    return tape.group_sum_rows(per_atom, n);
}

std::vector<TypedSample> generate_samples(const ParameterStore& store,
                                          const GeneratorConfig& cfg, const Mat& z,
                                          SpdMode mode, int d) {
    Tape tape;
    ParamVars params = insert_params(tape, store, "gen/", false);
    Var zv = tape.leaf(z, false);
    GeneratorHeads heads = generator_forward(tape, zv, params, cfg);
    SampleBatchVars batch = generate_sample_batch(tape, heads, cfg, mode, d);
    const Mat& d_rows = tape.value(batch.d_rows);
    const Mat& t_rows = tape.value(batch.t_rows);
    const int m = static_cast<int>(z.rows());
    std::vector<TypedSample> out(m);
    for (int s = 0; s < m; ++s) {
        out[s].d.entries = unflatten_row(d_rows, s, cfg.n);
        out[s].t = t_rows.middleRows(static_cast<Eigen::Index>(s) * cfg.n, cfg.n);
    }
    return out;
}

double critic_value(const ParameterStore& store, const CriticConfig& cfg,
                    const TypedSample& sample) {
    Tape tape;
    ParamVars params = insert_params(tape, store, "critic/", false);
    const int n = sample.d.n();
    Mat d_rows(1, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) d_rows(0, i * n + j) = sample.d.entries(i, j);
    Var c = critic_forward(tape, tape.leaf(d_rows, false), tape.leaf(sample.t, false),
                           params, cfg, n);
    return tape.value(c)(0, 0);
}

Mat flatten_batch(const std::vector<Mat>& mats) {
    const int m = static_cast<int>(mats.size());
    const int k = static_cast<int>(mats.front().rows());
    Mat rows(m, k * k);
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) rows(s, i * k + j) = mats[s](i, j);
    return rows;
}

Mat stack_rows(const std::vector<Mat>& mats) {
    Eigen::Index rows = 0;
    for (const auto& m : mats) rows += m.rows();
    Mat out(rows, mats.front().cols());
    Eigen::Index at = 0;
    for (const auto& m : mats) {
        out.middleRows(at, m.rows()) = m;
        at += m.rows();
    }
    return out;
}

Mat unflatten_row(const Mat& rows, int r, int k) {
    Mat a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = rows(r, i * k + j);
    return a;
}

}  // namespace edmgen
