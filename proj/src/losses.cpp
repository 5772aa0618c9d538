#include "edmgen/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace edmgen {

using diff::Tape;
using diff::Var;

double loss_edm(const SquaredDistanceMatrix& d) {
    const Spectrum s = eig_sym(schoenberg_operator(d));
    double acc = 0.0;
    for (int i = 0; i < s.eigenvalues.size(); ++i) {
        const double neg = std::max(-s.eigenvalues(i), 0.0);
        acc += neg * neg;
    }
    return acc;
}

double loss_rank(const GramMatrix& m, int d) {
    const Spectrum s = eig_sym(m.entries);
    double acc = 0.0;
    for (int i = d; i < s.eigenvalues.size(); ++i)
        acc += s.eigenvalues(i) * s.eigenvalues(i);
    return acc;
}

double loss_repulsion(const SquaredDistanceMatrix& d, double r, double k_rep,
                      bool two_sided) {
    const int n = d.n();
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dist = std::sqrt(std::max(d.entries(i, j), 0.0));
            const double dev = two_sided ? dist - r : std::max(r - dist, 0.0);
            acc += dev * dev;
        }
    return 0.5 * k_rep * acc;
}

double loss_types(const Mat& t, const Mat& t_ref, double eps_log) {
    if (t.rows() != t_ref.rows() || t.cols() != t_ref.cols())
        throw std::invalid_argument("loss_types: shape mismatch");
    double acc = 0.0;
    for (Eigen::Index i = 0; i < t.size(); ++i)
        acc -= t_ref(i) * std::log(t(i) + eps_log);
    return acc / static_cast<double>(t.rows());
}

Var loss_edm_batch(Tape& tape, Var d_rows, int n) {
    Var mu = tape.eigvals_batch(tape.schoenberg_batch(d_rows, n), n);
    return tape.rowsum(tape.square(tape.relu(tape.neg(mu))));
}

Var loss_rank_batch(Tape& tape, Var m_rows, int n, int d) {
    Var lam = tape.eigvals_batch(m_rows, n);
    if (d >= n) return tape.scale(tape.rowsum(lam), 0.0);
    return tape.rowsum(tape.square(tape.col_slice(lam, d, n)));
}

Var loss_repulsion_batch(Tape& tape, Var d_rows, int n, double r, double k_rep,
                         bool two_sided) {
    const int m = static_cast<int>(tape.value(d_rows).rows());
    Mat hollow = Mat::Ones(m, n * n);
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < n; ++i) hollow(s, i * n + i) = 0.0;
    Var dist = tape.sqrt_safe(d_rows);
    Var dev = two_sided ? tape.add_scalar(dist, -r)
                        : tape.relu(tape.add_scalar(tape.neg(dist), r));
    return tape.scale(tape.rowsum(tape.cmul(tape.square(dev), hollow)), 0.5 * k_rep);
}

Var loss_types_batch(Tape& tape, Var t_rows, int n, const Mat& t_ref, double eps_log) {
    const int rows = static_cast<int>(tape.value(t_rows).rows());
    const int m = rows / n;
    Mat ref_tiled(rows, t_ref.cols());
    for (int s = 0; s < m; ++s) ref_tiled.middleRows(static_cast<Eigen::Index>(s) * n, n) = t_ref;
    Var ce = tape.rowsum(tape.cmul(tape.log_eps(t_rows, eps_log), ref_tiled));
    return tape.scale(tape.group_sum_rows(ce, n), -1.0 / n);
}

ParamVars SchNetCritic::insert(Tape& tape, bool requires_grad) const {
    return insert_params(tape, *store_, "critic/", requires_grad);
}

Var SchNetCritic::values(Tape& tape, const ParamVars& params, Var d_rows, Var t_rows,
                         int n) const {
    return critic_forward(tape, d_rows, t_rows, params, cfg_, n);
}

FlatBatch flatten_samples(const std::vector<TypedSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("flatten_samples: empty batch");
    FlatBatch out;
    out.n = samples.front().d.n();
    const int m = static_cast<int>(samples.size());
    const int n = out.n;
    out.d_rows.resize(m, n * n);
    out.t_rows.resize(static_cast<Eigen::Index>(m) * n, samples.front().t.cols());
    for (int s = 0; s < m; ++s) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out.d_rows(s, i * n + j) = samples[s].d.entries(i, j);
        out.t_rows.middleRows(static_cast<Eigen::Index>(s) * n, n) = samples[s].t;
    }
    return out;
}

Var gradient_penalty_batch(Tape& tape, const CriticModel& critic, const ParamVars& params,
                           const FlatBatch& real, const FlatBatch& fake, double lambda_gp,
                           double fd_eps, std::mt19937_64& rng) {
    if (real.m() != fake.m() || real.n != fake.n)
        throw std::invalid_argument("gradient_penalty: batch shape mismatch");
    const int m = real.m();
    const int n = real.n;
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Mat dhat(m, n * n);
    Mat that(real.t_rows.rows(), real.t_rows.cols());
    for (int s = 0; s < m; ++s) {
        const double alpha = unif(rng);
        dhat.row(s) = alpha * real.d_rows.row(s) + (1.0 - alpha) * fake.d_rows.row(s);
        that.middleRows(static_cast<Eigen::Index>(s) * n, n) =
            alpha * real.t_rows.middleRows(static_cast<Eigen::Index>(s) * n, n) +
            (1.0 - alpha) * fake.t_rows.middleRows(static_cast<Eigen::Index>(s) * n, n);
    }

    // Exact input gradient on a side tape; frozen before entering the loss.
    Mat gd = Mat::Zero(m, n * n);
    Mat gt = Mat::Zero(that.rows(), that.cols());
    {
        Tape side;
        ParamVars p = critic.insert(side, false);
        Var dh = side.leaf(dhat, true);
        Var th = side.leaf(that, true);
        Var c = critic.values(side, p, dh, th, n);
        side.backward(side.sum(c));
        if (side.grad(dh).size() != 0) gd = side.grad(dh);
        if (side.grad(th).size() != 0) gt = side.grad(th);
    }

    // Normalize per pair over the concatenated (D, t) entries.
    Mat vd = gd, vt = gt;
    for (int s = 0; s < m; ++s) {
        auto ts = vt.middleRows(static_cast<Eigen::Index>(s) * n, n);
        double norm = std::sqrt(vd.row(s).squaredNorm() + ts.squaredNorm());
        if (norm < 1e-12) {
            // Zero input gradient: probe along a fixed direction instead.
            vd.row(s).setOnes();
            ts.setOnes();
            norm = std::sqrt(vd.row(s).squaredNorm() + ts.squaredNorm());
        }
        vd.row(s) /= norm;
        ts /= norm;
    }

    Var c_plus = critic.values(tape, params, tape.constant(dhat + fd_eps * vd),
                               tape.constant(that + fd_eps * vt), n);
    Var c_minus = critic.values(tape, params, tape.constant(dhat - fd_eps * vd),
                                tape.constant(that - fd_eps * vt), n);
    Var norm_fd = tape.scale(tape.sub(c_plus, c_minus), 1.0 / (2.0 * fd_eps));
    return tape.scale(tape.mean(tape.square(tape.add_scalar(norm_fd, -1.0))), lambda_gp);
}

CriticLossResult critic_loss(const CriticModel& critic, const std::vector<TypedSample>& real,
                             const std::vector<TypedSample>& fake, const LossWeights& w,
                             std::mt19937_64& rng, ParameterStore* grad_into) {
    const FlatBatch fr = flatten_samples(real);
    const FlatBatch ff = flatten_samples(fake);
    Tape tape;
    ParamVars params = critic.insert(tape, grad_into != nullptr);
    Var c_real = critic.values(tape, params, tape.constant(fr.d_rows),
                               tape.constant(fr.t_rows), fr.n);
    Var c_fake = critic.values(tape, params, tape.constant(ff.d_rows),
                               tape.constant(ff.t_rows), ff.n);
    Var wgan = tape.sub(tape.mean(c_fake), tape.mean(c_real));
    Var gp = gradient_penalty_batch(tape, critic, params, fr, ff, w.lambda_gp,
                                    w.gp_fd_eps, rng);
    Var drift = tape.scale(tape.mean(tape.square(c_real)), w.eps_drift);
    Var total = tape.add(tape.add(wgan, gp), drift);

    CriticLossResult res;
    res.total = tape.scalar(total);
    res.wasserstein = -tape.scalar(wgan);  // mean real - mean fake
    res.gp = tape.scalar(gp);
    res.drift = tape.scalar(drift);
    if (grad_into) {
        tape.backward(total);
        accumulate_param_grads(tape, params, *grad_into);
    }
    return res;
}

GeneratorLossVars generator_loss_batch(Tape& tape, const CriticModel& critic,
                                       const ParamVars& critic_params,
                                       const SampleBatchVars& batch, int n,
                                       const Mat& t_ref, const LossWeights& w,
                                       SpdMode mode) {
    Var c = critic.values(tape, critic_params, batch.d_rows, batch.t_rows, n);
    Var critic_term = tape.neg(tape.mean(c));
    Var types = tape.mean(loss_types_batch(tape, batch.t_rows, n, t_ref, w.eps_log));
    Var rep = tape.mean(loss_repulsion_batch(tape, batch.d_rows, n, w.r_min_data,
                                             w.k_rep, w.repulsion_two_sided));
    Var edm = tape.scale(tape.mean(loss_edm_batch(tape, batch.d_rows, n)), w.eta1);
    Var total = tape.add(tape.add(critic_term, types), tape.add(rep, edm));

    GeneratorLossVars out;
    out.critic_term = tape.scalar(critic_term);
    out.types = tape.scalar(types);
    out.repulsion = tape.scalar(rep);
    out.edm = tape.scalar(edm);
    if (mode == SpdMode::SoftplusAll) {
        Var rank = tape.scale(tape.mean(loss_rank_batch(tape, batch.m_rows, n, w.embed_dim)),
                              w.eta2);
        out.rank = tape.scalar(rank);
        total = tape.add(total, rank);
    }
    out.total = total;
    return out;
}

GeneratorLossResult generator_loss(const CriticModel& critic,
                                   const std::vector<TypedSample>& fake,
                                   const LossWeights& w, const Mat& t_ref, SpdMode mode) {
    const FlatBatch ff = flatten_samples(fake);
    GeneratorLossResult res;
    {
        Tape tape;
        ParamVars params = critic.insert(tape, false);
        Var c = critic.values(tape, params, tape.constant(ff.d_rows),
                              tape.constant(ff.t_rows), ff.n);
        res.critic_term = -tape.value(tape.mean(c))(0, 0);
    }
    for (const auto& s : fake) {
        res.types += loss_types(s.t, t_ref, w.eps_log);
        res.repulsion += loss_repulsion(s.d, w.r_min_data, w.k_rep, w.repulsion_two_sided);
        res.edm += w.eta1 * loss_edm(s.d);
        if (mode == SpdMode::SoftplusAll)
            res.rank += w.eta2 * loss_rank(gram_from_edm(s.d), w.embed_dim);
    }
    const double m = static_cast<double>(fake.size());
    res.types /= m;
    res.repulsion /= m;
    res.edm /= m;
    res.rank /= m;
    res.total = res.critic_term + res.types + res.repulsion + res.edm + res.rank;
    return res;
}

}  // namespace edmgen
