#include "edmgen/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace edmgen {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {
void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key))
            throw std::invalid_argument("unknown key '" + key + "' in " + where);
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}
}  // namespace

TrainConfig parse_run_config_json(const std::string& text) {
    const json doc = json::parse(text);
    TrainConfig cfg;
    require_keys(doc, {"seed", "batch_size", "n_critic", "generator_steps",
                       "checkpoint_interval", "optimizer", "loss", "generator", "critic",
                       "dataset", "split_fraction", "split_seed", "output_dir"},
                 "run config");
    maybe(doc, "seed", cfg.seed);
    maybe(doc, "batch_size", cfg.batch_size);
    maybe(doc, "n_critic", cfg.n_critic);
    maybe(doc, "generator_steps", cfg.generator_steps);
    maybe(doc, "checkpoint_interval", cfg.checkpoint_interval);
    maybe(doc, "split_fraction", cfg.split_fraction);
    maybe(doc, "split_seed", cfg.split_seed);
    maybe(doc, "output_dir", cfg.output_dir);
    if (doc.contains("optimizer")) {
        const json& o = doc.at("optimizer");
        require_keys(o, {"learning_rate", "beta1", "beta2", "eps"}, "optimizer");
        maybe(o, "learning_rate", cfg.optimizer.learning_rate);
        maybe(o, "beta1", cfg.optimizer.beta1);
        maybe(o, "beta2", cfg.optimizer.beta2);
        maybe(o, "eps", cfg.optimizer.eps);
    }
    if (doc.contains("loss")) {
        const json& o = doc.at("loss");
        require_keys(o, {"eta1", "eta2", "lambda_gp", "eps_drift", "k_rep",
                         "repulsion_two_sided", "eps_log", "gp_fd_eps", "embed_dim"},
                     "loss");
        maybe(o, "eta1", cfg.loss.eta1);
        maybe(o, "eta2", cfg.loss.eta2);
        maybe(o, "lambda_gp", cfg.loss.lambda_gp);
        maybe(o, "eps_drift", cfg.loss.eps_drift);
        maybe(o, "k_rep", cfg.loss.k_rep);
        maybe(o, "repulsion_two_sided", cfg.loss.repulsion_two_sided);
        maybe(o, "eps_log", cfg.loss.eps_log);
        maybe(o, "gp_fd_eps", cfg.loss.gp_fd_eps);
        maybe(o, "embed_dim", cfg.loss.embed_dim);
    }
    if (doc.contains("generator")) {
        const json& o = doc.at("generator");
        require_keys(o, {"noise_dim", "hidden"}, "generator");
        maybe(o, "noise_dim", cfg.generator.noise_dim);
        maybe(o, "hidden", cfg.generator.hidden);
    }
    if (doc.contains("critic")) {
        const json& o = doc.at("critic");
        require_keys(o, {"feature_dim", "n_interactions", "rbf_min", "rbf_max",
                         "rbf_n_basis", "rbf_gamma"},
                     "critic");
        maybe(o, "feature_dim", cfg.critic.feature_dim);
        maybe(o, "n_interactions", cfg.critic.n_interactions);
        maybe(o, "rbf_min", cfg.critic.rbf_min);
        maybe(o, "rbf_max", cfg.critic.rbf_max);
        maybe(o, "rbf_n_basis", cfg.critic.rbf_n_basis);
        maybe(o, "rbf_gamma", cfg.critic.rbf_gamma);
    }
    if (doc.contains("dataset")) {
        const json& o = doc.at("dataset");
        require_keys(o, {"type", "template_count", "n", "noise_sigma", "size", "seed",
                         "path", "formula"},
                     "dataset");
        maybe(o, "type", cfg.dataset.type);
        maybe(o, "template_count", cfg.dataset.template_count);
        maybe(o, "n", cfg.dataset.n);
        maybe(o, "noise_sigma", cfg.dataset.noise_sigma);
        maybe(o, "size", cfg.dataset.size);
        maybe(o, "seed", cfg.dataset.seed);
        maybe(o, "path", cfg.dataset.path);
        maybe(o, "formula", cfg.dataset.formula);
    }
    if (cfg.batch_size < 2)
        throw std::invalid_argument("batch_size must be >= 2 (gradient penalty needs pairs)");
    if (cfg.n_critic < 1) throw std::invalid_argument("n_critic must be >= 1");
    return cfg;
}

TrainConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config_json(ss.str());
}

std::string run_config_to_json(const TrainConfig& cfg) {
    json doc;
    doc["seed"] = cfg.seed;
    doc["batch_size"] = cfg.batch_size;
    doc["n_critic"] = cfg.n_critic;
    doc["generator_steps"] = cfg.generator_steps;
    doc["checkpoint_interval"] = cfg.checkpoint_interval;
    doc["split_fraction"] = cfg.split_fraction;
    doc["split_seed"] = cfg.split_seed;
    doc["output_dir"] = cfg.output_dir;
    doc["optimizer"] = {{"learning_rate", cfg.optimizer.learning_rate},
                        {"beta1", cfg.optimizer.beta1},
                        {"beta2", cfg.optimizer.beta2},
                        {"eps", cfg.optimizer.eps}};
    doc["loss"] = {{"eta1", cfg.loss.eta1},
                   {"eta2", cfg.loss.eta2},
                   {"lambda_gp", cfg.loss.lambda_gp},
                   {"eps_drift", cfg.loss.eps_drift},
                   {"k_rep", cfg.loss.k_rep},
                   {"repulsion_two_sided", cfg.loss.repulsion_two_sided},
                   {"eps_log", cfg.loss.eps_log},
                   {"gp_fd_eps", cfg.loss.gp_fd_eps},
                   {"embed_dim", cfg.loss.embed_dim}};
    doc["generator"] = {{"noise_dim", cfg.generator.noise_dim}, {"hidden", cfg.generator.hidden}};
    doc["critic"] = {{"feature_dim", cfg.critic.feature_dim},
                     {"n_interactions", cfg.critic.n_interactions},
                     {"rbf_min", cfg.critic.rbf_min},
                     {"rbf_max", cfg.critic.rbf_max},
                     {"rbf_n_basis", cfg.critic.rbf_n_basis},
                     {"rbf_gamma", cfg.critic.rbf_gamma}};
    doc["dataset"] = {{"type", cfg.dataset.type},
                      {"template_count", cfg.dataset.template_count},
                      {"n", cfg.dataset.n},
                      {"noise_sigma", cfg.dataset.noise_sigma},
                      {"size", cfg.dataset.size},
                      {"seed", cfg.dataset.seed},
                      {"path", cfg.dataset.path},
                      {"formula", cfg.dataset.formula}};
    return doc.dump();
}

Dataset load_dataset(const DatasetConfig& cfg) {
    if (cfg.type == "synthetic")
        return synthetic_dataset(cfg.template_count, cfg.n, cfg.noise_sigma, cfg.size,
                                 cfg.seed);
    if (cfg.type == "xyz_dir") {
        if (cfg.path.empty() || !fs::exists(cfg.path))
            throw std::runtime_error("dataset path missing: " + cfg.path);
        return filter_formula(load_xyz_dir(cfg.path), parse_formula(cfg.formula));
    }
    throw std::invalid_argument("unknown dataset type: " + cfg.type);
}

std::vector<TypedSample> dataset_to_samples(const Dataset& dataset) {
    std::vector<TypedSample> out;
    out.reserve(dataset.size());
    for (const auto& p : dataset.samples)
        out.push_back(TypedSample{edm_from_points(p), one_hot_types(p)});
    return out;
}

void AdamOptimizer::step(ParameterStore& store, const std::string& prefix) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (auto& [name, tensor] : store) {
        if (name.rfind(prefix, 0) != 0) continue;
        auto [it, inserted] = moments_.try_emplace(
            name, std::make_pair(Mat::Zero(tensor.value.rows(), tensor.value.cols()),
                                 Mat::Zero(tensor.value.rows(), tensor.value.cols())));
        Mat& m = it->second.first;
        Mat& v = it->second.second;
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * tensor.grad;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * tensor.grad.cwiseProduct(tensor.grad);
        const Mat mhat = m / bc1;
        const Mat vhat = v / bc2;
        tensor.value -= cfg_.learning_rate *
                        (mhat.array() / (vhat.array().sqrt() + cfg_.eps)).matrix();
    }
}

namespace {
Mat draw_noise(int m, int dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat z(m, dim);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < dim; ++j) z(i, j) = gauss(rng);
    return z;
}

std::vector<TypedSample> draw_minibatch(const std::vector<TypedSample>& pool, int m,
                                        std::mt19937_64& rng) {
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
    std::vector<TypedSample> out;
    out.reserve(m);
    for (int i = 0; i < m; ++i) out.push_back(pool[pick(rng)]);
    return out;
}

std::string checkpoint_meta(const TrainConfig& cfg, long step) {
    json meta;
    meta["run_config"] = json::parse(run_config_to_json(cfg));
    meta["n"] = cfg.generator.n;
    meta["n_types"] = cfg.generator.n_types;
    meta["step"] = step;
    return meta.dump();
}
}  // namespace

TrainResult train(const TrainConfig& cfg_in, const Dataset& trainset) {
    if (trainset.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg_in.batch_size < 2)
        throw std::invalid_argument("train: batch_size must be >= 2 (gradient penalty needs pairs)");
    if (cfg_in.n_critic < 1) throw std::invalid_argument("train: n_critic must be >= 1");
    TrainConfig cfg = cfg_in;
    cfg.generator.n = trainset.n;
    cfg.generator.n_types = static_cast<int>(type_categories().size());
    if (cfg.loss.r_min_data <= 0.0) cfg.loss.r_min_data = trainset.r_min;

    const std::vector<TypedSample> pool = dataset_to_samples(trainset);
    for (const auto& s : pool)
        if (!is_edm(s.d).is_edm) throw std::invalid_argument("train: dataset sample is not an EDM");

    fs::create_directories(cfg.output_dir);
    const std::string metrics_path = cfg.output_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path);
    metrics << "step,critic_loss,generator_loss,wasserstein_estimate,gp,drift,types,"
               "repulsion,edm,rank\n";
    metrics.precision(10);

    std::mt19937_64 rng(cfg.seed);
    ParameterStore store;
    init_generator_params(store, cfg.generator, rng);
    init_critic_params(store, cfg.critic, cfg.generator.n_types, rng);
    SchNetCritic critic(store, cfg.critic);
    AdamOptimizer opt_gen(cfg.optimizer);
    AdamOptimizer opt_critic(cfg.optimizer);
    const Mat t_ref = trainset.t_ref;

    auto save = [&](const std::string& name, long step) {
        save_checkpoint(store, checkpoint_meta(cfg, step), cfg.output_dir + "/" + name);
    };
    save("checkpoint_final.json", 0);

    TrainResult result;
    result.metrics_path = metrics_path;
    result.final_checkpoint = cfg.output_dir + "/checkpoint_final.json";

    for (long step = 1; step <= cfg.generator_steps; ++step) {
        CriticLossResult clast;
        try {
            for (int c = 0; c < cfg.n_critic; ++c) {
                const auto real = draw_minibatch(pool, cfg.batch_size, rng);
                const Mat z = draw_noise(cfg.batch_size, cfg.generator.noise_dim, rng);
                const auto fake = generate_samples(store, cfg.generator, z);
                store.zero_grad();
                clast = critic_loss(critic, real, fake, cfg.loss, rng, &store);
                opt_critic.step(store, "critic/");
            }

            // generator update
            diff::Tape tape;
            ParamVars gen_params = insert_params(tape, store, "gen/", true);
            ParamVars critic_params = insert_params(tape, store, "critic/", false);
            const Mat z = draw_noise(cfg.batch_size, cfg.generator.noise_dim, rng);
            GeneratorHeads heads =
                generator_forward(tape, tape.constant(z), gen_params, cfg.generator);
            SampleBatchVars batch = generate_sample_batch(tape, heads, cfg.generator);
            GeneratorLossVars gl =
                generator_loss_batch(tape, critic, critic_params, batch, cfg.generator.n,
                                     t_ref, cfg.loss, SpdMode::SoftplusTopD);
            const double gen_total = tape.scalar(gl.total);
            if (!std::isfinite(gen_total) || !std::isfinite(clast.total))
                throw std::runtime_error("non-finite loss");
            store.zero_grad();
            tape.backward(gl.total);
            accumulate_param_grads(tape, gen_params, store);
            opt_gen.step(store, "gen/");

            metrics << step << ',' << clast.total << ',' << gen_total << ','
                    << clast.wasserstein << ',' << clast.gp << ',' << clast.drift << ','
                    << gl.types << ',' << gl.repulsion << ',' << gl.edm << ',' << gl.rank
                    << '\n';
        } catch (const std::exception& e) {
            metrics.flush();
            throw std::runtime_error("training aborted at generator step " +
                                     std::to_string(step) + ": " + e.what() +
                                     " (last checkpoint retained)");
        }
        result.steps_completed = step;
        if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%08ld.json", step);
            save(name, step);
            save("checkpoint_final.json", step);
        }
    }
    save("checkpoint_final.json", result.steps_completed);
    return result;
}

GeneratorConfig checkpoint_generator_config(const std::string& checkpoint_path) {
    ParameterStore store;
    const json meta = json::parse(load_checkpoint(store, checkpoint_path));
    if (!meta.contains("run_config"))
        throw std::runtime_error("checkpoint has no run config: " + checkpoint_path);
    GeneratorConfig gen;
    const json& g = meta.at("run_config").at("generator");
    gen.noise_dim = g.at("noise_dim");
    gen.hidden = g.at("hidden").get<std::vector<int>>();
    gen.n = meta.at("n");
    gen.n_types = meta.at("n_types");
    return gen;
}

std::vector<TypedSample> sample_from_checkpoint(const std::string& checkpoint_path,
                                                int count, unsigned long seed) {
    if (count == 0) return {};
    ParameterStore store;
    load_checkpoint(store, checkpoint_path);
    const GeneratorConfig gen = checkpoint_generator_config(checkpoint_path);
    std::mt19937_64 rng(seed);
    const Mat z = draw_noise(count, gen.noise_dim, rng);
    return generate_samples(store, gen, z);
}

}  // namespace edmgen
