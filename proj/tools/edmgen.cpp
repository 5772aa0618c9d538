// Command line front end: validate / embed / train / sample / evaluate.
// Exit codes: 0 success, 1 domain failure (invalid input, failed check),
// 2 usage or parse error.
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "edmgen/edm.hpp"
#include "edmgen/evaluation.hpp"
#include "edmgen/training.hpp"

namespace fs = std::filesystem;
using namespace edmgen;

namespace {

int cmd_validate(const std::string& matrix_path, double tol) {
    SquaredDistanceMatrix d{read_matrix_csv(matrix_path)};
    if (d.entries.rows() != d.entries.cols()) {
        std::cerr << "error: matrix is " << d.entries.rows() << " x " << d.entries.cols()
                  << ", expected square\n";
        return 2;
    }
    const EdmCheck check = is_edm(d, tol);
    std::cout << (check.is_edm ? "EDM" : "NOT an EDM") << '\n'
              << "min eigenvalue of -1/2 J D J: " << check.min_eigenvalue << '\n';
    if (check.is_edm)
        std::cout << "embedding dimension: " << embedding_dimension(d, tol) << '\n';
    return check.is_edm ? 0 : 1;
}

int cmd_embed(const std::string& matrix_path, const std::string& out_path, int dim,
              double tol) {
    SquaredDistanceMatrix d{read_matrix_csv(matrix_path)};
    const EdmCheck check = is_edm(d, tol);
    if (!check.is_edm) {
        std::cerr << "error: input is not an EDM (min eigenvalue "
                  << check.min_eigenvalue << ")\n";
        return 1;
    }
    PointSet p = embed(d, dim, tol);
    for (auto& t : p.types) t = "X";
    write_xyz(p, out_path, "embedded from " + matrix_path);
    std::cout << "wrote " << p.n() << " points to " << out_path << '\n';
    return 0;
}

int cmd_train(const std::string& config_path) {
    const TrainConfig cfg = load_run_config(config_path);
    Dataset dataset = load_dataset(cfg.dataset);
    auto [trainset, testset] = split(dataset, cfg.split_fraction, cfg.split_seed);
    std::cout << "dataset: " << dataset.size() << " structures (" << trainset.size()
              << " train / " << testset.size() << " held out), n = " << dataset.n
              << ", r_min = " << dataset.r_min << " Å\n";
    const TrainResult result = train(cfg, trainset);
    // persist the split so `evaluate` can run against the same data
    for (const auto& [name, part] :
         {std::pair{"train", &trainset}, std::pair{"test", &testset}}) {
        const fs::path dir = fs::path(cfg.output_dir) / name;
        fs::create_directories(dir);
        char fname[32];
        for (size_t k = 0; k < part->size(); ++k) {
            std::snprintf(fname, sizeof(fname), "%05zu.xyz", k);
            write_xyz(part->samples[k], (dir / fname).string());
        }
    }
    std::cout << "completed " << result.steps_completed << " generator steps\n"
              << "checkpoint: " << result.final_checkpoint << '\n'
              << "metrics:    " << result.metrics_path << '\n';
    return 0;
}

int cmd_sample(const std::string& checkpoint, int count, unsigned long seed,
               const std::string& out_dir) {
    const auto samples = sample_from_checkpoint(checkpoint, count, seed);
    fs::create_directories(out_dir);
    int n_valid = 0, n_edm = 0;
    for (size_t k = 0; k < samples.size(); ++k) {
        if (is_edm(samples[k].d).is_edm) ++n_edm;
        const PointSet p = sample_to_points(samples[k]);
        if (validity_check(p).valid) ++n_valid;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05zu.xyz", k);
        write_xyz(p, (fs::path(out_dir) / name).string());
    }
    std::cout << "wrote " << samples.size() << " structures to " << out_dir << '\n'
              << "EDM check passed: " << n_edm << " / " << samples.size() << '\n'
              << "valence check passed: " << n_valid << " / " << samples.size() << '\n';
    return 0;
}

int cmd_evaluate(const std::string& samples_dir, const std::string& train_dir,
                 const std::string& test_dir, double cutoff, const std::string& out_dir) {
    const std::vector<PointSet> samples = load_xyz_dir(samples_dir);
    const std::vector<PointSet> trainset = load_xyz_dir(train_dir);
    const std::vector<PointSet> testset = load_xyz_dir(test_dir);
    if (samples.empty()) {
        std::cerr << "error: no .xyz files in " << samples_dir << '\n';
        return 1;
    }
    fs::create_directories(out_dir);

    const UniquenessCounts u = uniqueness_count(samples, trainset, testset, cutoff);
    write_uniqueness_csv(u, (fs::path(out_dir) / "uniqueness.csv").string());
    std::cout << "unique structures: " << u.known_a + u.known_b + u.novel << " / "
              << samples.size() << " (train " << u.known_a << ", test " << u.known_b
              << ", novel " << u.novel << ")\n";

    int n_valid = 0;
    for (const auto& s : samples)
        if (validity_check(s).valid) ++n_valid;
    std::cout << "valence check passed: " << n_valid << " / " << samples.size() << '\n';

    for (const std::string pair : {"ALL", "CC", "CO", "CH", "OO", "OH", "HH"}) {
        const auto sample_vals = pair_distances(samples, pair);
        const auto ref_vals = pair_distances(trainset, pair);
        if (sample_vals.empty() && ref_vals.empty()) continue;
        const Histogram hs = make_histogram(sample_vals);
        const Histogram hr = make_histogram(ref_vals);
        write_histogram_csv(hs, (fs::path(out_dir) / ("hist_" + pair + "_samples.csv")).string());
        write_histogram_csv(hr, (fs::path(out_dir) / ("hist_" + pair + "_train.csv")).string());
        std::cout << pair << " distance Wasserstein-1 vs train: "
                  << histogram_distance(hs, hr) << " Å\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EDM-parameterized point cloud generation"};
    app.require_subcommand(1);

    std::string matrix_path, out_path = "points.xyz", config_path, checkpoint;
    std::string samples_dir, train_dir, test_dir, out_dir = "eval";
    std::string sample_out_dir = "samples";
    int dim = 3, count = 100;
    unsigned long seed = 0;
    double tol = 1e-9, cutoff = 0.6;

    auto* validate = app.add_subcommand("validate", "Check a squared-distance CSV matrix");
    validate->add_option("matrix", matrix_path, "CSV matrix of squared distances")->required();
    validate->add_option("--tol", tol, "relative eigenvalue tolerance");

    auto* embed_cmd = app.add_subcommand("embed", "Embed an EDM as 3D coordinates");
    embed_cmd->add_option("matrix", matrix_path, "CSV matrix of squared distances")->required();
    embed_cmd->add_option("--out", out_path, "output XYZ path");
    embed_cmd->add_option("--dim", dim, "embedding dimension");
    embed_cmd->add_option("--tol", tol, "relative eigenvalue tolerance");

    auto* train_cmd = app.add_subcommand("train", "Run the adversarial training loop");
    train_cmd->add_option("--config", config_path, "run configuration JSON")->required();

    auto* sample_cmd = app.add_subcommand("sample", "Draw structures from a checkpoint");
    sample_cmd->add_option("--checkpoint", checkpoint, "checkpoint JSON")->required();
    sample_cmd->add_option("--count", count, "number of structures");
    sample_cmd->add_option("--seed", seed, "noise seed");
    sample_cmd->add_option("--out", sample_out_dir, "output directory");

    auto* eval_cmd = app.add_subcommand("evaluate", "Compare samples against reference sets");
    eval_cmd->add_option("--samples", samples_dir, "directory of sampled .xyz files")->required();
    eval_cmd->add_option("--train-set", train_dir, "directory of training .xyz files")->required();
    eval_cmd->add_option("--test-set", test_dir, "directory of held-out .xyz files")->required();
    eval_cmd->add_option("--cutoff", cutoff, "match cutoff in Å");
    eval_cmd->add_option("--out", out_dir, "output directory for CSV reports");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (validate->parsed()) return cmd_validate(matrix_path, tol);
        if (embed_cmd->parsed()) return cmd_embed(matrix_path, out_path, dim, tol);
        if (train_cmd->parsed()) return cmd_train(config_path);
        if (sample_cmd->parsed()) return cmd_sample(checkpoint, count, seed, sample_out_dir);
        if (eval_cmd->parsed())
            return cmd_evaluate(samples_dir, train_dir, test_dir, cutoff, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
