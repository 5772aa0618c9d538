// Alternating WGAN-GP optimization with deterministic seeding, metrics
// logging and atomic checkpointing.
#pragma once

#include <string>
#include <vector>

#include "edmgen/dataset.hpp"
#include "edmgen/losses.hpp"
#include "edmgen/networks.hpp"

namespace edmgen {

struct OptimizerConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;
};

struct DatasetConfig {
    std::string type = "synthetic";  // "synthetic" | "xyz_dir"
    // synthetic
    int template_count = 2;
    int n = 5;
    double noise_sigma = 0.05;
    int size = 4096;
    unsigned long seed = 7;
    // xyz_dir
    std::string path;
    std::string formula = "C7O2H10";
};

struct TrainConfig {
    unsigned long seed = 1234;
    int batch_size = 16;
    int n_critic = 5;
    long generator_steps = 0;
    long checkpoint_interval = 1000;
    OptimizerConfig optimizer;
    LossWeights loss;
    GeneratorConfig generator;  // n is overwritten from the dataset
    CriticConfig critic;
    DatasetConfig dataset;
    double split_fraction = 0.5;
    unsigned long split_seed = 17;
    std::string output_dir = "run";
};

// Parses the run config JSON; unknown keys anywhere are an error.
TrainConfig load_run_config(const std::string& path);
TrainConfig parse_run_config_json(const std::string& text);
std::string run_config_to_json(const TrainConfig& cfg);

Dataset load_dataset(const DatasetConfig& cfg);

// EDMs plus one-hot type rows for every structure.
std::vector<TypedSample> dataset_to_samples(const Dataset& dataset);

// Adaptive-moment updates over all parameters whose name starts with prefix.
class AdamOptimizer {
public:
    explicit AdamOptimizer(OptimizerConfig cfg) : cfg_(cfg) {}
    void step(ParameterStore& store, const std::string& prefix);

private:
    OptimizerConfig cfg_;
    long t_ = 0;
    std::map<std::string, std::pair<Mat, Mat>> moments_;
};

struct TrainResult {
    std::string final_checkpoint;
    std::string metrics_path;
    long steps_completed = 0;
};

// n_critic critic updates per generator update, minibatches with
// replacement, metrics CSV per generator step, checkpoints at the
// configured interval. Bit-reproducible per seed. Throws on non-finite
// losses after recording the failing step; the last checkpoint survives.
TrainResult train(const TrainConfig& cfg, const Dataset& trainset);

// Draws `count` noise vectors and pushes them through the generator stored
// in the checkpoint. Every output satisfies the constructive EDM guarantee.
std::vector<TypedSample> sample_from_checkpoint(const std::string& checkpoint_path,
                                                int count, unsigned long seed);

// Generator config recorded in a checkpoint's meta block.
GeneratorConfig checkpoint_generator_config(const std::string& checkpoint_path);

}  // namespace edmgen
