// Generator (noise -> symmetric matrix + type logits -> EDM) and the
// permutation-invariant message-passing critic operating on pairwise
// distances and per-atom type distributions.
#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "edmgen/autodiff.hpp"
#include "edmgen/params.hpp"

namespace edmgen {

struct GeneratorConfig {
    int noise_dim = 64;
    int n = 19;
    int n_types = 3;
    std::vector<int> hidden = {256, 256, 512};
};

struct CriticConfig {
    int feature_dim = 64;
    int n_interactions = 3;
    double rbf_min = 0.0;   // Å
    double rbf_max = 6.0;   // Å
    int rbf_n_basis = 32;
    double rbf_gamma = 10.0;  // Å^-2
};

// A squared-distance matrix paired with per-atom type probability rows.
// Real samples carry one-hot rows; generated samples carry soft rows.
struct TypedSample {
    SquaredDistanceMatrix d;
    Mat t;  // n x n_types, rows sum to 1
};

Vec rbf_centers(const CriticConfig& cfg);

// Plain (non-tape) Gaussian basis expansion of an n x n distance matrix
// (entries in Å): output is (n*n) x n_basis.
Mat rbf_expand(const Mat& distances, const CriticConfig& cfg);

void init_generator_params(ParameterStore& store, const GeneratorConfig& cfg,
                           std::mt19937_64& rng);
void init_critic_params(ParameterStore& store, const CriticConfig& cfg, int n_types,
                        std::mt19937_64& rng);

// Tape leaves for a named subset of parameters (those starting with prefix).
using ParamVars = std::map<std::string, diff::Var>;
ParamVars insert_params(diff::Tape& tape, const ParameterStore& store,
                        const std::string& prefix, bool requires_grad);
// Adds tape gradients back into the store's grad slots.
void accumulate_param_grads(diff::Tape& tape, const ParamVars& vars,
                            ParameterStore& store);

struct GeneratorHeads {
    diff::Var x_rows;  // m x (n-1)^2, raw matrix entries (row-major)
    diff::Var logits;  // m x (n * n_types)
};

GeneratorHeads generator_forward(diff::Tape& tape, diff::Var z, const ParamVars& params,
                                 const GeneratorConfig& cfg);

struct SampleBatchVars {
    diff::Var d_rows;  // m x n^2 squared distances
    diff::Var m_rows;  // m x n^2 Gram matrices (rank <= 3 in TopD mode)
    diff::Var t_rows;  // (m*n) x n_types row-stochastic
};

// Symmetrize -> softplus-top-d spectral projection -> Gram -> EDM, plus
// row softmax over the type logits. d = 3 throughout.
SampleBatchVars generate_sample_batch(diff::Tape& tape, const GeneratorHeads& heads,
                                      const GeneratorConfig& cfg,
                                      SpdMode mode = SpdMode::SoftplusTopD, int d = 3);

// Critic over a batch: d_rows m x n^2, t_rows (m*n) x n_types; returns m x 1.
diff::Var critic_forward(diff::Tape& tape, diff::Var d_rows, diff::Var t_rows,
                         const ParamVars& params, const CriticConfig& cfg, int n);

// Convenience wrappers without gradient bookkeeping.
std::vector<TypedSample> generate_samples(const ParameterStore& store,
                                          const GeneratorConfig& cfg, const Mat& z,
                                          SpdMode mode = SpdMode::SoftplusTopD, int d = 3);
double critic_value(const ParameterStore& store, const CriticConfig& cfg,
                    const TypedSample& sample);

// Row-major flattening helpers shared with the losses and training code.
Mat flatten_batch(const std::vector<Mat>& mats);        // each k x k -> row k^2
Mat stack_rows(const std::vector<Mat>& mats);           // vertical concat
Mat unflatten_row(const Mat& rows, int r, int k);

}  // namespace edmgen
