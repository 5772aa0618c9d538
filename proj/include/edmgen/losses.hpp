// Scalar training objectives: EDM and rank penalties, harmonic repulsion,
// type cross entropy, the WGAN critic/generator losses, and the gradient
// penalty. Tape-level builders carry gradients; plain overloads evaluate
// values only.
#pragma once

#include <functional>
#include <random>
#include <vector>

#include "edmgen/autodiff.hpp"
#include "edmgen/networks.hpp"

namespace edmgen {

struct LossWeights {
    double eta1 = 1.0;          // weight of L_edm
    double eta2 = 1.0;          // weight of L_rank (softplus_all mode only)
    double lambda_gp = 10.0;
    double eps_drift = 1e-3;
    double k_rep = 10.0;
    double r_min_data = 0.0;    // Å, repulsion target, from the dataset
    int embed_dim = 3;
    bool repulsion_two_sided = false;
    double eps_log = 1e-12;
    double gp_fd_eps = 1e-4;    // step of the finite-difference penalty surrogate
};

// -- value-level losses ----------------------------------------------------
double loss_edm(const SquaredDistanceMatrix& d);
double loss_rank(const GramMatrix& m, int d);
double loss_repulsion(const SquaredDistanceMatrix& d, double r, double k_rep,
                      bool two_sided = false);
double loss_types(const Mat& t, const Mat& t_ref, double eps_log = 1e-12);

// -- tape-level batched losses (each returns m x 1) --------------------------
diff::Var loss_edm_batch(diff::Tape& tape, diff::Var d_rows, int n);
diff::Var loss_rank_batch(diff::Tape& tape, diff::Var m_rows, int n, int d);
diff::Var loss_repulsion_batch(diff::Tape& tape, diff::Var d_rows, int n, double r,
                               double k_rep, bool two_sided);
diff::Var loss_types_batch(diff::Tape& tape, diff::Var t_rows, int n, const Mat& t_ref,
                           double eps_log);

// Abstraction over the scored network so losses can be exercised with stub
// critics in tests as well as the message-passing critic in training.
class CriticModel {
public:
    virtual ~CriticModel() = default;
    virtual ParamVars insert(diff::Tape& tape, bool requires_grad) const = 0;
    // d_rows: m x n^2, t_rows: (m*n) x n_types; returns m x 1 critic values.
    virtual diff::Var values(diff::Tape& tape, const ParamVars& params,
                             diff::Var d_rows, diff::Var t_rows, int n) const = 0;
};

class SchNetCritic : public CriticModel {
public:
    SchNetCritic(const ParameterStore& store, const CriticConfig& cfg)
        : store_(&store), cfg_(cfg) {}
    ParamVars insert(diff::Tape& tape, bool requires_grad) const override;
    diff::Var values(diff::Tape& tape, const ParamVars& params, diff::Var d_rows,
                     diff::Var t_rows, int n) const override;

private:
    const ParameterStore* store_;
    CriticConfig cfg_;
};

// Batches in flat form: d_rows m x n^2, t_rows (m*n) x n_types.
struct FlatBatch {
    Mat d_rows;
    Mat t_rows;
    int n = 0;
    int m() const { return static_cast<int>(d_rows.rows()); }
};

FlatBatch flatten_samples(const std::vector<TypedSample>& samples);

// WGAN-GP penalty on interpolates x^ = alpha*real + (1-alpha)*fake (alpha
// shared across all entries of a pair, so x^ stays inside the EDM cone).
// The gradient norm is evaluated exactly via reverse mode; the term placed
// on the tape is a central finite difference of the critic along the frozen
// normalized input-gradient direction, which equals the norm to O(eps^2)
// and keeps the parameter gradient first-order.
diff::Var gradient_penalty_batch(diff::Tape& tape, const CriticModel& critic,
                                 const ParamVars& params, const FlatBatch& real,
                                 const FlatBatch& fake, double lambda_gp,
                                 double fd_eps, std::mt19937_64& rng);

struct CriticLossResult {
    double total = 0, wasserstein = 0, gp = 0, drift = 0;
};

// mean C(fake) - mean C(real) + gradient penalty + drift. When grad_into is
// non-null, backpropagates and accumulates parameter gradients there.
CriticLossResult critic_loss(const CriticModel& critic, const std::vector<TypedSample>& real,
                             const std::vector<TypedSample>& fake, const LossWeights& w,
                             std::mt19937_64& rng, ParameterStore* grad_into = nullptr);

struct GeneratorLossVars {
    diff::Var total;
    double critic_term = 0, types = 0, repulsion = 0, edm = 0, rank = 0;
};

// -mean C + types + repulsion + eta1*edm (+ eta2*rank outside TopD mode).
GeneratorLossVars generator_loss_batch(diff::Tape& tape, const CriticModel& critic,
                                       const ParamVars& critic_params,
                                       const SampleBatchVars& batch, int n,
                                       const Mat& t_ref, const LossWeights& w,
                                       SpdMode mode);

struct GeneratorLossResult {
    double total = 0, critic_term = 0, types = 0, repulsion = 0, edm = 0, rank = 0;
};

// Value-level generator loss over an already-generated batch.
GeneratorLossResult generator_loss(const CriticModel& critic,
                                   const std::vector<TypedSample>& fake,
                                   const LossWeights& w, const Mat& t_ref,
                                   SpdMode mode = SpdMode::SoftplusTopD);

}  // namespace edmgen
