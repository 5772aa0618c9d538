// Minimal reverse-mode differentiation over dense double matrices. The op
// set is closed over what the generator, critic and losses need: affine
// maps, elementwise nonlinearities, softmax, reductions, and batched
// symmetric eigendecomposition with the Daleckii-Krein backward rule.
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "edmgen/edm.hpp"

namespace edmgen::diff {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Mat value, bool requires_grad = true);
    Var constant(Mat value) { return leaf(std::move(value), false); }

    const Mat& value(Var v) const { return nodes_[v.id].value; }
    const Mat& grad(Var v) const { return nodes_[v.id].grad; }
    double scalar(Var v) const { return nodes_[v.id].value(0, 0); }

    // Seeds the root (1x1) with 1 and propagates in reverse creation order.
    void backward(Var root);

    // -- arithmetic -------------------------------------------------------
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var hadamard(Var a, Var b);
    Var cmul(Var a, const Mat& mask);  // elementwise product with a constant
    Var matmul(Var a, Var b);
    // x * w + broadcast row bias (b is 1 x cols)
    Var affine(Var x, Var w, Var b);

    // -- elementwise ------------------------------------------------------
    Var relu(Var a);
    Var leaky_relu(Var a, double alpha = 0.2);
    Var softplus_op(Var a);
    Var shifted_softplus(Var a);  // ln(1+e^x) - ln 2
    Var square(Var a);
    Var sqrt_safe(Var a);  // sqrt(max(x,0)); gradient 0 at x <= 0
    Var log_eps(Var a, double eps);
    Var neg(Var a) { return scale(a, -1.0); }

    // -- structure --------------------------------------------------------
    Var row_softmax(Var a);
    Var sum(Var a);         // 1x1
    Var mean(Var a);        // 1x1
    Var rowsum(Var a);      // rows x 1
    Var col_slice(Var a, int j0, int j1);  // columns [j0, j1)
    Var group_sum_rows(Var a, int group);  // sums consecutive `group` rows
    Var reshape_rowmajor(Var a, int rows, int cols);

    // -- batched symmetric-matrix ops (row = flattened k x k matrix) ------
    Var sym_batch(Var a, int k);                       // (X + X^T)/2 per row
    Var spd_project_batch(Var a, int k, SpdMode mode, int d);
    Var eigvals_batch(Var a, int k);                   // m x k, descending
    Var gram_pad_batch(Var a, int k);                  // k^2 -> (k+1)^2 rows
    Var edm_from_gram_batch(Var a, int n);
    Var schoenberg_batch(Var a, int n);

    // -- network-specific -------------------------------------------------
    Var rbf_expand(Var distances, const Vec& centers, double gamma);
    Var cfconv(Var w, Var h, int n);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat value;
        Mat grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };

    Var make(Mat value, bool requires_grad, std::function<void(Tape&)> back);
    bool rg(Var v) const { return nodes_[v.id].requires_grad; }
    void accum(Var v, const Mat& g);
    Var unary(Var a, const std::function<double(double)>& f,
              const std::function<double(double, double)>& df);

    std::vector<Node> nodes_;
};

// Central-difference check of reverse-mode gradients. `f` must build a 1x1
// result on the given tape from a single leaf; returns the max relative
// error over entries with |analytic| + |numeric| > 1e-8.
double grad_check(const std::function<Var(Tape&, Var)>& f, const Mat& x0,
                  double eps = 1e-5);

}  // namespace edmgen::diff
