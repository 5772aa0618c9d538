#include "edmgen/autodiff.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <memory>
#include <stdexcept>

#include "edmgen/kernels.hpp"

namespace edmgen::diff {

namespace {
std::atomic<long> g_jitter_warnings{0};

Mat unflatten(const Mat& rows, int r, int k) {
    Mat a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = rows(r, i * k + j);
    return a;
}

void flatten_into(const Mat& a, Mat& rows, int r) {
    const int k = static_cast<int>(a.rows());
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) rows(r, i * k + j) = a(i, j);
}
}  // namespace

Var Tape::leaf(Mat value, bool requires_grad) {
    return make(std::move(value), requires_grad, nullptr);
}

Var Tape::make(Mat value, bool requires_grad, std::function<void(Tape&)> back) {
    if (!value.allFinite()) throw std::runtime_error("tape: non-finite value at node " + std::to_string(nodes_.size()));
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::accum(Var v, const Mat& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
}

void Tape::backward(Var root) {
    if (nodes_[root.id].value.size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    Node& r = nodes_[root.id];
    r.grad = Mat::Ones(1, 1);
    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.back && n.grad.size() != 0) n.back(*this);
    }
}

Var Tape::add(Var a, Var b) {
    Var out = make(value(a) + value(b), rg(a) || rg(b), nullptr);
    nodes_[out.id].back = [a, b, out](Tape& t) {
        t.accum(a, t.grad(out));
        t.accum(b, t.grad(out));
    };
    return out;
}

Var Tape::sub(Var a, Var b) {
    Var out = make(value(a) - value(b), rg(a) || rg(b), nullptr);
    nodes_[out.id].back = [a, b, out](Tape& t) {
        t.accum(a, t.grad(out));
        t.accum(b, -t.grad(out));
    };
    return out;
}

Var Tape::scale(Var a, double s) {
    Var out = make(value(a) * s, rg(a), nullptr);
    nodes_[out.id].back = [a, s, out](Tape& t) { t.accum(a, s * t.grad(out)); };
    return out;
}

Var Tape::add_scalar(Var a, double s) {
    Var out = make(value(a).array() + s, rg(a), nullptr);
    nodes_[out.id].back = [a, out](Tape& t) { t.accum(a, t.grad(out)); };
    return out;
}

Var Tape::hadamard(Var a, Var b) {
    Var out = make(value(a).cwiseProduct(value(b)), rg(a) || rg(b), nullptr);
    nodes_[out.id].back = [a, b, out](Tape& t) {
        t.accum(a, t.grad(out).cwiseProduct(t.value(b)));
        t.accum(b, t.grad(out).cwiseProduct(t.value(a)));
    };
    return out;
}

Var Tape::cmul(Var a, const Mat& mask) {
    Var out = make(value(a).cwiseProduct(mask), rg(a), nullptr);
    nodes_[out.id].back = [a, mask, out](Tape& t) {
        t.accum(a, t.grad(out).cwiseProduct(mask));
    };
    return out;
}

Var Tape::matmul(Var a, Var b) {
    Var out = make(value(a) * value(b), rg(a) || rg(b), nullptr);
    nodes_[out.id].back = [a, b, out](Tape& t) {
        t.accum(a, t.grad(out) * t.value(b).transpose());
        t.accum(b, t.value(a).transpose() * t.grad(out));
    };
    return out;
}

Var Tape::affine(Var x, Var w, Var b) {
    if (value(b).rows() != 1) throw std::invalid_argument("affine: bias must be a row vector");
    Mat y = value(x) * value(w);
    y.rowwise() += value(b).row(0);
    Var out = make(std::move(y), rg(x) || rg(w) || rg(b), nullptr);
    nodes_[out.id].back = [x, w, b, out](Tape& t) {
        const Mat& g = t.grad(out);
        t.accum(x, g * t.value(w).transpose());
        t.accum(w, t.value(x).transpose() * g);
        t.accum(b, g.colwise().sum());
    };
    return out;
}

Var Tape::unary(Var a, const std::function<double(double)>& f,
                const std::function<double(double, double)>& df) {
    Var out = make(value(a).unaryExpr(f), rg(a), nullptr);
    nodes_[out.id].back = [a, df, out](Tape& t) {
        const Mat& x = t.value(a);
        const Mat& y = t.value(out);
        Mat g = t.grad(out);
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g(i) *= df(x(i), y(i));
        t.accum(a, g);
    };
    return out;
}

Var Tape::relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::leaky_relu(Var a, double alpha) {
    return unary(a, [alpha](double x) { return x > 0.0 ? x : alpha * x; },
                 [alpha](double x, double) { return x > 0.0 ? 1.0 : alpha; });
}

Var Tape::softplus_op(Var a) {
    return unary(a, [](double x) { return softplus(x); },
                 [](double x, double) { return softplus_derivative(x); });
}

Var Tape::shifted_softplus(Var a) {
    const double ln2 = std::log(2.0);
    return unary(a, [ln2](double x) { return softplus(x) - ln2; },
                 [](double x, double) { return softplus_derivative(x); });
}

Var Tape::square(Var a) {
    return unary(a, [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
}

Var Tape::sqrt_safe(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? std::sqrt(x) : 0.0; },
                 [](double x, double y) { return x > 0.0 ? 0.5 / y : 0.0; });
}

Var Tape::log_eps(Var a, double eps) {
    return unary(a, [eps](double x) { return std::log(x + eps); },
                 [eps](double x, double) { return 1.0 / (x + eps); });
}

Var Tape::row_softmax(Var a) {
    Mat y = value(a);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double m = y.row(i).maxCoeff();
        y.row(i) = (y.row(i).array() - m).exp();
        y.row(i) /= y.row(i).sum();
    }
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, out](Tape& t) {
        const Mat& y = t.value(out);
        const Mat& g = t.grad(out);
        Mat gx(y.rows(), y.cols());
        for (Eigen::Index i = 0; i < y.rows(); ++i) {
            const double dot = g.row(i).dot(y.row(i));
            gx.row(i) = (g.row(i).array() - dot) * y.row(i).array();
        }
        t.accum(a, gx);
    };
    return out;
}

Var Tape::sum(Var a) {
    Var out = make(Mat::Constant(1, 1, value(a).sum()), rg(a), nullptr);
    nodes_[out.id].back = [a, out](Tape& t) {
        const Mat& x = t.value(a);
        t.accum(a, Mat::Constant(x.rows(), x.cols(), t.grad(out)(0, 0)));
    };
    return out;
}

Var Tape::mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(value(a).size())); }

Var Tape::rowsum(Var a) {
    Var out = make(value(a).rowwise().sum(), rg(a), nullptr);
    nodes_[out.id].back = [a, out](Tape& t) {
        const Mat& x = t.value(a);
        t.accum(a, t.grad(out) * Mat::Ones(1, x.cols()));
    };
    return out;
}

Var Tape::col_slice(Var a, int j0, int j1) {
    Var out = make(value(a).middleCols(j0, j1 - j0), rg(a), nullptr);
    nodes_[out.id].back = [a, j0, j1, out](Tape& t) {
        const Mat& x = t.value(a);
        Mat g = Mat::Zero(x.rows(), x.cols());
        g.middleCols(j0, j1 - j0) = t.grad(out);
        t.accum(a, g);
    };
    return out;
}

Var Tape::group_sum_rows(Var a, int group) {
    const Mat& x = value(a);
    if (x.rows() % group != 0) throw std::invalid_argument("group_sum_rows: size mismatch");
    const int m = static_cast<int>(x.rows()) / group;
    Mat y = Mat::Zero(m, x.cols());
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < group; ++i) y.row(s) += x.row(s * group + i);
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, group, m, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx(m * group, g.cols());
        for (int s = 0; s < m; ++s)
            for (int i = 0; i < group; ++i) gx.row(s * group + i) = g.row(s);
        t.accum(a, gx);
    };
    return out;
}

Var Tape::reshape_rowmajor(Var a, int rows, int cols) {
    const Mat& x = value(a);
    if (x.size() != static_cast<Eigen::Index>(rows) * cols)
        throw std::invalid_argument("reshape_rowmajor: element count mismatch");
    const int sc = static_cast<int>(x.cols());
    Mat y(rows, cols);
    for (int idx = 0; idx < rows * cols; ++idx)
        y(idx / cols, idx % cols) = x(idx / sc, idx % sc);
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, cols, sc, out](Tape& t) {
        const Mat& g = t.grad(out);
        const Mat& x = t.value(a);
        Mat gx(x.rows(), x.cols());
        const int total = static_cast<int>(x.size());
        for (int idx = 0; idx < total; ++idx)
            gx(idx / sc, idx % sc) = g(idx / cols, idx % cols);
        t.accum(a, gx);
    };
    return out;
}

Var Tape::sym_batch(Var a, int k) {
    const Mat& x = value(a);
    if (x.cols() != static_cast<Eigen::Index>(k) * k)
        throw std::invalid_argument("sym_batch: row length is not k*k");
    Mat y(x.rows(), x.cols());
    for (int r = 0; r < x.rows(); ++r) {
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                y(r, i * k + j) = 0.5 * (x(r, i * k + j) + x(r, j * k + i));
    }
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, k, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx(g.rows(), g.cols());
        for (int r = 0; r < g.rows(); ++r)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    gx(r, i * k + j) = 0.5 * (g(r, i * k + j) + g(r, j * k + i));
        t.accum(a, gx);
    };
    return out;
}

Var Tape::spd_project_batch(Var a, int k, SpdMode mode, int d) {
    const Mat& x = value(a);
    const int m = static_cast<int>(x.rows());
    auto spectra = std::make_shared<std::vector<Spectrum>>(kernels::batch_eig(x, k));
    // Degenerate spectra make the eigenvector-dependent backward ill posed;
    // break ties with a deterministic diagonal ramp and redecompose.
    for (int r = 0; r < m; ++r) {
        Vec& lam = (*spectra)[r].eigenvalues;
        const double lmax = std::max(lam.cwiseAbs().maxCoeff(), 1e-30);
        double min_gap = std::numeric_limits<double>::infinity();
        for (int i = 0; i + 1 < k; ++i) min_gap = std::min(min_gap, lam(i) - lam(i + 1));
        if (k > 1 && min_gap < 1e-9 * lmax) {
            Mat jittered = unflatten(x, r, k);
            const double eps = 1e-7 * lmax;
            for (int i = 0; i < k; ++i) jittered(i, i) += eps * (i + 1) / k;
            (*spectra)[r] = eig_sym(jittered);
            if (g_jitter_warnings.fetch_add(1) < 3)
                std::cerr << "[edmgen] warning: near-degenerate spectrum in spd_project, "
                             "applied symmetric jitter of " << eps << "\n";
        }
    }
    Mat y(m, k * k);
    auto gvals = std::make_shared<std::vector<Vec>>(m);
    auto gders = std::make_shared<std::vector<Vec>>(m);
    for (int r = 0; r < m; ++r) {
        const Spectrum& s = (*spectra)[r];
        Vec gv(k), gd(k);
        for (int i = 0; i < k; ++i) {
            const bool keep = (mode == SpdMode::SoftplusAll) || i < d;
            gv(i) = keep ? softplus(s.eigenvalues(i)) : 0.0;
            gd(i) = keep ? softplus_derivative(s.eigenvalues(i)) : 0.0;
        }
        Mat proj = s.eigenvectors * gv.asDiagonal() * s.eigenvectors.transpose();
        proj = Mat(0.5 * (proj + proj.transpose()));
        flatten_into(proj, y, r);
        (*gvals)[r] = std::move(gv);
        (*gders)[r] = std::move(gd);
    }
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, k, m, spectra, gvals, gders, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx = Mat::Zero(m, k * k);
        for (int r = 0; r < m; ++r) {
            const Spectrum& s = (*spectra)[r];
            Mat gm = unflatten(g, r, k);
            gm = Mat(0.5 * (gm + gm.transpose()));
            Mat inner = s.eigenvectors.transpose() * gm * s.eigenvectors;
            const Vec& lam = s.eigenvalues;
            const Vec& gv = (*gvals)[r];
            const Vec& gd = (*gders)[r];
            const double scale = std::max(lam.cwiseAbs().maxCoeff(), 1.0);
            for (int i = 0; i < k; ++i) {
                for (int j = 0; j < k; ++j) {
                    double gamma;
                    if (i == j) {
                        gamma = gd(i);
                    } else if (std::abs(lam(i) - lam(j)) < 1e-12 * scale) {
                        gamma = 0.5 * (gd(i) + gd(j));
                    } else {
                        gamma = (gv(i) - gv(j)) / (lam(i) - lam(j));
                    }
                    inner(i, j) *= gamma;
                }
            }
            Mat ga = s.eigenvectors * inner * s.eigenvectors.transpose();
            flatten_into(ga, gx, r);
        }
        t.accum(a, gx);
    };
    return out;
}

Var Tape::eigvals_batch(Var a, int k) {
    const Mat& x = value(a);
    const int m = static_cast<int>(x.rows());
    auto spectra = std::make_shared<std::vector<Spectrum>>(kernels::batch_eig(x, k));
    Mat y(m, k);
    for (int r = 0; r < m; ++r) y.row(r) = (*spectra)[r].eigenvalues.transpose();
    Var out = make(std::move(y), rg(a), nullptr);
    // Eigenvalue-only consumers: d lambda_i / dA = u_i u_i^T, a valid
    // subgradient choice under degeneracy.
    nodes_[out.id].back = [a, k, m, spectra, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx = Mat::Zero(m, k * k);
        for (int r = 0; r < m; ++r) {
            const Spectrum& s = (*spectra)[r];
            Mat ga = Mat::Zero(k, k);
            for (int i = 0; i < k; ++i) {
                if (g(r, i) == 0.0) continue;
                ga += g(r, i) * s.eigenvectors.col(i) * s.eigenvectors.col(i).transpose();
            }
            flatten_into(ga, gx, r);
        }
        t.accum(a, gx);
    };
    return out;
}

Var Tape::gram_pad_batch(Var a, int k) {
    const Mat& x = value(a);
    const int m = static_cast<int>(x.rows());
    const int n = k + 1;
    Mat y = Mat::Zero(m, n * n);
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                y(r, (i + 1) * n + (j + 1)) = x(r, i * k + j);
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, k, m, n, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx(m, k * k);
        for (int r = 0; r < m; ++r)
            for (int i = 0; i < k; ++i)
                for (int j = 0; j < k; ++j)
                    gx(r, i * k + j) = g(r, (i + 1) * n + (j + 1));
        t.accum(a, gx);
    };
    return out;
}

Var Tape::edm_from_gram_batch(Var a, int n) {
    const Mat& x = value(a);
    const int m = static_cast<int>(x.rows());
    Mat y = Mat::Zero(m, n * n);
    for (int r = 0; r < m; ++r)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                y(r, i * n + j) = x(r, i * n + i) + x(r, j * n + j)
                                  - x(r, i * n + j) - x(r, j * n + i);
            }
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, n, m, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx = Mat::Zero(m, n * n);
        for (int r = 0; r < m; ++r)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const double gij = g(r, i * n + j);
                    gx(r, i * n + i) += gij;
                    gx(r, j * n + j) += gij;
                    gx(r, i * n + j) -= gij;
                    gx(r, j * n + i) -= gij;
                }
        t.accum(a, gx);
    };
    return out;
}

Var Tape::schoenberg_batch(Var a, int n) {
    const Mat& x = value(a);
    const int m = static_cast<int>(x.rows());
    const Mat j = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
    Mat y(m, n * n);
    for (int r = 0; r < m; ++r) {
        Mat d = unflatten(x, r, n);
        d = Mat(0.5 * (d + d.transpose()));
        Mat b = -0.5 * j * d * j;
        b = Mat(0.5 * (b + b.transpose()));
        flatten_into(b, y, r);
    }
    Var out = make(std::move(y), rg(a), nullptr);
    nodes_[out.id].back = [a, n, m, j, out](Tape& t) {
        const Mat& g = t.grad(out);
        Mat gx(m, n * n);
        for (int r = 0; r < m; ++r) {
            Mat gb = unflatten(g, r, n);
            gb = Mat(0.5 * (gb + gb.transpose()));
            Mat gd = -0.5 * j * gb * j;
            gd = Mat(0.5 * (gd + gd.transpose()));
            flatten_into(gd, gx, r);
        }
        t.accum(a, gx);
    };
    return out;
}

Var Tape::rbf_expand(Var distances, const Vec& centers, double gamma) {
    Mat y;
    kernels::rbf_forward(value(distances), centers, gamma, y);
    Var out = make(std::move(y), rg(distances), nullptr);
    nodes_[out.id].back = [distances, centers, gamma, out](Tape& t) {
        Mat gin;
        kernels::rbf_backward(t.value(distances), centers, gamma, t.value(out),
                              t.grad(out), gin);
        t.accum(distances, gin);
    };
    return out;
}

Var Tape::cfconv(Var w, Var h, int n) {
    Mat y;
    kernels::cfconv_forward(value(w), value(h), n, y);
    Var out = make(std::move(y), rg(w) || rg(h), nullptr);
    nodes_[out.id].back = [w, h, n, out](Tape& t) {
        Mat gw, gh;
        kernels::cfconv_backward(t.value(w), t.value(h), n, t.grad(out), gw, gh);
        t.accum(w, gw);
        t.accum(h, gh);
    };
    return out;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Mat& x0,
                  double eps) {
    Mat analytic;
    {
        Tape t;
        Var x = t.leaf(x0);
        Var y = f(t, x);
        t.backward(y);
        analytic = t.grad(x);
        if (analytic.size() == 0) analytic = Mat::Zero(x0.rows(), x0.cols());
    }
    auto eval = [&f](const Mat& x) {
        Tape t;
        Var y = f(t, t.leaf(x, false));
        const double v = t.scalar(y);
        if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite function value");
        return v;
    };
    double max_rel = 0.0;
    Mat x = x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double orig = x(i);
        x(i) = orig + eps;
        const double fp = eval(x);
        x(i) = orig - eps;
        const double fm = eval(x);
        x(i) = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = analytic(i);
        if (std::abs(a) + std::abs(numeric) > 1e-8)
            max_rel = std::max(max_rel, std::abs(a - numeric) / (std::abs(a) + std::abs(numeric)));
    }
    return max_rel;
}

}  // namespace edmgen::diff
