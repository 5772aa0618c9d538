#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "edmgen/autodiff.hpp"
#include "oracle.hpp"

using namespace edmgen;
using diff::Tape;
using diff::Var;

namespace {

std::mt19937_64 rng(21);

Mat randm(int r, int c, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    Mat x(r, c);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    return x;
}

// batch of flattened symmetric matrices with well-separated spectra
Mat separated_sym_rows(int m, int k) {
    Mat rows(m, k * k);
    for (int s = 0; s < m; ++s) {
        Mat q = randm(k, k);
        Eigen::HouseholderQR<Mat> qr(q);
        const Mat u = qr.householderQ();
        Vec lam(k);
        for (int i = 0; i < k; ++i) lam(i) = 3.0 - 1.1 * i + 0.05 * (s + 1);
        const Mat a = u * lam.asDiagonal() * u.transpose();
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) rows(s, i * k + j) = a(i, j);
    }
    return rows;
}

}  // namespace

TEST_CASE("elementwise and affine gradients") {
    const Mat x0 = randm(3, 4);
    CHECK(diff::grad_check([](Tape& t, Var x) { return t.sum(t.square(x)); }, x0) < 1e-6);
    CHECK(diff::grad_check([](Tape& t, Var x) { return t.mean(t.softplus_op(x)); }, x0) < 1e-6);
    CHECK(diff::grad_check([](Tape& t, Var x) { return t.sum(t.shifted_softplus(x)); }, x0) <
          1e-6);
    CHECK(diff::grad_check(
              [](Tape& t, Var x) { return t.sum(t.leaky_relu(t.add_scalar(x, 0.3))); },
              x0.cwiseAbs()) < 1e-6);

    const Mat w0 = randm(4, 5), b0 = randm(1, 5);
    CHECK(diff::grad_check(
              [&](Tape& t, Var x) {
                  Var w = t.constant(w0), b = t.constant(b0);
                  return t.sum(t.relu(t.affine(x, w, b)));
              },
              x0.array() + 2.0) < 1e-6);
    CHECK(diff::grad_check(
              [&](Tape& t, Var w) {
                  Var x = t.constant(x0), b = t.constant(b0);
                  return t.mean(t.affine(x, w, b));
              },
              w0) < 1e-6);
}

TEST_CASE("matmul, hadamard, reductions") {
    const Mat a0 = randm(3, 4), b0 = randm(4, 2);
    CHECK(diff::grad_check(
              [&](Tape& t, Var a) { return t.sum(t.matmul(a, t.constant(b0))); }, a0) < 1e-6);
    CHECK(diff::grad_check(
              [&](Tape& t, Var b) { return t.sum(t.matmul(t.constant(a0), b)); }, b0) < 1e-6);
    CHECK(diff::grad_check(
              [&](Tape& t, Var a) { return t.sum(t.hadamard(a, t.constant(a0))); }, a0) < 1e-6);
    CHECK(diff::grad_check([](Tape& t, Var a) { return t.sum(t.rowsum(t.square(a))); }, a0) <
          1e-6);
    CHECK(diff::grad_check([](Tape& t, Var a) { return t.sum(t.col_slice(t.square(a), 1, 3)); },
                           a0) < 1e-6);
    CHECK(diff::grad_check(
              [](Tape& t, Var a) { return t.sum(t.square(t.group_sum_rows(a, 3))); },
              randm(6, 4)) < 1e-6);
}

TEST_CASE("row_softmax: gradient and row sums") {
    const Mat x0 = randm(5, 3);
    Tape t;
    Var x = t.leaf(x0);
    Var s = t.row_softmax(x);
    const Mat sv = t.value(s);
    for (int i = 0; i < 5; ++i) CHECK(sv.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    const Mat mask = randm(5, 3);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) { return tt.sum(tt.cmul(tt.row_softmax(xx), mask)); }, x0) <
          1e-6);
}

TEST_CASE("sqrt_safe and log_eps behave at the boundary") {
    Tape t;
    Mat x0(1, 3);
    x0 << 4.0, 0.0, -1.0;
    Var x = t.leaf(x0);
    Var y = t.sqrt_safe(x);
    CHECK(t.value(y)(0, 0) == doctest::Approx(2.0));
    CHECK(t.value(y)(0, 1) == 0.0);
    CHECK(t.value(y)(0, 2) == 0.0);
    Var root = t.sum(y);
    t.backward(root);
    CHECK(t.grad(x)(0, 0) == doctest::Approx(0.25));
    CHECK(t.grad(x)(0, 1) == 0.0);  // no NaN at zero
    CHECK(t.grad(x)(0, 2) == 0.0);

    const Mat pos = randm(2, 3).cwiseAbs().array() + 0.5;
    CHECK(diff::grad_check([](Tape& tt, Var xx) { return tt.sum(tt.sqrt_safe(xx)); }, pos) <
          1e-6);
    CHECK(diff::grad_check([](Tape& tt, Var xx) { return tt.sum(tt.log_eps(xx, 1e-12)); }, pos) <
          1e-6);
}

TEST_CASE("sym_batch projects onto symmetric matrices") {
    const int m = 2, k = 4;
    const Mat x0 = randm(m, k * k);
    Tape t;
    Var x = t.leaf(x0);
    Var s = t.sym_batch(x, k);
    const Mat sv = t.value(s);
    for (int b = 0; b < m; ++b)
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                CHECK(sv(b, i * k + j) == doctest::Approx(sv(b, j * k + i)).epsilon(1e-15));
    const Mat mask = randm(m, k * k);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) { return tt.sum(tt.cmul(tt.sym_batch(xx, k), mask)); }, x0) <
          1e-6);
}

TEST_CASE("eigvals_batch values and u u^T gradient") {
    const int m = 2, k = 5;
    const Mat rows = separated_sym_rows(m, k);
    Tape t;
    Var x = t.leaf(rows);
    Var lam = t.eigvals_batch(t.sym_batch(x, k), k);
    const Mat lv = t.value(lam);
    for (int s = 0; s < m; ++s) {
        Mat a(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) a(i, j) = rows(s, i * k + j);
        const Vec ref = oracle::jacobi_eigenvalues(a);
        for (int i = 0; i < k; ++i)
            CHECK(lv(s, i) == doctest::Approx(ref(i)).epsilon(1e-9));
    }
    const Mat mask = randm(m, k);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) {
                  return tt.sum(tt.cmul(tt.eigvals_batch(tt.sym_batch(xx, k), k), mask));
              },
              rows) < 1e-5);
}

TEST_CASE("spd_project_batch: Daleckii-Krein backward vs finite differences") {
    const int m = 2, k = 4;
    const Mat rows = separated_sym_rows(m, k);
    const Mat mask = randm(m, k * k);
    for (SpdMode mode : {SpdMode::SoftplusAll, SpdMode::SoftplusTopD}) {
        const double err = diff::grad_check(
            [&](Tape& tt, Var xx) {
                return tt.sum(
                    tt.cmul(tt.spd_project_batch(tt.sym_batch(xx, k), k, mode, 3), mask));
            },
            rows);
        CHECK(err < 1e-5);
    }
}

TEST_CASE("spd_project_batch forward matches the plain implementation") {
    const int k = 5;
    const Mat rows = separated_sym_rows(1, k);
    Tape t;
    Var y = t.spd_project_batch(t.sym_batch(t.leaf(rows), k), k, SpdMode::SoftplusTopD, 3);
    Mat a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = rows(0, i * k + j);
    const InnerBlock ref = spd_project(symmetrize(a), SpdMode::SoftplusTopD, 3);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            CHECK(t.value(y)(0, i * k + j) == doctest::Approx(ref.entries(i, j)).epsilon(1e-12));
}

TEST_CASE("gram_pad and edm_from_gram gradients") {
    const int m = 2, k = 3, n = k + 1;
    const Mat rows = separated_sym_rows(m, k);
    const Mat mask_pad = randm(m, n * n);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) {
                  return tt.sum(tt.cmul(tt.gram_pad_batch(tt.sym_batch(xx, k), k), mask_pad));
              },
              rows) < 1e-6);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) {
                  Var g = tt.gram_pad_batch(tt.sym_batch(xx, k), k);
                  return tt.sum(tt.cmul(tt.edm_from_gram_batch(g, n), mask_pad));
              },
              rows) < 1e-6);
}

TEST_CASE("schoenberg_batch matches the matrix formula and differentiates") {
    const int n = 5;
    std::normal_distribution<double> g(0.0, 1.0);
    PointSet p;
    p.coords = randm(n, 3);
    p.types.assign(n, "X");
    const SquaredDistanceMatrix d = edm_from_points(p);
    Mat row(1, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) row(0, i * n + j) = d.entries(i, j);
    Tape t;
    Var b = t.schoenberg_batch(t.leaf(row), n);
    const Mat ref = schoenberg_operator(d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            CHECK(t.value(b)(0, i * n + j) == doctest::Approx(ref(i, j)).epsilon(1e-12));
    const Mat mask = randm(1, n * n);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) {
                  return tt.sum(tt.cmul(tt.schoenberg_batch(xx, n), mask));
              },
              row) < 1e-6);
}

TEST_CASE("rbf_expand and cfconv tape ops differentiate") {
    const Vec centers = Vec::LinSpaced(8, 0.0, 6.0);
    const Mat d0 = randm(2, 9).cwiseAbs().array() + 0.2;
    CHECK(diff::grad_check(
              [&](Tape& tt, Var xx) { return tt.sum(tt.rbf_expand(xx, centers, 10.0)); }, d0) <
          1e-5);

    const int m = 2, n = 3, f = 4;
    const Mat w0 = randm(m * n * n, f), h0 = randm(m * n, f);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var ww) {
                  return tt.sum(tt.square(tt.cfconv(ww, tt.constant(h0), n)));
              },
              w0) < 1e-5);
    CHECK(diff::grad_check(
              [&](Tape& tt, Var hh) {
                  return tt.sum(tt.square(tt.cfconv(tt.constant(w0), hh, n)));
              },
              h0) < 1e-5);
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Tape t;
    Mat x0(1, 1);
    x0 << 3.0;
    Var x = t.leaf(x0);
    Var y = t.add(t.square(x), t.scale(x, 2.0));  // x^2 + 2x
    t.backward(t.sum(y));
    CHECK(t.grad(x)(0, 0) == doctest::Approx(8.0));  // 2*3 + 2
}

TEST_CASE("degenerate spectra are jittered, not NaN") {
    // exactly repeated eigenvalues: identity matrix
    const int k = 4;
    Mat row(1, k * k);
    const Mat eye = Mat::Identity(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) row(0, i * k + j) = eye(i, j);
    Tape t;
    Var x = t.leaf(row);
    Var y = t.spd_project_batch(x, k, SpdMode::SoftplusTopD, 3);
    Var root = t.sum(y);
    t.backward(root);
    CHECK(t.grad(x).allFinite());
}
