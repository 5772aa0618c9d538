#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "edmgen/kernels.hpp"

using namespace edmgen;

namespace {

std::mt19937_64 rng(11);

Mat randm(int r, int c) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat x(r, c);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
    return x;
}

Mat random_sym_rows(int m, int k) {
    Mat rows = randm(m, k * k);
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j) {
                const double v = 0.5 * (rows(s, i * k + j) + rows(s, j * k + i));
                rows(s, i * k + j) = rows(s, j * k + i) = v;
            }
    return rows;
}

}  // namespace

TEST_CASE("parallel switch round trips") {
    const bool before = kernels::parallel_enabled();
    kernels::set_parallel(false);
    CHECK(!kernels::parallel_enabled());
    kernels::set_parallel(true);
    CHECK(kernels::parallel_enabled());
    kernels::set_parallel(before);
}

TEST_CASE("batch_eig serial and omp agree bitwise") {
    const int m = 9, k = 7;
    const Mat rows = random_sym_rows(m, k);
    const auto a = kernels::batch_eig_serial(rows, k);
    const auto b = kernels::batch_eig_omp(rows, k);
    REQUIRE(a.size() == m);
    REQUIRE(b.size() == m);
    for (int s = 0; s < m; ++s) {
        CHECK((a[s].eigenvalues - b[s].eigenvalues).cwiseAbs().maxCoeff() == 0.0);
        CHECK((a[s].eigenvectors - b[s].eigenvectors).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("cfconv serial and omp agree; self-interaction excluded") {
    const int m = 4, n = 6, f = 8;
    const Mat w = randm(m * n * n, f), h = randm(m * n, f);
    Mat out_s(m * n, f), out_p(m * n, f);
    kernels::cfconv_forward_serial(w, h, n, out_s);
    kernels::cfconv_forward_omp(w, h, n, out_p);
    CHECK((out_s - out_p).cwiseAbs().maxCoeff() == 0.0);

    // direct definition, skipping j == i
    for (int s = 0; s < m; ++s)
        for (int i = 0; i < n; ++i) {
            Eigen::RowVectorXd expected = Eigen::RowVectorXd::Zero(f);
            for (int j = 0; j < n; ++j)
                if (j != i)
                    expected += w.row(s * n * n + i * n + j).cwiseProduct(h.row(s * n + j));
            CHECK((out_s.row(s * n + i) - expected).cwiseAbs().maxCoeff() < 1e-12);
        }
}

TEST_CASE("cfconv backward matches finite differences and omp variant") {
    const int m = 2, n = 4, f = 3;
    const Mat w = randm(m * n * n, f), h = randm(m * n, f);
    const Mat gout = randm(m * n, f);
    Mat gw_s(m * n * n, f), gh_s(m * n, f), gw_p(m * n * n, f), gh_p(m * n, f);
    kernels::cfconv_backward_serial(w, h, n, gout, gw_s, gh_s);
    kernels::cfconv_backward_omp(w, h, n, gout, gw_p, gh_p);
    CHECK((gw_s - gw_p).cwiseAbs().maxCoeff() == 0.0);
    CHECK((gh_s - gh_p).cwiseAbs().maxCoeff() == 0.0);

    auto loss = [&](const Mat& ww, const Mat& hh) {
        Mat out(m * n, f);
        kernels::cfconv_forward_serial(ww, hh, n, out);
        return (out.array() * gout.array()).sum();
    };
    const double eps = 1e-6;
    for (int probe = 0; probe < 10; ++probe) {
        const int iw = static_cast<int>(rng() % (m * n * n)), jw = static_cast<int>(rng() % f);
        Mat wp = w, wm = w;
        wp(iw, jw) += eps;
        wm(iw, jw) -= eps;
        CHECK(gw_s(iw, jw) ==
              doctest::Approx((loss(wp, h) - loss(wm, h)) / (2 * eps)).epsilon(1e-5));
        const int ih = static_cast<int>(rng() % (m * n)), jh = static_cast<int>(rng() % f);
        Mat hp = h, hm = h;
        hp(ih, jh) += eps;
        hm(ih, jh) -= eps;
        CHECK(gh_s(ih, jh) ==
              doctest::Approx((loss(w, hp) - loss(w, hm)) / (2 * eps)).epsilon(1e-5));
    }
}

TEST_CASE("rbf forward matches the closed form; variants agree") {
    const int m = 3, p = 10, n_basis = 5;
    const Mat in = randm(m, p).cwiseAbs();
    const Vec centers = Vec::LinSpaced(n_basis, 0.0, 6.0);
    const double gamma = 10.0;
    Mat out_s(m * p, n_basis), out_p(m * p, n_basis);
    kernels::rbf_forward_serial(in, centers, gamma, out_s);
    kernels::rbf_forward_omp(in, centers, gamma, out_p);
    CHECK((out_s - out_p).cwiseAbs().maxCoeff() == 0.0);
    for (int s = 0; s < m; ++s)
        for (int q = 0; q < p; ++q)
            for (int b = 0; b < n_basis; ++b) {
                const double diff = in(s, q) - centers(b);
                CHECK(out_s(s * p + q, b) ==
                      doctest::Approx(std::exp(-gamma * diff * diff)).epsilon(1e-14));
            }
}

TEST_CASE("rbf backward matches finite differences and omp variant") {
    const int m = 2, p = 6, n_basis = 4;
    const Mat in = randm(m, p).cwiseAbs();
    const Vec centers = Vec::LinSpaced(n_basis, 0.0, 6.0);
    const double gamma = 10.0;
    Mat out(m * p, n_basis);
    kernels::rbf_forward_serial(in, centers, gamma, out);
    const Mat gout = randm(m * p, n_basis);
    Mat gin_s(m, p), gin_p(m, p);
    kernels::rbf_backward_serial(in, centers, gamma, out, gout, gin_s);
    kernels::rbf_backward_omp(in, centers, gamma, out, gout, gin_p);
    CHECK((gin_s - gin_p).cwiseAbs().maxCoeff() == 0.0);

    const double eps = 1e-6;
    for (int s = 0; s < m; ++s)
        for (int q = 0; q < p; ++q) {
            Mat ip = in, im = in;
            ip(s, q) += eps;
            im(s, q) -= eps;
            Mat op(m * p, n_basis), om(m * p, n_basis);
            kernels::rbf_forward_serial(ip, centers, gamma, op);
            kernels::rbf_forward_serial(im, centers, gamma, om);
            const double fd =
                ((op - om).array() * gout.array()).sum() / (2 * eps);
            CHECK(gin_s(s, q) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("dispatcher routes to the selected variant") {
    const int m = 3, k = 4;
    const Mat rows = random_sym_rows(m, k);
    kernels::set_parallel(false);
    const auto a = kernels::batch_eig(rows, k);
    kernels::set_parallel(true);
    const auto b = kernels::batch_eig(rows, k);
    for (int s = 0; s < m; ++s)
        CHECK((a[s].eigenvalues - b[s].eigenvalues).cwiseAbs().maxCoeff() == 0.0);
}
