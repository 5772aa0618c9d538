// Timing comparison of the serial and OpenMP kernel variants on
// representative batch shapes. Prints one line per kernel and variant.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <vector>

#include "edmgen/kernels.hpp"

using namespace edmgen;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_per_call(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double>(t1 - t0).count() / reps;
}

void report(const char* name, double serial, double omp) {
    std::printf("%-16s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx\n", name,
                serial * 1e3, omp * 1e3, serial / omp);
}

}  // namespace

int main(int argc, char** argv) {
    const int m = argc > 1 ? std::atoi(argv[1]) : 64;   // batch size
    const int n = argc > 2 ? std::atoi(argv[2]) : 19;   // atoms
    const int f = 64, n_basis = 32, reps = argc > 3 ? std::atoi(argv[3]) : 20;
    std::printf("batch %d, n %d, F %d, %d reps per measurement\n", m, n, f, reps);

    std::mt19937_64 rng(42);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto randm = [&](int r, int c) {
        Mat x(r, c);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = gauss(rng);
        return x;
    };

    {
        Mat rows = randm(m, n * n);
        for (int s = 0; s < m; ++s) {  // symmetrize each flattened matrix
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j) {
                    const double v = 0.5 * (rows(s, i * n + j) + rows(s, j * n + i));
                    rows(s, i * n + j) = rows(s, j * n + i) = v;
                }
        }
        const double ts = seconds_per_call([&] { kernels::batch_eig_serial(rows, n); }, reps);
        const double tp = seconds_per_call([&] { kernels::batch_eig_omp(rows, n); }, reps);
        report("batch_eig", ts, tp);
    }

    {
        const Mat w = randm(m * n * n, f), h = randm(m * n, f);
        Mat out(m * n, f);
        const double ts =
            seconds_per_call([&] { kernels::cfconv_forward_serial(w, h, n, out); }, reps);
        const double tp =
            seconds_per_call([&] { kernels::cfconv_forward_omp(w, h, n, out); }, reps);
        report("cfconv_fwd", ts, tp);

        const Mat gout = randm(m * n, f);
        Mat gw(m * n * n, f), gh(m * n, f);
        const double bs = seconds_per_call(
            [&] { kernels::cfconv_backward_serial(w, h, n, gout, gw, gh); }, reps);
        const double bp = seconds_per_call(
            [&] { kernels::cfconv_backward_omp(w, h, n, gout, gw, gh); }, reps);
        report("cfconv_bwd", bs, bp);
    }

    {
        const Mat in = randm(m, n * n).cwiseAbs();
        Vec centers = Vec::LinSpaced(n_basis, 0.0, 6.0);
        Mat out(m * n * n, n_basis);
        const double ts = seconds_per_call(
            [&] { kernels::rbf_forward_serial(in, centers, 10.0, out); }, reps);
        const double tp = seconds_per_call(
            [&] { kernels::rbf_forward_omp(in, centers, 10.0, out); }, reps);
        report("rbf_fwd", ts, tp);

        kernels::rbf_forward_serial(in, centers, 10.0, out);
        const Mat gout = randm(m * n * n, n_basis);
        Mat gin(m, n * n);
        const double bs = seconds_per_call(
            [&] { kernels::rbf_backward_serial(in, centers, 10.0, out, gout, gin); }, reps);
        const double bp = seconds_per_call(
            [&] { kernels::rbf_backward_omp(in, centers, 10.0, out, gout, gin); }, reps);
        report("rbf_bwd", bs, bp);
    }
    return 0;
}
