#include "edmgen/kernels.hpp"

#include <atomic>

namespace edmgen::kernels {

namespace {
std::atomic<bool> g_parallel{true};

Mat unflatten(const Mat& rows, int r, int k) {
    Mat a(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a(i, j) = rows(r, i * k + j);
    return a;
}
}  // namespace

bool parallel_enabled() { return g_parallel.load(); }
void set_parallel(bool on) { g_parallel.store(on); }

std::vector<Spectrum> batch_eig_serial(const Mat& rows, int k) {
    const int m = static_cast<int>(rows.rows());
    std::vector<Spectrum> out(m);
    for (int r = 0; r < m; ++r) out[r] = eig_sym(unflatten(rows, r, k));
    return out;
}

std::vector<Spectrum> batch_eig_omp(const Mat& rows, int k) {
    const int m = static_cast<int>(rows.rows());
    std::vector<Spectrum> out(m);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < m; ++r) out[r] = eig_sym(unflatten(rows, r, k));
    return out;
}

std::vector<Spectrum> batch_eig(const Mat& rows, int k) {
    return parallel_enabled() ? batch_eig_omp(rows, k) : batch_eig_serial(rows, k);
}

namespace {
inline void cfconv_sample(const Mat& w, const Mat& h, int n, Mat& out, int s) {
    const int base_w = s * n * n;
    const int base_h = s * n;
    for (int i = 0; i < n; ++i) {
        auto row = out.row(base_h + i);
        row.setZero();
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;  // no self-interaction
            row += w.row(base_w + i * n + j).cwiseProduct(h.row(base_h + j));
        }
    }
}

inline void cfconv_sample_bwd(const Mat& w, const Mat& h, int n, const Mat& gout,
                              Mat& gw, Mat& gh, int s) {
    const int base_w = s * n * n;
    const int base_h = s * n;
    for (int i = 0; i < n; ++i) {
        const auto g = gout.row(base_h + i);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            gw.row(base_w + i * n + j) += g.cwiseProduct(h.row(base_h + j));
            gh.row(base_h + j) += g.cwiseProduct(w.row(base_w + i * n + j));
        }
    }
}
}  // namespace

void cfconv_forward_serial(const Mat& w, const Mat& h, int n, Mat& out) {
    const int m = static_cast<int>(h.rows()) / n;
    out.resize(h.rows(), h.cols());
    for (int s = 0; s < m; ++s) cfconv_sample(w, h, n, out, s);
}

void cfconv_forward_omp(const Mat& w, const Mat& h, int n, Mat& out) {
    const int m = static_cast<int>(h.rows()) / n;
    out.resize(h.rows(), h.cols());
#pragma omp parallel for schedule(static)
    for (int s = 0; s < m; ++s) cfconv_sample(w, h, n, out, s);
}

void cfconv_forward(const Mat& w, const Mat& h, int n, Mat& out) {
    if (parallel_enabled()) cfconv_forward_omp(w, h, n, out);
    else cfconv_forward_serial(w, h, n, out);
}

void cfconv_backward_serial(const Mat& w, const Mat& h, int n, const Mat& gout,
                            Mat& gw, Mat& gh) {
    const int m = static_cast<int>(h.rows()) / n;
    gw.setZero(w.rows(), w.cols());
    gh.setZero(h.rows(), h.cols());
    for (int s = 0; s < m; ++s) cfconv_sample_bwd(w, h, n, gout, gw, gh, s);
}

void cfconv_backward_omp(const Mat& w, const Mat& h, int n, const Mat& gout,
                         Mat& gw, Mat& gh) {
    const int m = static_cast<int>(h.rows()) / n;
    gw.setZero(w.rows(), w.cols());
    gh.setZero(h.rows(), h.cols());
#pragma omp parallel for schedule(static)
    for (int s = 0; s < m; ++s) cfconv_sample_bwd(w, h, n, gout, gw, gh, s);
}

void cfconv_backward(const Mat& w, const Mat& h, int n, const Mat& gout,
                     Mat& gw, Mat& gh) {
    if (parallel_enabled()) cfconv_backward_omp(w, h, n, gout, gw, gh);
    else cfconv_backward_serial(w, h, n, gout, gw, gh);
}

namespace {
inline void rbf_row(const Mat& in, const Vec& centers, double gamma, Mat& out, int s) {
    const int p = static_cast<int>(in.cols());
    const int nb = static_cast<int>(centers.size());
    for (int q = 0; q < p; ++q) {
        const double r = in(s, q);
        for (int b = 0; b < nb; ++b) {
            const double d = r - centers(b);
            out(s * p + q, b) = std::exp(-gamma * d * d);
        }
    }
}

inline void rbf_row_bwd(const Mat& in, const Vec& centers, double gamma,
                        const Mat& out, const Mat& gout, Mat& gin, int s) {
    const int p = static_cast<int>(in.cols());
    const int nb = static_cast<int>(centers.size());
    for (int q = 0; q < p; ++q) {
        const double r = in(s, q);
        double acc = 0.0;
        for (int b = 0; b < nb; ++b)
            acc += gout(s * p + q, b) * (-2.0 * gamma * (r - centers(b))) * out(s * p + q, b);
        gin(s, q) += acc;
    }
}
}  // namespace

void rbf_forward_serial(const Mat& in, const Vec& centers, double gamma, Mat& out) {
    const int m = static_cast<int>(in.rows());
    out.resize(in.rows() * in.cols(), centers.size());
    for (int s = 0; s < m; ++s) rbf_row(in, centers, gamma, out, s);
}

void rbf_forward_omp(const Mat& in, const Vec& centers, double gamma, Mat& out) {
    const int m = static_cast<int>(in.rows());
    out.resize(in.rows() * in.cols(), centers.size());
#pragma omp parallel for schedule(static)
    for (int s = 0; s < m; ++s) rbf_row(in, centers, gamma, out, s);
}

void rbf_forward(const Mat& in, const Vec& centers, double gamma, Mat& out) {
    if (parallel_enabled()) rbf_forward_omp(in, centers, gamma, out);
    else rbf_forward_serial(in, centers, gamma, out);
}

void rbf_backward_serial(const Mat& in, const Vec& centers, double gamma,
                         const Mat& out, const Mat& gout, Mat& gin) {
    const int m = static_cast<int>(in.rows());
    gin.setZero(in.rows(), in.cols());
    for (int s = 0; s < m; ++s) rbf_row_bwd(in, centers, gamma, out, gout, gin, s);
}

void rbf_backward_omp(const Mat& in, const Vec& centers, double gamma,
                      const Mat& out, const Mat& gout, Mat& gin) {
    const int m = static_cast<int>(in.rows());
    gin.setZero(in.rows(), in.cols());
#pragma omp parallel for schedule(static)
    for (int s = 0; s < m; ++s) rbf_row_bwd(in, centers, gamma, out, gout, gin, s);
}

void rbf_backward(const Mat& in, const Vec& centers, double gamma,
                  const Mat& out, const Mat& gout, Mat& gin) {
    if (parallel_enabled()) rbf_backward_omp(in, centers, gamma, out, gout, gin);
    else rbf_backward_serial(in, centers, gamma, out, gout, gin);
}

}  // namespace edmgen::kernels
