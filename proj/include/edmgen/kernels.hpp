// Data-parallel inner kernels for batched network evaluation. Every kernel
// has an OpenMP variant and a serial reference variant; results are
// identical because batch members never share output slots. The dispatcher
// picks the variant from a process-wide switch (see set_parallel).
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "edmgen/edm.hpp"

namespace edmgen::kernels {

bool parallel_enabled();
void set_parallel(bool on);

// Eigendecomposition of a batch of flattened k x k symmetric matrices
// (one per row of `rows`, row-major flattening).
std::vector<Spectrum> batch_eig_serial(const Mat& rows, int k);
std::vector<Spectrum> batch_eig_omp(const Mat& rows, int k);
std::vector<Spectrum> batch_eig(const Mat& rows, int k);

// Continuous-filter convolution: out[s*n+i] = sum_j W[s*n*n+i*n+j] .* h[s*n+j].
// W is (m*n*n) x F, h is (m*n) x F, out is (m*n) x F.
void cfconv_forward_serial(const Mat& w, const Mat& h, int n, Mat& out);
void cfconv_forward_omp(const Mat& w, const Mat& h, int n, Mat& out);
void cfconv_forward(const Mat& w, const Mat& h, int n, Mat& out);

void cfconv_backward_serial(const Mat& w, const Mat& h, int n, const Mat& gout,
                            Mat& gw, Mat& gh);
void cfconv_backward_omp(const Mat& w, const Mat& h, int n, const Mat& gout,
                         Mat& gw, Mat& gh);
void cfconv_backward(const Mat& w, const Mat& h, int n, const Mat& gout,
                     Mat& gw, Mat& gh);

// Gaussian radial basis expansion of a distance batch: in is m x p (Å),
// out is (m*p) x n_basis with out(s*p+q, b) = exp(-gamma (in(s,q) - c_b)^2).
void rbf_forward_serial(const Mat& in, const Vec& centers, double gamma, Mat& out);
void rbf_forward_omp(const Mat& in, const Vec& centers, double gamma, Mat& out);
void rbf_forward(const Mat& in, const Vec& centers, double gamma, Mat& out);

void rbf_backward_serial(const Mat& in, const Vec& centers, double gamma,
                         const Mat& out, const Mat& gout, Mat& gin);
void rbf_backward_omp(const Mat& in, const Vec& centers, double gamma,
                      const Mat& out, const Mat& gout, Mat& gin);
void rbf_backward(const Mat& in, const Vec& centers, double gamma,
                  const Mat& out, const Mat& gout, Mat& gin);

}  // namespace edmgen::kernels
