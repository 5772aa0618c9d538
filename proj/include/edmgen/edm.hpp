// Transformations between squared-distance matrices, Gram matrices and
// coordinate embeddings. All matrices are dense, double precision, in Å².
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace edmgen {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// n x n hollow symmetric matrix of squared pairwise distances.
struct SquaredDistanceMatrix {
    Mat entries;
    int n() const { return static_cast<int>(entries.rows()); }
};

// n x n Gram matrix with zero first row/column (first point at the origin).
struct GramMatrix {
    Mat entries;
    int n() const { return static_cast<int>(entries.rows()); }
};

// (n-1) x (n-1) symmetric block sitting inside a GramMatrix.
struct InnerBlock {
    Mat entries;
    int size() const { return static_cast<int>(entries.rows()); }
};

// n points in R^d with per-point element labels ("C", "O", "H" or "X").
struct PointSet {
    Mat coords;  // n x d
    std::vector<std::string> types;
    int n() const { return static_cast<int>(coords.rows()); }
    int dim() const { return static_cast<int>(coords.cols()); }
};

// Eigenvalues sorted descending with matching eigenvector columns.
struct Spectrum {
    Vec eigenvalues;
    Mat eigenvectors;
};

enum class SpdMode { SoftplusAll, SoftplusTopD };

double softplus(double x);
double softplus_derivative(double x);

// Full symmetric eigendecomposition, eigenvalues descending, eigenvector
// sign fixed so the largest-magnitude component of each column is positive.
Spectrum eig_sym(const Mat& a);

InnerBlock symmetrize(const Mat& x);

// U g(Lambda) U^T with g = softplus; in TopD mode eigenvalues ranked d+1
// and beyond are set to exactly zero, so the result has rank <= d.
InnerBlock spd_project(const InnerBlock& l, SpdMode mode, int d = 0);

GramMatrix gram_from_inner(const InnerBlock& l);
SquaredDistanceMatrix edm_from_gram(const GramMatrix& m);
GramMatrix gram_from_edm(const SquaredDistanceMatrix& d);

// -1/2 J D J with J = I - (1/n) 11^T.
Mat schoenberg_operator(const SquaredDistanceMatrix& d);

struct EdmCheck {
    bool is_edm;
    double min_eigenvalue;
};

// Schoenberg criterion: D is an EDM iff -1/2 J D J is PSD. The flag is true
// iff the smallest eigenvalue is >= -tol * trace(-1/2 J D J).
EdmCheck is_edm(const SquaredDistanceMatrix& d, double tol = 1e-9);

// Rank of the Gram matrix: eigenvalue count above tol * lambda_max.
int embedding_dimension(const SquaredDistanceMatrix& d, double tol = 1e-9);

// Classical embedding via M = (U sqrt(S))(U sqrt(S))^T; tiny negative
// eigenvalues are clamped to zero. Output is one arbitrary rigid placement.
PointSet embed(const SquaredDistanceMatrix& d, int dim, double tol = 1e-9);

SquaredDistanceMatrix edm_from_points(const PointSet& p);

// CSV I/O: one row per line, comma separated, no header.
Mat read_matrix_csv(const std::string& path);
void write_matrix_csv(const Mat& m, const std::string& path);

}  // namespace edmgen
