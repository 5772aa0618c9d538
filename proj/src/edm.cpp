#include "edmgen/edm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace edmgen {

double softplus(double x) {
    // log1p(exp(x)) overflows for large x; the identity sp(x) = x + sp(-x)
    // keeps the argument non-positive.
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double softplus_derivative(double x) {
    // logistic sigmoid
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Spectrum eig_sym(const Mat& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("eig_sym: matrix not square");
    if (!a.allFinite()) throw std::runtime_error("eig_sym: non-finite entries");
    Eigen::SelfAdjointEigenSolver<Mat> solver(a);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eig_sym: eigensolver failed");
    const int n = static_cast<int>(a.rows());
    Spectrum s;
    s.eigenvalues = Vec(n);
    s.eigenvectors = Mat(n, n);
    // Eigen returns ascending order; flip to descending.
    for (int i = 0; i < n; ++i) {
        s.eigenvalues(i) = solver.eigenvalues()(n - 1 - i);
        s.eigenvectors.col(i) = solver.eigenvectors().col(n - 1 - i);
    }
    // Fix eigenvector signs: largest-magnitude component positive.
    for (int i = 0; i < n; ++i) {
        int imax = 0;
        s.eigenvectors.col(i).cwiseAbs().maxCoeff(&imax);
        if (s.eigenvectors(imax, i) < 0.0) s.eigenvectors.col(i) = -s.eigenvectors.col(i);
    }
    return s;
}

InnerBlock symmetrize(const Mat& x) {
    if (x.rows() != x.cols()) throw std::invalid_argument("symmetrize: matrix not square");
    return InnerBlock{0.5 * (x + x.transpose())};
}

InnerBlock spd_project(const InnerBlock& l, SpdMode mode, int d) {
    const Spectrum s = eig_sym(l.entries);
    const int k = l.size();
    Vec g(k);
    for (int i = 0; i < k; ++i) {
        const bool keep = (mode == SpdMode::SoftplusAll) || i < d;
        g(i) = keep ? softplus(s.eigenvalues(i)) : 0.0;
    }
    Mat result = s.eigenvectors * g.asDiagonal() * s.eigenvectors.transpose();
    // Round off asymmetry from the triple product.
    result = Mat(0.5 * (result + result.transpose()));
    return InnerBlock{std::move(result)};
}

GramMatrix gram_from_inner(const InnerBlock& l) {
    const int n = l.size() + 1;
    Mat m = Mat::Zero(n, n);
    m.bottomRightCorner(n - 1, n - 1) = l.entries;
    return GramMatrix{std::move(m)};
}

SquaredDistanceMatrix edm_from_gram(const GramMatrix& m) {
    if (m.entries.rows() != m.entries.cols())
        throw std::invalid_argument("edm_from_gram: matrix not square");
    const int n = m.n();
    const Vec diag = m.entries.diagonal();
    Mat d = diag.replicate(1, n) + diag.transpose().replicate(n, 1) - 2.0 * m.entries;
    d.diagonal().setZero();
    d = Mat(0.5 * (d + d.transpose()));
    return SquaredDistanceMatrix{std::move(d)};
}

GramMatrix gram_from_edm(const SquaredDistanceMatrix& d) {
    const int n = d.n();
    Mat m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            m(i, j) = 0.5 * (d.entries(0, j) + d.entries(i, 0) - d.entries(i, j));
    m.row(0).setZero();
    m.col(0).setZero();
    m = Mat(0.5 * (m + m.transpose()));
    return GramMatrix{std::move(m)};
}

Mat schoenberg_operator(const SquaredDistanceMatrix& d) {
    const int n = d.n();
    const Mat j = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
    Mat b = -0.5 * j * d.entries * j;
    b = Mat(0.5 * (b + b.transpose()));
    return b;
}

EdmCheck is_edm(const SquaredDistanceMatrix& d, double tol) {
    const Mat b = schoenberg_operator(d);
    const Spectrum s = eig_sym(b);
    const double min_eig = s.eigenvalues(s.eigenvalues.size() - 1);
    return EdmCheck{min_eig >= -tol * b.trace(), min_eig};
}

int embedding_dimension(const SquaredDistanceMatrix& d, double tol) {
    if (!is_edm(d, tol).is_edm)
        throw std::invalid_argument("embedding_dimension: input is not an EDM");
    const Spectrum s = eig_sym(gram_from_edm(d).entries);
    const double lmax = s.eigenvalues(0);
    if (lmax <= 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < s.eigenvalues.size(); ++i)
        if (s.eigenvalues(i) > tol * lmax) ++rank;
    return rank;
}

PointSet embed(const SquaredDistanceMatrix& d, int dim, double tol) {
    const int required = embedding_dimension(d, tol);
    if (dim < required)
        throw std::invalid_argument("embed: requested dimension below embedding dimension");
    const Spectrum s = eig_sym(gram_from_edm(d).entries);
    const int n = d.n();
    Mat coords = Mat::Zero(n, dim);
    for (int k = 0; k < dim && k < n; ++k) {
        const double lambda = std::max(s.eigenvalues(k), 0.0);
        coords.col(k) = s.eigenvectors.col(k) * std::sqrt(lambda);
    }
    PointSet p;
    p.coords = std::move(coords);
    p.types.assign(n, "X");
    return p;
}

SquaredDistanceMatrix edm_from_points(const PointSet& p) {
    const int n = p.n();
    Mat d(n, n);
    for (int i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double sq = (p.coords.row(i) - p.coords.row(j)).squaredNorm();
            d(i, j) = sq;
            d(j, i) = sq;
        }
    }
    return SquaredDistanceMatrix{std::move(d)};
}

Mat read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                size_t pos = 0;
                row.push_back(std::stod(cell, &pos));
            } catch (const std::exception&) {
                throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": ragged row");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw std::runtime_error(path + ": empty matrix");
    Mat m(rows.size(), rows.front().size());
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return m;
}

void write_matrix_csv(const Mat& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(17);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            out << m(i, j);
        }
        out << '\n';
    }
}

}  // namespace edmgen
