#include "edmgen/evaluation.hpp"

#include "edmgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <stdexcept>

namespace edmgen {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

AssignmentCost assignment_cost(const SquaredDistanceMatrix& d1,
                               const std::vector<std::string>& t1,
                               const SquaredDistanceMatrix& d2,
                               const std::vector<std::string>& t2) {
    const int n = d1.n();
    if (d2.n() != n || static_cast<int>(t1.size()) != n || static_cast<int>(t2.size()) != n)
        throw std::invalid_argument("assignment_cost: size mismatch");
    std::map<std::string, int> m1, m2;
    for (const auto& t : t1) m1[t]++;
    for (const auto& t : t2) m2[t]++;
    if (m1 != m2)
        throw std::invalid_argument("assignment_cost: type multisets differ, no feasible matching");

    const Vec mean1 = d1.entries.rowwise().mean();
    const Vec mean2 = d2.entries.rowwise().mean();
    AssignmentCost c;
    c.entries.resize(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            c.entries(i, j) = (t1[i] == t2[j]) ? std::abs(mean1(i) - mean2(j)) : kInf;
    return c;
}

std::vector<int> hungarian(const AssignmentCost& cost) {
    const int n = static_cast<int>(cost.entries.rows());
    if (cost.entries.cols() != n) throw std::invalid_argument("hungarian: matrix not square");
    // Infinite entries become a large finite sentinel for the dual updates;
    // a matching that still crosses one is reported as infeasible.
    double max_finite = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (std::isfinite(cost.entries(i, j)))
                max_finite = std::max(max_finite, std::abs(cost.entries(i, j)));
    const double big = (max_finite + 1.0) * n * 16.0;
    auto at = [&](int i, int j) {
        const double v = cost.entries(i, j);
        return std::isfinite(v) ? v : big;
    };

    // Shortest augmenting path with dual potentials (1-based work arrays).
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = kInf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> sigma(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j]) sigma[p[j] - 1] = j - 1;
    for (int i = 0; i < n; ++i)
        if (!std::isfinite(cost.entries(i, sigma[i])))
            throw std::runtime_error("hungarian: no finite-cost perfect matching");
    return sigma;
}

Superposition superpose(const PointSet& p1, const PointSet& p2, bool allow_reflection) {
    const int n = p1.n();
    if (p2.n() != n) throw std::invalid_argument("superpose: point counts differ");
    const Eigen::RowVectorXd c1 = p1.coords.colwise().mean();
    const Eigen::RowVectorXd c2 = p2.coords.colwise().mean();
    const Mat a = p1.coords.rowwise() - c1;
    const Mat b = p2.coords.rowwise() - c2;

    const Mat cov = b.transpose() * a;
    Eigen::JacobiSVD<Mat> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat r = svd.matrixV() * svd.matrixU().transpose();
    if (!allow_reflection && r.determinant() < 0.0) {
        Mat flip = Mat::Identity(r.rows(), r.cols());
        flip(flip.rows() - 1, flip.cols() - 1) = -1.0;
        r = svd.matrixV() * flip * svd.matrixU().transpose();
    }

    Superposition out;
    out.rotation = r;
    out.translation = (c1.transpose() - r * c2.transpose());
    const Mat aligned = (b * r.transpose()).rowwise() + c1;
    out.deviations.resize(n);
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        out.deviations(i) = (p1.coords.row(i) - aligned.row(i)).norm();
        sq += out.deviations(i) * out.deviations(i);
    }
    out.rmsd = std::sqrt(sq / n);
    return out;
}

namespace {
PointSet reorder_by(const PointSet& p, const std::vector<int>& sigma) {
    PointSet out;
    out.coords.resize(p.n(), p.dim());
    out.types.resize(p.n());
    for (int i = 0; i < p.n(); ++i) {
        out.coords.row(i) = p.coords.row(sigma[i]);
        out.types[i] = p.types[sigma[i]];
    }
    return out;
}

double heavy_deviation(const PointSet& s1, const Superposition& sup) {
    double dev = 0.0;
    for (int i = 0; i < s1.n(); ++i)
        if (s1.types[i] != "H") dev = std::max(dev, sup.deviations(i));
    return dev;
}

// Alternate between nearest-assignment on the aligned coordinates and
// re-superposition until the correspondence stops changing. The distance
// profile cost below ties for symmetry-equivalent atoms, so the first
// Hungarian pass can pick a geometrically wrong matching; this descent never
// increases the deviation and resolves those ties.
void refine_match(const PointSet& s1, const PointSet& s2, bool allow_reflection,
                  std::vector<int> sigma, std::vector<int>& best_sigma, double& best_dev) {
    const int n = s1.n();
    for (int iter = 0; iter < 50; ++iter) {
        const Superposition sup = superpose(s1, reorder_by(s2, sigma), allow_reflection);
        const Mat aligned =
            (s2.coords * sup.rotation.transpose()).rowwise() + sup.translation.transpose();
        AssignmentCost cost;
        cost.entries.resize(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                cost.entries(i, j) =
                    (s1.types[i] == s2.types[j])
                        ? (s1.coords.row(i) - aligned.row(j)).squaredNorm()
                        : kInf;
        std::vector<int> next = hungarian(cost);
        const Superposition nsup = superpose(s1, reorder_by(s2, next), allow_reflection);
        const double dev = heavy_deviation(s1, nsup);
        if (dev < best_dev) {
            best_dev = dev;
            best_sigma = next;
        }
        if (next == sigma) break;
        sigma = std::move(next);
    }
}
}  // namespace

MatchResult match_structures(const PointSet& s1, const PointSet& s2, double d_cutoff,
                             bool allow_reflection) {
    const AssignmentCost cost = assignment_cost(edm_from_points(s1), s1.types,
                                                edm_from_points(s2), s2.types);
    MatchResult res;
    res.permutation = hungarian(cost);
    const int n = s1.n();
    const Superposition sup = superpose(s1, reorder_by(s2, res.permutation), allow_reflection);
    res.max_heavy_deviation = heavy_deviation(s1, sup);

    refine_match(s1, s2, allow_reflection, res.permutation, res.permutation,
                 res.max_heavy_deviation);
    // a few deterministic rotation restarts guard against local minima of the
    // assign/align descent
    std::mt19937_64 rng(1729);
    std::normal_distribution<double> g(0.0, 1.0);
    const Eigen::RowVector3d c1 = s1.coords.colwise().mean();
    const Eigen::RowVector3d c2 = s2.coords.colwise().mean();
    for (int restart = 0; restart < 8 && res.max_heavy_deviation > 1e-9; ++restart) {
        Eigen::Vector4d q(g(rng), g(rng), g(rng), g(rng));
        q.normalize();
        const double w = q(0), x = q(1), y = q(2), z = q(3);
        Mat rot(3, 3);
        rot << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
        const Mat spun = ((s2.coords.rowwise() - c2) * rot.transpose()).rowwise() + c1;
        AssignmentCost start;
        start.entries.resize(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                start.entries(i, j) = (s1.types[i] == s2.types[j])
                                          ? (s1.coords.row(i) - spun.row(j)).squaredNorm()
                                          : kInf;
        std::vector<int> sigma = hungarian(start);
        const Superposition ssup = superpose(s1, reorder_by(s2, sigma), allow_reflection);
        const double dev = heavy_deviation(s1, ssup);
        if (dev < res.max_heavy_deviation) {
            res.max_heavy_deviation = dev;
            res.permutation = sigma;
        }
        refine_match(s1, s2, allow_reflection, sigma, res.permutation,
                     res.max_heavy_deviation);
    }

    res.distinct = res.max_heavy_deviation > d_cutoff;
    return res;
}

UniquenessCounts uniqueness_count(const std::vector<PointSet>& samples,
                                  const std::vector<PointSet>& refs_a,
                                  const std::vector<PointSet>& refs_b, double d_cutoff,
                                  bool allow_reflection) {
    UniquenessCounts out;
    std::vector<const PointSet*> accepted;
    auto matches = [&](const PointSet& s, const PointSet& ref) {
        try {
            return !match_structures(s, ref, d_cutoff, allow_reflection).distinct;
        } catch (const std::invalid_argument&) {
            return false;  // different composition can never match
        }
    };
    for (const auto& s : samples) {
        bool duplicate = false;
        for (const auto* u : accepted)
            if (matches(s, *u)) { duplicate = true; break; }
        if (!duplicate) {
            accepted.push_back(&s);
            bool in_a = false, in_b = false;
            for (const auto& r : refs_a)
                if (matches(s, r)) { in_a = true; break; }
            if (!in_a)
                for (const auto& r : refs_b)
                    if (matches(s, r)) { in_b = true; break; }
            if (in_a) ++out.known_a;
            else if (in_b) ++out.known_b;
            else ++out.novel;
        }
        out.cumulative.push_back({out.known_a, out.known_b, out.novel});
    }
    return out;
}

namespace {
double covalent_radius(const std::string& element) {
    if (element == "C") return 0.76;
    if (element == "O") return 0.66;
    if (element == "H") return 0.31;
    throw std::invalid_argument("validity_check: unsupported element " + element);
}

int valence(const std::string& element) {
    if (element == "C") return 4;
    if (element == "O") return 2;
    return 1;  // H
}
}  // namespace

ValidityReport validity_check(const PointSet& p, double bond_factor) {
    const int n = p.n();
    std::vector<std::vector<int>> bonds(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double cut = bond_factor * (covalent_radius(p.types[i]) +
                                              covalent_radius(p.types[j]));
            if ((p.coords.row(i) - p.coords.row(j)).norm() < cut) {
                bonds[i].push_back(j);
                bonds[j].push_back(i);
            }
        }

    ValidityReport rep;
    rep.valid = true;
    for (int i = 0; i < n; ++i) {
        const int want = valence(p.types[i]);
        if (static_cast<int>(bonds[i].size()) != want) {
            rep.valid = false;
            rep.reasons.push_back("atom " + std::to_string(i) + " (" + p.types[i] + ") has " +
                                  std::to_string(bonds[i].size()) + " bonds, expected " +
                                  std::to_string(want));
        }
    }
    // connectivity via BFS from atom 0
    std::vector<char> seen(n, 0);
    std::vector<int> queue = {0};
    seen[0] = 1;
    while (!queue.empty()) {
        const int i = queue.back();
        queue.pop_back();
        for (int j : bonds[i])
            if (!seen[j]) {
                seen[j] = 1;
                queue.push_back(j);
            }
    }
    if (std::count(seen.begin(), seen.end(), 1) != n) {
        rep.valid = false;
        rep.reasons.push_back("disconnected");
    }
    return rep;
}

std::vector<double> pair_distances(const std::vector<PointSet>& structures,
                                   const std::string& type_pair) {
    std::vector<double> out;
    const bool all = type_pair == "ALL";
    std::string a, b;
    if (!all) {
        if (type_pair.size() != 2) throw std::invalid_argument("bad type pair: " + type_pair);
        a = type_pair.substr(0, 1);
        b = type_pair.substr(1, 1);
    }
    for (const auto& p : structures)
        for (int i = 0; i < p.n(); ++i)
            for (int j = i + 1; j < p.n(); ++j) {
                const bool keep = all || (p.types[i] == a && p.types[j] == b) ||
                                  (p.types[i] == b && p.types[j] == a);
                if (keep) out.push_back((p.coords.row(i) - p.coords.row(j)).norm());
            }
    return out;
}

Histogram make_histogram(const std::vector<double>& values, int bins, double lo, double hi) {
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.density = Vec::Zero(bins);
    h.count = static_cast<long>(values.size());
    if (values.empty()) return h;
    const double width = (hi - lo) / bins;
    for (double v : values) {
        int b = static_cast<int>((v - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        h.density(b) += 1.0;
    }
    h.density /= (h.count * width);
    return h;
}

Histogram distance_histogram(const std::vector<PointSet>& structures,
                             const std::string& type_pair, int bins, double lo, double hi) {
    return make_histogram(pair_distances(structures, type_pair), bins, lo, hi);
}

double histogram_distance(const Histogram& h1, const Histogram& h2) {
    if (h1.density.size() != h2.density.size() || h1.lo != h2.lo || h1.hi != h2.hi)
        throw std::invalid_argument("histogram_distance: binning mismatch");
    const double width = h1.bin_width();
    double cum = 0.0, total = 0.0;
    for (Eigen::Index b = 0; b < h1.density.size(); ++b) {
        cum += (h1.density(b) - h2.density(b)) * width;
        total += std::abs(cum) * width;
    }
    return total;
}

PointSet sample_to_points(const TypedSample& sample, double tol) {
    PointSet p = embed(sample.d, 3, tol);
    for (int i = 0; i < p.n(); ++i) {
        Eigen::Index best = 0;
        sample.t.row(i).maxCoeff(&best);
        p.types[i] = type_categories()[static_cast<size_t>(best)];
    }
    return p;
}

void write_histogram_csv(const Histogram& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(12);
    const double width = h.bin_width();
    for (Eigen::Index b = 0; b < h.density.size(); ++b)
        out << h.lo + (b + 0.5) * width << ',' << h.density(b) << '\n';
}

void write_uniqueness_csv(const UniquenessCounts& u, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "sample_index,known_a,known_b,novel\n";
    for (size_t i = 0; i < u.cumulative.size(); ++i)
        out << i << ',' << u.cumulative[i][0] << ',' << u.cumulative[i][1] << ','
            << u.cumulative[i][2] << '\n';
}

}  // namespace edmgen
