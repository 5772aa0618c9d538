// Post-hoc analysis of generated structures: type-constrained assignment,
// rigid superposition, conformer uniqueness, a simplified valence check and
// distance-distribution comparison.
#pragma once

#include <array>
#include <string>
#include <vector>

#include "edmgen/edm.hpp"
#include "edmgen/networks.hpp"

namespace edmgen {

// n x n extended-real cost matrix; +inf blocks type-mismatched pairs.
struct AssignmentCost {
    Mat entries;
};

// |mean_k (D1)_ik - mean_k (D2)_jk| where types match, +inf otherwise.
// Throws if the two type multisets cannot be matched at all.
AssignmentCost assignment_cost(const SquaredDistanceMatrix& d1,
                               const std::vector<std::string>& t1,
                               const SquaredDistanceMatrix& d2,
                               const std::vector<std::string>& t2);

// Minimum-cost perfect matching (shortest augmenting path, O(n^3)).
// Returns sigma with row i assigned to column sigma[i]; throws if every
// perfect matching crosses an infinite entry.
std::vector<int> hungarian(const AssignmentCost& cost);

struct Superposition {
    Mat rotation;     // 3 x 3, applied to the second point set
    Vec translation;  // 3
    Vec deviations;   // per-atom distances after alignment, Å
    double rmsd = 0.0;
};

// Least-squares rigid alignment of p2 onto p1 (atoms already corresponded).
// Improper rotations are allowed by default since distance matrices are
// mirror-ambiguous; pass false for chirality-sensitive comparison.
Superposition superpose(const PointSet& p1, const PointSet& p2,
                        bool allow_reflection = true);

struct MatchResult {
    std::vector<int> permutation;
    double max_heavy_deviation = 0.0;  // Å, over non-hydrogen atoms
    bool distinct = false;
};

// assignment -> reorder -> superpose -> max deviation over heavy atoms.
MatchResult match_structures(const PointSet& s1, const PointSet& s2,
                             double d_cutoff = 0.6, bool allow_reflection = true);

struct UniquenessCounts {
    long known_a = 0, known_b = 0, novel = 0;
    // cumulative {known_a, known_b, novel} after each sample
    std::vector<std::array<long, 3>> cumulative;
};

// Greedy streaming count: duplicates of already-accepted samples are
// skipped; everything else is categorized against reference set A, then B,
// else counted as novel.
UniquenessCounts uniqueness_count(const std::vector<PointSet>& samples,
                                  const std::vector<PointSet>& refs_a,
                                  const std::vector<PointSet>& refs_b,
                                  double d_cutoff = 0.6, bool allow_reflection = true);

struct ValidityReport {
    bool valid = false;
    std::vector<std::string> reasons;
};

// Bonds inferred where distance < bond_factor * (r_cov(a) + r_cov(b));
// valid iff every atom's bond count equals its valence (C:4, O:2, H:1) and
// the bond graph is connected. Not equivalent to Open Babel perception.
ValidityReport validity_check(const PointSet& p, double bond_factor = 1.3);

struct Histogram {
    double lo = 0.0, hi = 10.0;
    Vec density;  // integrates to 1 unless empty
    long count = 0;
    double bin_width() const { return (hi - lo) / density.size(); }
};

// Pairwise distances (Å) between atoms of the given type pair ("CC", "CO",
// "CH", "OO", "OH", "HH", or "ALL"), each unordered pair counted once.
std::vector<double> pair_distances(const std::vector<PointSet>& structures,
                                   const std::string& type_pair);

Histogram make_histogram(const std::vector<double>& values, int bins = 100,
                         double lo = 0.0, double hi = 10.0);

Histogram distance_histogram(const std::vector<PointSet>& structures,
                             const std::string& type_pair, int bins = 100,
                             double lo = 0.0, double hi = 10.0);

// 1-Wasserstein distance on the binned line: sum |cdf difference| * width.
double histogram_distance(const Histogram& h1, const Histogram& h2);

// Embeds a generated sample in 3D and labels atoms by argmax type.
PointSet sample_to_points(const TypedSample& sample, double tol = 1e-8);

void write_histogram_csv(const Histogram& h, const std::string& path);
void write_uniqueness_csv(const UniquenessCounts& u, const std::string& path);

}  // namespace edmgen
