// Dataset ingestion (XYZ), formula filtering with canonical atom ordering,
// deterministic splitting, and the synthetic two-template desk-scale set.
#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "edmgen/edm.hpp"

namespace edmgen {

// Type categories in canonical order; column layout of every t matrix.
inline const std::vector<std::string>& type_categories() {
    static const std::vector<std::string> cats = {"C", "O", "H"};
    return cats;
}
int type_index(const std::string& element);  // -1 if not a known category

struct Dataset {
    std::vector<PointSet> samples;  // all same formula, canonical C/O/H order
    std::map<std::string, int> formula;
    double r_min = 0.0;  // Å, minimal pairwise distance over all samples
    int n = 0;
    Mat t_ref;  // n x n_types one-hot rows in canonical order
    std::vector<PointSet> templates;  // synthetic sets only: the clean shapes

    bool empty() const { return samples.empty(); }
    size_t size() const { return samples.size(); }
};

PointSet parse_xyz(const std::string& path);
PointSet parse_xyz_stream(std::istream& in, const std::string& name);
void write_xyz(const PointSet& p, const std::string& path,
               const std::string& comment = "");

// All .xyz files under a directory, sorted by filename.
std::vector<PointSet> load_xyz_dir(const std::string& dir);

std::map<std::string, int> parse_formula(const std::string& formula);  // e.g. "C7O2H10"

// Keeps structures whose element multiset equals the formula; atoms are
// reordered into canonical type blocks (C, then O, then H), stably.
Dataset filter_formula(const std::vector<PointSet>& structures,
                       const std::map<std::string, int>& formula);

PointSet canonical_order(const PointSet& p);

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction,
                                  unsigned long seed);

double min_pairwise_distance(const Dataset& dataset);

// One-hot type rows for a canonical-order structure.
Mat one_hot_types(const PointSet& p);

// `size` structures, each a randomly chosen rigid template with Gaussian
// coordinate noise, random rotation/translation and a random atom
// permutation (undone again by canonical ordering within type blocks).
// For n = 5 and template_count <= 2 the templates are a trigonal bipyramid
// and a square pyramid (edge 1.5 Å, types C3 O2); otherwise templates are
// random well-separated point sets.
Dataset synthetic_dataset(int template_count, int n, double noise_sigma, int size,
                          unsigned long seed);

void write_manifest(const Dataset& dataset, const std::vector<std::string>& paths,
                    unsigned long split_seed, const std::string& path);

}  // namespace edmgen
