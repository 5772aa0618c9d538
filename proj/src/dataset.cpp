#include "edmgen/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace edmgen {

namespace fs = std::filesystem;

int type_index(const std::string& element) {
    const auto& cats = type_categories();
    for (size_t i = 0; i < cats.size(); ++i)
        if (cats[i] == element) return static_cast<int>(i);
    return -1;
}

PointSet parse_xyz_stream(std::istream& in, const std::string& name) {
    std::string line;
    if (!std::getline(in, line))
        throw std::runtime_error(name + ":1: missing atom count");
    int count = 0;
    try {
        count = std::stoi(line);
    } catch (const std::exception&) {
        throw std::runtime_error(name + ":1: bad atom count '" + line + "'");
    }
    if (count <= 0) throw std::runtime_error(name + ":1: non-positive atom count");
    if (!std::getline(in, line)) throw std::runtime_error(name + ":2: missing comment line");

    PointSet p;
    p.coords.resize(count, 3);
    p.types.resize(count);
    for (int i = 0; i < count; ++i) {
        const int lineno = i + 3;
        if (!std::getline(in, line))
            throw std::runtime_error(name + ":" + std::to_string(lineno) +
                                     ": atom count mismatch (expected " +
                                     std::to_string(count) + " atoms)");
        std::istringstream ss(line);
        std::string element;
        double x, y, z;
        if (!(ss >> element >> x >> y >> z))
            throw std::runtime_error(name + ":" + std::to_string(lineno) + ": bad atom line");
        // Trailing columns (QM9 extended-XYZ properties) are tolerated.
        p.types[i] = element;
        p.coords(i, 0) = x;
        p.coords(i, 1) = y;
        p.coords(i, 2) = z;
    }
    return p;
}

PointSet parse_xyz(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return parse_xyz_stream(in, path);
}

void write_xyz(const PointSet& p, const std::string& path, const std::string& comment) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(12);
    out << p.n() << '\n' << comment << '\n';
    for (int i = 0; i < p.n(); ++i)
        out << p.types[i] << ' ' << p.coords(i, 0) << ' ' << p.coords(i, 1) << ' '
            << p.coords(i, 2) << '\n';
}

std::vector<PointSet> load_xyz_dir(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".xyz")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    std::vector<PointSet> out;
    out.reserve(paths.size());
    for (const auto& path : paths) out.push_back(parse_xyz(path));
    return out;
}

std::map<std::string, int> parse_formula(const std::string& formula) {
    std::map<std::string, int> out;
    size_t i = 0;
    while (i < formula.size()) {
        if (!std::isupper(formula[i]))
            throw std::invalid_argument("bad formula: " + formula);
        std::string element(1, formula[i++]);
        while (i < formula.size() && std::islower(formula[i])) element += formula[i++];
        std::string digits;
        while (i < formula.size() && std::isdigit(formula[i])) digits += formula[i++];
        out[element] += digits.empty() ? 1 : std::stoi(digits);
    }
    return out;
}

PointSet canonical_order(const PointSet& p) {
    std::vector<int> order;
    for (const auto& cat : type_categories())
        for (int i = 0; i < p.n(); ++i)
            if (p.types[i] == cat) order.push_back(i);
    for (int i = 0; i < p.n(); ++i)
        if (type_index(p.types[i]) < 0) order.push_back(i);
    PointSet out;
    out.coords.resize(p.n(), p.dim());
    out.types.resize(p.n());
    for (size_t k = 0; k < order.size(); ++k) {
        out.coords.row(static_cast<Eigen::Index>(k)) = p.coords.row(order[k]);
        out.types[k] = p.types[order[k]];
    }
    return out;
}

namespace {
std::map<std::string, int> element_multiset(const PointSet& p) {
    std::map<std::string, int> out;
    for (const auto& t : p.types) out[t]++;
    return out;
}

double structure_min_distance(const PointSet& p) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p.n(); ++i)
        for (int j = i + 1; j < p.n(); ++j)
            best = std::min(best, (p.coords.row(i) - p.coords.row(j)).norm());
    return best;
}
}  // namespace

Mat one_hot_types(const PointSet& p) {
    const int n_types = static_cast<int>(type_categories().size());
    Mat t = Mat::Zero(p.n(), n_types);
    for (int i = 0; i < p.n(); ++i) {
        const int idx = type_index(p.types[i]);
        if (idx < 0) throw std::invalid_argument("one_hot_types: unknown element " + p.types[i]);
        t(i, idx) = 1.0;
    }
    return t;
}

Dataset filter_formula(const std::vector<PointSet>& structures,
                       const std::map<std::string, int>& formula) {
    Dataset out;
    out.formula = formula;
    for (const auto& s : structures)
        if (element_multiset(s) == formula) out.samples.push_back(canonical_order(s));
    if (!out.samples.empty()) {
        out.n = out.samples.front().n();
        out.t_ref = one_hot_types(out.samples.front());
        out.r_min = min_pairwise_distance(out);
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction,
                                  unsigned long seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw std::invalid_argument("split: fraction must be in (0, 1)");
    std::vector<size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t n_train = static_cast<size_t>(std::floor(fraction * dataset.size()));
    Dataset train = dataset, test = dataset;
    train.samples.clear();
    test.samples.clear();
    for (size_t k = 0; k < idx.size(); ++k)
        (k < n_train ? train : test).samples.push_back(dataset.samples[idx[k]]);
    if (!train.empty()) train.r_min = min_pairwise_distance(train);
    if (!test.empty()) test.r_min = min_pairwise_distance(test);
    return {std::move(train), std::move(test)};
}

double min_pairwise_distance(const Dataset& dataset) {
    if (dataset.empty()) throw std::invalid_argument("min_pairwise_distance: empty dataset");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : dataset.samples) best = std::min(best, structure_min_distance(s));
    return best;
}

namespace {
PointSet trigonal_bipyramid(double edge) {
    // Equatorial triangle of carbons, two oxygen apexes.
    PointSet p;
    p.coords.resize(5, 3);
    p.types = {"C", "C", "C", "O", "O"};
    const double r = edge / std::sqrt(3.0);
    for (int k = 0; k < 3; ++k) {
        const double phi = 2.0 * M_PI * k / 3.0;
        p.coords.row(k) << r * std::cos(phi), r * std::sin(phi), 0.0;
    }
    const double h = std::sqrt(std::max(edge * edge - r * r, 0.0));
    p.coords.row(3) << 0.0, 0.0, h;
    p.coords.row(4) << 0.0, 0.0, -h;
    return p;
}

PointSet square_pyramid(double edge) {
    // Square base (three carbons and one oxygen), oxygen apex.
    PointSet p;
    p.coords.resize(5, 3);
    p.types = {"C", "C", "C", "O", "O"};
    const double a = edge / 2.0;
    p.coords.row(0) << a, a, 0.0;
    p.coords.row(1) << -a, a, 0.0;
    p.coords.row(2) << -a, -a, 0.0;
    p.coords.row(3) << a, -a, 0.0;
    p.coords.row(4) << 0.0, 0.0, edge / std::sqrt(2.0);
    return p;
}

PointSet random_template(int n, std::mt19937_64& rng) {
    // Rejection-sample points in a box until all pairs are >= 0.9 Å apart.
    std::uniform_real_distribution<double> u(0.0, 2.5);
    PointSet p;
    p.coords.resize(n, 3);
    p.types.resize(n);
    const int n_carbon = (n * 3 + 4) / 5;  // ~60% carbons
    for (int i = 0; i < n; ++i) p.types[i] = i < n_carbon ? "C" : "O";
    for (int i = 0; i < n; ++i) {
        for (int attempt = 0;; ++attempt) {
            Eigen::RowVector3d c(u(rng), u(rng), u(rng));
            bool ok = true;
            for (int j = 0; j < i; ++j)
                if ((p.coords.row(j) - c).norm() < 0.9) { ok = false; break; }
            if (ok || attempt > 1000) {
                p.coords.row(i) = c;
                break;
            }
        }
    }
    return p;
}

Mat random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Vector4d q(gauss(rng), gauss(rng), gauss(rng), gauss(rng));
    q.normalize();
    const double w = q(0), x = q(1), y = q(2), z = q(3);
    Mat r(3, 3);
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}
}  // namespace

Dataset synthetic_dataset(int template_count, int n, double noise_sigma, int size,
                          unsigned long seed) {
    if (n < 2) throw std::invalid_argument("synthetic_dataset: n must be >= 2");
    if (template_count < 1) throw std::invalid_argument("synthetic_dataset: need a template");
    std::mt19937_64 rng(seed);
    Dataset out;
    if (n == 5 && template_count <= 2) {
        out.templates.push_back(trigonal_bipyramid(1.5));
        if (template_count == 2) out.templates.push_back(square_pyramid(1.5));
    } else {
        for (int k = 0; k < template_count; ++k) out.templates.push_back(random_template(n, rng));
    }
    out.formula = element_multiset(out.templates.front());
    out.n = n;

    std::uniform_int_distribution<int> pick(0, template_count - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> shift(-1.0, 1.0);
    for (int s = 0; s < size; ++s) {
        const PointSet& tpl = out.templates[pick(rng)];
        PointSet p = tpl;
        for (Eigen::Index i = 0; i < p.coords.size(); ++i)
            p.coords(i) += noise_sigma * gauss(rng);
        const Mat rot = random_rotation(rng);
        p.coords = p.coords * rot.transpose();
        Eigen::RowVector3d t(shift(rng), shift(rng), shift(rng));
        p.coords.rowwise() += t;
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        PointSet q;
        q.coords.resize(n, 3);
        q.types.resize(n);
        for (int i = 0; i < n; ++i) {
            q.coords.row(i) = p.coords.row(perm[i]);
            q.types[i] = p.types[perm[i]];
        }
        out.samples.push_back(canonical_order(q));
    }
    out.t_ref = one_hot_types(out.samples.front());
    out.r_min = min_pairwise_distance(out);
    return out;
}

void write_manifest(const Dataset& dataset, const std::vector<std::string>& paths,
                    unsigned long split_seed, const std::string& path) {
    nlohmann::json doc;
    doc["paths"] = paths;
    doc["formula"] = dataset.formula;
    doc["r_min"] = dataset.r_min;
    doc["n"] = dataset.n;
    doc["split_seed"] = split_seed;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << doc.dump(2) << '\n';
}

}  // namespace edmgen
