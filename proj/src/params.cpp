#include "edmgen/params.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace edmgen {

using nlohmann::json;

Tensor& ParameterStore::add(const std::string& name, Mat init) {
    if (items_.count(name)) throw std::invalid_argument("parameter already exists: " + name);
    Tensor t;
    t.grad = Mat::Zero(init.rows(), init.cols());
    t.value = std::move(init);
    return items_.emplace(name, std::move(t)).first->second;
}

Tensor& ParameterStore::at(const std::string& name) {
    auto it = items_.find(name);
    if (it == items_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
    auto it = items_.find(name);
    if (it == items_.end()) throw std::out_of_range("no such parameter: " + name);
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, t] : items_) t.grad.setZero();
}

long ParameterStore::total_values() const {
    long total = 0;
    for (const auto& [name, t] : items_) total += static_cast<long>(t.value.size());
    return total;
}

void save_checkpoint(const ParameterStore& params, const std::string& meta_json,
                     const std::string& path) {
    json doc;
    doc["format"] = "edmgen-checkpoint";
    doc["version"] = 1;
    doc["meta"] = meta_json.empty() ? json::object() : json::parse(meta_json);
    json tensors = json::object();
    for (const auto& [name, t] : params) {
        std::vector<double> data(t.value.size());
        for (Eigen::Index i = 0; i < t.value.rows(); ++i)
            for (Eigen::Index j = 0; j < t.value.cols(); ++j)
                data[i * t.value.cols() + j] = t.value(i, j);
        tensors[name] = {{"rows", t.value.rows()}, {"cols", t.value.cols()},
                         {"data", std::move(data)}};
    }
    doc["tensors"] = std::move(tensors);

    // Atomic write: temp file in the same directory, then rename.
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << doc.dump();
    }
    std::filesystem::rename(tmp, path);
}

std::string load_checkpoint(ParameterStore& params, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint " + path);
    json doc = json::parse(in);
    if (doc.value("format", "") != "edmgen-checkpoint" || doc.value("version", 0) != 1)
        throw std::runtime_error("unrecognized checkpoint format in " + path);
    for (const auto& [name, entry] : doc.at("tensors").items()) {
        const int rows = entry.at("rows");
        const int cols = entry.at("cols");
        const auto& data = entry.at("data");
        if (static_cast<int>(data.size()) != rows * cols)
            throw std::runtime_error("checkpoint tensor size mismatch: " + name);
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = data[i * cols + j];
        if (params.contains(name)) {
            params.at(name).value = std::move(m);
            params.at(name).grad.setZero();
        } else {
            params.add(name, std::move(m));
        }
    }
    return doc.at("meta").dump();
}

}  // namespace edmgen
