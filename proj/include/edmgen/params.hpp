#pragma once

#include <map>
#include <string>

#include "edmgen/edm.hpp"

namespace edmgen {

struct Tensor {
    Mat value;
    Mat grad;  // same shape as value, zero-initialized
};

// Named tensors with gradient slots. Iteration order is sorted by name, so
// optimizer updates and serialization are deterministic.
class ParameterStore {
public:
    Tensor& add(const std::string& name, Mat init);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return items_.count(name) > 0; }
    void zero_grad();
    size_t size() const { return items_.size(); }
    long total_values() const;

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::map<std::string, Tensor> items_;
};

// Checkpoint file: a single JSON document
//   { "format": "edmgen-checkpoint", "version": 1,
//     "meta": <caller-provided object>,
//     "tensors": { name: { "rows": r, "cols": c, "data": [row-major] } } }
// Doubles survive the round trip bit-exactly (shortest round-trip printing).
void save_checkpoint(const ParameterStore& params, const std::string& meta_json,
                     const std::string& path);

// Returns the meta object as a JSON string.
std::string load_checkpoint(ParameterStore& params, const std::string& path);

}  // namespace edmgen
