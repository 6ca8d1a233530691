#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "planeq/graph.hpp"
#include "planeq/tensor.hpp"

namespace planeq {

uint64_t fnv1a64(const void* data, size_t len);
inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

// Named trainable tensors. Initialization is keyed by (seed, name) so the
// values do not depend on creation order.
class ParamStore {
public:
    explicit ParamStore(uint64_t init_seed = 1) : seed_(init_seed) {}

    // Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] on first use.
    Tensor& fetch(const std::string& name, const std::vector<int>& dims, int fan_in);

    // Explicit initial value on first use (zero-init heads, query slots, ...).
    Tensor& fetch_init(const std::string& name, const Tensor& init);

    bool has(const std::string& name) const { return values_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    const std::map<std::string, Tensor>& values() const { return values_; }
    std::map<std::string, Tensor>& values() { return values_; }
    uint64_t init_seed() const { return seed_; }

    int64_t total_parameters() const;

private:
    uint64_t seed_;
    std::map<std::string, Tensor> values_;
};

namespace diff {

// Leaf node backed by the store entry of the same name.
NodeId param_node(Graph& g, ParamStore& ps, const std::string& name, const std::vector<int>& dims,
                  int fan_in);

// y = x W + b with W: [in, out], b: [1, out]; x: [n, in].
NodeId linear(Graph& g, ParamStore& ps, const std::string& prefix, NodeId x, int in, int out,
              bool bias = true);

// Two relu hidden layers of width `hidden`, then a linear output layer.
NodeId mlp2(Graph& g, ParamStore& ps, const std::string& prefix, NodeId x, int in, int hidden,
            int out);

}  // namespace diff

}  // namespace planeq
