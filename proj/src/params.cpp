#include "planeq/params.hpp"

#include <cmath>

#include "planeq/rng.hpp"

namespace planeq {

uint64_t fnv1a64(const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xCBF29CE484222325ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ull;
    }
    return h;
}

Tensor& ParamStore::fetch(const std::string& name, const std::vector<int>& dims, int fan_in) {
    auto it = values_.find(name);
    if (it != values_.end()) {
        if (it->second.dims() != dims) throw ShapeError("parameter reused with different dims: " + name);
        return it->second;
    }
    RngStream rng = RngStream::derive(seed_, fnv1a64(name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    return values_.emplace(name, Tensor::uniform(dims, rng, -bound, bound)).first->second;
}

Tensor& ParamStore::fetch_init(const std::string& name, const Tensor& init) {
    auto it = values_.find(name);
    if (it != values_.end()) {
        if (!it->second.same_dims(init)) throw ShapeError("parameter reused with different dims: " + name);
        return it->second;
    }
    return values_.emplace(name, init).first->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = values_.find(name);
    if (it == values_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = values_.find(name);
    if (it == values_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
}

int64_t ParamStore::total_parameters() const {
    int64_t n = 0;
    for (const auto& [name, t] : values_) n += t.numel();
    return n;
}

namespace diff {

NodeId param_node(Graph& g, ParamStore& ps, const std::string& name, const std::vector<int>& dims,
                  int fan_in) {
    return g.parameter(name, ps.fetch(name, dims, fan_in));
}

NodeId linear(Graph& g, ParamStore& ps, const std::string& prefix, NodeId x, int in, int out,
              bool bias) {
    NodeId w = param_node(g, ps, prefix + ".w", {in, out}, in);
    NodeId y = g.matmul(x, w);
    if (bias) {
        NodeId b = param_node(g, ps, prefix + ".b", {1, out}, in);
        const int n = g.value(x).dim(0);
        NodeId ones = g.constant(Tensor::full({n, 1}, 1.0));
        y = g.add(y, g.matmul(ones, b));
    }
    return y;
}

NodeId mlp2(Graph& g, ParamStore& ps, const std::string& prefix, NodeId x, int in, int hidden,
            int out) {
    NodeId h1 = g.relu(linear(g, ps, prefix + ".l0", x, in, hidden));
    NodeId h2 = g.relu(linear(g, ps, prefix + ".l1", h1, hidden, hidden));
    return linear(g, ps, prefix + ".l2", h2, hidden, out);
}

}  // namespace diff

}  // namespace planeq
