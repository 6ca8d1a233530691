#include "planeq/graph.hpp"

#include <algorithm>
#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "planeq/rng.hpp"

namespace {

// Tape tensors are a few hundred KB and graphs are rebuilt per sample; keep
// such blocks on the heap instead of per-allocation mmap so the pages recycle.
struct MallocTuning {
    MallocTuning() {
#if defined(__GLIBC__)
        mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
#endif
    }
};
const MallocTuning malloc_tuning;

}  // namespace

namespace planeq {

Tensor Tensor::uniform(std::vector<int> dims, RngStream& rng, double lo, double hi) {
    Tensor t(std::move(dims));
    for (double& v : t.vec()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace planeq

namespace planeq::diff {

const char* op_name(Op op) {
    switch (op) {
        case Op::Input: return "input";
        case Op::Parameter: return "parameter";
        case Op::Matmul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::Add: return "add";
        case Op::Sub: return "subtract";
        case Op::Mul: return "elementwise-multiply";
        case Op::Scale: return "scalar-scale";
        case Op::ConcatLast: return "concat-last-axis";
        case Op::SliceLast: return "slice";
        case Op::RowSoftmax: return "row-softmax";
        case Op::ColSoftmax: return "column-softmax";
        case Op::Relu: return "relu";
        case Op::Sigmoid: return "sigmoid";
        case Op::L2NormLast: return "l2-normalize-last-axis";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::Abs: return "abs";
        case Op::Log: return "log";
        case Op::Dot: return "elementwise-dot";
        case Op::Sqrt: return "sqrt";
        case Op::Divide: return "divide";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Atan2: return "atan2";
        case Op::Clamp: return "clamp";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

namespace {

// Rows/row-length view of the last axis.
struct LastAxis {
    int rows;
    int len;
};

LastAxis last_axis(const Tensor& t) {
    if (t.ndim() == 0) throw ShapeError("empty tensor");
    int len = t.dim(t.ndim() - 1);
    return {t.numel() / len, len};
}

std::vector<int> drop_last(const Tensor& t) {
    std::vector<int> d(t.dims().begin(), t.dims().end() - 1);
    if (d.empty()) d = {1};
    return d;
}

// message construction only on the failure path
template <typename MsgFn>
void require(bool ok, MsgFn&& msg) {
    if (!ok) [[unlikely]]
        throw ShapeError(msg());
}

}  // namespace

NodeId Graph::input(Tensor t, std::string name) {
    Node n;
    n.kind = Op::Input;
    n.value = std::move(t);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::parameter(std::string name, Tensor t) {
    Node n;
    n.kind = Op::Parameter;
    n.value = std::move(t);
    n.name = std::move(name);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::push(Op kind, std::vector<int> inputs, double a0, double a1,
                   std::vector<int> shape_attr) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.a0 = a0;
    n.a1 = a1;
    n.shape_attr = std::move(shape_attr);
    eval(n);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
}

NodeId Graph::matmul(NodeId a, NodeId b) { return push(Op::Matmul, {a.v, b.v}); }
NodeId Graph::transpose(NodeId a) { return push(Op::Transpose, {a.v}); }
NodeId Graph::add(NodeId a, NodeId b) { return push(Op::Add, {a.v, b.v}); }
NodeId Graph::sub(NodeId a, NodeId b) { return push(Op::Sub, {a.v, b.v}); }
NodeId Graph::mul(NodeId a, NodeId b) { return push(Op::Mul, {a.v, b.v}); }
NodeId Graph::scale(NodeId a, double c) { return push(Op::Scale, {a.v}, c); }

NodeId Graph::concat_last(const std::vector<NodeId>& xs) {
    require(!xs.empty(), [] { return "concat of zero tensors"; });
    std::vector<int> ids;
    for (NodeId x : xs) ids.push_back(x.v);
    return push(Op::ConcatLast, std::move(ids));
}

NodeId Graph::slice_last(NodeId a, int start, int len) {
    return push(Op::SliceLast, {a.v}, start, len);
}

NodeId Graph::row_softmax(NodeId a) { return push(Op::RowSoftmax, {a.v}); }
NodeId Graph::col_softmax(NodeId a) { return push(Op::ColSoftmax, {a.v}); }
NodeId Graph::relu(NodeId a) { return push(Op::Relu, {a.v}); }
NodeId Graph::sigmoid(NodeId a) { return push(Op::Sigmoid, {a.v}); }
NodeId Graph::l2_normalize_last(NodeId a) { return push(Op::L2NormLast, {a.v}); }
NodeId Graph::sum(NodeId a) { return push(Op::Sum, {a.v}); }
NodeId Graph::mean(NodeId a) { return push(Op::Mean, {a.v}); }
NodeId Graph::abs(NodeId a) { return push(Op::Abs, {a.v}); }
NodeId Graph::log(NodeId a) { return push(Op::Log, {a.v}); }
NodeId Graph::dot(NodeId a, NodeId b) { return push(Op::Dot, {a.v, b.v}); }
NodeId Graph::sqrt(NodeId a) { return push(Op::Sqrt, {a.v}); }
NodeId Graph::divide(NodeId a, NodeId b) { return push(Op::Divide, {a.v, b.v}); }
NodeId Graph::sin(NodeId a) { return push(Op::Sin, {a.v}); }
NodeId Graph::cos(NodeId a) { return push(Op::Cos, {a.v}); }
NodeId Graph::atan2(NodeId y, NodeId x) { return push(Op::Atan2, {y.v, x.v}); }
NodeId Graph::clamp(NodeId a, double lo, double hi) { return push(Op::Clamp, {a.v}, lo, hi); }

NodeId Graph::reshape(NodeId a, std::vector<int> dims) {
    return push(Op::Reshape, {a.v}, 0.0, 0.0, std::move(dims));
}

const Tensor& Graph::value(NodeId id) const {
    return nodes_[static_cast<size_t>(id.v)].value;
}

void Graph::set_value(NodeId leaf, const Tensor& t) {
    Node& n = nodes_[static_cast<size_t>(leaf.v)];
    if (n.kind != Op::Input && n.kind != Op::Parameter)
        throw ContractError("set_value on a non-leaf node");
    if (!n.value.same_dims(t)) throw ShapeError("set_value dims mismatch");
    n.value = t;
}

void Graph::recompute() {
    for (Node& n : nodes_)
        if (n.kind != Op::Input && n.kind != Op::Parameter) eval(n);
}

void Graph::truncate(int mark) {
    if (mark < 0 || mark > size()) throw ContractError("truncate mark out of range");
    while (size() > mark) nodes_.pop_back();
    grads_.clear();
    has_grad_.clear();
}


namespace {
// In-place output buffer: reuse the existing allocation when dims match.
planeq::Tensor& out_buffer(planeq::Tensor& value, const std::vector<int>& dims, bool zero) {
    if (value.dims() != dims) {
        value = planeq::Tensor(dims);
        return value;
    }
    if (zero) std::fill(value.vec().begin(), value.vec().end(), 0.0);
    return value;
}
}  // namespace

void Graph::eval(Node& n) {
    switch (n.kind) {
        case Op::Input:
        case Op::Parameter:
            return;

        case Op::Matmul: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            require(a.ndim() == 2 && b.ndim() == 2, [] { return "matmul expects 2-D operands"; });
            require(a.dim(1) == b.dim(0), [&] {
                return "matmul inner dims " + a.dims_str() + " vs " + b.dims_str();
            });
            const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
            Tensor& out = out_buffer(n.value, {m, p}, true);
            const double* pa = a.data();
            const double* pb = b.data();
            double* po = out.data();
            for (int i = 0; i < m; ++i) {
                const double* arow = pa + static_cast<size_t>(i) * k;
                double* orow = po + static_cast<size_t>(i) * p;
                for (int t = 0; t < k; ++t) {
                    const double av = arow[t];
                    const double* brow = pb + static_cast<size_t>(t) * p;
                    for (int j = 0; j < p; ++j) orow[j] += av * brow[j];
                }
            }
            break;
        }

        case Op::Transpose: {
            const Tensor& a = in(n, 0);
            require(a.ndim() == 2, [] { return "transpose expects 2-D"; });
            Tensor& out = out_buffer(n.value, {a.dim(1), a.dim(0)}, false);
            for (int i = 0; i < a.dim(0); ++i)
                for (int j = 0; j < a.dim(1); ++j) out.at2(j, i) = a.at2(i, j);
            break;
        }

        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Divide: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            require(a.same_dims(b), [&] {
                return std::string(op_name(n.kind)) + " dims " + a.dims_str() + " vs " +
                       b.dims_str();
            });
            Tensor& out = out_buffer(n.value, a.dims(), false);
            const int m = a.numel();
            for (int i = 0; i < m; ++i) {
                switch (n.kind) {
                    case Op::Add: out[i] = a[i] + b[i]; break;
                    case Op::Sub: out[i] = a[i] - b[i]; break;
                    case Op::Mul: out[i] = a[i] * b[i]; break;
                    default:
                        if (b[i] == 0.0) throw DomainError("division by zero");
                        out[i] = a[i] / b[i];
                }
            }
            break;
        }

        case Op::Scale: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) out[i] = a[i] * n.a0;
            break;
        }

        case Op::ConcatLast: {
            const Tensor& first = in(n, 0);
            std::vector<int> lead = drop_last(first);
            int total = 0;
            for (size_t s = 0; s < n.inputs.size(); ++s) {
                const Tensor& t = in(n, static_cast<int>(s));
                require(drop_last(t) == lead || (first.ndim() == 1 && t.ndim() == 1),
                        [] { return "concat leading dims mismatch"; });
                total += t.dim(t.ndim() - 1);
            }
            std::vector<int> odims = first.dims();
            odims.back() = total;
            Tensor& out = out_buffer(n.value, odims, false);
            auto [rows, olen] = LastAxis{first.numel() / first.dim(first.ndim() - 1), total};
            int off = 0;
            for (size_t s = 0; s < n.inputs.size(); ++s) {
                const Tensor& t = in(n, static_cast<int>(s));
                int len = t.dim(t.ndim() - 1);
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < len; ++j)
                        out[r * olen + off + j] = t[r * len + j];
                off += len;
            }
            break;
        }

        case Op::SliceLast: {
            const Tensor& a = in(n, 0);
            auto [rows, len] = last_axis(a);
            const int start = static_cast<int>(n.a0), slen = static_cast<int>(n.a1);
            require(start >= 0 && slen > 0 && start + slen <= len, [] { return "slice out of range"; });
            std::vector<int> odims = a.dims();
            odims.back() = slen;
            Tensor& out = out_buffer(n.value, odims, false);
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < slen; ++j) out[r * slen + j] = a[r * len + start + j];
            break;
        }

        case Op::RowSoftmax:
        case Op::ColSoftmax: {
            const Tensor& a = in(n, 0);
            require(a.ndim() <= 2, [] { return "softmax expects 1-D or 2-D"; });
            const int r = a.rows(), c = a.ndim() == 2 ? a.dim(1) : a.dim(0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            const bool rowwise = (n.kind == Op::RowSoftmax);
            const int groups = rowwise ? r : c;
            const int glen = rowwise ? c : r;
            for (int g = 0; g < groups; ++g) {
                auto idx = [&](int t) { return rowwise ? g * c + t : t * c + g; };
                double mx = a[idx(0)];
                for (int t = 1; t < glen; ++t) mx = std::max(mx, a[idx(t)]);
                double z = 0.0;
                for (int t = 0; t < glen; ++t) {
                    const double e = std::exp(a[idx(t)] - mx);
                    out[idx(t)] = e;
                    z += e;
                }
                const double inv = 1.0 / z;
                for (int t = 0; t < glen; ++t) out[idx(t)] *= inv;
            }
            break;
        }

        case Op::Relu: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
            break;
        }

        case Op::Sigmoid: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) {
                const double x = a[i];
                out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                  : std::exp(x) / (1.0 + std::exp(x));
            }
            break;
        }

        case Op::L2NormLast: {
            const Tensor& a = in(n, 0);
            auto [rows, len] = last_axis(a);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int r = 0; r < rows; ++r) {
                double s = 0.0;
                for (int j = 0; j < len; ++j) s += a[r * len + j] * a[r * len + j];
                if (s == 0.0) throw DomainError("l2-normalize of zero vector");
                const double inv = 1.0 / std::sqrt(s);
                for (int j = 0; j < len; ++j) out[r * len + j] = a[r * len + j] * inv;
            }
            break;
        }

        case Op::Sum:
        case Op::Mean: {
            const Tensor& a = in(n, 0);
            double s = 0.0;
            for (int i = 0; i < a.numel(); ++i) s += a[i];
            if (n.kind == Op::Mean) s /= a.numel();
            out_buffer(n.value, {1}, false)[0] = s;
            break;
        }

        case Op::Abs: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) out[i] = std::fabs(a[i]);
            break;
        }

        case Op::Log: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) {
                if (a[i] <= 0.0) throw DomainError("log of non-positive value");
                out[i] = std::log(a[i]);
            }
            break;
        }

        case Op::Dot: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            require(a.same_dims(b), [] { return "elementwise-dot dims mismatch"; });
            auto [rows, len] = last_axis(a);
            Tensor& out = out_buffer(n.value, drop_last(a), false);
            for (int r = 0; r < rows; ++r) {
                double s = 0.0;
                for (int j = 0; j < len; ++j) s += a[r * len + j] * b[r * len + j];
                out[r] = s;
            }
            break;
        }

        case Op::Sqrt: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) {
                if (a[i] < 0.0) throw DomainError("sqrt of negative value");
                out[i] = std::sqrt(a[i]);
            }
            break;
        }

        case Op::Sin:
        case Op::Cos: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i)
                out[i] = n.kind == Op::Sin ? std::sin(a[i]) : std::cos(a[i]);
            break;
        }

        case Op::Atan2: {
            const Tensor& y = in(n, 0);
            const Tensor& x = in(n, 1);
            require(y.same_dims(x), [] { return "atan2 dims mismatch"; });
            Tensor& out = out_buffer(n.value, y.dims(), false);
            for (int i = 0; i < y.numel(); ++i) out[i] = std::atan2(y[i], x[i]);
            break;
        }

        case Op::Clamp: {
            const Tensor& a = in(n, 0);
            Tensor& out = out_buffer(n.value, a.dims(), false);
            for (int i = 0; i < a.numel(); ++i) out[i] = std::min(std::max(a[i], n.a0), n.a1);
            break;
        }

        case Op::Reshape: {
            const Tensor& a = in(n, 0);
            require(Tensor::count(n.shape_attr) == a.numel(), [] { return "reshape numel mismatch"; });
            Tensor& out = out_buffer(n.value, n.shape_attr, false);
            std::copy(a.vec().begin(), a.vec().end(), out.vec().begin());
            break;
        }
    }
    if (!n.value.all_finite())
        throw NumericError(std::string("non-finite output of ") + op_name(n.kind));
}

void Graph::accumulate(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                       std::vector<char>& has_grad) {
    auto bump_all = [&](int id, Tensor t) {
        if (!has_grad[static_cast<size_t>(id)]) {
            grads[static_cast<size_t>(id)] = std::move(t);
            has_grad[static_cast<size_t>(id)] = 1;
            return;
        }
        Tensor& dst = grads[static_cast<size_t>(id)];
        for (int i = 0; i < t.numel(); ++i) dst[i] += t[i];
    };

    switch (n.kind) {
        case Op::Input:
        case Op::Parameter:
            return;

        case Op::Matmul: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            const int m = a.dim(0), k = a.dim(1), p = b.dim(1);
            Tensor da({m, k}), db({k, p});
            // da = g b^T (dot products along the shared p axis)
            for (int i = 0; i < m; ++i) {
                const double* grow = g.data() + static_cast<size_t>(i) * p;
                double* darow = da.data() + static_cast<size_t>(i) * k;
                for (int t = 0; t < k; ++t) {
                    const double* brow = b.data() + static_cast<size_t>(t) * p;
                    double s = 0.0;
                    for (int j = 0; j < p; ++j) s += grow[j] * brow[j];
                    darow[t] = s;
                }
            }
            // db = a^T g (rank-one updates per row of a)
            for (int i = 0; i < m; ++i) {
                const double* arow = a.data() + static_cast<size_t>(i) * k;
                const double* grow = g.data() + static_cast<size_t>(i) * p;
                for (int t = 0; t < k; ++t) {
                    const double av = arow[t];
                    double* dbrow = db.data() + static_cast<size_t>(t) * p;
                    for (int j = 0; j < p; ++j) dbrow[j] += av * grow[j];
                }
            }
            bump_all(n.inputs[0], std::move(da));
            bump_all(n.inputs[1], std::move(db));
            break;
        }

        case Op::Transpose: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.dim(0); ++i)
                for (int j = 0; j < a.dim(1); ++j) da.at2(i, j) = g.at2(j, i);
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Add:
            bump_all(n.inputs[0], g);
            bump_all(n.inputs[1], g);
            break;

        case Op::Sub: {
            bump_all(n.inputs[0], g);
            Tensor neg(g.dims());
            for (int i = 0; i < g.numel(); ++i) neg[i] = -g[i];
            bump_all(n.inputs[1], std::move(neg));
            break;
        }

        case Op::Mul: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            Tensor da(a.dims()), db(b.dims());
            for (int i = 0; i < a.numel(); ++i) {
                da[i] = g[i] * b[i];
                db[i] = g[i] * a[i];
            }
            bump_all(n.inputs[0], std::move(da));
            bump_all(n.inputs[1], std::move(db));
            break;
        }

        case Op::Divide: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            Tensor da(a.dims()), db(b.dims());
            for (int i = 0; i < a.numel(); ++i) {
                da[i] = g[i] / b[i];
                db[i] = -g[i] * a[i] / (b[i] * b[i]);
            }
            bump_all(n.inputs[0], std::move(da));
            bump_all(n.inputs[1], std::move(db));
            break;
        }

        case Op::Scale: {
            Tensor da(g.dims());
            for (int i = 0; i < g.numel(); ++i) da[i] = g[i] * n.a0;
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::ConcatLast: {
            const Tensor& out = n.value;
            const int olen = out.dim(out.ndim() - 1);
            const int rows = out.numel() / olen;
            int off = 0;
            for (size_t s = 0; s < n.inputs.size(); ++s) {
                const Tensor& t = in(n, static_cast<int>(s));
                const int len = t.dim(t.ndim() - 1);
                Tensor dt(t.dims());
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < len; ++j) dt[r * len + j] = g[r * olen + off + j];
                bump_all(n.inputs[s], std::move(dt));
                off += len;
            }
            break;
        }

        case Op::SliceLast: {
            const Tensor& a = in(n, 0);
            auto [rows, len] = last_axis(a);
            const int start = static_cast<int>(n.a0), slen = static_cast<int>(n.a1);
            Tensor da(a.dims());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < slen; ++j) da[r * len + start + j] = g[r * slen + j];
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::RowSoftmax:
        case Op::ColSoftmax: {
            const Tensor& y = n.value;
            const int r = y.rows(), c = y.ndim() == 2 ? y.dim(1) : y.dim(0);
            const bool rowwise = (n.kind == Op::RowSoftmax);
            const int groups = rowwise ? r : c;
            const int glen = rowwise ? c : r;
            Tensor da(y.dims());
            for (int grp = 0; grp < groups; ++grp) {
                auto idx = [&](int t) { return rowwise ? grp * c + t : t * c + grp; };
                double dotgy = 0.0;
                for (int t = 0; t < glen; ++t) dotgy += g[idx(t)] * y[idx(t)];
                for (int t = 0; t < glen; ++t) da[idx(t)] = y[idx(t)] * (g[idx(t)] - dotgy);
            }
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Relu: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i) da[i] = a[i] > 0.0 ? g[i] : 0.0;
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Sigmoid: {
            const Tensor& y = n.value;
            Tensor da(y.dims());
            for (int i = 0; i < y.numel(); ++i) da[i] = g[i] * y[i] * (1.0 - y[i]);
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::L2NormLast: {
            const Tensor& a = in(n, 0);
            const Tensor& y = n.value;
            auto [rows, len] = last_axis(a);
            Tensor da(a.dims());
            for (int r = 0; r < rows; ++r) {
                double nrm = 0.0, gy = 0.0;
                for (int j = 0; j < len; ++j) nrm += a[r * len + j] * a[r * len + j];
                nrm = std::sqrt(nrm);
                for (int j = 0; j < len; ++j) gy += g[r * len + j] * y[r * len + j];
                for (int j = 0; j < len; ++j)
                    da[r * len + j] = (g[r * len + j] - y[r * len + j] * gy) / nrm;
            }
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Sum:
        case Op::Mean: {
            const Tensor& a = in(n, 0);
            const double gv = n.kind == Op::Sum ? g[0] : g[0] / a.numel();
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i) da[i] = gv;
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Abs: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i)
                da[i] = a[i] > 0.0 ? g[i] : (a[i] < 0.0 ? -g[i] : 0.0);
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Log: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i) da[i] = g[i] / a[i];
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Dot: {
            const Tensor& a = in(n, 0);
            const Tensor& b = in(n, 1);
            auto [rows, len] = last_axis(a);
            Tensor da(a.dims()), db(b.dims());
            for (int r = 0; r < rows; ++r)
                for (int j = 0; j < len; ++j) {
                    da[r * len + j] = g[r] * b[r * len + j];
                    db[r * len + j] = g[r] * a[r * len + j];
                }
            bump_all(n.inputs[0], std::move(da));
            bump_all(n.inputs[1], std::move(db));
            break;
        }

        case Op::Sqrt: {
            const Tensor& y = n.value;
            Tensor da(y.dims());
            for (int i = 0; i < y.numel(); ++i) da[i] = g[i] * 0.5 / y[i];
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Sin:
        case Op::Cos: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i)
                da[i] = n.kind == Op::Sin ? g[i] * std::cos(a[i]) : -g[i] * std::sin(a[i]);
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Atan2: {
            const Tensor& y = in(n, 0);
            const Tensor& x = in(n, 1);
            Tensor dy(y.dims()), dx(x.dims());
            for (int i = 0; i < y.numel(); ++i) {
                const double d = x[i] * x[i] + y[i] * y[i];
                dy[i] = g[i] * x[i] / d;
                dx[i] = -g[i] * y[i] / d;
            }
            bump_all(n.inputs[0], std::move(dy));
            bump_all(n.inputs[1], std::move(dx));
            break;
        }

        case Op::Clamp: {
            const Tensor& a = in(n, 0);
            Tensor da(a.dims());
            for (int i = 0; i < a.numel(); ++i)
                da[i] = (a[i] >= n.a0 && a[i] <= n.a1) ? g[i] : 0.0;
            bump_all(n.inputs[0], std::move(da));
            break;
        }

        case Op::Reshape: {
            const Tensor& a = in(n, 0);
            bump_all(n.inputs[0], Tensor(a.dims(), g.vec()));
            break;
        }
    }
}

std::map<std::string, Tensor> Graph::backward(NodeId loss) {
    if (!loss.valid() || loss.v >= size()) throw ContractError("backward: invalid loss node");
    if (nodes_[static_cast<size_t>(loss.v)].value.numel() != 1)
        throw ContractError("backward: loss must be scalar");

    grads_.assign(nodes_.size(), Tensor());
    has_grad_.assign(nodes_.size(), 0);

    // Nodes that can influence the loss.
    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<size_t>(loss.v)] = 1;
    for (int i = loss.v; i >= 0; --i) {
        if (!needed[static_cast<size_t>(i)]) continue;
        for (int id : nodes_[static_cast<size_t>(i)].inputs) needed[static_cast<size_t>(id)] = 1;
    }

    grads_[static_cast<size_t>(loss.v)] =
        Tensor(nodes_[static_cast<size_t>(loss.v)].value.dims(), {1.0});
    has_grad_[static_cast<size_t>(loss.v)] = 1;

    for (int i = loss.v; i >= 0; --i) {
        if (!needed[static_cast<size_t>(i)] || !has_grad_[static_cast<size_t>(i)]) continue;
        accumulate(nodes_[static_cast<size_t>(i)], grads_[static_cast<size_t>(i)], grads_,
                   has_grad_);
    }

    std::map<std::string, Tensor> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        if (nodes_[i].kind != Op::Parameter) continue;
        if (has_grad_[i])
            out[nodes_[i].name] = grads_[i];
        else
            out[nodes_[i].name] = Tensor(nodes_[i].value.dims());
    }
    return out;
}

const Tensor& Graph::grad(NodeId id) const {
    static const Tensor empty;
    if (!has_grad_.empty() && has_grad_[static_cast<size_t>(id.v)])
        return grads_[static_cast<size_t>(id.v)];
    return empty;
}

double Graph::grad_check(NodeId loss, NodeId param, double h) {
    backward(loss);
    Tensor analytic = grad(param);
    Node& p = nodes_[static_cast<size_t>(param.v)];
    if (analytic.numel() == 0) analytic = Tensor(p.value.dims());

    double worst = 0.0;
    for (int k = 0; k < p.value.numel(); ++k) {
        const double orig = p.value[k];
        p.value[k] = orig + h;
        recompute();
        const double fp = nodes_[static_cast<size_t>(loss.v)].value[0];
        p.value[k] = orig - h;
        recompute();
        const double fm = nodes_[static_cast<size_t>(loss.v)].value[0];
        p.value[k] = orig;
        const double cd = (fp - fm) / (2.0 * h);
        const double rel = std::fabs(analytic[k] - cd) / std::max(1.0, std::fabs(cd));
        worst = std::max(worst, rel);
    }
    recompute();
    return worst;
}

std::vector<NodeId> Graph::parameter_nodes() const {
    std::vector<NodeId> out;
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].kind == Op::Parameter) out.push_back({static_cast<int>(i)});
    return out;
}

}  // namespace planeq::diff
