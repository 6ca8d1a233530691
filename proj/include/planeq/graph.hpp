#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

#include "planeq/tensor.hpp"

namespace planeq::diff {

// Node handle; valid only for the graph that produced it.
struct NodeId {
    int v = -1;
    bool valid() const { return v >= 0; }
};

enum class Op : uint8_t {
    Input,
    Parameter,
    Matmul,
    Transpose,
    Add,
    Sub,
    Mul,            // elementwise product
    Scale,          // multiply by compile-time scalar
    ConcatLast,
    SliceLast,
    RowSoftmax,
    ColSoftmax,
    Relu,
    Sigmoid,
    L2NormLast,
    Sum,            // full reduction -> [1]
    Mean,           // full reduction -> [1]
    Abs,
    Log,
    Dot,            // contract last axis of two same-shaped tensors
    Sqrt,
    Divide,
    Sin,
    Cos,
    Atan2,
    Clamp,
    Reshape,
};

const char* op_name(Op op);

// Append-only reverse-mode tape. Nodes are evaluated eagerly as they are
// recorded; replaying the tape (recompute) reproduces outputs bit-identically
// because every op is a fixed sequence of double operations.
//
// Single-writer: one thread builds/evaluates a graph. Independent graphs may
// run concurrently.
class Graph {
public:
    // Leaves.
    NodeId input(Tensor t, std::string name = "");
    NodeId constant(Tensor t) { return input(std::move(t)); }
    NodeId parameter(std::string name, Tensor t);

    // Required op set.
    NodeId matmul(NodeId a, NodeId b);
    NodeId transpose(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double c);
    NodeId concat_last(const std::vector<NodeId>& xs);
    NodeId slice_last(NodeId a, int start, int len);
    NodeId row_softmax(NodeId a);
    NodeId col_softmax(NodeId a);
    NodeId relu(NodeId a);
    NodeId sigmoid(NodeId a);
    NodeId l2_normalize_last(NodeId a);
    NodeId sum(NodeId a);
    NodeId mean(NodeId a);
    NodeId abs(NodeId a);
    NodeId log(NodeId a);
    NodeId dot(NodeId a, NodeId b);

    // Extensions used by the pose-loss and loss graphs.
    NodeId sqrt(NodeId a);
    NodeId divide(NodeId a, NodeId b);
    NodeId sin(NodeId a);
    NodeId cos(NodeId a);
    NodeId atan2(NodeId y, NodeId x);
    NodeId clamp(NodeId a, double lo, double hi);
    NodeId reshape(NodeId a, std::vector<int> dims);

    const Tensor& value(NodeId id) const;
    int size() const { return static_cast<int>(nodes_.size()); }
    Op kind(NodeId id) const { return nodes_[static_cast<size_t>(id.v)].kind; }
    bool is_parameter(NodeId id) const { return nodes_[static_cast<size_t>(id.v)].kind == Op::Parameter; }
    const std::string& name(NodeId id) const { return nodes_[static_cast<size_t>(id.v)].name; }

    // Replace a leaf value (same dims) and replay the tape.
    void set_value(NodeId leaf, const Tensor& t);
    void recompute();

    // Tape checkpointing: drop every node recorded after `mark` (training
    // loops keep the forward tape and rebuild only the per-sample loss).
    int mark() const { return size(); }
    void truncate(int mark);

    // Reverse-mode sweep from a scalar loss. Fills per-parameter gradients;
    // non-parameter leaves receive none. Returns name -> gradient.
    std::map<std::string, Tensor> backward(NodeId loss);

    // Gradient of a node from the last backward() sweep (empty tensor if the
    // node was not reached).
    const Tensor& grad(NodeId id) const;

    // Max over coordinates of |analytic - central difference| /
    // max(1, |central difference|) for d loss / d param. Reports, never throws.
    double grad_check(NodeId loss, NodeId param, double h = 1e-6);

    std::vector<NodeId> parameter_nodes() const;

private:
    struct Node {
        Op kind;
        std::vector<int> inputs;
        Tensor value;
        // op attributes
        double a0 = 0.0, a1 = 0.0;
        std::vector<int> shape_attr;
        std::string name;
    };

    NodeId push(Op kind, std::vector<int> inputs, double a0 = 0.0, double a1 = 0.0,
                std::vector<int> shape_attr = {});
    void eval(Node& n);
    const Tensor& in(const Node& n, int i) const {
        return nodes_[static_cast<size_t>(n.inputs[static_cast<size_t>(i)])].value;
    }
    void accumulate(const Node& n, const Tensor& g, std::vector<Tensor>& grads,
                    std::vector<char>& has_grad);

    // deque keeps value() references stable while new nodes are appended
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<char> has_grad_;
};

}  // namespace planeq::diff
