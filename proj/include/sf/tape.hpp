#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sf/array.hpp"

namespace sf {

enum class Op : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Scale,
    AddScalar,
    Matmul,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Relu,
    Softplus,
    Sigmoid,
    Concat,
    SliceLast,
    GatherRows,
    WeightedGather,
    SumAll,
    MeanAll,
    SumAxis,
    CumsumExclusive,
    Conv2d,
    AvgPool2,
    CosineRows,
    Reshape,
};

const char* op_name(Op op);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Accumulates this node's contribution into one parent's grad. The parent's
// grad buffer is allocated and the parent's requires_grad checked by the
// backward sweep before the rule runs.
using GradRule = std::function<void(const Node& self, Node& parent)>;

// One vertex of the reverse-mode graph. Parents point upward (toward leaves),
// so dropping the root releases the whole expression while leaf parameters
// held elsewhere survive.
struct Node {
    Array value;
    Array grad;  // lazily allocated, same shape as value
    Op op = Op::Leaf;
    bool requires_grad = false;
    std::vector<std::pair<NodePtr, GradRule>> parents;

    Array& ensure_grad();
    bool grad_allocated() const { return grad.size() == value.size() && value.size() > 0; }
};

// Leaves. A param participates in gradients, a constant never does.
NodePtr param(Array value);
NodePtr constant(Array value);

// Elementwise (trailing-aligned broadcasting like the kernels).
NodePtr add(const NodePtr& a, const NodePtr& b);
NodePtr sub(const NodePtr& a, const NodePtr& b);
NodePtr mul(const NodePtr& a, const NodePtr& b);
NodePtr div(const NodePtr& a, const NodePtr& b);
NodePtr neg(const NodePtr& a);
NodePtr scale(const NodePtr& a, double s);
NodePtr add_scalar(const NodePtr& a, double s);

NodePtr matmul(const NodePtr& a, const NodePtr& b);

NodePtr sin(const NodePtr& a);
NodePtr cos(const NodePtr& a);
NodePtr exp(const NodePtr& a);
NodePtr log(const NodePtr& a);
NodePtr sqrt(const NodePtr& a);
NodePtr relu(const NodePtr& a);
NodePtr softplus(const NodePtr& a);
NodePtr sigmoid(const NodePtr& a);

NodePtr concat(const std::vector<NodePtr>& parts);
NodePtr slice_last(const NodePtr& a, std::size_t from, std::size_t to);
NodePtr reshape(const NodePtr& a, Shape shape);

// Gradient flows to the gathered table rows only; indices are not
// differentiable.
NodePtr gather_rows(const NodePtr& table, std::vector<std::uint32_t> idx);
// out[p,:] = sum_k w[p,k] * table[idx[p,k],:]; idx/w are P x corners, constant.
NodePtr weighted_gather_rows(const NodePtr& table, std::vector<std::uint32_t> idx,
                             std::vector<double> w, std::size_t corners);

NodePtr sum_all(const NodePtr& a);
NodePtr mean_all(const NodePtr& a);
NodePtr sum_axis(const NodePtr& a, std::size_t axis, bool keepdims);
NodePtr cumsum_exclusive_last(const NodePtr& a);

NodePtr conv2d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias);
NodePtr avgpool2(const NodePtr& input);

// Rowwise cosine similarity, both operands differentiable.
NodePtr cosine_rows(const NodePtr& a, const NodePtr& b, double eps = 1e-8);

// Reverse sweep from a scalar root. Interior grads are scratch zeroed per
// call; leaf grads accumulate across calls until explicitly reset.
void backward(const NodePtr& root);
// Vector-Jacobian product: seed has root's shape. Used for deferred
// image-space backpropagation.
void backward_seeded(const NodePtr& root, const Array& seed);

void zero_grad(const std::vector<NodePtr>& params);

// Op tags in construction (topological) order; graph reproducibility checks.
std::vector<Op> topo_tags(const NodePtr& root);

// Max over coordinates of |analytic - central difference| / max(1, |central|).
// f must be a pure function of its argument.
double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Array& point,
                  double h);

}  // namespace sf
