#include "sf/tape.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "sf/errors.hpp"
#include "sf/kernels.hpp"

namespace sf {

namespace k = kernels;

const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::Neg: return "neg";
        case Op::Scale: return "scale";
        case Op::AddScalar: return "add_scalar";
        case Op::Matmul: return "matmul";
        case Op::Sin: return "sin";
        case Op::Cos: return "cos";
        case Op::Exp: return "exp";
        case Op::Log: return "log";
        case Op::Sqrt: return "sqrt";
        case Op::Relu: return "relu";
        case Op::Softplus: return "softplus";
        case Op::Sigmoid: return "sigmoid";
        case Op::Concat: return "concat";
        case Op::SliceLast: return "slice_last";
        case Op::GatherRows: return "gather_rows";
        case Op::WeightedGather: return "weighted_gather_rows";
        case Op::SumAll: return "sum_all";
        case Op::MeanAll: return "mean_all";
        case Op::SumAxis: return "sum_axis";
        case Op::CumsumExclusive: return "cumsum_exclusive";
        case Op::Conv2d: return "conv2d";
        case Op::AvgPool2: return "avgpool2";
        case Op::CosineRows: return "cosine_rows";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

Array& Node::ensure_grad() {
    if (!grad_allocated()) grad = Array(value.shape());
    return grad;
}

NodePtr param(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

NodePtr constant(Array value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

namespace {

NodePtr make(Op op, Array value, std::vector<std::pair<NodePtr, GradRule>> parents) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& [p, rule] : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    return n;
}

// Accumulate self.grad elementwise-combined with `extra` into the parent,
// reducing over broadcast axes.
void acc_reduced(Node& parent, const Array& contribution) {
    k::reduce_to_shape(parent.grad, contribution);
}

}  // namespace

NodePtr add(const NodePtr& a, const NodePtr& b) {
    return make(Op::Add, k::binary(a->value, b->value, k::Binary::Add, "add"),
                {{a, [](const Node& s, Node& p) { acc_reduced(p, s.grad); }},
                 {b, [](const Node& s, Node& p) { acc_reduced(p, s.grad); }}});
}

NodePtr sub(const NodePtr& a, const NodePtr& b) {
    return make(Op::Sub, k::binary(a->value, b->value, k::Binary::Sub, "sub"),
                {{a, [](const Node& s, Node& p) { acc_reduced(p, s.grad); }},
                 {b, [](const Node& s, Node& p) { acc_reduced(p, k::neg(s.grad)); }}});
}

NodePtr mul(const NodePtr& a, const NodePtr& b) {
    NodePtr ac = a, bc = b;
    return make(Op::Mul, k::binary(a->value, b->value, k::Binary::Mul, "mul"),
                {{a,
                  [bc](const Node& s, Node& p) {
                      acc_reduced(p, k::binary(s.grad, bc->value, k::Binary::Mul, "mul"));
                  }},
                 {b, [ac](const Node& s, Node& p) {
                      acc_reduced(p, k::binary(s.grad, ac->value, k::Binary::Mul, "mul"));
                  }}});
}

NodePtr div(const NodePtr& a, const NodePtr& b) {
    NodePtr ac = a, bc = b;
    return make(Op::Div, k::binary(a->value, b->value, k::Binary::Div, "div"),
                {{a,
                  [bc](const Node& s, Node& p) {
                      acc_reduced(p, k::binary(s.grad, bc->value, k::Binary::Div, "div"));
                  }},
                 {b, [ac, bc](const Node& s, Node& p) {
                      // d/db (a/b) = -a / b^2
                      Array b2 = k::binary(bc->value, bc->value, k::Binary::Mul, "div");
                      Array t = k::binary(ac->value, b2, k::Binary::Div, "div");
                      acc_reduced(p, k::neg(k::binary(s.grad, t, k::Binary::Mul, "div")));
                  }}});
}

NodePtr neg(const NodePtr& a) {
    return make(Op::Neg, k::neg(a->value),
                {{a, [](const Node& s, Node& p) { acc_reduced(p, k::neg(s.grad)); }}});
}

NodePtr scale(const NodePtr& a, double s) {
    return make(Op::Scale, k::scale(a->value, s),
                {{a, [s](const Node& n, Node& p) { acc_reduced(p, k::scale(n.grad, s)); }}});
}

NodePtr add_scalar(const NodePtr& a, double s) {
    return make(Op::AddScalar, k::add_scalar(a->value, s),
                {{a, [](const Node& n, Node& p) { acc_reduced(p, n.grad); }}});
}

NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    NodePtr ac = a, bc = b;
    return make(Op::Matmul, k::matmul(a->value, b->value),
                {{a,
                  [bc](const Node& s, Node& p) {
                      k::matmul_acc(p.grad, s.grad, bc->value, false, true);
                  }},
                 {b, [ac](const Node& s, Node& p) {
                      k::matmul_acc(p.grad, ac->value, s.grad, true, false);
                  }}});
}

NodePtr sin(const NodePtr& a) {
    NodePtr ac = a;
    return make(Op::Sin, k::sin(a->value), {{a, [ac](const Node& s, Node& p) {
                                                 acc_reduced(p, k::binary(s.grad, k::cos(ac->value),
                                                                          k::Binary::Mul, "sin"));
                                             }}});
}

NodePtr cos(const NodePtr& a) {
    NodePtr ac = a;
    return make(Op::Cos, k::cos(a->value), {{a, [ac](const Node& s, Node& p) {
                                                 acc_reduced(p, k::neg(k::binary(
                                                                    s.grad, k::sin(ac->value),
                                                                    k::Binary::Mul, "cos")));
                                             }}});
}

NodePtr exp(const NodePtr& a) {
    Array v = k::exp(a->value);
    Array vcopy = v;
    return make(Op::Exp, std::move(v), {{a, [vcopy](const Node& s, Node& p) {
                                             acc_reduced(p, k::binary(s.grad, vcopy,
                                                                      k::Binary::Mul, "exp"));
                                         }}});
}

NodePtr log(const NodePtr& a) {
    NodePtr ac = a;
    return make(Op::Log, k::log(a->value), {{a, [ac](const Node& s, Node& p) {
                                                 acc_reduced(p, k::binary(s.grad, ac->value,
                                                                          k::Binary::Div, "log"));
                                             }}});
}

NodePtr sqrt(const NodePtr& a) {
    Array v = k::sqrt(a->value);
    Array vcopy = v;
    return make(Op::Sqrt, std::move(v), {{a, [vcopy](const Node& s, Node& p) {
                    const std::size_t n = s.grad.size();
                    for (std::size_t i = 0; i < n; ++i) p.grad[i] += s.grad[i] * 0.5 / vcopy[i];
                }}});
}

NodePtr relu(const NodePtr& a) {
    NodePtr ac = a;
    return make(Op::Relu, k::relu(a->value), {{a, [ac](const Node& s, Node& p) {
                    const std::size_t n = s.grad.size();
                    for (std::size_t i = 0; i < n; ++i)
                        if (ac->value[i] > 0.0) p.grad[i] += s.grad[i];
                }}});
}

NodePtr softplus(const NodePtr& a) {
    NodePtr ac = a;
    return make(Op::Softplus, k::softplus(a->value),
                {{a, [ac](const Node& s, Node& p) {
                      acc_reduced(p, k::binary(s.grad, k::sigmoid(ac->value), k::Binary::Mul,
                                               "softplus"));
                  }}});
}

NodePtr sigmoid(const NodePtr& a) {
    Array v = k::sigmoid(a->value);
    Array vcopy = v;
    return make(Op::Sigmoid, std::move(v), {{a, [vcopy](const Node& s, Node& p) {
                    const std::size_t n = s.grad.size();
                    for (std::size_t i = 0; i < n; ++i) {
                        const double y = vcopy[i];
                        p.grad[i] += s.grad[i] * y * (1.0 - y);
                    }
                }}});
}

NodePtr concat(const std::vector<NodePtr>& parts) {
    std::vector<const Array*> vals;
    vals.reserve(parts.size());
    for (const auto& p : parts) vals.push_back(&p->value);
    Array out = k::concat_last(vals);
    std::vector<std::pair<NodePtr, GradRule>> parents;
    std::size_t off = 0;
    for (const auto& part : parts) {
        const std::size_t w = part->value.shape().back();
        parents.push_back({part, [off, w](const Node& s, Node& p) {
                               Array g = k::slice_last(s.grad, off, off + w);
                               k::reduce_to_shape(p.grad, g);
                           }});
        off += w;
    }
    return make(Op::Concat, std::move(out), std::move(parents));
}

NodePtr slice_last(const NodePtr& a, std::size_t from, std::size_t to) {
    return make(Op::SliceLast, k::slice_last(a->value, from, to),
                {{a, [from, to](const Node& s, Node& p) {
                      k::slice_last_acc(p.grad, s.grad, from, to);
                  }}});
}

NodePtr reshape(const NodePtr& a, Shape shape) {
    Shape orig = a->value.shape();
    return make(Op::Reshape, a->value.reshaped(std::move(shape)),
                {{a, [orig](const Node& s, Node& p) {
                      k::reduce_to_shape(p.grad, s.grad.reshaped(orig));
                  }}});
}

NodePtr gather_rows(const NodePtr& table, std::vector<std::uint32_t> idx) {
    Array out = k::gather_rows(table->value, idx);
    auto idx_ptr = std::make_shared<std::vector<std::uint32_t>>(std::move(idx));
    return make(Op::GatherRows, std::move(out), {{table, [idx_ptr](const Node& s, Node& p) {
                                                      k::scatter_rows_acc(p.grad, s.grad, *idx_ptr);
                                                  }}});
}

NodePtr weighted_gather_rows(const NodePtr& table, std::vector<std::uint32_t> idx,
                             std::vector<double> w, std::size_t corners) {
    if (idx.size() != w.size() || idx.size() % corners != 0)
        fail("diffcore", "weighted_gather_rows: index/weight layout mismatch");
    Array out = k::weighted_gather_rows(table->value, idx, w, corners);
    auto idx_ptr = std::make_shared<std::vector<std::uint32_t>>(std::move(idx));
    auto w_ptr = std::make_shared<std::vector<double>>(std::move(w));
    return make(Op::WeightedGather, std::move(out),
                {{table, [idx_ptr, w_ptr, corners](const Node& s, Node& p) {
                      k::weighted_scatter_rows_acc(p.grad, s.grad, *idx_ptr, *w_ptr, corners);
                  }}});
}

NodePtr sum_all(const NodePtr& a) {
    return make(Op::SumAll, k::sum_all(a->value), {{a, [](const Node& s, Node& p) {
                    const double g = s.grad.item();
                    const std::size_t n = p.grad.size();
                    for (std::size_t i = 0; i < n; ++i) p.grad[i] += g;
                }}});
}

NodePtr mean_all(const NodePtr& a) {
    const double inv = 1.0 / static_cast<double>(a->value.size());
    return make(Op::MeanAll, k::mean_all(a->value), {{a, [inv](const Node& s, Node& p) {
                    const double g = s.grad.item() * inv;
                    const std::size_t n = p.grad.size();
                    for (std::size_t i = 0; i < n; ++i) p.grad[i] += g;
                }}});
}

NodePtr sum_axis(const NodePtr& a, std::size_t axis, bool keepdims) {
    Shape keep = a->value.shape();
    keep[axis] = 1;
    return make(Op::SumAxis, k::sum_axis(a->value, axis, keepdims),
                {{a, [keep](const Node& s, Node& p) {
                      // Broadcast the (possibly squeezed) grad back along the axis.
                      k::reduce_to_shape(p.grad, k::binary(s.grad.reshaped(keep),
                                                           Array(p.value.shape()),
                                                           k::Binary::Add, "sum_axis"));
                  }}});
}

NodePtr cumsum_exclusive_last(const NodePtr& a) {
    return make(Op::CumsumExclusive, k::cumsum_exclusive_last(a->value),
                {{a, [](const Node& s, Node& p) {
                      k::reduce_to_shape(p.grad, k::cumsum_exclusive_last_reverse(s.grad));
                  }}});
}

NodePtr conv2d(const NodePtr& input, const NodePtr& weight, const NodePtr& bias) {
    NodePtr in_c = input, w_c = weight;
    const std::size_t h = input->value.extent(0), w = input->value.extent(1);
    return make(
        Op::Conv2d, k::conv2d(input->value, weight->value, bias->value),
        {{input,
          [w_c, h, w](const Node& s, Node& p) {
              k::reduce_to_shape(p.grad, k::conv2d_input_grad(s.grad, w_c->value, h, w));
          }},
         {weight,
          [in_c](const Node& s, Node& p) {
              // dW = im2col(input)^T * dOut; recomputed, only exercised in tests
              // since production extractors are frozen.
              const Array& in = in_c->value;
              const std::size_t ih = in.extent(0), iw = in.extent(1), cin = in.extent(2);
              const std::size_t kk = p.value.extent(0);
              const std::size_t cout = p.value.extent(3);
              const std::size_t pad = kk / 2;
              Array col(Shape{ih * iw, kk * kk * cin});
              for (std::size_t y = 0; y < ih; ++y)
                  for (std::size_t x = 0; x < iw; ++x) {
                      double* dst = col.data() + (y * iw + x) * kk * kk * cin;
                      for (std::size_t ky = 0; ky < kk; ++ky)
                          for (std::size_t kx = 0; kx < kk; ++kx) {
                              const std::ptrdiff_t sy =
                                  static_cast<std::ptrdiff_t>(y + ky) - static_cast<std::ptrdiff_t>(pad);
                              const std::ptrdiff_t sx =
                                  static_cast<std::ptrdiff_t>(x + kx) - static_cast<std::ptrdiff_t>(pad);
                              double* cell = dst + (ky * kk + kx) * cin;
                              if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(ih) || sx < 0 ||
                                  sx >= static_cast<std::ptrdiff_t>(iw)) {
                                  std::fill(cell, cell + cin, 0.0);
                              } else {
                                  const double* src =
                                      in.data() + (static_cast<std::size_t>(sy) * iw +
                                                   static_cast<std::size_t>(sx)) *
                                                      cin;
                                  std::copy(src, src + cin, cell);
                              }
                          }
                  }
              Array gmat = s.grad.reshaped(Shape{ih * iw, cout});
              Array dw = p.grad.reshaped(Shape{kk * kk * cin, cout});
              k::matmul_acc(dw, col, gmat, true, false);
              p.grad = dw.reshaped(p.value.shape());
          }},
         {bias, [](const Node& s, Node& p) {
              const std::size_t cout = p.grad.size();
              const std::size_t n = s.grad.size() / cout;
              for (std::size_t r = 0; r < n; ++r)
                  for (std::size_t c = 0; c < cout; ++c) p.grad[c] += s.grad[r * cout + c];
          }}});
}

NodePtr avgpool2(const NodePtr& input) {
    const std::size_t h = input->value.extent(0), w = input->value.extent(1);
    return make(Op::AvgPool2, k::avgpool2(input->value),
                {{input, [h, w](const Node& s, Node& p) {
                      k::reduce_to_shape(p.grad, k::avgpool2_input_grad(s.grad, h, w));
                  }}});
}

NodePtr cosine_rows(const NodePtr& a, const NodePtr& b, double eps) {
    NodePtr ac = a, bc = b;
    Array out = k::cosine_rows(a->value, b->value, eps);
    auto rule = [eps](const Array& av, const Array& bv, const Array& cos_v, const Array& g,
                      Array& dst) {
        const std::size_t n = av.extent(0), d = av.extent(1);
        for (std::size_t i = 0; i < n; ++i) {
            const double* pa = av.data() + i * d;
            const double* pb = bv.data() + i * d;
            double na = 0.0, nb = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                na += pa[j] * pa[j];
                nb += pb[j] * pb[j];
            }
            const double u = std::sqrt(na), v = std::sqrt(nb);
            const double denom = u * v + eps;
            const double gi = g[i];
            // d cos / d a_j = b_j/denom - cos * v * a_j / (u_guard * denom)
            const double u_guard = std::max(u, 1e-300);
            const double coef = cos_v[i] * v / (u_guard * denom);
            double* pd = dst.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) pd[j] += gi * (pb[j] / denom - coef * pa[j]);
        }
    };
    Array out_copy = out;
    return make(Op::CosineRows, std::move(out),
                {{a,
                  [ac, bc, out_copy, rule](const Node& s, Node& p) {
                      rule(ac->value, bc->value, out_copy, s.grad, p.grad);
                  }},
                 {b, [ac, bc, out_copy, rule](const Node& s, Node& p) {
                      rule(bc->value, ac->value, out_copy, s.grad, p.grad);
                  }}});
}

namespace {

std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative post-order DFS; child edges visited in parent-list order so
    // the sequence only depends on graph construction.
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next].first.get();
            ++next;
            if (seen.insert(parent).second) stack.push_back({parent, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;  // leaves first, root last
}

void run_backward(const NodePtr& root, const Array& seed) {
    if (!root->value.same_shape(seed))
        fail("diffcore", "backward: seed shape " + shape_str(seed.shape()) +
                             " does not match root " + shape_str(root->value.shape()));
    std::vector<Node*> order = topo_order(root.get());
    for (Node* n : order)
        if (n->op != Op::Leaf && n->grad_allocated()) n->grad.fill(0.0);
    Array& rg = root->ensure_grad();
    for (std::size_t i = 0; i < seed.size(); ++i) rg[i] += seed[i];
    for (std::size_t i = order.size(); i-- > 0;) {
        Node* n = order[i];
        if (!n->requires_grad || !n->grad_allocated()) continue;
        for (auto& [parent, rule] : n->parents) {
            if (!parent->requires_grad) continue;
            parent->ensure_grad();
            rule(*n, *parent);
        }
    }
}

}  // namespace

void backward(const NodePtr& root) {
    if (!root->value.is_scalar())
        fail("diffcore",
             "backward: root must be scalar, got " + shape_str(root->value.shape()));
    run_backward(root, Array::full(root->value.shape(), 1.0));
}

void backward_seeded(const NodePtr& root, const Array& seed) { run_backward(root, seed); }

void zero_grad(const std::vector<NodePtr>& params) {
    for (const auto& p : params)
        if (p->grad_allocated()) p->grad.fill(0.0);
}

std::vector<Op> topo_tags(const NodePtr& root) {
    std::vector<Op> tags;
    for (Node* n : topo_order(root.get())) tags.push_back(n->op);
    return tags;
}

double grad_check(const std::function<NodePtr(const NodePtr&)>& f, const Array& point,
                  double h) {
    if (h <= 0.0) fail("diffcore", "grad_check: h must be positive");
    NodePtr x = param(point);
    NodePtr y = f(x);
    if (!y->value.is_scalar()) fail("diffcore", "grad_check: f must be scalar-valued");
    if (!y->value.all_finite()) fail("diffcore", "grad_check: non-finite value at base point");
    backward(y);
    Array analytic = x->grad_allocated() ? x->grad : Array(point.shape());

    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        auto eval_at = [&](double v) {
            Array p = point;
            p[i] = v;
            double out = f(constant(p))->value.item();
            if (!std::isfinite(out))
                fail("diffcore",
                     "grad_check: non-finite intermediate at coordinate " + std::to_string(i));
            return out;
        };
        const double fp = eval_at(point[i] + h);
        const double fm = eval_at(point[i] - h);
        const double central = (fp - fm) / (2.0 * h);
        const double err = std::abs(analytic[i] - central) / std::max(1.0, std::abs(central));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace sf
