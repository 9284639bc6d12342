#include "sf/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "sf/errors.hpp"

namespace sf::kernels {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

CMapRM as_mat(const Array& a) {
    return CMapRM(a.data(), static_cast<Eigen::Index>(a.extent(0)),
                  static_cast<Eigen::Index>(a.extent(1)));
}

template <typename F>
Array unary(const Array& a, F f) {
    Array out(a.shape());
    const double* src = a.data();
    double* dst = out.data();
    const std::size_t n = a.size();
    for (std::size_t i = 0; i < n; ++i) dst[i] = f(src[i]);
    return out;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op_name) {
    const std::size_t ra = a.size(), rb = b.size();
    const std::size_t r = std::max(ra, rb);
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t ea = i < r - ra ? 1 : a[i - (r - ra)];
        const std::size_t eb = i < r - rb ? 1 : b[i - (r - rb)];
        if (ea != eb && ea != 1 && eb != 1)
            fail("diffcore", std::string(op_name) + ": shapes " + shape_str(a) + " and " +
                                 shape_str(b) + " do not broadcast");
        out[i] = std::max(ea, eb);
    }
    return out;
}

namespace {

// Row-major strides padded to rank r; broadcast axes get stride 0.
std::vector<std::size_t> broadcast_strides(const Shape& s, std::size_t r, const Shape& out) {
    std::vector<std::size_t> st(r, 0);
    std::size_t stride = 1;
    const std::size_t pad = r - s.size();
    for (std::size_t i = s.size(); i-- > 0;) {
        st[pad + i] = (s[i] == 1 && out[pad + i] != 1) ? 0 : stride;
        stride *= s[i];
    }
    return st;
}

template <typename F>
void binary_impl(const Array& a, const Array& b, Array& out, F f) {
    const std::size_t n = out.size();
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    if (a.shape() == b.shape()) {
        for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
        return;
    }
    // Common case: [.., W] (+) [W]
    if (b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.extent(0)) {
        const std::size_t w = b.extent(0);
        for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i % w]);
        return;
    }
    const Shape& os = out.shape();
    const std::size_t r = os.size();
    const auto sa = broadcast_strides(a.shape(), r, os);
    const auto sb = broadcast_strides(b.shape(), r, os);
    std::vector<std::size_t> idx(r, 0);
    std::size_t ia = 0, ib = 0;
    for (std::size_t i = 0; i < n; ++i) {
        po[i] = f(pa[ia], pb[ib]);
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            ia += sa[d];
            ib += sb[d];
            if (idx[d] < os[d]) break;
            ia -= sa[d] * os[d];
            ib -= sb[d] * os[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

Array binary(const Array& a, const Array& b, Binary op, const char* op_name) {
    Array out(broadcast_shape(a.shape(), b.shape(), op_name));
    switch (op) {
        case Binary::Add: binary_impl(a, b, out, [](double x, double y) { return x + y; }); break;
        case Binary::Sub: binary_impl(a, b, out, [](double x, double y) { return x - y; }); break;
        case Binary::Mul: binary_impl(a, b, out, [](double x, double y) { return x * y; }); break;
        case Binary::Div: binary_impl(a, b, out, [](double x, double y) { return x / y; }); break;
    }
    return out;
}

void reduce_to_shape(Array& dst, const Array& src) {
    if (dst.shape() == src.shape()) {
        double* pd = dst.data();
        const double* ps = src.data();
        const std::size_t n = dst.size();
        for (std::size_t i = 0; i < n; ++i) pd[i] += ps[i];
        return;
    }
    const Shape& os = src.shape();
    const std::size_t r = os.size();
    const auto sd = broadcast_strides(dst.shape(), r, os);
    std::vector<std::size_t> idx(r, 0);
    std::size_t id = 0;
    const double* ps = src.data();
    double* pd = dst.data();
    const std::size_t n = src.size();
    for (std::size_t i = 0; i < n; ++i) {
        pd[id] += ps[i];
        for (std::size_t d = r; d-- > 0;) {
            ++idx[d];
            id += sd[d];
            if (idx[d] < os[d]) break;
            id -= sd[d] * os[d];
            idx[d] = 0;
        }
    }
}

Array neg(const Array& a) { return unary(a, [](double x) { return -x; }); }
Array scale(const Array& a, double s) { return unary(a, [s](double x) { return x * s; }); }
Array add_scalar(const Array& a, double s) { return unary(a, [s](double x) { return x + s; }); }

Array sin(const Array& a) { return unary(a, [](double x) { return std::sin(x); }); }
Array cos(const Array& a) { return unary(a, [](double x) { return std::cos(x); }); }
Array exp(const Array& a) { return unary(a, [](double x) { return std::exp(x); }); }
Array log(const Array& a) { return unary(a, [](double x) { return std::log(x); }); }
Array sqrt(const Array& a) { return unary(a, [](double x) { return std::sqrt(x); }); }
Array relu(const Array& a) { return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }); }

Array softplus(const Array& a) {
    // Stable form: max(x,0) + log1p(exp(-|x|))
    return unary(a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); });
}

Array sigmoid(const Array& a) {
    return unary(a, [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
}

Array matmul(const Array& a, const Array& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0))
        fail("diffcore", "matmul: shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                             " do not conform");
    Array out(Shape{a.extent(0), b.extent(1)});
    MapRM(out.data(), a.extent(0), b.extent(1)).noalias() = as_mat(a) * as_mat(b);
    return out;
}

void matmul_acc(Array& c, const Array& a, const Array& b, bool trans_a, bool trans_b) {
    MapRM mc(c.data(), static_cast<Eigen::Index>(c.extent(0)),
             static_cast<Eigen::Index>(c.extent(1)));
    auto ma = as_mat(a);
    auto mb = as_mat(b);
    if (!trans_a && !trans_b)
        mc.noalias() += ma * mb;
    else if (trans_a && !trans_b)
        mc.noalias() += ma.transpose() * mb;
    else if (!trans_a && trans_b)
        mc.noalias() += ma * mb.transpose();
    else
        mc.noalias() += ma.transpose() * mb.transpose();
}

Array sum_all(const Array& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i];
    return Array::scalar(acc);
}

Array mean_all(const Array& a) {
    if (a.size() == 0) fail("diffcore", "mean of empty array");
    return Array::scalar(sum_all(a).item() / static_cast<double>(a.size()));
}

Array sum_axis(const Array& a, std::size_t axis, bool keepdims) {
    if (axis >= a.rank()) fail("diffcore", "sum_axis: axis out of range");
    const Shape& s = a.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t extent = s[axis];
    Shape os;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i == axis) {
            if (keepdims) os.push_back(1);
        } else {
            os.push_back(s[i]);
        }
    }
    Array out(os);
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t e = 0; e < extent; ++e) {
            const double* row = pa + (o * extent + e) * inner;
            double* dst = po + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
        }
    return out;
}

Array cumsum_exclusive_last(const Array& a) {
    if (a.rank() == 0) fail("diffcore", "cumsum on scalar");
    const std::size_t w = a.shape().back();
    const std::size_t rows = a.size() / w;
    Array out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w; ++i) {
            po[r * w + i] = acc;
            acc += pa[r * w + i];
        }
    }
    return out;
}

Array cumsum_exclusive_last_reverse(const Array& a) {
    const std::size_t w = a.shape().back();
    const std::size_t rows = a.size() / w;
    Array out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t i = w; i-- > 0;) {
            po[r * w + i] = acc;
            acc += pa[r * w + i];
        }
    }
    return out;
}

Array concat_last(const std::vector<const Array*>& parts) {
    if (parts.empty()) fail("diffcore", "concat of zero arrays");
    const Array& first = *parts[0];
    if (first.rank() == 0) fail("diffcore", "concat of scalars");
    std::size_t total = 0;
    const std::size_t rows = first.size() / first.shape().back();
    for (const Array* p : parts) {
        if (p->rank() != first.rank() || p->size() / p->shape().back() != rows)
            fail("diffcore", "concat: incompatible shapes " + shape_str(first.shape()) + " vs " +
                                 shape_str(p->shape()));
        for (std::size_t i = 0; i + 1 < p->rank(); ++i)
            if (p->extent(i) != first.extent(i))
                fail("diffcore", "concat: incompatible shapes " + shape_str(first.shape()) +
                                     " vs " + shape_str(p->shape()));
        total += p->shape().back();
    }
    Shape os = first.shape();
    os.back() = total;
    Array out(os);
    double* po = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (const Array* p : parts) {
            const std::size_t w = p->shape().back();
            const double* src = p->data() + r * w;
            std::copy(src, src + w, po + r * total + off);
            off += w;
        }
    }
    return out;
}

Array slice_last(const Array& a, std::size_t from, std::size_t to) {
    const std::size_t w = a.shape().back();
    if (from > to || to > w) fail("diffcore", "slice_last: range out of bounds");
    const std::size_t rows = a.size() / w;
    Shape os = a.shape();
    os.back() = to - from;
    Array out(os);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(a.data() + r * w + from, a.data() + r * w + to,
                  out.data() + r * (to - from));
    return out;
}

void slice_last_acc(Array& dst, const Array& grad, std::size_t from, std::size_t to) {
    const std::size_t w = dst.shape().back();
    const std::size_t rows = dst.size() / w;
    const std::size_t gw = to - from;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < gw; ++i) dst[r * w + from + i] += grad[r * gw + i];
}

Array gather_rows(const Array& table, const std::vector<std::uint32_t>& idx) {
    if (table.rank() != 2) fail("diffcore", "gather: table must be rank 2");
    const std::size_t f = table.extent(1);
    Array out(Shape{idx.size(), f});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= table.extent(0)) fail("diffcore", "gather: index out of range");
        std::copy(table.data() + idx[k] * f, table.data() + (idx[k] + 1) * f, out.data() + k * f);
    }
    return out;
}

void scatter_rows_acc(Array& table_grad, const Array& grad,
                      const std::vector<std::uint32_t>& idx) {
    const std::size_t f = table_grad.extent(1);
    for (std::size_t k = 0; k < idx.size(); ++k)
        for (std::size_t j = 0; j < f; ++j) table_grad[idx[k] * f + j] += grad[k * f + j];
}

Array weighted_gather_rows(const Array& table, const std::vector<std::uint32_t>& idx,
                           const std::vector<double>& w, std::size_t corners) {
    const std::size_t f = table.extent(1);
    const std::size_t p = idx.size() / corners;
    Array out(Shape{p, f});
    const double* pt = table.data();
    double* po = out.data();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < corners; ++k) {
            const double wk = w[i * corners + k];
            const double* row = pt + idx[i * corners + k] * f;
            double* dst = po + i * f;
            for (std::size_t j = 0; j < f; ++j) dst[j] += wk * row[j];
        }
    return out;
}

void weighted_scatter_rows_acc(Array& table_grad, const Array& grad,
                               const std::vector<std::uint32_t>& idx,
                               const std::vector<double>& w, std::size_t corners) {
    const std::size_t f = table_grad.extent(1);
    const std::size_t p = idx.size() / corners;
    double* pt = table_grad.data();
    const double* pg = grad.data();
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t k = 0; k < corners; ++k) {
            const double wk = w[i * corners + k];
            double* row = pt + idx[i * corners + k] * f;
            const double* src = pg + i * f;
            for (std::size_t j = 0; j < f; ++j) row[j] += wk * src[j];
        }
}

Array cosine_rows(const Array& a, const Array& b, double eps) {
    if (a.rank() != 2 || !a.same_shape(b))
        fail("diffcore", "cosine_rows: shapes " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()) + " must be equal rank-2");
    const std::size_t n = a.extent(0), d = a.extent(1);
    Array out(Shape{n});
    for (std::size_t i = 0; i < n; ++i) {
        const double* pa = a.data() + i * d;
        const double* pb = b.data() + i * d;
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            dot += pa[j] * pb[j];
            na += pa[j] * pa[j];
            nb += pb[j] * pb[j];
        }
        out[i] = dot / (std::sqrt(na) * std::sqrt(nb) + eps);
    }
    return out;
}

Array conv2d(const Array& input, const Array& weight, const Array& bias) {
    if (input.rank() != 3 || weight.rank() != 4)
        fail("diffcore", "conv2d: input must be [H,W,C], weight [k,k,Cin,Cout]");
    const std::size_t h = input.extent(0), w = input.extent(1), cin = input.extent(2);
    const std::size_t k = weight.extent(0);
    const std::size_t cout = weight.extent(3);
    if (weight.extent(1) != k || weight.extent(2) != cin || k % 2 == 0)
        fail("diffcore", "conv2d: weight shape " + shape_str(weight.shape()) +
                             " incompatible with input " + shape_str(input.shape()));
    if (bias.size() != cout) fail("diffcore", "conv2d: bias length mismatch");
    const std::size_t pad = k / 2;

    // im2col: [(H*W), k*k*Cin]
    Array col(Shape{h * w, k * k * cin});
    double* pc = col.data();
    const double* pi = input.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double* dst = pc + (y * w + x) * k * k * cin;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) -
                                              static_cast<std::ptrdiff_t>(pad);
                    double* cell = dst + (ky * k + kx) * cin;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h) || sx < 0 ||
                        sx >= static_cast<std::ptrdiff_t>(w)) {
                        std::fill(cell, cell + cin, 0.0);
                    } else {
                        const double* src = pi + (static_cast<std::size_t>(sy) * w +
                                                  static_cast<std::size_t>(sx)) *
                                                     cin;
                        std::copy(src, src + cin, cell);
                    }
                }
            }
        }

    Array wmat = weight.reshaped(Shape{k * k * cin, cout});
    Array out = matmul(col, wmat);
    double* po = out.data();
    for (std::size_t r = 0; r < h * w; ++r)
        for (std::size_t c = 0; c < cout; ++c) po[r * cout + c] += bias[c];
    return out.reshaped(Shape{h, w, cout});
}

Array conv2d_input_grad(const Array& grad_out, const Array& weight, std::size_t h,
                        std::size_t w) {
    const std::size_t k = weight.extent(0);
    const std::size_t cin = weight.extent(2);
    const std::size_t cout = weight.extent(3);
    const std::size_t pad = k / 2;
    // dCol = dOut * W^T, then col2im scatter-add.
    Array gmat = grad_out.reshaped(Shape{h * w, cout});
    Array wmat = weight.reshaped(Shape{k * k * cin, cout});
    Array dcol(Shape{h * w, k * k * cin});
    matmul_acc(dcol, gmat, wmat, false, true);
    Array din(Shape{h, w, cin});
    double* pd = din.data();
    const double* pc = dcol.data();
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double* src = pc + (y * w + x) * k * k * cin;
            for (std::size_t ky = 0; ky < k; ++ky) {
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) -
                                          static_cast<std::ptrdiff_t>(pad);
                if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                for (std::size_t kx = 0; kx < k; ++kx) {
                    const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) -
                                              static_cast<std::ptrdiff_t>(pad);
                    if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) continue;
                    double* dst = pd + (static_cast<std::size_t>(sy) * w +
                                        static_cast<std::size_t>(sx)) *
                                           cin;
                    const double* cell = src + (ky * k + kx) * cin;
                    for (std::size_t c = 0; c < cin; ++c) dst[c] += cell[c];
                }
            }
        }
    return din;
}

Array avgpool2(const Array& input) {
    if (input.rank() != 3) fail("diffcore", "avgpool2: input must be [H,W,C]");
    const std::size_t h = input.extent(0), w = input.extent(1), c = input.extent(2);
    const std::size_t oh = (h + 1) / 2, ow = (w + 1) / 2;
    Array out(Shape{oh, ow, c});
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t y1 = std::min(2 * oy + 2, h), x1 = std::min(2 * ox + 2, w);
            const double count = static_cast<double>((y1 - 2 * oy) * (x1 - 2 * ox));
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t y = 2 * oy; y < y1; ++y)
                    for (std::size_t x = 2 * ox; x < x1; ++x) acc += input.at3(y, x, ch);
                out.at3(oy, ox, ch) = acc / count;
            }
        }
    return out;
}

Array avgpool2_input_grad(const Array& grad_out, std::size_t h, std::size_t w) {
    const std::size_t c = grad_out.extent(2);
    const std::size_t oh = grad_out.extent(0), ow = grad_out.extent(1);
    Array din(Shape{h, w, c});
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t y1 = std::min(2 * oy + 2, h), x1 = std::min(2 * ox + 2, w);
            const double inv = 1.0 / static_cast<double>((y1 - 2 * oy) * (x1 - 2 * ox));
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double g = grad_out.at3(oy, ox, ch) * inv;
                for (std::size_t y = 2 * oy; y < y1; ++y)
                    for (std::size_t x = 2 * ox; x < x1; ++x) din.at3(y, x, ch) += g;
            }
        }
    return din;
}

}  // namespace sf::kernels
