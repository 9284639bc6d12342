#pragma once

#include <cstdint>
#include <vector>

#include "sf/array.hpp"

// Forward math shared by the tape ops and the plain (no-graph) evaluation
// paths. Keeping one kernel per operation guarantees both paths produce
// bit-identical values. All loops have a fixed left-to-right accumulation
// order; nothing here is allowed to depend on thread count.
namespace sf::kernels {

// Elementwise binaries with trailing-aligned broadcasting (extent-1 axes or
// missing leading axes stretch). Returns the broadcast result shape.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op_name);

enum class Binary { Add, Sub, Mul, Div };
Array binary(const Array& a, const Array& b, Binary op, const char* op_name);

// Accumulate `src` into `dst` reducing over axes broadcast from dst's shape.
// Used by binary-op backward rules.
void reduce_to_shape(Array& dst, const Array& src);

Array neg(const Array& a);
Array scale(const Array& a, double s);
Array add_scalar(const Array& a, double s);

Array sin(const Array& a);
Array cos(const Array& a);
Array exp(const Array& a);
Array log(const Array& a);
Array sqrt(const Array& a);
Array relu(const Array& a);
Array softplus(const Array& a);
Array sigmoid(const Array& a);

// [M,K] x [K,N] -> [M,N]
Array matmul(const Array& a, const Array& b);
// C += A * B variants used by gradient rules; bt/at transpose the operand.
void matmul_acc(Array& c, const Array& a, const Array& b, bool trans_a, bool trans_b);

Array sum_all(const Array& a);
Array mean_all(const Array& a);
// Sum over one axis; result drops the axis (keepdims=false) or keeps extent 1.
Array sum_axis(const Array& a, std::size_t axis, bool keepdims);

// Exclusive cumulative sum along the last axis: out[...,0]=0,
// out[...,i]=out[...,i-1]+in[...,i-1].
Array cumsum_exclusive_last(const Array& a);
// Gradient of the above: reverse exclusive cumulative sum.
Array cumsum_exclusive_last_reverse(const Array& a);

// Concatenate along the last axis. All leading extents must match.
Array concat_last(const std::vector<const Array*>& parts);
// Contiguous column range [from, to) of the last axis.
Array slice_last(const Array& a, std::size_t from, std::size_t to);
void slice_last_acc(Array& dst, const Array& grad, std::size_t from, std::size_t to);

// Row gather/scatter on a [T,F] table.
Array gather_rows(const Array& table, const std::vector<std::uint32_t>& idx);
void scatter_rows_acc(Array& table_grad, const Array& grad,
                      const std::vector<std::uint32_t>& idx);

// out[p,:] = sum_k w[p,k] * table[idx[p,k],:]   (idx,w are P x K row-major)
Array weighted_gather_rows(const Array& table, const std::vector<std::uint32_t>& idx,
                           const std::vector<double>& w, std::size_t corners);
void weighted_scatter_rows_acc(Array& table_grad, const Array& grad,
                               const std::vector<std::uint32_t>& idx,
                               const std::vector<double>& w, std::size_t corners);

// Rowwise cosine similarity of [N,D] against [N,D] -> [N].
// cos_i = <a_i,b_i> / (|a_i| |b_i| + eps)
Array cosine_rows(const Array& a, const Array& b, double eps);

// 2D convolution over [H,W,Cin], weight [k,k,Cin,Cout], bias [Cout], stride 1,
// zero padding k/2 (odd k). Output [H,W,Cout].
Array conv2d(const Array& input, const Array& weight, const Array& bias);
// Gradient w.r.t. the conv input (weight treated as constant).
Array conv2d_input_grad(const Array& grad_out, const Array& weight, std::size_t h,
                        std::size_t w);

// 2x2 average pooling, stride 2, ceil semantics; partial windows average over
// the elements actually present. [H,W,C] -> [ceil(H/2),ceil(W/2),C]
Array avgpool2(const Array& input);
Array avgpool2_input_grad(const Array& grad_out, std::size_t h, std::size_t w);

}  // namespace sf::kernels
