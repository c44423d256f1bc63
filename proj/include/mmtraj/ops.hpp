#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "mmtraj/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops accept operands of
// equal shape, or one operand whose shape is a trailing suffix of the other's
// (leading-dimension broadcast). No other broadcasting is performed.
namespace mmtraj::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

/// a[..., m, k] x b[..., k, n]. `b` may be rank 2 and is then shared by every
/// batch entry of `a`; otherwise batch dims must match exactly.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Swaps the last two axes.
Tensor transpose(const Tensor& a);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor reshape(const Tensor& a, Shape shape);
/// Repeats size-1 axes up to `shape`; ranks must agree.
Tensor expand(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);

/// Softmax along `axis` with max subtraction. With a mask (same shape as
/// `x`), masked entries get probability 0 and no gradient; a fully masked
/// slice yields all zeros.
Tensor softmax(const Tensor& x, std::size_t axis, const Mask* mask = nullptr);

/// Normalizes over the last axis, then applies gain and bias (both [F]).
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor cumsum(const Tensor& x, std::size_t axis);

/// Sums `axis` away.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Mean over `axis`. With a mask (same shape as `x`) only unmasked entries
/// count; a slice with no unmasked entry raises DegenerateInputError.
Tensor mean(const Tensor& x, std::size_t axis, const Mask* mask = nullptr);

/// Replaces masked-out entries (mask false) with `fill`; no gradient flows to them.
Tensor where(const Mask& keep, const Tensor& x, double fill);
/// Flat 1-D tensor of the entries where `mask` is true, in row-major order.
Tensor masked_select(const Tensor& x, const Mask& mask);
/// out[r] = x[r, index[r]] for x viewed as [rows, last].
Tensor take_last(const Tensor& x, const std::vector<std::size_t>& index);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);
Tensor relu(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor clamp_min(const Tensor& x, double floor);

}  // namespace mmtraj::ops
