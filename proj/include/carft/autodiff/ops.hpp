// SPDX-License-Identifier: Apache-2.0

#ifndef CARFT_AUTODIFF_OPS_HPP_
#define CARFT_AUTODIFF_OPS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "carft/autodiff/array.hpp"
#include "carft/autodiff/tape.hpp"

// Differentiable primitives. Elementwise binary ops require equal shapes, or
// one operand holding a single element (scalar broadcast); anything else
// must be reshaped or broadcast explicitly.
namespace carft::ad {

// Score written above the diagonal by causal_mask; exp() of it underflows to 0.
inline constexpr double kMaskedScore = -1e30;

Var matmul(Var a, Var b);  // [m,k] x [k,n] -> [m,n]
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var exp(Var a);
Var log(Var a);  // rejects non-positive input
Var tanh(Var a);
Var square(Var a);
Var gelu(Var a);  // tanh approximation
// Gradient is 1 on the closed interval [lo, hi] and 0 strictly outside.
Var clip(Var a, double lo, double hi);
// Per-element bounds; lo and hi must match a's shape.
Var clip(Var a, const Array& lo, const Array& hi);
// Ties route the gradient to the first operand.
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);

Var sum(Var a);   // -> scalar
Var mean(Var a);  // -> scalar
Var sum_last(Var a);  // [..., n] -> [...]
Var inner(Var a, Var b);  // equal shapes -> scalar
Var softmax_last(Var a);
Var log_softmax_last(Var a);
Var logsumexp_last(Var a);  // [..., n] -> [...]
Var l2_normalize_last(Var a);  // rejects zero-norm rows
Var layer_norm_last(Var a, double eps = 1e-5);  // no affine part

// out[r] = a[r, indices[r]] over the rows of a viewed as [rows, last_dim].
Var gather_last(Var a, std::span<const std::size_t> indices);
// Selects (possibly repeated) rows of a rank-1 or rank-2 array.
Var gather_rows(Var a, std::span<const std::size_t> indices);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var reshape(Var a, Shape shape);
Var transpose(Var a);
Var broadcast_rows(Var v, std::size_t rows);  // [c] -> [rows, c]
// Square [L, L] scores: entries above the diagonal become kMaskedScore.
Var causal_mask(Var a);

// Uniform entry point over the primitive set. Parameters a kind does not use
// are ignored.
struct PrimitiveArgs {
  double lo = 0.0;
  double hi = 1.0;
  double factor = 1.0;
  double eps = 1e-5;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t rows = 1;
  std::vector<std::size_t> indices;
  Shape shape;
};

Var apply_primitive(OpKind kind, std::span<const Var> inputs, const PrimitiveArgs& args = {});

}  // namespace carft::ad

#endif  // CARFT_AUTODIFF_OPS_HPP_
