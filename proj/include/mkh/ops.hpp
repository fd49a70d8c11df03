#pragma once

#include <cstddef>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/tape.hpp"

namespace mkh {

// Differentiable primitives. Binary elementwise ops accept equal shapes or a
// single-element operand on either side; nothing else broadcasts.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var add_scalar(Var a, double c);
Var scale(Var a, double c);
Var neg(Var a);
/// c - a, the complement used by gates.
Var rsub_scalar(double c, Var a);

Var sigmoid(Var a);
Var relu(Var a);
Var softplus(Var a);
Var exp(Var a);
/// Throws NumericError on non-positive input.
Var log(Var a);
/// Throws NumericError on negative input.
Var sqrt(Var a);
Var square(Var a);
/// Subgradient 0 at the origin.
Var abs(Var a);
/// Elementwise clamp to [lo, hi]; gradient is zero outside the open interval.
Var clamp(Var a, double lo, double hi);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);

enum class Axis { rows = 0, cols = 1, all = -1 };
/// Axis::rows collapses the row index ([r x c] -> [1 x c]), Axis::cols the
/// column index ([r x c] -> [r x 1]), Axis::all yields a scalar.
Var sum(Var a, Axis axis = Axis::all);
Var mean(Var a, Axis axis = Axis::all);

/// Row-wise softmax stabilised by max subtraction. Entries where `mask` is
/// zero get weight 0. A row with no unmasked entry is an error unless
/// `allow_empty`, in which case the whole row is 0.
Var softmax_rows(Var a, const Array* mask = nullptr, bool allow_empty = false);

/// Per-row normalisation to zero mean / unit variance, then affine. `gain`
/// and `bias` hold c values (shape [c] or [1 x c]).
Var layer_norm(Var a, Var gain, Var bias, double eps = 1e-5);

/// Rank-1 operands concatenate elementwise (axis 0); rank-2 along rows (0)
/// or columns (1).
Var concat(Var a, Var b, int axis);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t start, std::size_t count);

/// Stacks `reps` copies of a [r x c] matrix into [reps*r x c].
Var tile_rows(Var a, std::size_t reps);

// Block-batched products: operands are `blocks` row-blocks stacked
// vertically, one per batch element.

/// a: [B*r x k], b: [B*k x c] -> [B*r x c], per block a_b * b_b.
Var block_matmul(Var a, Var b, std::size_t blocks);
/// a: [B*r x k], b: [B*s x k] -> [B*r x s], per block a_b * b_b^T.
Var block_matmul_nt(Var a, Var b, std::size_t blocks);
/// m: constant [r x s], x: [B*s x c] -> [B*r x c], per block m * x_b.
Var left_apply(const Array& m, Var x, std::size_t blocks);
/// p: [B*r x 1], q: [B*c x 1] -> [B*r x c] with out[b,i,j] = p[b,i] + q[b,j].
Var pair_sum(Var p, Var q, std::size_t blocks);

Var gather_rows(Var a, const std::vector<std::size_t>& index);
/// out[index[i]] += a[i]; output has `rows` rows.
Var scatter_add_rows(Var a, const std::vector<std::size_t>& index, std::size_t rows);

/// Forward value `hard`, gradient routed unchanged to `soft`.
Var straight_through(Array hard, Var soft);

}  // namespace mkh
