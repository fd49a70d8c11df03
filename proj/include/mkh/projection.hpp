#pragma once

#include "mkh/ops.hpp"

namespace mkh {

/// Gated linear projection of look-back windows to node features:
/// (sigmoid(x w0) * (x w1)) w2 with x [rows x tau], w0, w1 [tau x d], w2 [d x d].
/// Throws DimensionError when x's width differs from tau.
Var glu_project(Var x, Var w0, Var w1, Var w2);

}  // namespace mkh
