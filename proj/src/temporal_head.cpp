#include "mkh/temporal_head.hpp"

namespace mkh {

GateResult moe_fuse(Var implicit, Var subgraph, Var dual, Var fs, Var fg) {
  return gated_blend(add(implicit, subgraph), dual, fs, fg);
}

Var temporal_features(Var h, Var conv1) { return add(relu(matmul(h, conv1)), h); }

Var point_forecast(Var features, Var conv2) { return matmul(features, conv2); }

GaussianForecast uncertainty_forecast(Var features, Var head, std::size_t horizon) {
  if (head.value().cols() != 2 * horizon) throw DimensionError("uncertainty head must have 2 * horizon columns");
  Var out = matmul(features, head);
  Var raw = slice_cols(out, horizon, horizon);
  return {slice_cols(out, 0, horizon), add_scalar(softplus(raw), kVarianceFloor)};
}

}  // namespace mkh
