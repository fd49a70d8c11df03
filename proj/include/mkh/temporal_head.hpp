#pragma once

#include <cstddef>

#include "mkh/hypergraph_encoder.hpp"
#include "mkh/ops.hpp"

namespace mkh {

inline constexpr double kVarianceFloor = 1e-6;

/// Gated mixture of the implicit+subgraph experts and the dual expert.
GateResult moe_fuse(Var implicit, Var subgraph, Var dual, Var fs, Var fg);

/// relu(h conv1) + h.
Var temporal_features(Var h, Var conv1);

/// features conv2, [rows x horizon] in normalized units.
Var point_forecast(Var features, Var conv2);

struct GaussianForecast {
  Var mean;      // [rows x horizon]
  Var variance;  // softplus(raw) + kVarianceFloor
};

/// `head` is [d x 2*horizon]: the first horizon columns give the mean, the
/// rest the raw variance.
GaussianForecast uncertainty_forecast(Var features, Var head, std::size_t horizon);

}  // namespace mkh
