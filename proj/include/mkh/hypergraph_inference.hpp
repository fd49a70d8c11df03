#pragma once

#include "mkh/ops.hpp"
#include "mkh/rng.hpp"

namespace mkh {

inline constexpr double kDefaultTemperature = 0.05;
inline constexpr double kEmbeddingNormFloor = 1e-8;

/// (z_i . z_j + 1) / (2 |z_i| |z_j|) clamped to [0, 1]; node_emb [n x d],
/// edge_emb [m x d] -> [n x m].
Var pairwise_similarity(Var node_emb, Var edge_emb);

/// sigmoid(S) for "connected" and sigmoid(1 - S) for "not connected".
struct ChannelProbabilities {
  Var connect;
  Var disconnect;
};
ChannelProbabilities hyperedge_probabilities(Var similarity);

enum class SamplingMode {
  hard,       // straight-through: forward {0,1}, gradient of the soft sample
  soft,       // relaxed membership in (0,1)
  threshold,  // deterministic [connect > disconnect], no gradient
};

struct IncidenceSample {
  Var incidence;     // [n x m], channel 0
  Var complement;    // channel 1 of the same softmax
  Array membership;  // 1 where incidence > 0.5
};

/// Two-category Gumbel-softmax at `temperature`. With `noise == nullptr`
/// the Gumbel perturbation is zero.
IncidenceSample sample_incidence(const ChannelProbabilities& probs, SamplingMode mode, double temperature,
                                 Rng* noise);

}  // namespace mkh
