#include "mkh/hypergraph_inference.hpp"

#include <limits>
#include <stdexcept>

namespace mkh {

Var pairwise_similarity(Var node_emb, Var edge_emb) {
  constexpr double kHuge = std::numeric_limits<double>::max();
  Var node_norm = clamp(sqrt(sum(square(node_emb), Axis::cols)), kEmbeddingNormFloor, kHuge);  // [n x 1]
  Var edge_norm = clamp(sqrt(sum(square(edge_emb), Axis::cols)), kEmbeddingNormFloor, kHuge);  // [m x 1]
  Var dots = matmul(node_emb, transpose(edge_emb));
  Var denom = scale(matmul(node_norm, transpose(edge_norm)), 2.0);
  return clamp(div(add_scalar(dots, 1.0), denom), 0.0, 1.0);
}

ChannelProbabilities hyperedge_probabilities(Var similarity) {
  return {sigmoid(similarity), sigmoid(rsub_scalar(1.0, similarity))};
}

IncidenceSample sample_incidence(const ChannelProbabilities& probs, SamplingMode mode, double temperature,
                                 Rng* noise) {
  if (!(temperature > 0.0)) throw std::invalid_argument("Gumbel temperature must be positive");
  Tape& t = *probs.connect.tape;
  const Array& p0 = probs.connect.value();
  const Array& p1 = probs.disconnect.value();
  IncidenceSample out;
  out.membership = Array(p0.shape());

  if (mode == SamplingMode::threshold) {
    for (std::size_t i = 0; i < p0.size(); ++i) out.membership[i] = p0[i] > p1[i] ? 1.0 : 0.0;
    out.incidence = t.constant(out.membership);
    Array rest = out.membership;
    for (double& v : rest.values()) v = 1.0 - v;
    out.complement = t.constant(std::move(rest));
    return out;
  }

  // Channel 0 of a two-way softmax is the logistic of the logit difference.
  Array gumbel_gap(p0.shape());
  if (noise != nullptr) {
    for (double& g : gumbel_gap.values()) {
      const double g0 = noise->gumbel();
      const double g1 = noise->gumbel();
      g = g0 - g1;
    }
  }
  Var gap = scale(add(sub(probs.connect, probs.disconnect), t.constant(gumbel_gap)), 1.0 / temperature);
  Var soft = sigmoid(gap);
  Var rest = sigmoid(neg(gap));
  const Array& sv = soft.value();
  for (std::size_t i = 0; i < sv.size(); ++i) out.membership[i] = sv[i] > 0.5 ? 1.0 : 0.0;
  if (mode == SamplingMode::soft) {
    out.incidence = soft;
    out.complement = rest;
    return out;
  }
  Array hard_rest = out.membership;
  for (double& v : hard_rest.values()) v = 1.0 - v;
  out.incidence = straight_through(out.membership, soft);
  out.complement = straight_through(std::move(hard_rest), rest);
  return out;
}

}  // namespace mkh
