#include "mkh/subgraph_encoder.hpp"

#include <stdexcept>

namespace mkh {
namespace {

std::vector<std::size_t> block_index(const std::vector<std::size_t>& nodes, std::size_t num_nodes,
                                     std::size_t blocks) {
  std::vector<std::size_t> idx;
  idx.reserve(nodes.size() * blocks);
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t u : nodes) idx.push_back(b * num_nodes + u);
  return idx;
}

}  // namespace

Var gcn_layer(Var h, const Array& ahat, Var w, std::size_t blocks) {
  return relu(matmul(left_apply(ahat, h, blocks), w));
}

SubgraphPlan SubgraphPlan::build(const ExplicitGraph& graph, std::size_t k, std::size_t p) {
  SubgraphPlan plan;
  plan.num_nodes = graph.num_nodes();
  std::vector<std::size_t> counts(plan.num_nodes, 0);
  for (const SubgraphPatch& patch : extract_patches(graph, k, p)) {
    plan.patch_nodes.push_back(patch.expanded_nodes);
    plan.patch_adjacency.push_back(normalized_adjacency(patch));
    for (std::size_t u : patch.expanded_nodes) ++counts[u];
  }
  for (std::size_t c : counts) {
    if (c == 0) throw std::logic_error("subgraph plan: node not covered by any patch");
    plan.inverse_counts.push_back(1.0 / static_cast<double>(c));
  }
  return plan;
}

Var encode_patch(Var node_features, const SubgraphPlan& plan, std::size_t patch, std::span<const Var> layers,
                 std::size_t blocks) {
  Var h = gather_rows(node_features, block_index(plan.patch_nodes.at(patch), plan.num_nodes, blocks));
  for (Var w : layers) h = gcn_layer(h, plan.patch_adjacency[patch], w, blocks);
  return h;
}

Var subgraph_encode(Var node_features, const SubgraphPlan& plan, std::span<const Var> layers, std::size_t blocks) {
  Tape& t = *node_features.tape;
  const std::size_t rows = blocks * plan.num_nodes;
  Var pooled;
  for (std::size_t i = 0; i < plan.patch_nodes.size(); ++i) {
    Var h = encode_patch(node_features, plan, i, layers, blocks);
    Var spread = scatter_add_rows(h, block_index(plan.patch_nodes[i], plan.num_nodes, blocks), rows);
    pooled = i == 0 ? spread : add(pooled, spread);
  }
  const std::size_t d = pooled.value().cols();
  Array inverse({rows, d});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) inverse(r, c) = plan.inverse_counts[r % plan.num_nodes];
  return mul(pooled, t.constant(std::move(inverse)));
}

}  // namespace mkh
