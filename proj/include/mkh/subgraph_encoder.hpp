#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/graph.hpp"
#include "mkh/ops.hpp"

namespace mkh {

/// relu(ahat h w) applied to each of `blocks` stacked row blocks of h.
Var gcn_layer(Var h, const Array& ahat, Var w, std::size_t blocks);

/// Precomputed patch geometry: which rows to gather and the normalized
/// adjacency of each induced patch graph.
struct SubgraphPlan {
  std::size_t num_nodes = 0;
  std::vector<std::vector<std::size_t>> patch_nodes;  // expanded node ids per patch
  std::vector<Array> patch_adjacency;                 // normalized, local ids
  std::vector<double> inverse_counts;                 // 1 / #patches containing each node

  static SubgraphPlan build(const ExplicitGraph& graph, std::size_t k, std::size_t p);
};

/// Stacked GCN layers on one patch; rows follow `plan.patch_nodes[patch]`
/// within each block.
Var encode_patch(Var node_features, const SubgraphPlan& plan, std::size_t patch, std::span<const Var> layers,
                 std::size_t blocks);

/// Mean over patches of each node's patch representation, [B*n x d].
Var subgraph_encode(Var node_features, const SubgraphPlan& plan, std::span<const Var> layers, std::size_t blocks);

}  // namespace mkh
