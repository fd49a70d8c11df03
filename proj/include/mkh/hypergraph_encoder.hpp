#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/graph.hpp"
#include "mkh/ops.hpp"

namespace mkh {

// Every encoder below works on a batch of B samples stacked as row blocks:
// node features are [B*n x d] and the structure is shared by all blocks.

/// Incidence of a hypergraph with `membership.rows()` hypernodes and
/// `membership.cols()` hyperedges.
struct BatchedIncidence {
  Var weights;        // [n x m], scales every message along (i, j)
  Array membership;   // [n x m], 1 where (i, j) belongs to the neighbourhood
  std::size_t blocks = 1;
};

struct HgatHeadWeights {
  Var w0, w1, w2;  // [d x d]
  Var w3;          // [2d x 1], node half then hyperedge half
};

struct IntraEdgeResult {
  Var edges;  // [B*m x d]; a hyperedge without members is zero
  Var alpha;  // [B*m x n], rows sum to 1 over members
};

/// Hyperedge representations sigmoid(sum_i alpha_ji I_ij (x_i w0)); the
/// attention logit of node i is the feature sum of relu(x_i w0).
IntraEdgeResult hgat_intra_edge(Var nodes, const BatchedIncidence& incidence, Var w0);

struct InterEdgeResult {
  Var nodes;  // [B*n x d]
  Var beta;   // [B*n x m], rows sum to 1 over incident hyperedges
};

/// relu(x_i w0 + sum_j beta_ij I_ij (e_j w1)) with
/// beta = softmax_j relu(a1 . (x_i w2) + a2 . (e_j w2)).
InterEdgeResult hgat_inter_edge(Var nodes, Var edges, const BatchedIncidence& incidence, const HgatHeadWeights& w);

struct HgatLayerResult {
  Var nodes;  // head sum of inter-edge outputs
  Var edges;  // head sum of intra-edge outputs
  std::vector<Var> alpha, beta;  // one per head
};

/// One attention layer; each head's inter-edge step consumes that head's
/// hyperedge representations.
HgatLayerResult hgat_layer(Var nodes, const BatchedIncidence& incidence, std::span<const HgatHeadWeights> heads);

struct GateResult {
  Var output;
  Var gate;
};

/// g = sigmoid(a fs + b fg); output sigmoid(g * a + (1 - g) * b).
GateResult gated_blend(Var a, Var b, Var fs, Var fg);

struct HgtLayerWeights {
  Var ln1_gain, ln1_bias;
  Var wq, wk, wv, wo;  // [d x d]
  Var ln2_gain, ln2_bias;
  Var mlp_w1, mlp_b1;  // [d x 4d], [1 x 4d]
  Var mlp_w2, mlp_b2;  // [4d x d], [1 x d]
};

/// Pre-norm transformer block over the n hypernodes of each block:
/// h1 = MSA(LN(h)) + h, out = MLP(LN(h1)) + initial. Throws
/// std::invalid_argument when d is not divisible by `heads`.
Var hgt_layer(Var h, Var initial, const HgtLayerWeights& w, std::size_t heads, std::size_t blocks);

/// Constant structure of the edge-to-node dual hypergraph.
struct DualStructure {
  Array endpoint_mean;  // [|E| x n]
  Array incidence;      // [|E| x n], transpose of the graph incidence

  static DualStructure from_graph(const ExplicitGraph& graph);
};

/// Intra-edge attention on the dual hypergraph, summed over heads. Edge
/// features are the mean of their endpoint rows; the output row of an
/// original node is its dual hyperedge representation ([B*n x d]). The
/// returned alpha is the first head's.
IntraEdgeResult encode_dual(Var node_features, const DualStructure& dual, std::span<const Var> head_w0,
                            std::size_t blocks);

}  // namespace mkh
