#include "mkh/hypergraph_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mkh {
namespace {

Array tiled(const Array& a, std::size_t reps) {
  Array out({reps * a.rows(), a.cols()});
  for (std::size_t k = 0; k < reps; ++k) std::copy(a.data(), a.data() + a.size(), out.data() + k * a.size());
  return out;
}

Var add_bias(Var x, Var bias) { return add(x, tile_rows(bias, x.value().rows())); }

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < end; ++i) idx.push_back(i);
  return idx;
}

}  // namespace

IntraEdgeResult hgat_intra_edge(Var nodes, const BatchedIncidence& incidence, Var w0) {
  Tape& t = *nodes.tape;
  const std::size_t blocks = incidence.blocks;
  const std::size_t num_edges = incidence.membership.cols();
  const std::size_t d = w0.value().cols();

  Var u = matmul(nodes, w0);
  Var logits = sum(relu(u), Axis::cols);
  // Hyperedge rows all see the same node logits; the mask restricts them to members.
  Var scores = pair_sum(t.constant(Array({blocks * num_edges, 1})), logits, blocks);
  const Array mask = tiled(incidence.membership.transposed(), blocks);
  Var alpha = softmax_rows(scores, &mask, true);
  Var weights = mul(alpha, tile_rows(transpose(incidence.weights), blocks));
  Var edges = sigmoid(block_matmul(weights, u, blocks));

  Array nonempty({blocks * num_edges, d});
  bool any_empty = false;
  for (std::size_t j = 0; j < num_edges; ++j) {
    bool has_member = false;
    for (std::size_t i = 0; i < incidence.membership.rows(); ++i) has_member |= incidence.membership(i, j) != 0.0;
    any_empty |= !has_member;
    for (std::size_t b = 0; b < blocks; ++b)
      for (std::size_t c = 0; c < d; ++c) nonempty((b * num_edges + j), c) = has_member ? 1.0 : 0.0;
  }
  if (any_empty) edges = mul(edges, t.constant(std::move(nonempty)));
  return {edges, alpha};
}

InterEdgeResult hgat_inter_edge(Var nodes, Var edges, const BatchedIncidence& incidence, const HgatHeadWeights& w) {
  const std::size_t blocks = incidence.blocks;
  const std::size_t d = w.w0.value().cols();
  if (w.w3.value().size() != 2 * d) throw DimensionError("hgat_inter_edge: attention vector must hold 2d values");

  Var u = matmul(nodes, w.w0);
  Var node_score = matmul(matmul(nodes, w.w2), gather_rows(w.w3, range(0, d)));
  Var edge_score = matmul(matmul(edges, w.w2), gather_rows(w.w3, range(d, 2 * d)));
  Var phi = relu(pair_sum(node_score, edge_score, blocks));
  const Array mask = tiled(incidence.membership, blocks);
  Var beta = softmax_rows(phi, &mask, true);
  Var weights = mul(beta, tile_rows(incidence.weights, blocks));
  Var messages = block_matmul(weights, matmul(edges, w.w1), blocks);
  return {relu(add(u, messages)), beta};
}

HgatLayerResult hgat_layer(Var nodes, const BatchedIncidence& incidence, std::span<const HgatHeadWeights> heads) {
  if (heads.empty()) throw std::invalid_argument("hgat_layer: need at least one head");
  HgatLayerResult out;
  for (std::size_t z = 0; z < heads.size(); ++z) {
    const IntraEdgeResult intra = hgat_intra_edge(nodes, incidence, heads[z].w0);
    const InterEdgeResult inter = hgat_inter_edge(nodes, intra.edges, incidence, heads[z]);
    out.nodes = z == 0 ? inter.nodes : add(out.nodes, inter.nodes);
    out.edges = z == 0 ? intra.edges : add(out.edges, intra.edges);
    out.alpha.push_back(intra.alpha);
    out.beta.push_back(inter.beta);
  }
  return out;
}

GateResult gated_blend(Var a, Var b, Var fs, Var fg) {
  Var g = sigmoid(add(matmul(a, fs), matmul(b, fg)));
  Var mixed = add(mul(g, a), mul(rsub_scalar(1.0, g), b));
  return {sigmoid(mixed), g};
}

Var hgt_layer(Var h, Var initial, const HgtLayerWeights& w, std::size_t heads, std::size_t blocks) {
  const std::size_t d = h.value().cols();
  if (heads == 0 || d % heads != 0) {
    throw std::invalid_argument("hgt_layer: embedding size " + std::to_string(d) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Var x = layer_norm(h, w.ln1_gain, w.ln1_bias);
  Var q = matmul(x, w.wq);
  Var k = matmul(x, w.wk);
  Var v = matmul(x, w.wv);
  std::vector<Var> per_head;
  for (std::size_t s = 0; s < heads; ++s) {
    Var qs = slice_cols(q, s * head_dim, head_dim);
    Var ks = slice_cols(k, s * head_dim, head_dim);
    Var vs = slice_cols(v, s * head_dim, head_dim);
    Var att = softmax_rows(scale(block_matmul_nt(qs, ks, blocks), inv_sqrt));
    per_head.push_back(block_matmul(att, vs, blocks));
  }
  Var attended = per_head.size() == 1 ? per_head.front() : concat_cols(per_head);
  Var h1 = add(matmul(attended, w.wo), h);

  Var y = layer_norm(h1, w.ln2_gain, w.ln2_bias);
  Var hidden = relu(add_bias(matmul(y, w.mlp_w1), w.mlp_b1));
  return add(add_bias(matmul(hidden, w.mlp_w2), w.mlp_b2), initial);
}

DualStructure DualStructure::from_graph(const ExplicitGraph& graph) {
  return {edge_endpoint_mean(graph), graph.incidence().transposed()};
}

IntraEdgeResult encode_dual(Var node_features, const DualStructure& dual, std::span<const Var> head_w0,
                            std::size_t blocks) {
  if (head_w0.empty()) throw std::invalid_argument("encode_dual: need at least one head");
  Tape& t = *node_features.tape;
  Var edge_features = left_apply(dual.endpoint_mean, node_features, blocks);
  const BatchedIncidence incidence{t.constant(dual.incidence), dual.incidence, blocks};
  IntraEdgeResult out;
  for (std::size_t z = 0; z < head_w0.size(); ++z) {
    IntraEdgeResult head = hgat_intra_edge(edge_features, incidence, head_w0[z]);
    out.edges = z == 0 ? head.edges : add(out.edges, head.edges);
    if (z == 0) out.alpha = head.alpha;
  }
  return out;
}

}  // namespace mkh
