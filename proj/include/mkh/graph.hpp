#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/rng.hpp"

namespace mkh {

/// Malformed edge list, invalid structural input or bad partition parameters.
class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Static undirected graph. Edges are stored deduplicated as (u, v) with
/// u < v, sorted; the edge id is the position in that order.
class ExplicitGraph {
 public:
  ExplicitGraph() = default;
  /// Rejects self-loops and out-of-range ids; duplicate and reversed pairs collapse.
  ExplicitGraph(std::size_t num_nodes, const std::vector<Edge>& edges);

  std::size_t num_nodes() const noexcept { return num_nodes_; }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t u) const { return neighbors_.at(u); }
  std::size_t degree(std::size_t u) const { return neighbors_.at(u).size(); }
  bool has_edge(std::size_t u, std::size_t v) const;

  /// Symmetric {0,1} matrix with zero diagonal.
  Array adjacency() const;
  /// [n x |E|], column j marks the two endpoints of edge j.
  Array incidence() const;

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Lines "u,v" or "u,v,w" with 0-based ids; the weight is ignored.
ExplicitGraph load_edge_list(const std::filesystem::path& path, std::size_t num_nodes);
void save_edge_list(const ExplicitGraph& graph, const std::filesystem::path& path);

/// Ring over the nodes plus independent extra chords with probability `chord_prob`.
ExplicitGraph random_sensor_graph(std::size_t num_nodes, double chord_prob, Rng& rng);

struct Hypergraph {
  std::size_t num_hypernodes = 0;
  std::size_t num_hyperedges = 0;
  Array incidence;  // [num_hypernodes x num_hyperedges]
};

/// Edges become hypernodes, nodes become hyperedges.
struct DualHypergraph {
  Hypergraph structure;       // incidence == source incidence transposed
  Array hypernode_features;   // [|E| x d], mean of the two endpoint features
  Array hyperedge_features;   // [|V| x d], the source node features
};

DualHypergraph dht_transform(const ExplicitGraph& graph, const Array& node_features);
/// [|E| x |V|] operator averaging the two endpoint rows of each edge.
Array edge_endpoint_mean(const ExplicitGraph& graph);

struct SubgraphPatch {
  std::vector<std::size_t> core_nodes;      // ascending
  std::vector<std::size_t> expanded_nodes;  // ascending, superset of core
  std::vector<Edge> edge_list;              // induced edges, original ids
  std::unordered_map<std::size_t, std::size_t> local_index;  // original id -> row in expanded_nodes
};

/// Nodes within `p` hops of any node of `seeds`, ascending.
std::vector<std::size_t> p_hop_neighborhood(const ExplicitGraph& graph, const std::vector<std::size_t>& seeds,
                                            std::size_t p);

/// k consecutive id blocks of floor(n/k) nodes (last block takes the
/// remainder), each expanded by its p-hop neighbourhood.
std::vector<SubgraphPatch> extract_patches(const ExplicitGraph& graph, std::size_t k, std::size_t p);

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Array normalized_adjacency(const ExplicitGraph& graph);
/// Same operator on the patch's induced subgraph, in local ids.
Array normalized_adjacency(const SubgraphPatch& patch);

}  // namespace mkh
