#include "mkh/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <string>

namespace mkh {
namespace {

Array symmetric_normalize(std::size_t n, const std::vector<Edge>& edges) {
  Array a({n, n});
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (const auto& [u, v] : edges) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += a(i, j);
    inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
  return a;
}

bool parse_index(std::string_view text, std::size_t& out) {
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

ExplicitGraph::ExplicitGraph(std::size_t num_nodes, const std::vector<Edge>& edges)
    : num_nodes_(num_nodes), neighbors_(num_nodes) {
  for (auto [u, v] : edges) {
    if (u >= num_nodes || v >= num_nodes) {
      throw GraphError("edge (" + std::to_string(u) + "," + std::to_string(v) + ") references a node id >= " +
                       std::to_string(num_nodes));
    }
    if (u == v) throw GraphError("self-loop on node " + std::to_string(u));
    edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (const auto& [u, v] : edges_) {
    neighbors_[u].push_back(v);
    neighbors_[v].push_back(u);
  }
  for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
}

bool ExplicitGraph::has_edge(std::size_t u, std::size_t v) const {
  const auto& nb = neighbors_.at(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

Array ExplicitGraph::adjacency() const {
  Array a({num_nodes_, num_nodes_});
  for (const auto& [u, v] : edges_) {
    a(u, v) = 1.0;
    a(v, u) = 1.0;
  }
  return a;
}

Array ExplicitGraph::incidence() const {
  if (edges_.empty()) throw GraphError("incidence: graph has no edges");
  Array inc({num_nodes_, edges_.size()});
  for (std::size_t j = 0; j < edges_.size(); ++j) {
    inc(edges_[j].first, j) = 1.0;
    inc(edges_[j].second, j) = 1.0;
  }
  return inc;
}

ExplicitGraph load_edge_list(const std::filesystem::path& path, std::size_t num_nodes) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open edge list " + path.string());
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    std::size_t u = 0, v = 0;
    if ((fields.size() != 2 && fields.size() != 3) || !parse_index(fields[0], u) || !parse_index(fields[1], v)) {
      throw GraphError(path.string() + ":" + std::to_string(line_no) + ": expected \"u,v\" or \"u,v,w\"");
    }
    if (u >= num_nodes || v >= num_nodes) {
      throw GraphError(path.string() + ":" + std::to_string(line_no) + ": node id out of range (n = " +
                       std::to_string(num_nodes) + ")");
    }
    if (u == v) throw GraphError(path.string() + ":" + std::to_string(line_no) + ": self-loop");
    edges.emplace_back(u, v);
  }
  return ExplicitGraph(num_nodes, edges);
}

void save_edge_list(const ExplicitGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw GraphError("cannot write edge list " + path.string());
  for (const auto& [u, v] : graph.edges()) out << u << ',' << v << '\n';
}

ExplicitGraph random_sensor_graph(std::size_t num_nodes, double chord_prob, Rng& rng) {
  std::vector<Edge> edges;
  if (num_nodes >= 2) {
    for (std::size_t i = 0; i + 1 < num_nodes; ++i) edges.emplace_back(i, i + 1);
    if (num_nodes > 2) edges.emplace_back(0, num_nodes - 1);
  }
  for (std::size_t i = 0; i < num_nodes; ++i)
    for (std::size_t j = i + 2; j < num_nodes; ++j)
      if (rng.bernoulli(chord_prob)) edges.emplace_back(i, j);
  return ExplicitGraph(num_nodes, edges);
}

Array edge_endpoint_mean(const ExplicitGraph& graph) {
  if (graph.num_edges() == 0) throw GraphError("dual hypergraph of an edgeless graph is undefined");
  Array op({graph.num_edges(), graph.num_nodes()});
  for (std::size_t j = 0; j < graph.num_edges(); ++j) {
    op(j, graph.edges()[j].first) = 0.5;
    op(j, graph.edges()[j].second) = 0.5;
  }
  return op;
}

DualHypergraph dht_transform(const ExplicitGraph& graph, const Array& node_features) {
  if (graph.num_edges() == 0) throw GraphError("dual hypergraph of an edgeless graph is undefined");
  if (node_features.rank() != 2 || node_features.rows() != graph.num_nodes()) {
    throw DimensionError("dht_transform: node features must be [n x d]");
  }
  DualHypergraph dual;
  dual.structure.num_hypernodes = graph.num_edges();
  dual.structure.num_hyperedges = graph.num_nodes();
  dual.structure.incidence = graph.incidence().transposed();
  dual.hyperedge_features = node_features;
  const std::size_t d = node_features.cols();
  dual.hypernode_features = Array({graph.num_edges(), d});
  for (std::size_t j = 0; j < graph.num_edges(); ++j) {
    const auto [u, v] = graph.edges()[j];
    for (std::size_t c = 0; c < d; ++c) {
      dual.hypernode_features(j, c) = 0.5 * (node_features(u, c) + node_features(v, c));
    }
  }
  return dual;
}

std::vector<std::size_t> p_hop_neighborhood(const ExplicitGraph& graph, const std::vector<std::size_t>& seeds,
                                            std::size_t p) {
  std::vector<std::size_t> dist(graph.num_nodes(), static_cast<std::size_t>(-1));
  std::deque<std::size_t> queue;
  for (std::size_t s : seeds) {
    if (s >= graph.num_nodes()) throw GraphError("p_hop_neighborhood: seed id out of range");
    if (dist[s] != 0) {
      dist[s] = 0;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    if (dist[u] == p) continue;
    for (std::size_t w : graph.neighbors(u)) {
      if (dist[w] == static_cast<std::size_t>(-1)) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < graph.num_nodes(); ++u)
    if (dist[u] != static_cast<std::size_t>(-1)) out.push_back(u);
  return out;
}

std::vector<SubgraphPatch> extract_patches(const ExplicitGraph& graph, std::size_t k, std::size_t p) {
  const std::size_t n = graph.num_nodes();
  if (k == 0 || k > n) {
    throw GraphError("extract_patches: need 1 <= k <= n, got k = " + std::to_string(k) + ", n = " + std::to_string(n));
  }
  const std::size_t block = n / k;
  std::vector<SubgraphPatch> patches(k);
  for (std::size_t i = 0; i < k; ++i) {
    SubgraphPatch& patch = patches[i];
    const std::size_t begin = i * block;
    const std::size_t end = (i + 1 == k) ? n : begin + block;
    for (std::size_t u = begin; u < end; ++u) patch.core_nodes.push_back(u);
    patch.expanded_nodes = p_hop_neighborhood(graph, patch.core_nodes, p);
    for (std::size_t local = 0; local < patch.expanded_nodes.size(); ++local) {
      patch.local_index.emplace(patch.expanded_nodes[local], local);
    }
    for (const auto& e : graph.edges()) {
      if (patch.local_index.contains(e.first) && patch.local_index.contains(e.second)) patch.edge_list.push_back(e);
    }
  }
  return patches;
}

Array normalized_adjacency(const ExplicitGraph& graph) {
  return symmetric_normalize(graph.num_nodes(), graph.edges());
}

Array normalized_adjacency(const SubgraphPatch& patch) {
  std::vector<Edge> local;
  local.reserve(patch.edge_list.size());
  for (const auto& [u, v] : patch.edge_list) local.emplace_back(patch.local_index.at(u), patch.local_index.at(v));
  return symmetric_normalize(patch.expanded_nodes.size(), local);
}

}  // namespace mkh
