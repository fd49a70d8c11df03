#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mkh/graph.hpp"
#include "mkh/hypergraph_encoder.hpp"
#include "mkh/hypergraph_inference.hpp"
#include "mkh/params.hpp"
#include "mkh/subgraph_encoder.hpp"

namespace mkh {

struct ModelConfig {
  std::size_t num_nodes = 0;
  std::size_t lookback = 12;
  std::size_t horizon = 12;
  std::size_t embed_dim = 16;
  std::size_t hyperedges = 8;
  std::size_t patches = 4;
  std::size_t hops = 2;
  std::size_t hgat_heads = 4;
  std::size_t hgat_layers = 1;
  std::size_t hgt_heads = 4;
  std::size_t hgt_layers = 2;
  double dropout = 0.1;
  double temperature = kDefaultTemperature;
  bool spatial = true;       // false: node features go straight to the temporal head
  bool uncertainty = false;  // Gaussian mean/variance head instead of the point head

  /// Throws std::invalid_argument describing the first bad field.
  void validate() const;
};

struct ForwardOptions {
  SamplingMode structure = SamplingMode::threshold;
  bool gumbel_noise = false;
  bool dropout = false;
  Rng* rng = nullptr;  // required by gumbel_noise and dropout

  static ForwardOptions training(Rng& rng) { return {SamplingMode::hard, true, true, &rng}; }
  static ForwardOptions evaluation() { return {}; }
};

struct ForwardResult {
  Var forecast;                 // [B*n x horizon], normalized; the mean for the uncertainty head
  std::optional<Var> variance;  // uncertainty head only
  std::optional<Var> incidence; // [n x m], spatial models only
  std::vector<Var> alpha;       // per HgAT layer and head, [B*m x n]
  std::vector<Var> beta;        // per HgAT layer and head, [B*n x m]
  std::vector<std::pair<std::string, Var>> gates;
};

class MkhNet {
 public:
  /// Fresh parameters drawn from `init_rng`.
  MkhNet(ModelConfig config, ExplicitGraph graph, Rng& init_rng);
  /// Restores trained parameters; names and shapes must match the config.
  MkhNet(ModelConfig config, ExplicitGraph graph, ParamStore params);

  const ModelConfig& config() const noexcept { return config_; }
  const ExplicitGraph& graph() const noexcept { return graph_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  /// `inputs` is [B x n x lookback] (or [n x lookback] for B = 1).
  ForwardResult forward(const BoundParams& bound, const Array& inputs, const ForwardOptions& options) const;

 private:
  void build_structures();

  ModelConfig config_;
  ExplicitGraph graph_;
  ParamStore params_;
  std::optional<SubgraphPlan> subgraph_;
  std::optional<DualStructure> dual_;
};

/// Deterministic {0,1} node-to-hyperedge membership implied by the learned
/// embeddings, [n x m]. Throws std::invalid_argument for non-spatial stores.
Array learned_incidence(const ParamStore& params, double temperature);

/// Parameters of a freshly initialised model, in checkpoint order.
ParamStore init_params(const ModelConfig& config, Rng& rng);

}  // namespace mkh
