#include "mkh/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mkh/projection.hpp"
#include "mkh/temporal_head.hpp"

namespace mkh {
namespace {

std::string hgat_prefix(std::size_t layer) { return "hgat.l" + std::to_string(layer) + "."; }
std::string hgt_prefix(std::size_t layer) { return "hgt.l" + std::to_string(layer) + "."; }

Var dropout(Var x, double rate, Rng& rng) {
  Array keep(x.value().shape());
  const double scale = 1.0 / (1.0 - rate);
  for (double& k : keep.values()) k = rng.bernoulli(rate) ? 0.0 : scale;
  return mul(x, x.tape->constant(std::move(keep)));
}

}  // namespace

void ModelConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("model config: " + what);
  };
  require(num_nodes >= 1, "num_nodes must be >= 1");
  require(lookback >= 1 && horizon >= 1, "lookback and horizon must be >= 1");
  require(embed_dim >= 1, "embed_dim must be >= 1");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  if (!spatial) return;
  require(hyperedges >= 1, "hyperedges must be >= 1");
  require(patches >= 1 && patches <= num_nodes, "patches must lie in [1, num_nodes]");
  require(hgat_heads >= 1 && hgat_layers >= 1, "HgAT needs at least one head and one layer");
  require(hgt_heads >= 1 && embed_dim % hgt_heads == 0, "embed_dim must be divisible by hgt_heads");
  require(temperature > 0.0, "temperature must be positive");
}

ParamStore init_params(const ModelConfig& c, Rng& rng) {
  c.validate();
  const std::size_t d = c.embed_dim;
  ParamStore p;
  p.add("proj.w0", glorot_uniform(c.lookback, d, rng));
  p.add("proj.w1", glorot_uniform(c.lookback, d, rng));
  p.add("proj.w2", glorot_uniform(d, d, rng));
  if (c.spatial) {
    const double emb_scale = 1.0 / std::sqrt(static_cast<double>(d));
    Array node_emb({c.num_nodes, d});
    for (double& v : node_emb.values()) v = emb_scale * rng.normal();
    Array edge_emb({c.hyperedges, d});
    for (double& v : edge_emb.values()) v = emb_scale * rng.normal();
    p.add("hgi.node_emb", std::move(node_emb));
    p.add("hgi.edge_emb", std::move(edge_emb));

    for (std::size_t l = 0; l < c.hgat_layers; ++l) {
      for (std::size_t z = 0; z < c.hgat_heads; ++z) {
        const std::string h = hgat_prefix(l) + "h" + std::to_string(z) + ".";
        p.add(h + "w0", glorot_uniform(d, d, rng));
        p.add(h + "w1", glorot_uniform(d, d, rng));
        p.add(h + "w2", glorot_uniform(d, d, rng));
        p.add(h + "w3", glorot_uniform({2 * d, 1}, 2 * d, 1, rng));
      }
      p.add(hgat_prefix(l) + "gate_s", glorot_uniform(d, d, rng));
      p.add(hgat_prefix(l) + "gate_g", glorot_uniform(d, d, rng));
    }
    for (std::size_t l = 0; l < c.hgt_layers; ++l) {
      const std::string h = hgt_prefix(l);
      p.add(h + "ln1_gain", Array({d}, 1.0));
      p.add(h + "ln1_bias", Array({d}, 0.0));
      for (const char* name : {"wq", "wk", "wv", "wo"}) p.add(h + name, glorot_uniform(d, d, rng));
      p.add(h + "ln2_gain", Array({d}, 1.0));
      p.add(h + "ln2_bias", Array({d}, 0.0));
      p.add(h + "mlp_w1", glorot_uniform(d, 4 * d, rng));
      p.add(h + "mlp_b1", Array({1, 4 * d}, 0.0));
      p.add(h + "mlp_w2", glorot_uniform(4 * d, d, rng));
      p.add(h + "mlp_b2", Array({1, d}, 0.0));
    }
    p.add("fuse.gate_s", glorot_uniform(d, d, rng));
    p.add("fuse.gate_g", glorot_uniform(d, d, rng));
    for (std::size_t l = 0; l < c.hops; ++l) p.add("sgrl.w" + std::to_string(l), glorot_uniform(d, d, rng));
    for (std::size_t z = 0; z < c.hgat_heads; ++z) p.add("dht.h" + std::to_string(z) + ".w0", glorot_uniform(d, d, rng));
    p.add("moe.gate_s", glorot_uniform(d, d, rng));
    p.add("moe.gate_g", glorot_uniform(d, d, rng));
  }
  p.add("head.conv1", glorot_uniform(d, d, rng));
  if (c.uncertainty) {
    p.add("head.unc", glorot_uniform(d, 2 * c.horizon, rng));
  } else {
    p.add("head.conv2", glorot_uniform(d, c.horizon, rng));
  }
  return p;
}

MkhNet::MkhNet(ModelConfig config, ExplicitGraph graph, Rng& init_rng)
    : config_(std::move(config)), graph_(std::move(graph)) {
  params_ = init_params(config_, init_rng);
  build_structures();
}

MkhNet::MkhNet(ModelConfig config, ExplicitGraph graph, ParamStore params)
    : config_(std::move(config)), graph_(std::move(graph)), params_(std::move(params)) {
  Rng scratch(0);
  const ParamStore expected = init_params(config_, scratch);
  if (expected.size() != params_.size()) {
    throw std::invalid_argument("parameter count " + std::to_string(params_.size()) + " does not match the config (" +
                                std::to_string(expected.size()) + ")");
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.name(i) != params_.name(i) || expected.value(i).shape() != params_.value(i).shape()) {
      throw std::invalid_argument("parameter " + params_.name(i) + " " + shape_string(params_.value(i).shape()) +
                                  " does not match expected " + expected.name(i) + " " +
                                  shape_string(expected.value(i).shape()));
    }
  }
  build_structures();
}

void MkhNet::build_structures() {
  config_.validate();
  if (graph_.num_nodes() != config_.num_nodes) {
    throw std::invalid_argument("graph has " + std::to_string(graph_.num_nodes()) + " nodes, config expects " +
                                std::to_string(config_.num_nodes));
  }
  if (!config_.spatial) return;
  subgraph_ = SubgraphPlan::build(graph_, config_.patches, config_.hops);
  dual_ = DualStructure::from_graph(graph_);
}

ForwardResult MkhNet::forward(const BoundParams& p, const Array& inputs, const ForwardOptions& options) const {
  Tape& t = p.tape();
  const ModelConfig& c = config_;
  const std::size_t n = c.num_nodes;
  if (inputs.rank() < 2 || inputs.dim(inputs.rank() - 2) != n || inputs.dim(inputs.rank() - 1) != c.lookback) {
    throw DimensionError("forward: inputs must be [B x " + std::to_string(n) + " x " + std::to_string(c.lookback) +
                         "], got " + shape_string(inputs.shape()));
  }
  if ((options.gumbel_noise || options.dropout) && options.rng == nullptr) {
    throw std::invalid_argument("forward: noise or dropout requested without an RNG");
  }
  const std::size_t blocks = inputs.size() / (n * c.lookback);
  Var x = t.constant(inputs.reshaped({blocks * n, c.lookback}));
  Var xbar = glu_project(x, p["proj.w0"], p["proj.w1"], p["proj.w2"]);

  ForwardResult out;
  Var h = xbar;
  if (c.spatial) {
    Var sim = pairwise_similarity(p["hgi.node_emb"], p["hgi.edge_emb"]);
    IncidenceSample sample = sample_incidence(hyperedge_probabilities(sim), options.structure, c.temperature,
                                              options.gumbel_noise ? options.rng : nullptr);
    out.incidence = sample.incidence;
    const BatchedIncidence incidence{sample.incidence, std::move(sample.membership), blocks};

    Var hgat = xbar;
    for (std::size_t l = 0; l < c.hgat_layers; ++l) {
      std::vector<HgatHeadWeights> heads;
      for (std::size_t z = 0; z < c.hgat_heads; ++z) {
        const std::string pre = hgat_prefix(l) + "h" + std::to_string(z) + ".";
        heads.push_back({p[pre + "w0"], p[pre + "w1"], p[pre + "w2"], p[pre + "w3"]});
      }
      HgatLayerResult layer = hgat_layer(hgat, incidence, heads);
      GateResult gate = gated_blend(layer.nodes, hgat, p[hgat_prefix(l) + "gate_s"], p[hgat_prefix(l) + "gate_g"]);
      hgat = gate.output;
      if (options.dropout && c.dropout > 0.0) hgat = dropout(hgat, c.dropout, *options.rng);
      out.alpha.insert(out.alpha.end(), layer.alpha.begin(), layer.alpha.end());
      out.beta.insert(out.beta.end(), layer.beta.begin(), layer.beta.end());
      out.gates.emplace_back("hgat.l" + std::to_string(l), gate.gate);
    }

    Var hgt = xbar;
    for (std::size_t l = 0; l < c.hgt_layers; ++l) {
      const std::string pre = hgt_prefix(l);
      const HgtLayerWeights w{p[pre + "ln1_gain"], p[pre + "ln1_bias"], p[pre + "wq"],       p[pre + "wk"],
                              p[pre + "wv"],       p[pre + "wo"],       p[pre + "ln2_gain"], p[pre + "ln2_bias"],
                              p[pre + "mlp_w1"],   p[pre + "mlp_b1"],   p[pre + "mlp_w2"],   p[pre + "mlp_b2"]};
      hgt = hgt_layer(hgt, xbar, w, c.hgt_heads, blocks);
    }
    GateResult imp = gated_blend(hgt, hgat, p["fuse.gate_s"], p["fuse.gate_g"]);
    out.gates.emplace_back("fuse", imp.gate);

    std::vector<Var> gcn;
    for (std::size_t l = 0; l < c.hops; ++l) gcn.push_back(p["sgrl.w" + std::to_string(l)]);
    Var sub = subgraph_encode(xbar, *subgraph_, gcn, blocks);

    std::vector<Var> dual_w0;
    for (std::size_t z = 0; z < c.hgat_heads; ++z) dual_w0.push_back(p["dht.h" + std::to_string(z) + ".w0"]);
    Var dual = encode_dual(xbar, *dual_, dual_w0, blocks).edges;

    GateResult moe = moe_fuse(imp.output, sub, dual, p["moe.gate_s"], p["moe.gate_g"]);
    out.gates.emplace_back("moe", moe.gate);
    h = moe.output;
  }

  Var features = temporal_features(h, p["head.conv1"]);
  if (c.uncertainty) {
    GaussianForecast g = uncertainty_forecast(features, p["head.unc"], c.horizon);
    out.forecast = g.mean;
    out.variance = g.variance;
  } else {
    out.forecast = point_forecast(features, p["head.conv2"]);
  }
  return out;
}

Array learned_incidence(const ParamStore& params, double temperature) {
  if (!params.contains("hgi.node_emb")) throw std::invalid_argument("model has no learned hypergraph structure");
  Tape t(false);
  const Var sim = pairwise_similarity(t.constant(params.get("hgi.node_emb")), t.constant(params.get("hgi.edge_emb")));
  return sample_incidence(hyperedge_probabilities(sim), SamplingMode::threshold, temperature, nullptr).incidence.value();
}

}  // namespace mkh
