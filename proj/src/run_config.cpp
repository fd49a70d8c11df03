#include "mkh/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <vector>

namespace mkh {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a non-negative integer");
  return out;
}

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("expected a non-negative integer");
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number");
  }
  if (used != v.size()) throw ConfigError("expected a number");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("expected true or false");
}

std::string exact(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class T>
Field size_field(const char* key, T RunConfig::*section, std::size_t T::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*section).*member = to_size(v); },
          [=](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <class T>
Field real_field(const char* key, T RunConfig::*section, double T::*member) {
  return {key, [=](RunConfig& c, const std::string& v) { (c.*section).*member = to_double(v); },
          [=](const RunConfig& c) { return exact((c.*section).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      size_field("num_nodes", &RunConfig::model, &ModelConfig::num_nodes),
      size_field("lookback", &RunConfig::model, &ModelConfig::lookback),
      size_field("horizon", &RunConfig::model, &ModelConfig::horizon),
      size_field("embed_dim", &RunConfig::model, &ModelConfig::embed_dim),
      size_field("hyperedges", &RunConfig::model, &ModelConfig::hyperedges),
      size_field("patches", &RunConfig::model, &ModelConfig::patches),
      size_field("hops", &RunConfig::model, &ModelConfig::hops),
      size_field("hgat_heads", &RunConfig::model, &ModelConfig::hgat_heads),
      size_field("hgat_layers", &RunConfig::model, &ModelConfig::hgat_layers),
      size_field("hgt_heads", &RunConfig::model, &ModelConfig::hgt_heads),
      size_field("hgt_layers", &RunConfig::model, &ModelConfig::hgt_layers),
      real_field("dropout", &RunConfig::model, &ModelConfig::dropout),
      real_field("temperature", &RunConfig::model, &ModelConfig::temperature),
      {"spatial", [](RunConfig& c, const std::string& v) { c.model.spatial = to_bool(v); },
       [](const RunConfig& c) { return std::string(c.model.spatial ? "true" : "false"); }},
      size_field("epochs", &RunConfig::train, &TrainConfig::epochs),
      size_field("batch_size", &RunConfig::train, &TrainConfig::batch_size),
      real_field("lr", &RunConfig::train, &TrainConfig::lr),
      size_field("patience_lr", &RunConfig::train, &TrainConfig::patience_lr),
      real_field("lr_factor", &RunConfig::train, &TrainConfig::lr_factor),
      size_field("patience_stop", &RunConfig::train, &TrainConfig::patience_stop),
      real_field("improvement_threshold", &RunConfig::train, &TrainConfig::improvement_threshold),
      real_field("clip_norm", &RunConfig::train, &TrainConfig::clip_norm),
      {"seed", [](RunConfig& c, const std::string& v) { c.train.seed = to_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"loss", [](RunConfig& c, const std::string& v) { c.train.loss = parse_loss_kind(v); },
       [](const RunConfig& c) { return to_string(c.train.loss); }},
      {"split",
       [](RunConfig& c, const std::string& v) {
         std::array<double, 3> ratios{};
         std::size_t part = 0;
         std::string_view rest(v);
         while (true) {
           const auto comma = rest.find(',');
           if (part == 3) throw ConfigError("split takes three comma-separated ratios");
           ratios[part++] = to_double(std::string(trim(rest.substr(0, comma))));
           if (comma == std::string_view::npos) break;
           rest.remove_prefix(comma + 1);
         }
         if (part != 3) throw ConfigError("split takes three comma-separated ratios");
         c.split = ratios;
       },
       [](const RunConfig& c) { return exact(c.split[0]) + "," + exact(c.split[1]) + "," + exact(c.split[2]); }},
      {"missing", [](RunConfig& c, const std::string& v) { c.missing = parse_missing_scheme(v); },
       [](const RunConfig& c) { return to_string(c.missing); }},
      {"missing_ratio", [](RunConfig& c, const std::string& v) { c.missing_ratio = to_double(v); },
       [](const RunConfig& c) { return exact(c.missing_ratio); }},
      {"failure_prob", [](RunConfig& c, const std::string& v) { c.failure_prob = to_double(v); },
       [](const RunConfig& c) { return exact(c.failure_prob); }},
  };
  return table;
}

}  // namespace

MissingScheme parse_missing_scheme(const std::string& text) {
  if (text == "none") return MissingScheme::none;
  if (text == "point") return MissingScheme::point;
  if (text == "block") return MissingScheme::block;
  throw ConfigError("unknown missing scheme '" + text + "' (expected none, point or block)");
}

std::string to_string(MissingScheme scheme) {
  switch (scheme) {
    case MissingScheme::point:
      return "point";
    case MissingScheme::block:
      return "block";
    case MissingScheme::none:
      break;
  }
  return "none";
}

void RunConfig::validate() const {
  try {
    ModelConfig m = model;
    if (m.num_nodes == 0) m.num_nodes = std::max<std::size_t>(m.patches, 1);
    m.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  double total = 0.0;
  for (double r : split) {
    if (!(r >= 0.0)) throw ConfigError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
  if (!(missing_ratio >= 0.0 && missing_ratio <= 1.0)) throw ConfigError("missing_ratio must lie in [0, 1]");
  if (!(failure_prob >= 0.0 && failure_prob <= 1.0)) throw ConfigError("failure_prob must lie in [0, 1]");
  if (model.uncertainty != (train.loss == LossKind::gaussian_nll)) {
    throw ConfigError("the uncertainty head goes with loss = nll and only with it");
  }
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    const auto& table = fields();
    const auto field = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (field == table.end()) throw ConfigError(where + "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(where + "key '" + key + "' given twice");
    try {
      field->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + key + ": " + e.what());
    }
  }
  config.sync_heads();
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.key) + " = " + f.get(config) + "\n";
  return out;
}

MtsDataset apply_missingness(const RunConfig& config, const MtsDataset& raw) {
  Rng rng(config.train.seed ^ 0x6d697373696e6755ULL);
  switch (config.missing) {
    case MissingScheme::point:
      return simulate_point_missing(raw, config.missing_ratio, rng);
    case MissingScheme::block:
      return simulate_block_missing(raw, config.missing_ratio, config.failure_prob, config.model.horizon, rng);
    case MissingScheme::none:
      break;
  }
  return raw;
}

TrainingData prepare_run_data(const RunConfig& config, const MtsDataset& raw) {
  return TrainingData::prepare(apply_missingness(config, raw), config.split);
}

}  // namespace mkh
