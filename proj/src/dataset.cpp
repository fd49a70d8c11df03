#include "mkh/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "mkh/graph.hpp"

namespace mkh {
namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  if (line.empty()) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

void check_ratio(double ratio, const char* what) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) {
    throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
  }
}

}  // namespace

double MtsDataset::observed_fraction() const {
  double observed = 0.0;
  for (double m : mask.values()) observed += m;
  return observed / static_cast<double>(mask.size());
}

const Segment& SplitSpec::segment(std::size_t which) const {
  switch (which) {
    case 0: return train;
    case 1: return validation;
    case 2: return test;
    default: throw std::out_of_range("split segment index must be 0, 1 or 2");
  }
}

MtsDataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  MtsDataset ds;
  for (auto& name : split_commas(line)) ds.variable_names.push_back(trim(name));
  const std::size_t n = ds.variable_names.size();

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> observed;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != n) {
      throw ParseError(path.string() + ": row " + std::to_string(row_no) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(n));
    }
    std::vector<double> row(n, 0.0);
    std::vector<bool> obs(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string cell = trim(cells[i]);
      if (cell.empty()) continue;
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError(path.string() + ": row " + std::to_string(row_no) + ", column " + std::to_string(i + 1) +
                         ": not a number: \"" + cell + "\"");
      }
      row[i] = v;
      obs[i] = true;
    }
    rows.push_back(std::move(row));
    observed.push_back(std::move(obs));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");

  const std::size_t steps = rows.size();
  ds.values = Array({n, steps});
  ds.mask = Array({n, steps});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < n; ++i) {
      ds.values(i, t) = rows[t][i];
      ds.mask(i, t) = observed[t][i] ? 1.0 : 0.0;
    }
  }
  return ds;
}

void save_csv(const MtsDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  for (std::size_t i = 0; i < ds.num_variables(); ++i) {
    if (i) out << ',';
    out << (i < ds.variable_names.size() ? ds.variable_names[i] : "v" + std::to_string(i));
  }
  out << '\n' << std::setprecision(17);
  for (std::size_t t = 0; t < ds.num_steps(); ++t) {
    for (std::size_t i = 0; i < ds.num_variables(); ++i) {
      if (i) out << ',';
      if (ds.observed(i, t)) out << ds.values(i, t);
    }
    out << '\n';
  }
}

SplitSpec chronological_split(std::size_t num_steps, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");

  SplitSpec split;
  split.ratios = ratios;
  const auto boundary = [&](double cumulative) {
    return std::min(num_steps, static_cast<std::size_t>(std::floor(cumulative * static_cast<double>(num_steps) + 1e-9)));
  };
  const std::size_t b1 = boundary(ratios[0]);
  const std::size_t b2 = std::max(b1, boundary(ratios[0] + ratios[1]));
  split.train = {0, b1};
  split.validation = {b1, b2};
  split.test = {b2, num_steps};
  return split;
}

NormalizationStats fit_normalizer(const MtsDataset& ds, const SplitSpec& split) {
  const std::size_t n = ds.num_variables();
  NormalizationStats stats{std::vector<double>(n, 0.0), std::vector<double>(n, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = split.train.begin; t < split.train.end; ++t) {
      if (!ds.observed(i, t)) continue;
      sum += ds.values(i, t);
      ++count;
    }
    if (count == 0) {
      stats.std[i] = 1.0;
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t t = split.train.begin; t < split.train.end; ++t) {
      if (!ds.observed(i, t)) continue;
      const double d = ds.values(i, t) - mean;
      sq += d * d;
    }
    stats.mean[i] = mean;
    stats.std[i] = std::max(kStdFloor, std::sqrt(sq / static_cast<double>(count)));
  }
  return stats;
}

MtsDataset apply_normalizer(const MtsDataset& ds, const NormalizationStats& stats) {
  if (stats.mean.size() != ds.num_variables()) throw DimensionError("normalizer/dataset variable count mismatch");
  MtsDataset out = ds;
  for (std::size_t i = 0; i < ds.num_variables(); ++i) {
    for (std::size_t t = 0; t < ds.num_steps(); ++t) {
      out.values(i, t) = ds.observed(i, t) ? (ds.values(i, t) - stats.mean[i]) / stats.std[i] : 0.0;
    }
  }
  return out;
}

Array invert_normalizer(const Array& normalized, const NormalizationStats& stats) {
  if (normalized.rank() < 2) throw DimensionError("invert_normalizer: need at least [n x steps]");
  const std::size_t n = normalized.dim(normalized.rank() - 2);
  const std::size_t steps = normalized.dim(normalized.rank() - 1);
  if (n != stats.mean.size()) throw DimensionError("invert_normalizer: variable count mismatch");
  Array out = normalized;
  for (std::size_t k = 0; k < out.size(); ++k) {
    const std::size_t var = (k / steps) % n;
    out[k] = out[k] * stats.std[var] + stats.mean[var];
  }
  return out;
}

double invert_value(double normalized, std::size_t variable, const NormalizationStats& stats) {
  return normalized * stats.std.at(variable) + stats.mean.at(variable);
}

std::size_t window_count(std::size_t length, std::size_t tau, std::size_t horizon) {
  if (tau == 0 || horizon == 0) throw std::invalid_argument("look-back and horizon must be >= 1");
  return length + 1 > tau + horizon ? length + 1 - tau - horizon : 0;
}

std::vector<std::size_t> window_starts(const Segment& segment, std::size_t tau, std::size_t horizon) {
  const std::size_t count = window_count(segment.length(), tau, horizon);
  std::vector<std::size_t> starts(count);
  for (std::size_t w = 0; w < count; ++w) starts[w] = segment.begin + tau + w;
  return starts;
}

WindowBatch gather_windows(const MtsDataset& ds, const std::vector<std::size_t>& starts, std::size_t tau,
                           std::size_t horizon) {
  if (starts.empty()) throw std::invalid_argument("gather_windows: no windows requested");
  const std::size_t n = ds.num_variables();
  const std::size_t b = starts.size();
  WindowBatch batch;
  batch.inputs = Array({b, n, tau});
  batch.input_mask = Array({b, n, tau});
  batch.targets = Array({b, n, horizon});
  batch.target_mask = Array({b, n, horizon});
  batch.window_start_times = starts;
  for (std::size_t w = 0; w < b; ++w) {
    const std::size_t t0 = starts[w];
    if (t0 < tau || t0 + horizon > ds.num_steps()) throw std::out_of_range("window exceeds the series");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < tau; ++s) {
        const std::size_t k = (w * n + i) * tau + s;
        batch.inputs[k] = ds.values(i, t0 - tau + s);
        batch.input_mask[k] = ds.mask(i, t0 - tau + s);
      }
      for (std::size_t s = 0; s < horizon; ++s) {
        const std::size_t k = (w * n + i) * horizon + s;
        batch.targets[k] = ds.values(i, t0 + s);
        batch.target_mask[k] = ds.mask(i, t0 + s);
      }
    }
  }
  return batch;
}

std::vector<WindowBatch> make_windows(const MtsDataset& ds, const Segment& segment, std::size_t tau,
                                      std::size_t horizon, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  const auto starts = window_starts(segment, tau, horizon);
  std::vector<WindowBatch> batches;
  for (std::size_t first = 0; first < starts.size(); first += batch_size) {
    const std::size_t last = std::min(starts.size(), first + batch_size);
    batches.push_back(gather_windows(ds, {starts.begin() + first, starts.begin() + last}, tau, horizon));
  }
  return batches;
}

MtsDataset simulate_point_missing(const MtsDataset& ds, double ratio, Rng& rng) {
  check_ratio(ratio, "missing ratio");
  MtsDataset out = ds;
  for (std::size_t k = 0; k < out.mask.size(); ++k) {
    if (out.mask[k] != 0.0 && rng.bernoulli(ratio)) {
      out.mask[k] = 0.0;
      out.values[k] = 0.0;
    }
  }
  return out;
}

MtsDataset simulate_block_missing(const MtsDataset& ds, double ratio, double failure_prob, std::size_t horizon,
                                  Rng& rng) {
  check_ratio(ratio, "missing ratio");
  check_ratio(failure_prob, "failure probability");
  if (horizon == 0) throw std::invalid_argument("horizon must be >= 1");
  MtsDataset out = ds;
  const std::size_t n = ds.num_variables();
  const std::size_t steps = ds.num_steps();
  const auto min_len = static_cast<std::uint64_t>(std::max<std::size_t>(1, horizon / 2));
  const auto max_len = static_cast<std::uint64_t>(2 * horizon);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < steps; ++t) {
      if (!rng.bernoulli(failure_prob)) continue;
      const auto len = static_cast<std::size_t>(rng.uniform_int(min_len, max_len));
      for (std::size_t s = t; s < std::min(steps, t + len); ++s) {
        out.mask(i, s) = 0.0;
        out.values(i, s) = 0.0;
      }
    }
  }

  const auto total = static_cast<double>(out.mask.size());
  double observed = 0.0;
  for (double m : out.mask.values()) observed += m;
  const double deficit = ratio * total - (total - observed);
  if (deficit > 0.0 && observed > 0.0) {
    const double q = std::min(1.0, deficit / observed);
    for (std::size_t k = 0; k < out.mask.size(); ++k) {
      if (out.mask[k] != 0.0 && rng.bernoulli(q)) {
        out.mask[k] = 0.0;
        out.values[k] = 0.0;
      }
    }
  }
  return out;
}

MtsDataset make_synthetic(const ExplicitGraph& graph, const SyntheticSpec& spec, Rng& rng) {
  const std::size_t n = graph.num_nodes();
  if (n == 0) throw std::invalid_argument("make_synthetic: graph has no nodes");
  if (spec.num_steps == 0) throw std::invalid_argument("make_synthetic: need at least one step");
  if (!spec.initial_state.empty() && spec.initial_state.size() != n) {
    throw DimensionError("make_synthetic: initial state must have one entry per node");
  }

  MtsDataset ds;
  ds.values = Array({n, spec.num_steps});
  ds.mask = Array({n, spec.num_steps}, 1.0);
  ds.granularity = "synthetic";
  for (std::size_t i = 0; i < n; ++i) ds.variable_names.push_back("s" + std::to_string(i));

  std::vector<double> prev = spec.initial_state.empty() ? std::vector<double>(n, 0.0) : spec.initial_state;
  std::vector<double> next(n);
  for (std::size_t t = 0; t < spec.num_steps; ++t) {
    const double season =
        spec.seasonal_amplitude * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / kSeasonPeriod);
    for (std::size_t i = 0; i < n; ++i) {
      double diffusion = 0.0;
      const auto& nb = graph.neighbors(i);
      for (std::size_t j : nb) diffusion += prev[j];
      if (!nb.empty()) diffusion /= static_cast<double>(nb.size());
      const double noise = spec.noise_std > 0.0 ? rng.normal(0.0, spec.noise_std) : 0.0;
      next[i] = spec.self_weight * prev[i] + spec.neighbor_weight * diffusion + season + noise;
      ds.values(i, t) = next[i];
    }
    std::swap(prev, next);
  }
  return ds;
}

MtsDataset add_observation_noise(const MtsDataset& ds, double std, Rng& rng) {
  if (!(std >= 0.0)) throw std::invalid_argument("noise std must be non-negative");
  MtsDataset out = ds;
  for (std::size_t k = 0; k < out.values.size(); ++k) {
    if (out.mask[k] != 0.0) out.values[k] += rng.normal(0.0, std);
  }
  return out;
}

}  // namespace mkh
