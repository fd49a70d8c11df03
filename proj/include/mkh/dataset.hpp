#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mkh/array.hpp"
#include "mkh/rng.hpp"

namespace mkh {

class ExplicitGraph;

/// Malformed input file. The message carries the offending line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Variables x time. Masked-out entries are stored as 0.
struct MtsDataset {
  Array values;  // [n x T]
  Array mask;    // [n x T], 1 = observed
  std::vector<std::string> variable_names;
  std::string granularity;

  std::size_t num_variables() const { return values.rows(); }
  std::size_t num_steps() const { return values.cols(); }
  bool observed(std::size_t var, std::size_t t) const { return mask(var, t) != 0.0; }
  double observed_fraction() const;
};

struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> std;
};

/// Half-open time range [begin, end).
struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
};

struct SplitSpec {
  std::array<double, 3> ratios{};
  Segment train, validation, test;

  const Segment& segment(std::size_t which) const;
};

struct WindowBatch {
  Array inputs;        // [b x n x tau]
  Array targets;       // [b x n x horizon]
  Array input_mask;    // same shape as inputs
  Array target_mask;   // same shape as targets
  std::vector<std::size_t> window_start_times;  // first target step of each window

  std::size_t batch_size() const { return window_start_times.size(); }
};

inline constexpr double kStdFloor = 1e-8;
inline constexpr double kSeasonPeriod = 288.0;

/// Header row of variable names, then one comma-separated row per time step.
/// Empty cells are missing.
MtsDataset load_csv(const std::filesystem::path& path);
void save_csv(const MtsDataset& ds, const std::filesystem::path& path);

/// Boundaries are floor(cumulative ratio * T).
SplitSpec chronological_split(std::size_t num_steps, const std::array<double, 3>& ratios);
inline SplitSpec chronological_split(const MtsDataset& ds, const std::array<double, 3>& ratios) {
  return chronological_split(ds.num_steps(), ratios);
}

/// Per-variable mean/std over observed entries of the training range.
NormalizationStats fit_normalizer(const MtsDataset& ds, const SplitSpec& split);
/// Observed entries are standardised; masked entries stay 0.
MtsDataset apply_normalizer(const MtsDataset& ds, const NormalizationStats& stats);
/// Maps a [.. x n x steps] normalized array (row-major, variables second to
/// last) back to original units.
Array invert_normalizer(const Array& normalized, const NormalizationStats& stats);
double invert_value(double normalized, std::size_t variable, const NormalizationStats& stats);

/// Number of stride-1 windows in a segment of length L: max(0, L - tau - horizon + 1).
std::size_t window_count(std::size_t length, std::size_t tau, std::size_t horizon);
/// First target step of every window lying entirely inside `segment`.
std::vector<std::size_t> window_starts(const Segment& segment, std::size_t tau, std::size_t horizon);
WindowBatch gather_windows(const MtsDataset& ds, const std::vector<std::size_t>& starts, std::size_t tau,
                           std::size_t horizon);
/// Chronological batches covering every window of the segment.
std::vector<WindowBatch> make_windows(const MtsDataset& ds, const Segment& segment, std::size_t tau,
                                      std::size_t horizon, std::size_t batch_size);

/// Each observed entry is masked independently with probability `ratio`.
MtsDataset simulate_point_missing(const MtsDataset& ds, double ratio, Rng& rng);

/// Sensor-failure blocks: every (variable, step) starts a masked run with
/// probability `failure_prob`, run length uniform on [horizon/2, 2*horizon].
/// Point masking then tops the masked fraction up to `ratio`.
MtsDataset simulate_block_missing(const MtsDataset& ds, double ratio, double failure_prob, std::size_t horizon,
                                  Rng& rng);

struct SyntheticSpec {
  std::size_t num_steps = 2000;
  double noise_std = 0.1;
  double seasonal_amplitude = 1.0;
  double self_weight = 0.5;
  double neighbor_weight = 0.4;
  /// Starting state x_{-1}; empty means zeros.
  std::vector<double> initial_state;
};

/// x_t = a x_{t-1} + b Ahat x_{t-1} + A sin(2 pi t / 288) + N(0, noise_std^2),
/// with Ahat the row-normalised adjacency of `graph`.
MtsDataset make_synthetic(const ExplicitGraph& graph, const SyntheticSpec& spec, Rng& rng);

/// Adds iid N(0, std^2) observation noise to observed entries.
MtsDataset add_observation_noise(const MtsDataset& ds, double std, Rng& rng);

}  // namespace mkh
