#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "mkh/dataset.hpp"
#include "mkh/model.hpp"
#include "mkh/training.hpp"

namespace mkh {

/// Bad config text; the message carries the line number when there is one.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class MissingScheme { none, point, block };

MissingScheme parse_missing_scheme(const std::string& text);
std::string to_string(MissingScheme scheme);

inline constexpr double kDefaultFailureProb = 0.0015;

/// Everything a run depends on besides the data files.
struct RunConfig {
  ModelConfig model;  // model.num_nodes == 0 means "take it from the data"
  TrainConfig train;
  std::array<double, 3> split{0.6, 0.2, 0.2};
  MissingScheme missing = MissingScheme::none;
  double missing_ratio = 0.0;
  double failure_prob = kDefaultFailureProb;

  /// Keeps model.uncertainty in step with the loss kind.
  void sync_heads() { model.uncertainty = train.loss == LossKind::gaussian_nll; }
  void validate() const;
};

/// Flat `key = value` lines; `#` starts a comment. Unknown keys, repeated
/// keys and unparsable values are ConfigErrors.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key, values printed exactly; parse_run_config inverts it.
std::string format_run_config(const RunConfig& config);

/// The configured missingness applied to `raw`, seeded from the run seed.
MtsDataset apply_missingness(const RunConfig& config, const MtsDataset& raw);
/// Applies the configured missingness to `raw` (seeded from the run seed),
/// then normalizes on the training range.
TrainingData prepare_run_data(const RunConfig& config, const MtsDataset& raw);

}  // namespace mkh
