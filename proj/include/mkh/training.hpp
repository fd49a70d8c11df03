#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mkh/dataset.hpp"
#include "mkh/model.hpp"

namespace mkh {

/// Undefined loss, empty split, or a non-finite value during training.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossKind { mae, gaussian_nll };

LossKind parse_loss_kind(const std::string& text);
std::string to_string(LossKind kind);

/// Mean |pred - target| over entries with mask != 0. Throws TrainingError
/// when nothing is observed.
Var mae_loss(Var pred, const Array& target, const Array& mask);
/// Mean over observed entries of log(var)/2 + (target - mean)^2 / (2 var).
Var gaussian_nll_loss(Var mean, Var variance, const Array& target, const Array& mask);

inline constexpr double kMapeMinTarget = 1e-3;

struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double mape = 0.0;  // percent; 0 when no target clears kMapeMinTarget
  std::vector<double> mae_per_step;
  std::vector<double> rmse_per_step;
  std::vector<double> mape_per_step;
  std::size_t count = 0;  // observed entries
};

/// Arrays are [.. x n x horizon] on the normalized scale; both sides are
/// mapped back to original units before scoring.
MetricsReport compute_metrics(const Array& pred, const Array& target, const Array& mask,
                              const NormalizationStats& stats);
/// Columns step,mae,rmse,mape; one row per horizon step and a final "all" row.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

struct OptimizerState {
  std::vector<Array> first_moment;
  std::vector<Array> second_moment;
  std::size_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  /// Zero moments shaped like `params`.
  static OptimizerState for_params(const ParamStore& params, double lr);
};

/// One bias-corrected Adam update; `grads` follow store order.
void adam_step(OptimizerState& state, ParamStore& params, const std::vector<Array>& grads);

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::vector<Array>& grads, double max_norm);

/// Counts consecutive observations that fail to beat the best value by at
/// least `threshold`.
class ImprovementTracker {
 public:
  explicit ImprovementTracker(double threshold = 1e-6) : threshold_(threshold) {}

  /// True when `value` is a new best.
  bool observe(double value);
  std::size_t stagnant() const noexcept { return stagnant_; }
  double best() const noexcept { return best_; }
  void reset_counter() noexcept { stagnant_ = 0; }

 private:
  double threshold_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stagnant_ = 0;
};

/// Multiplies the learning rate by `factor` after `patience` stagnant epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(std::size_t patience = 5, double factor = 0.5, double threshold = 1e-6);

  /// Feeds one validation score and returns the learning rate to use next.
  double step(double val_mae, double lr);

 private:
  std::size_t patience_;
  double factor_;
  ImprovementTracker tracker_;
};

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t patience_lr = 5;
  double lr_factor = 0.5;
  std::size_t patience_stop = 10;
  double improvement_threshold = 1e-6;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::mae;

  void validate() const;
};

/// Normalized series, the statistics used to normalize it and the split.
struct TrainingData {
  MtsDataset normalized;
  NormalizationStats stats;
  SplitSpec split;

  /// Fits the normalizer on the training range of `raw`.
  static TrainingData prepare(const MtsDataset& raw, const std::array<double, 3>& ratios);
  const Segment& segment(const std::string& name) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;  // rate used during the epoch
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double initial_val_mae = 0.0;
  /// Validation MAE of the returned parameters.
  double best_val_mae = 0.0;
  std::size_t best_epoch = 0;  // 0 = the initial parameters were never beaten
  bool stopped_early = false;
};

/// Runs the full protocol and leaves the best-validation parameters in
/// `model`. Throws TrainingError naming the first non-finite op.
TrainResult train(MkhNet& model, const TrainingData& data, const TrainConfig& config);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Deterministic forecasts for every window of a segment, normalized scale.
struct Prediction {
  Array mean;                     // [W x n x horizon]
  std::optional<Array> variance;  // uncertainty models only
  Array target;
  Array target_mask;
  std::vector<std::size_t> window_start_times;
};

/// Throws TrainingError when the segment holds no complete window.
Prediction predict(const MkhNet& model, const MtsDataset& normalized, const Segment& segment,
                   std::size_t batch_size = 64);
MetricsReport evaluate(const MkhNet& model, const TrainingData& data, const Segment& segment,
                       std::size_t batch_size = 64);

/// Forecasts each future step as the mean of the observed look-back values.
MetricsReport historical_average_baseline(const TrainingData& data, const Segment& segment, std::size_t lookback,
                                          std::size_t horizon);
/// Same, scoring `ds` in its own units.
MetricsReport historical_average_baseline(const MtsDataset& ds, std::size_t lookback, std::size_t horizon);

}  // namespace mkh
