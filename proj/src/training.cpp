#include "mkh/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "mkh/ops.hpp"

namespace mkh {
namespace {

double observed_count(const Array& mask) {
  double count = 0.0;
  for (double m : mask.values()) count += m != 0.0 ? 1.0 : 0.0;
  return count;
}

Array binary_mask(const Array& mask, const Shape& shape) {
  Array out = mask.reshaped(shape);
  for (double& m : out.values()) m = m != 0.0 ? 1.0 : 0.0;
  return out;
}

void check_loss_shapes(const Var& pred, const Array& target, const Array& mask, const char* what) {
  if (pred.value().size() != target.size() || target.size() != mask.size()) {
    throw DimensionError(std::string(what) + ": prediction, target and mask sizes differ");
  }
}

Var masked_mean(Var elementwise, const Array& mask) {
  const double count = observed_count(mask);
  if (count == 0.0) throw TrainingError("loss undefined: no observed target entries");
  Tape& tape = *elementwise.tape;
  Var kept = mul(elementwise, tape.constant(binary_mask(mask, elementwise.shape())));
  return scale(sum(kept), 1.0 / count);
}

double validation_mae(const MkhNet& model, const TrainingData& data, std::size_t batch_size, std::size_t epoch) {
  try {
    return evaluate(model, data, data.split.validation, batch_size).mae;
  } catch (const NumericError& e) {
    throw TrainingError("validation after epoch " + std::to_string(epoch) + " aborted: " + e.what());
  }
}

void copy_block(const Array& src, Array& dst, std::size_t offset) {
  std::copy(src.values().begin(), src.values().end(), dst.values().begin() + static_cast<std::ptrdiff_t>(offset));
}

}  // namespace

LossKind parse_loss_kind(const std::string& text) {
  if (text == "mae") return LossKind::mae;
  if (text == "nll" || text == "gaussian_nll") return LossKind::gaussian_nll;
  throw std::invalid_argument("unknown loss kind '" + text + "' (expected mae or nll)");
}

std::string to_string(LossKind kind) { return kind == LossKind::mae ? "mae" : "nll"; }

Var mae_loss(Var pred, const Array& target, const Array& mask) {
  check_loss_shapes(pred, target, mask, "mae_loss");
  Tape& tape = *pred.tape;
  Var err = abs(sub(pred, tape.constant(target.reshaped(pred.shape()))));
  return masked_mean(err, mask);
}

Var gaussian_nll_loss(Var mean, Var variance, const Array& target, const Array& mask) {
  check_loss_shapes(mean, target, mask, "gaussian_nll_loss");
  if (variance.shape() != mean.shape()) throw DimensionError("gaussian_nll_loss: mean and variance shapes differ");
  Tape& tape = *mean.tape;
  Var residual = sub(tape.constant(target.reshaped(mean.shape())), mean);
  Var term = add(scale(log(variance), 0.5), div(square(residual), scale(variance, 2.0)));
  return masked_mean(term, mask);
}

MetricsReport compute_metrics(const Array& pred, const Array& target, const Array& mask,
                              const NormalizationStats& stats) {
  if (pred.size() != target.size() || target.size() != mask.size()) {
    throw DimensionError("compute_metrics: prediction, target and mask sizes differ");
  }
  const Array y_hat = invert_normalizer(pred, stats);
  const Array y = invert_normalizer(target.reshaped(pred.shape()), stats);
  const std::size_t horizon = pred.dim(pred.rank() - 1);

  std::vector<double> abs_sum(horizon), sq_sum(horizon), pct_sum(horizon);
  std::vector<std::size_t> count(horizon), pct_count(horizon);
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (mask[k] == 0.0) continue;
    const std::size_t step = k % horizon;
    const double err = y_hat[k] - y[k];
    abs_sum[step] += std::abs(err);
    sq_sum[step] += err * err;
    ++count[step];
    if (std::abs(y[k]) >= kMapeMinTarget) {
      pct_sum[step] += std::abs(err) / std::abs(y[k]);
      ++pct_count[step];
    }
  }

  MetricsReport report;
  double total_abs = 0.0, total_sq = 0.0, total_pct = 0.0;
  std::size_t total_pct_count = 0;
  for (std::size_t s = 0; s < horizon; ++s) {
    const double c = static_cast<double>(std::max<std::size_t>(count[s], 1));
    const double pc = static_cast<double>(std::max<std::size_t>(pct_count[s], 1));
    report.mae_per_step.push_back(abs_sum[s] / c);
    report.rmse_per_step.push_back(std::sqrt(sq_sum[s] / c));
    report.mape_per_step.push_back(100.0 * pct_sum[s] / pc);
    total_abs += abs_sum[s];
    total_sq += sq_sum[s];
    total_pct += pct_sum[s];
    report.count += count[s];
    total_pct_count += pct_count[s];
  }
  if (report.count == 0) throw TrainingError("metrics undefined: no observed target entries");
  const double n = static_cast<double>(report.count);
  report.mae = total_abs / n;
  report.rmse = std::sqrt(total_sq / n);
  report.mape = total_pct_count == 0 ? 0.0 : 100.0 * total_pct / static_cast<double>(total_pct_count);
  return report;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "step,mae,rmse,mape\n";
  for (std::size_t s = 0; s < report.mae_per_step.size(); ++s) {
    out << s + 1 << ',' << report.mae_per_step[s] << ',' << report.rmse_per_step[s] << ','
        << report.mape_per_step[s] << '\n';
  }
  out << "all," << report.mae << ',' << report.rmse << ',' << report.mape << '\n';
}

OptimizerState OptimizerState::for_params(const ParamStore& params, double lr) {
  OptimizerState state;
  state.lr = lr;
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.first_moment.emplace_back(params.value(i).shape());
    state.second_moment.emplace_back(params.value(i).shape());
  }
  return state;
}

void adam_step(OptimizerState& state, ParamStore& params, const std::vector<Array>& grads) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state, parameters and gradients disagree in count");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Array& p = params.value(i);
    Array& m = state.first_moment[i];
    Array& v = state.second_moment[i];
    const Array& g = grads[i];
    if (g.shape() != p.shape()) throw DimensionError("adam_step: gradient shape differs for " + params.name(i));
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

double clip_global_norm(std::vector<Array>& grads, double max_norm) {
  double sq = 0.0;
  for (const Array& g : grads)
    for (double x : g.values()) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Array& g : grads)
      for (double& x : g.values()) x *= factor;
  }
  return norm;
}

bool ImprovementTracker::observe(double value) {
  if (value < best_ && best_ - value >= threshold_) {
    best_ = value;
    stagnant_ = 0;
    return true;
  }
  ++stagnant_;
  return false;
}

PlateauScheduler::PlateauScheduler(std::size_t patience, double factor, double threshold)
    : patience_(patience), factor_(factor), tracker_(threshold) {
  if (patience == 0 || !(factor > 0.0 && factor < 1.0)) {
    throw std::invalid_argument("PlateauScheduler: need patience >= 1 and factor in (0, 1)");
  }
}

double PlateauScheduler::step(double val_mae, double lr) {
  tracker_.observe(val_mae);
  if (tracker_.stagnant() >= patience_) {
    tracker_.reset_counter();
    return lr * factor_;
  }
  return lr;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (patience_lr == 0 || patience_stop == 0) throw std::invalid_argument("patience values must be >= 1");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw std::invalid_argument("lr_factor must lie in (0, 1)");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  if (improvement_threshold < 0.0) throw std::invalid_argument("improvement_threshold must be >= 0");
}

TrainingData TrainingData::prepare(const MtsDataset& raw, const std::array<double, 3>& ratios) {
  TrainingData data;
  data.split = chronological_split(raw, ratios);
  data.stats = fit_normalizer(raw, data.split);
  data.normalized = apply_normalizer(raw, data.stats);
  return data;
}

const Segment& TrainingData::segment(const std::string& name) const {
  if (name == "train") return split.train;
  if (name == "val" || name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw std::invalid_argument("unknown split '" + name + "' (expected train, val or test)");
}

Prediction predict(const MkhNet& model, const MtsDataset& normalized, const Segment& segment,
                   std::size_t batch_size) {
  const ModelConfig& cfg = model.config();
  const std::vector<std::size_t> starts = window_starts(segment, cfg.lookback, cfg.horizon);
  if (starts.empty()) throw TrainingError("empty split: no complete window in the requested range");
  const std::size_t n = cfg.num_nodes;
  const std::size_t windows = starts.size();

  Prediction out;
  out.mean = Array({windows, n, cfg.horizon});
  if (cfg.uncertainty) out.variance = Array({windows, n, cfg.horizon});
  out.target = Array({windows, n, cfg.horizon});
  out.target_mask = Array({windows, n, cfg.horizon});
  out.window_start_times = starts;

  for (std::size_t first = 0; first < windows; first += batch_size) {
    const std::size_t last = std::min(windows, first + batch_size);
    const std::vector<std::size_t> chunk(starts.begin() + static_cast<std::ptrdiff_t>(first),
                                         starts.begin() + static_cast<std::ptrdiff_t>(last));
    const WindowBatch batch = gather_windows(normalized, chunk, cfg.lookback, cfg.horizon);
    Tape tape(false);
    const BoundParams bound(tape, model.params());
    const ForwardResult result = model.forward(bound, batch.inputs, ForwardOptions::evaluation());
    const std::size_t offset = first * n * cfg.horizon;
    copy_block(result.forecast.value(), out.mean, offset);
    if (result.variance) copy_block(result.variance->value(), *out.variance, offset);
    copy_block(batch.targets, out.target, offset);
    copy_block(batch.target_mask, out.target_mask, offset);
  }
  return out;
}

MetricsReport evaluate(const MkhNet& model, const TrainingData& data, const Segment& segment,
                       std::size_t batch_size) {
  const Prediction p = predict(model, data.normalized, segment, batch_size);
  return compute_metrics(p.mean, p.target, p.target_mask, data.stats);
}

TrainResult train(MkhNet& model, const TrainingData& data, const TrainConfig& config) {
  config.validate();
  const ModelConfig& cfg = model.config();
  if (config.loss == LossKind::gaussian_nll && !cfg.uncertainty) {
    throw std::invalid_argument("Gaussian NLL training needs a model with the uncertainty head");
  }
  if (config.loss == LossKind::mae && cfg.uncertainty) {
    throw std::invalid_argument("MAE training needs a model with the point head");
  }
  const std::vector<std::size_t> train_starts = window_starts(data.split.train, cfg.lookback, cfg.horizon);
  if (train_starts.empty()) throw TrainingError("empty split: training range holds no complete window");

  Rng root(config.seed);
  Rng shuffle_rng = root.split();
  Rng noise_rng = root.split();

  TrainResult result;
  result.initial_val_mae = validation_mae(model, data, config.batch_size, 0);
  result.best_val_mae = result.initial_val_mae;

  OptimizerState optimizer = OptimizerState::for_params(model.params(), config.lr);
  PlateauScheduler scheduler(config.patience_lr, config.lr_factor, config.improvement_threshold);
  ImprovementTracker stopper(config.improvement_threshold);
  stopper.observe(result.initial_val_mae);
  ParamStore best = model.params();

  std::vector<std::size_t> order = train_starts;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    const double epoch_lr = optimizer.lr;
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t last = std::min(order.size(), first + config.batch_size);
      const std::vector<std::size_t> chunk(order.begin() + static_cast<std::ptrdiff_t>(first),
                                           order.begin() + static_cast<std::ptrdiff_t>(last));
      const WindowBatch batch = gather_windows(data.normalized, chunk, cfg.lookback, cfg.horizon);
      if (observed_count(batch.target_mask) == 0.0) continue;

      std::vector<Array> grads;
      try {
        Tape tape;
        const BoundParams bound(tape, model.params());
        const ForwardResult out = model.forward(bound, batch.inputs, ForwardOptions::training(noise_rng));
        const Var loss = config.loss == LossKind::mae
                             ? mae_loss(out.forecast, batch.targets, batch.target_mask)
                             : gaussian_nll_loss(out.forecast, *out.variance, batch.targets, batch.target_mask);
        tape.backward(loss);
        loss_sum += loss.value().item();
        for (std::size_t i = 0; i < bound.size(); ++i) {
          grads.push_back(bound.at(i).grad());
          if (!grads.back().all_finite()) {
            throw NumericError("non-finite gradient for parameter " + model.params().name(i));
          }
        }
      } catch (const NumericError& e) {
        throw TrainingError("training aborted in epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches + 1) + ": " + e.what());
      }
      ++batches;
      clip_global_norm(grads, config.clip_norm);
      adam_step(optimizer, model.params(), grads);
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = batches == 0 ? 0.0 : loss_sum / static_cast<double>(batches);
    record.val_mae = validation_mae(model, data, config.batch_size, epoch);
    record.lr = epoch_lr;
    result.history.push_back(record);

    if (stopper.observe(record.val_mae)) {
      best = model.params();
      result.best_val_mae = record.val_mae;
      result.best_epoch = epoch;
    }
    optimizer.lr = scheduler.step(record.val_mae, optimizer.lr);
    if (stopper.stagnant() >= config.patience_stop) {
      result.stopped_early = true;
      break;
    }
  }
  model.params() = std::move(best);
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << std::setprecision(17) << "epoch,train_loss,val_mae,lr\n";
  for (const EpochRecord& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_mae << ',' << r.lr << '\n';
}

MetricsReport historical_average_baseline(const TrainingData& data, const Segment& segment, std::size_t lookback,
                                          std::size_t horizon) {
  const std::vector<std::size_t> starts = window_starts(segment, lookback, horizon);
  if (starts.empty()) throw TrainingError("empty split: no complete window in the requested range");
  const WindowBatch batch = gather_windows(data.normalized, starts, lookback, horizon);
  const std::size_t rows = batch.inputs.size() / lookback;
  Array forecast(batch.targets.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    double total = 0.0, seen = 0.0;
    for (std::size_t s = 0; s < lookback; ++s) {
      if (batch.input_mask[r * lookback + s] == 0.0) continue;
      total += batch.inputs[r * lookback + s];
      seen += 1.0;
    }
    const double level = seen == 0.0 ? 0.0 : total / seen;
    for (std::size_t s = 0; s < horizon; ++s) forecast[r * horizon + s] = level;
  }
  return compute_metrics(forecast, batch.targets, batch.target_mask, data.stats);
}

MetricsReport historical_average_baseline(const MtsDataset& ds, std::size_t lookback, std::size_t horizon) {
  TrainingData data;
  data.normalized = ds;
  data.stats.mean.assign(ds.num_variables(), 0.0);
  data.stats.std.assign(ds.num_variables(), 1.0);
  return historical_average_baseline(data, Segment{0, ds.num_steps()}, lookback, horizon);
}

}  // namespace mkh
