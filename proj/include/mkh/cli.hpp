#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mkh/checkpoint.hpp"
#include "mkh/training.hpp"

namespace mkh {

/// The checkpoint cannot do what was asked (e.g. uncertainty from a point model).
class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainOptions {
  std::filesystem::path data;
  std::filesystem::path graph;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss;
  std::optional<std::string> missing;
  std::optional<double> missing_ratio;
};

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainResult result;
};

/// Writes model.ckpt, history.csv and config.txt into `out`.
TrainOutcome cmd_train(const TrainOptions& options, std::ostream& log);

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path graph;
  std::string split = "test";
  std::optional<std::filesystem::path> out;  // per-horizon CSV; default next to the checkpoint
};

MetricsReport cmd_eval(const EvalOptions& options, std::ostream& out);

struct ForecastOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path graph;
  bool with_uncertainty = false;
  std::optional<std::filesystem::path> out;  // default: the stream
};

/// Forecasts the `horizon` steps after the end of the data from its last
/// `lookback` steps.
void cmd_forecast(const ForecastOptions& options, std::ostream& out);

struct InspectOptions {
  std::filesystem::path checkpoint;
  std::string emit = "incidence";  // incidence | alpha | beta | gates
  std::optional<std::filesystem::path> data;   // alpha, beta and gates run the
  std::optional<std::filesystem::path> graph;  // model on the last window
  std::optional<std::filesystem::path> out;
};

void cmd_inspect(const InspectOptions& options, std::ostream& out);

struct SynthOptions {
  std::size_t nodes = 20;
  std::size_t steps = 2000;
  std::filesystem::path out_data;
  std::filesystem::path out_graph;
  std::uint64_t seed = 0;
  double chord_prob = 0.1;
  double noise_std = 0.1;
};

void cmd_make_synth(const SynthOptions& options);

/// Parses `args` (without the program name) and dispatches. Returns the
/// process exit code; errors are reported on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mkh
