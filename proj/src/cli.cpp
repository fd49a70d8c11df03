#include "mkh/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "mkh/graph.hpp"

namespace mkh {
namespace {

constexpr std::uint64_t kInitStream = 0x696e69745f706172ULL;

struct LoadedRun {
  Checkpoint checkpoint;
  MtsDataset raw;
  ExplicitGraph graph;
};

LoadedRun load_run(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                   const std::filesystem::path& graph) {
  LoadedRun run;
  run.checkpoint = load_checkpoint(checkpoint);
  run.raw = load_csv(data);
  const std::size_t n = run.checkpoint.config.model.num_nodes;
  if (run.raw.num_variables() != n) {
    throw DataError("data has " + std::to_string(run.raw.num_variables()) + " variables, checkpoint expects " +
                    std::to_string(n));
  }
  run.graph = load_edge_list(graph, n);
  return run;
}

MkhNet restore(const LoadedRun& run) {
  return MkhNet(run.checkpoint.config.model, run.graph, run.checkpoint.params);
}

/// Output file when given, otherwise the fallback stream.
class Sink {
 public:
  Sink(const std::optional<std::filesystem::path>& path, std::ostream& fallback) : stream_(&fallback) {
    if (path) {
      file_.open(*path);
      if (!file_) throw std::runtime_error("cannot write " + path->string());
      stream_ = &file_;
    }
    *stream_ << std::setprecision(17);
  }
  std::ostream& stream() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

void write_matrix_rows(std::ostream& out, const std::string& prefix, const Array& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << prefix << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << ',' << m(r, c);
    out << '\n';
  }
}

std::string column_header(const char* label, std::size_t count) {
  std::string header;
  for (std::size_t c = 0; c < count; ++c) header += "," + std::string(label) + std::to_string(c);
  return header;
}

}  // namespace

TrainOutcome cmd_train(const TrainOptions& options, std::ostream& log) {
  RunConfig config = options.config ? load_run_config(*options.config) : RunConfig{};
  if (options.seed) config.train.seed = *options.seed;
  if (options.loss) config.train.loss = parse_loss_kind(*options.loss);
  if (options.missing) config.missing = parse_missing_scheme(*options.missing);
  if (options.missing_ratio) config.missing_ratio = *options.missing_ratio;
  config.sync_heads();

  const MtsDataset raw = load_csv(options.data);
  if (config.model.num_nodes == 0) config.model.num_nodes = raw.num_variables();
  if (config.model.num_nodes != raw.num_variables()) {
    throw ConfigError("config num_nodes = " + std::to_string(config.model.num_nodes) + " but the data has " +
                      std::to_string(raw.num_variables()) + " variables");
  }
  config.validate();
  ExplicitGraph graph = load_edge_list(options.graph, raw.num_variables());
  const TrainingData data = prepare_run_data(config, raw);

  Rng init(config.train.seed ^ kInitStream);
  MkhNet model(config.model, std::move(graph), init);
  TrainOutcome outcome;
  outcome.result = train(model, data, config.train);
  outcome.checkpoint = Checkpoint{config, model.params(), data.stats, config.train.seed};

  std::filesystem::create_directories(options.out);
  save_checkpoint(outcome.checkpoint, options.out / "model.ckpt");
  write_history_csv(outcome.result.history, options.out / "history.csv");
  std::ofstream(options.out / "config.txt") << format_run_config(config);

  log << std::setprecision(17);
  log << "observed fraction " << data.normalized.observed_fraction() << '\n';
  log << "epochs run " << outcome.result.history.size() << (outcome.result.stopped_early ? " (early stop)" : "")
      << '\n';
  log << "initial val mae " << outcome.result.initial_val_mae << '\n';
  log << "final val mae " << outcome.result.best_val_mae << " (epoch " << outcome.result.best_epoch << ")\n";
  log << "wrote " << (options.out / "model.ckpt").string() << '\n';
  return outcome;
}

MetricsReport cmd_eval(const EvalOptions& options, std::ostream& out) {
  const LoadedRun run = load_run(options.checkpoint, options.data, options.graph);
  const RunConfig& config = run.checkpoint.config;
  const MtsDataset corrupted = apply_missingness(config, run.raw);
  TrainingData data;
  data.stats = run.checkpoint.stats;
  data.normalized = apply_normalizer(corrupted, data.stats);
  data.split = chronological_split(corrupted, config.split);
  const Segment& segment = data.segment(options.split);

  const MkhNet model = restore(run);
  const MetricsReport report = evaluate(model, data, segment, config.train.batch_size);
  const MetricsReport baseline =
      historical_average_baseline(data, segment, config.model.lookback, config.model.horizon);

  const std::filesystem::path csv = options.out.value_or(
      options.checkpoint.parent_path() / (options.checkpoint.stem().string() + "_" + options.split + "_metrics.csv"));
  write_metrics_csv(report, csv);
  out << std::setprecision(17);
  out << "split " << options.split << '\n';
  out << "mae " << report.mae << '\n';
  out << "rmse " << report.rmse << '\n';
  out << "mape " << report.mape << '\n';
  out << "ha_mae " << baseline.mae << '\n';
  out << "per-horizon metrics " << csv.string() << '\n';
  return report;
}

void cmd_forecast(const ForecastOptions& options, std::ostream& out) {
  const LoadedRun run = load_run(options.checkpoint, options.data, options.graph);
  const ModelConfig& cfg = run.checkpoint.config.model;
  if (options.with_uncertainty && !cfg.uncertainty) {
    throw CapabilityError("checkpoint was trained with the MAE loss and has no uncertainty head; retrain with --loss nll");
  }
  if (run.raw.num_steps() < cfg.lookback) {
    throw DataError("forecast needs at least " + std::to_string(cfg.lookback) + " steps of data");
  }
  const NormalizationStats& stats = run.checkpoint.stats;
  const MtsDataset normalized = apply_normalizer(run.raw, stats);
  const std::size_t n = cfg.num_nodes;
  const std::size_t first = normalized.num_steps() - cfg.lookback;
  Array inputs({1, n, cfg.lookback});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < cfg.lookback; ++s) inputs[i * cfg.lookback + s] = normalized.values(i, first + s);

  const MkhNet model = restore(run);
  Tape tape(false);
  const BoundParams bound(tape, model.params());
  const ForwardResult result = model.forward(bound, inputs, ForwardOptions::evaluation());
  const Array mean = invert_normalizer(result.forecast.value(), stats);

  Sink sink(options.out, out);
  std::ostream& csv = sink.stream();
  csv << "node";
  for (std::size_t s = 1; s <= cfg.horizon; ++s) csv << ",t+" << s;
  if (options.with_uncertainty)
    for (std::size_t s = 1; s <= cfg.horizon; ++s) csv << ",sigma_t+" << s;
  csv << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    csv << (i < run.raw.variable_names.size() ? run.raw.variable_names[i] : "v" + std::to_string(i));
    for (std::size_t s = 0; s < cfg.horizon; ++s) csv << ',' << mean(i, s);
    if (options.with_uncertainty) {
      const Array& variance = result.variance->value();
      for (std::size_t s = 0; s < cfg.horizon; ++s) csv << ',' << std::sqrt(variance(i, s)) * stats.std[i];
    }
    csv << '\n';
  }
}

void cmd_inspect(const InspectOptions& options, std::ostream& out) {
  const Checkpoint checkpoint = load_checkpoint(options.checkpoint);
  const ModelConfig& cfg = checkpoint.config.model;
  if (!cfg.spatial) throw CapabilityError("checkpoint has no spatial branch to inspect");

  if (options.emit == "incidence") {
    const Array incidence = learned_incidence(checkpoint.params, cfg.temperature);
    Sink sink(options.out, out);
    sink.stream() << "node" << column_header("e", incidence.cols()) << '\n';
    write_matrix_rows(sink.stream(), "", incidence);
    return;
  }
  if (options.emit != "alpha" && options.emit != "beta" && options.emit != "gates") {
    throw std::invalid_argument("--emit must be incidence, alpha, beta or gates");
  }
  if (!options.data || !options.graph) throw std::invalid_argument("--emit " + options.emit + " needs --data and --graph");

  const LoadedRun run = load_run(options.checkpoint, *options.data, *options.graph);
  const MtsDataset normalized = apply_normalizer(run.raw, checkpoint.stats);
  if (normalized.num_steps() < cfg.lookback) {
    throw DataError("inspect needs at least " + std::to_string(cfg.lookback) + " steps of data");
  }
  Array inputs({1, cfg.num_nodes, cfg.lookback});
  const std::size_t first = normalized.num_steps() - cfg.lookback;
  for (std::size_t i = 0; i < cfg.num_nodes; ++i)
    for (std::size_t s = 0; s < cfg.lookback; ++s) inputs[i * cfg.lookback + s] = normalized.values(i, first + s);
  const MkhNet model = restore(run);
  Tape tape(false);
  const BoundParams bound(tape, model.params());
  const ForwardResult result = model.forward(bound, inputs, ForwardOptions::evaluation());

  Sink sink(options.out, out);
  std::ostream& csv = sink.stream();
  if (options.emit == "gates") {
    csv << "gate,node" << column_header("c", cfg.embed_dim) << '\n';
    for (const auto& [name, gate] : result.gates) write_matrix_rows(csv, name + ",", gate.value());
    return;
  }
  const bool alpha = options.emit == "alpha";
  const std::vector<Var>& maps = alpha ? result.alpha : result.beta;
  csv << "layer,head," << (alpha ? "hyperedge" : "node") << column_header(alpha ? "n" : "e", alpha ? cfg.num_nodes : cfg.hyperedges)
      << '\n';
  for (std::size_t k = 0; k < maps.size(); ++k) {
    const std::string prefix =
        std::to_string(k / cfg.hgat_heads) + "," + std::to_string(k % cfg.hgat_heads) + ",";
    write_matrix_rows(csv, prefix, maps[k].value());
  }
}

void cmd_make_synth(const SynthOptions& options) {
  Rng rng(options.seed);
  const ExplicitGraph graph = random_sensor_graph(options.nodes, options.chord_prob, rng);
  SyntheticSpec spec;
  spec.num_steps = options.steps;
  spec.noise_std = options.noise_std;
  const MtsDataset ds = make_synthetic(graph, spec, rng);
  save_csv(ds, options.out_data);
  save_edge_list(graph, options.out_graph);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hypergraph spatio-temporal forecasting: train, evaluate, forecast and inspect models"};
  app.require_subcommand(1);

  TrainOptions train_opts;
  std::string train_data, train_graph, train_config, train_out;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  train_cmd->add_option("--data", train_data, "Time-series CSV")->required();
  train_cmd->add_option("--graph", train_graph, "Edge list")->required();
  train_cmd->add_option("--config", train_config, "key = value run config");
  train_cmd->add_option("--out", train_out, "Output directory")->required();
  train_cmd->add_option("--seed", train_opts.seed, "Run seed");
  train_cmd->add_option("--loss", train_opts.loss, "mae or nll")->check(CLI::IsMember({"mae", "nll"}));
  train_cmd->add_option("--missing", train_opts.missing, "none, point or block")
      ->check(CLI::IsMember({"none", "point", "block"}));
  train_cmd->add_option("--missing-ratio", train_opts.missing_ratio, "Target masked fraction")
      ->check(CLI::Range(0.0, 1.0));

  EvalOptions eval_opts;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on one split");
  eval_cmd->add_option("--checkpoint", eval_opts.checkpoint)->required();
  eval_cmd->add_option("--data", eval_opts.data)->required();
  eval_cmd->add_option("--graph", eval_opts.graph)->required();
  eval_cmd->add_option("--split", eval_opts.split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", eval_out, "Per-horizon metrics CSV");

  ForecastOptions forecast_opts;
  std::string forecast_out;
  auto* forecast_cmd = app.add_subcommand("forecast", "Forecast past the end of the data");
  forecast_cmd->add_option("--checkpoint", forecast_opts.checkpoint)->required();
  forecast_cmd->add_option("--data", forecast_opts.data)->required();
  forecast_cmd->add_option("--graph", forecast_opts.graph)->required();
  forecast_cmd->add_flag("--with-uncertainty", forecast_opts.with_uncertainty, "Add sigma columns");
  forecast_cmd->add_option("--out", forecast_out, "CSV path (default stdout)");

  InspectOptions inspect_opts;
  std::string inspect_data, inspect_graph, inspect_out;
  auto* inspect_cmd = app.add_subcommand("inspect", "Export learned structure or attention as CSV");
  inspect_cmd->add_option("--checkpoint", inspect_opts.checkpoint)->required();
  inspect_cmd->add_option("--emit", inspect_opts.emit)->check(CLI::IsMember({"incidence", "alpha", "beta", "gates"}));
  inspect_cmd->add_option("--data", inspect_data);
  inspect_cmd->add_option("--graph", inspect_graph);
  inspect_cmd->add_option("--out", inspect_out, "CSV path (default stdout)");

  SynthOptions synth_opts;
  std::string synth_data, synth_graph;
  auto* synth_cmd = app.add_subcommand("make-synth", "Write a synthetic diffusion dataset and its graph");
  synth_cmd->add_option("--nodes", synth_opts.nodes)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--steps", synth_opts.steps)->check(CLI::PositiveNumber);
  synth_cmd->add_option("--out-data", synth_data)->required();
  synth_cmd->add_option("--out-graph", synth_graph)->required();
  synth_cmd->add_option("--seed", synth_opts.seed);
  synth_cmd->add_option("--chord-prob", synth_opts.chord_prob)->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--noise", synth_opts.noise_std)->check(CLI::NonNegativeNumber);

  std::vector<std::string> argv_storage{"mkhnet"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_storage) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const auto optional_path = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
  };
  try {
    if (*train_cmd) {
      train_opts.data = train_data;
      train_opts.graph = train_graph;
      train_opts.config = optional_path(train_config);
      train_opts.out = train_out;
      cmd_train(train_opts, out);
    } else if (*eval_cmd) {
      eval_opts.out = optional_path(eval_out);
      cmd_eval(eval_opts, out);
    } else if (*forecast_cmd) {
      forecast_opts.out = optional_path(forecast_out);
      cmd_forecast(forecast_opts, out);
    } else if (*inspect_cmd) {
      inspect_opts.data = optional_path(inspect_data);
      inspect_opts.graph = optional_path(inspect_graph);
      inspect_opts.out = optional_path(inspect_out);
      cmd_inspect(inspect_opts, out);
    } else if (*synth_cmd) {
      synth_opts.out_data = synth_data;
      synth_opts.out_graph = synth_graph;
      cmd_make_synth(synth_opts);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace mkh
