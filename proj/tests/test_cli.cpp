#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mkh/cli.hpp"
#include "mkh/graph.hpp"
#include "test_util.hpp"

using namespace mkh;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("mkh_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> cells_of(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) cells.push_back(cell);
  return cells;
}

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

const char* kSmallConfig =
    "# small run\n"
    "epochs = 2\n"
    "embed_dim = 4\n"
    "hyperedges = 3\n"
    "patches = 2\n"
    "hops = 1\n"
    "hgat_heads = 2\n"
    "hgt_heads = 2\n"
    "hgt_layers = 1\n"
    "lookback = 6\n"
    "horizon = 3\n"
    "batch_size = 16\n";

/// make-synth data plus a small config inside `dir`.
void write_inputs(const TempDir& dir, const std::string& extra_config = "") {
  REQUIRE(cli({"make-synth", "--nodes", "6", "--steps", "240", "--seed", "4", "--out-data", (dir / "d.csv").string(),
               "--out-graph", (dir / "g.csv").string()})
              .code == 0);
  std::ofstream(dir / "c.txt") << kSmallConfig << extra_config;
}

CliRun train_run(const TempDir& dir, const std::string& out, const std::vector<std::string>& extra = {}) {
  std::vector<std::string> args = {"train",    "--data", (dir / "d.csv").string(), "--graph", (dir / "g.csv").string(),
                                   "--config", (dir / "c.txt").string(), "--out",  (dir / out).string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return cli(args);
}

double value_after(const std::string& text, const std::string& key) {
  for (const auto& line : lines_of(text))
    if (line.rfind(key + " ", 0) == 0) return std::stod(line.substr(key.size() + 1));
  FAIL("missing key " << key);
  return 0.0;
}

}  // namespace

TEST_CASE("run config parsing") {
  const RunConfig defaults = parse_run_config("");
  CHECK(defaults.model.lookback == 12);
  CHECK(defaults.model.horizon == 12);
  CHECK(defaults.train.lr == 1e-3);
  CHECK(defaults.train.epochs == 30);
  CHECK(defaults.split == std::array<double, 3>{0.6, 0.2, 0.2});

  const RunConfig c = parse_run_config("embed_dim = 8   # trailing comment\n\n  split = 0.7, 0.1, 0.2\nloss = nll\n");
  CHECK(c.model.embed_dim == 8);
  CHECK(c.split == std::array<double, 3>{0.7, 0.1, 0.2});
  CHECK(c.model.uncertainty);

  auto error_of = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("epochs = 3\nepohcs = 4\n").find("line 2: unknown key 'epohcs'") != std::string::npos);
  CHECK(error_of("epochs = 3\nepochs = 4\n").find("given twice") != std::string::npos);
  CHECK(error_of("epochs = three\n").find("line 1: epochs") != std::string::npos);
  CHECK(error_of("epochs\n").find("key = value") != std::string::npos);
  CHECK(error_of("split = 0.5,0.5\n").find("three") != std::string::npos);
  CHECK(error_of("split = 0.5,0.6,0.1\n").find("sum to 1") != std::string::npos);
  CHECK(error_of("embed_dim = 6\nhgt_heads = 4\n").find("divisible") != std::string::npos);
  CHECK(error_of("missing = sometimes\n").find("missing") != std::string::npos);
}

TEST_CASE("property: formatted configs parse back to the same config") {
  RunConfig c;
  c.model.num_nodes = 7;
  c.model.embed_dim = 6;
  c.model.hgt_heads = 3;
  c.model.dropout = 0.123456789012345678;
  c.train.lr = 3.3e-4;
  c.train.seed = 18446744073709551615ULL;
  c.train.loss = LossKind::gaussian_nll;
  c.split = {0.7, 0.1, 0.2};
  c.missing = MissingScheme::block;
  c.missing_ratio = 0.3;
  c.sync_heads();
  const std::string text = format_run_config(c);
  const RunConfig back = parse_run_config(text);
  CHECK(format_run_config(back) == text);
  CHECK(back.model.dropout == c.model.dropout);
  CHECK(back.train.seed == c.train.seed);
  CHECK(back.model.uncertainty);
}

TEST_CASE("checkpoint byte layout") {
  Checkpoint cp;
  cp.config.model.num_nodes = 4;
  cp.params.add("w", Array::vector({1.0, -2.5}));
  cp.stats = {{0.5, 1.5}, {2.0, 3.0}};
  cp.seed = 0x0102030405060708ULL;
  const std::string bytes = serialize_checkpoint(cp);
  const std::string config = format_run_config(cp.config);

  CHECK(bytes.substr(0, 4) == "MKHN");
  CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
  std::size_t pos = 8 + 8 + config.size();
  CHECK(bytes.substr(16, config.size()) == config);
  CHECK(bytes.substr(pos, 4) == std::string("\x01\x00\x00\x00", 4));
  pos += 4;
  CHECK(bytes.substr(pos, 5) == std::string("\x01\x00\x00\x00w", 5));
  pos += 5;
  CHECK(bytes.substr(pos, 12) == std::string("\x01\x00\x00\x00\x02\x00\x00\x00\x00\x00\x00\x00", 12));
  pos += 12;
  // 1.0 = 0x3FF0000000000000, stored low byte first.
  CHECK(bytes.substr(pos, 8) == std::string("\x00\x00\x00\x00\x00\x00\xF0\x3F", 8));
  const std::size_t expected_size = pos + 16 + 4 + 32 + 8;
  CHECK(bytes.size() == expected_size);
  CHECK(bytes.substr(bytes.size() - 8) == std::string("\x08\x07\x06\x05\x04\x03\x02\x01", 8));

  CHECK(deserialize_checkpoint(bytes) == cp);
}

TEST_CASE("malformed checkpoints are format errors") {
  Checkpoint cp;
  cp.config.model.num_nodes = 4;
  cp.params.add("w", Array::vector({1.0, -2.5}));
  cp.stats = {{0.5, 1.5}, {2.0, 3.0}};
  const std::string good = serialize_checkpoint(cp);

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_magic), doctest::Contains("magic"), FormatError);
  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(bad_version), doctest::Contains("version 2"), FormatError);
  CHECK_THROWS_WITH_AS(deserialize_checkpoint(good.substr(0, good.size() - 3)), doctest::Contains("truncated"),
                       FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(good + "x"), FormatError);
  CHECK_THROWS_AS(deserialize_checkpoint(""), FormatError);
}

TEST_CASE("make-synth") {
  TempDir dir("synth");
  const std::vector<std::string> args = {"make-synth", "--nodes", "20", "--steps", "2000", "--seed", "9",
                                         "--out-data", (dir / "a.csv").string(), "--out-graph",
                                         (dir / "a_graph.csv").string()};
  REQUIRE(cli(args).code == 0);
  const MtsDataset ds = load_csv(dir / "a.csv");
  CHECK(ds.num_variables() == 20);
  CHECK(ds.num_steps() == 2000);
  const auto lines = lines_of(slurp(dir / "a.csv"));
  CHECK(lines.size() == 2001);
  CHECK(cells_of(lines[1]).size() == 20);
  const ExplicitGraph g = load_edge_list(dir / "a_graph.csv", 20);
  CHECK(g.num_edges() >= 20);

  std::vector<std::string> again = args;
  again[8] = (dir / "b.csv").string();
  again[10] = (dir / "b_graph.csv").string();
  REQUIRE(cli(again).code == 0);
  CHECK(slurp(dir / "a.csv") == slurp(dir / "b.csv"));
  CHECK(slurp(dir / "a_graph.csv") == slurp(dir / "b_graph.csv"));
}

TEST_CASE("train, eval, forecast and inspect") {
  TempDir dir("pipeline");
  write_inputs(dir);
  const CliRun trained = train_run(dir, "run", {"--seed", "3"});
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  CHECK(fs::exists(dir / "run/model.ckpt"));
  CHECK(fs::exists(dir / "run/config.txt"));
  const auto history = lines_of(slurp(dir / "run/history.csv"));
  CHECK(history.size() >= 2);
  CHECK(history[0] == "epoch,train_loss,val_mae,lr");

  SUBCASE("same seed gives the same checkpoint bytes") {
    REQUIRE(train_run(dir, "again", {"--seed", "3"}).code == 0);
    CHECK(slurp(dir / "run/model.ckpt") == slurp(dir / "again/model.ckpt"));
    REQUIRE(train_run(dir, "other", {"--seed", "4"}).code == 0);
    CHECK(slurp(dir / "run/model.ckpt") != slurp(dir / "other/model.ckpt"));
  }

  const std::string ckpt = (dir / "run/model.ckpt").string();
  const std::string data = (dir / "d.csv").string();
  const std::string graph = (dir / "g.csv").string();

  SUBCASE("eval reproduces the logged validation error") {
    const CliRun eval = cli({"eval", "--checkpoint", ckpt, "--data", data, "--graph", graph, "--split", "val"});
    REQUIRE_MESSAGE(eval.code == 0, eval.err);
    CHECK(std::abs(value_after(eval.out, "mae") - value_after(trained.out, "final val mae")) <= 1e-12);
    const auto csv = lines_of(slurp(dir / "run/model_val_metrics.csv"));
    CHECK(csv.size() == 1 + 3 + 1);
  }

  SUBCASE("forecast csv") {
    const CliRun first = cli({"forecast", "--checkpoint", ckpt, "--data", data, "--graph", graph});
    REQUIRE_MESSAGE(first.code == 0, first.err);
    const auto rows = lines_of(first.out);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == "node,t+1,t+2,t+3");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto cells = cells_of(rows[r]);
      REQUIRE(cells.size() == 4);
      for (std::size_t c = 1; c < cells.size(); ++c) CHECK(std::isfinite(std::stod(cells[c])));
    }
    CHECK(cli({"forecast", "--checkpoint", ckpt, "--data", data, "--graph", graph}).out == first.out);

    const CliRun unc = cli({"forecast", "--checkpoint", ckpt, "--data", data, "--graph", graph, "--with-uncertainty"});
    CHECK(unc.code != 0);
    CHECK(unc.err.find("no uncertainty head") != std::string::npos);
  }

  SUBCASE("inspect incidence") {
    const CliRun a = cli({"inspect", "--checkpoint", ckpt, "--emit", "incidence"});
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(cli({"inspect", "--checkpoint", ckpt, "--emit", "incidence"}).out == a.out);
    const auto rows = lines_of(a.out);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == "node,e0,e1,e2");
    const Checkpoint cp = load_checkpoint(ckpt);
    const Array expected = learned_incidence(cp.params, cp.config.model.temperature);
    std::vector<double> column_sums(3);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto cells = cells_of(rows[r]);
      REQUIRE(cells.size() == 4);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = std::stod(cells[c + 1]);
        CHECK((v == 0.0 || v == 1.0));
        column_sums[c] += v;
      }
    }
    for (std::size_t c = 0; c < 3; ++c) {
      double size = 0.0;
      for (std::size_t i = 0; i < 6; ++i) size += expected(i, c);
      CHECK(column_sums[c] == size);
    }
  }

  SUBCASE("inspect attention and gates") {
    const CliRun beta = cli({"inspect", "--checkpoint", ckpt, "--emit", "beta", "--data", data, "--graph", graph});
    REQUIRE_MESSAGE(beta.code == 0, beta.err);
    const auto rows = lines_of(beta.out);
    CHECK(rows[0] == "layer,head,node,e0,e1,e2");
    CHECK(rows.size() == 1 + 2 * 6);
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto cells = cells_of(rows[r]);
      double total = 0.0;
      for (std::size_t c = 3; c < cells.size(); ++c) total += std::stod(cells[c]);
      CHECK((std::abs(total - 1.0) < 1e-9 || total == 0.0));
    }
    const CliRun gates = cli({"inspect", "--checkpoint", ckpt, "--emit", "gates", "--data", data, "--graph", graph});
    REQUIRE(gates.code == 0);
    for (std::size_t r = 1; r < lines_of(gates.out).size(); ++r) {
      const auto cells = cells_of(lines_of(gates.out)[r]);
      for (std::size_t c = 2; c < cells.size(); ++c) {
        const double g = std::stod(cells[c]);
        CHECK((g > 0.0 && g < 1.0));
      }
    }
    CHECK(cli({"inspect", "--checkpoint", ckpt, "--emit", "alpha"}).code != 0);
  }
}

TEST_CASE("uncertainty checkpoints forecast sigma columns") {
  TempDir dir("nll");
  write_inputs(dir);
  REQUIRE(train_run(dir, "run", {"--loss", "nll"}).code == 0);
  const CliRun f = cli({"forecast", "--checkpoint", (dir / "run/model.ckpt").string(), "--data",
                        (dir / "d.csv").string(), "--graph", (dir / "g.csv").string(), "--with-uncertainty"});
  REQUIRE_MESSAGE(f.code == 0, f.err);
  const auto rows = lines_of(f.out);
  REQUIRE(rows.size() == 7);
  CHECK(rows[0] == "node,t+1,t+2,t+3,sigma_t+1,sigma_t+2,sigma_t+3");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto cells = cells_of(rows[r]);
    REQUIRE(cells.size() == 7);
    for (std::size_t c = 4; c < 7; ++c) CHECK(std::stod(cells[c]) > 0.0);
  }
}

TEST_CASE("checkpoint round trip forecasts bitwise identically") {
  TempDir dir("roundtrip");
  write_inputs(dir);
  TrainOptions opts;
  opts.data = dir / "d.csv";
  opts.graph = dir / "g.csv";
  opts.config = dir / "c.txt";
  opts.out = dir / "run";
  std::ostringstream log;
  const TrainOutcome outcome = cmd_train(opts, log);
  const Checkpoint loaded = load_checkpoint(dir / "run/model.ckpt");
  CHECK(loaded == outcome.checkpoint);

  const MtsDataset raw = load_csv(dir / "d.csv");
  const ExplicitGraph graph = load_edge_list(dir / "g.csv", 6);
  const MkhNet in_memory(outcome.checkpoint.config.model, graph, outcome.checkpoint.params);
  const MkhNet restored(loaded.config.model, graph, loaded.params);
  const TrainingData data = prepare_run_data(loaded.config, raw);
  const Prediction a = predict(in_memory, data.normalized, data.split.test);
  const Prediction b = predict(restored, data.normalized, data.split.test);
  CHECK(a.mean == b.mean);
}

TEST_CASE("missingness runs and failures") {
  TempDir dir("missing");
  write_inputs(dir);
  const CliRun point = train_run(dir, "point", {"--missing", "point", "--missing-ratio", "0.3"});
  REQUIRE_MESSAGE(point.code == 0, point.err);
  CHECK(std::abs(value_after(point.out, "observed fraction") - 0.7) < 0.05);
  CHECK(lines_of(slurp(dir / "point/config.txt")).size() > 5);
  CHECK(load_checkpoint(dir / "point/model.ckpt").config.missing == MissingScheme::point);

  std::ofstream(dir / "typo.txt") << "epochs = 2\nlearning_rate = 0.1\n";
  const CliRun typo = cli({"train", "--data", (dir / "d.csv").string(), "--graph", (dir / "g.csv").string(),
                           "--config", (dir / "typo.txt").string(), "--out", (dir / "typo").string()});
  CHECK(typo.code != 0);
  CHECK(typo.err.find("unknown key 'learning_rate'") != std::string::npos);

  const CliRun missing_file = cli({"train", "--data", (dir / "nope.csv").string(), "--graph",
                                   (dir / "g.csv").string(), "--out", (dir / "x").string()});
  CHECK(missing_file.code != 0);
  CHECK_FALSE(missing_file.err.empty());

  std::ofstream(dir / "junk.ckpt") << "JUNKJUNKJUNK";
  const CliRun junk = cli({"eval", "--checkpoint", (dir / "junk.ckpt").string(), "--data",
                           (dir / "d.csv").string(), "--graph", (dir / "g.csv").string()});
  CHECK(junk.code != 0);
  CHECK(junk.err.find("bad magic") != std::string::npos);

  CHECK(cli({}).code != 0);
  CHECK(cli({"train"}).code != 0);
  CHECK(cli({"eval", "--checkpoint", "x", "--data", "y", "--graph", "z", "--split", "dev"}).code != 0);
}
