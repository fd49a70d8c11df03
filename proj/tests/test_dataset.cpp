#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "mkh/dataset.hpp"
#include "mkh/graph.hpp"
#include "test_util.hpp"

using namespace mkh;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("mkh_test_" + name);
  std::ofstream(path) << body;
  return path;
}

MtsDataset random_dataset(std::size_t n, std::size_t steps, Rng& rng) {
  MtsDataset ds;
  ds.values = testing::random_array({n, steps}, rng, 3.0);
  for (double& v : ds.values.values()) v += 10.0;
  ds.mask = Array({n, steps}, 1.0);
  for (std::size_t i = 0; i < n; ++i) ds.variable_names.push_back("v" + std::to_string(i));
  return ds;
}

std::size_t masked_count(const MtsDataset& ds) {
  std::size_t c = 0;
  for (double m : ds.mask.values()) c += m == 0.0;
  return c;
}

}  // namespace

TEST_CASE("load_csv reads values and missing cells") {
  const auto full = load_csv(write_temp("full.csv", "a,b\n1,2\n3,4\n5,6\n"));
  CHECK(full.values.shape() == Shape{2, 3});
  CHECK(full.observed_fraction() == 1.0);
  CHECK(full.values(0, 2) == 5.0);
  CHECK(full.values(1, 0) == 2.0);
  CHECK(full.variable_names == std::vector<std::string>{"a", "b"});

  const auto gap = load_csv(write_temp("gap.csv", "a,b\n1,\n3,4\n"));
  CHECK_FALSE(gap.observed(1, 0));
  CHECK(gap.values(1, 0) == 0.0);
  CHECK(gap.observed(0, 0));
}

TEST_CASE("load_csv rejects malformed files") {
  CHECK_THROWS_AS(load_csv(write_temp("header.csv", "a,b\n")), DataError);
  try {
    load_csv(write_temp("ragged.csv", "a,b\n1,2\n3\n"));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(write_temp("text.csv", "a,b\n1,x\n")), ParseError);
}

TEST_CASE("save_csv round-trips through load_csv") {
  Rng rng(3);
  auto ds = random_dataset(3, 20, rng);
  ds = simulate_point_missing(ds, 0.2, rng);
  const auto path = std::filesystem::temp_directory_path() / "mkh_test_roundtrip.csv";
  save_csv(ds, path);
  const auto back = load_csv(path);
  CHECK(back.values == ds.values);
  CHECK(back.mask == ds.mask);
}

TEST_CASE("chronological split boundaries") {
  auto s = chronological_split(100, {0.6, 0.2, 0.2});
  CHECK(s.train.begin == 0);
  CHECK(s.train.end == 60);
  CHECK(s.validation.end == 80);
  CHECK(s.test.begin == 80);
  CHECK(s.test.end == 100);

  s = chronological_split(100, {0.7, 0.1, 0.2});
  CHECK(s.train.end == 70);
  CHECK(s.validation.end == 80);

  s = chronological_split(10, {1.0, 0.0, 0.0});
  CHECK(s.train.length() == 10);
  CHECK(s.validation.length() == 0);
  CHECK(s.test.length() == 0);

  CHECK_THROWS(chronological_split(10, {0.5, 0.5, 0.5}));
  CHECK_THROWS(chronological_split(10, {-0.5, 1.0, 0.5}));
}

TEST_CASE("normalizer round trip and training statistics") {
  Rng rng(11);
  auto ds = random_dataset(4, 200, rng);
  ds = simulate_point_missing(ds, 0.3, rng);
  const auto split = chronological_split(ds, {0.6, 0.2, 0.2});
  const auto stats = fit_normalizer(ds, split);
  const auto norm = apply_normalizer(ds, stats);

  for (std::size_t i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (std::size_t t = split.train.begin; t < split.train.end; ++t) sum += norm.values(i, t);
    CHECK(std::abs(sum / 120.0) < 1e-9);  // masked entries are 0, so the mean over observed is also 0
  }
  const Array back = invert_normalizer(norm.values, stats);
  for (std::size_t k = 0; k < back.size(); ++k) {
    if (ds.mask[k] != 0.0) CHECK(std::abs(back[k] - ds.values[k]) < 1e-9);
  }
  CHECK(norm.mask == ds.mask);
}

TEST_CASE("normalizer floors the std of a constant variable") {
  MtsDataset ds;
  ds.values = Array({1, 10}, 7.0);
  ds.mask = Array({1, 10}, 1.0);
  const auto stats = fit_normalizer(ds, chronological_split(ds, {1.0, 0.0, 0.0}));
  CHECK(stats.std[0] == kStdFloor);
  const auto norm = apply_normalizer(ds, stats);
  for (double v : norm.values.values()) CHECK(v == 0.0);
}

TEST_CASE("statistics ignore the validation and test ranges") {
  Rng rng(5);
  auto ds = random_dataset(2, 100, rng);
  const auto split = chronological_split(ds, {0.6, 0.2, 0.2});
  const auto before = fit_normalizer(ds, split);
  for (std::size_t t = 60; t < 100; ++t) ds.values(0, t) = 1e6;
  const auto after = fit_normalizer(ds, split);
  CHECK(before.mean == after.mean);
  CHECK(before.std == after.std);
}

TEST_CASE("window counts") {
  CHECK(window_count(100, 12, 12) == 77);
  CHECK(window_count(24, 12, 12) == 1);
  CHECK(window_count(23, 12, 12) == 0);
  CHECK(window_count(0, 12, 12) == 0);
  CHECK_THROWS(window_count(10, 0, 1));
}

TEST_CASE("windows stay inside their segment and batch chronologically") {
  Rng rng(2);
  const auto ds = random_dataset(3, 100, rng);
  const auto split = chronological_split(ds, {0.6, 0.2, 0.2});
  const auto batches = make_windows(ds, split.validation, 4, 3, 5);
  std::size_t total = 0;
  std::size_t prev = 0;
  for (const auto& b : batches) {
    CHECK(b.inputs.shape() == Shape{b.batch_size(), 3, 4});
    CHECK(b.targets.shape() == Shape{b.batch_size(), 3, 3});
    for (std::size_t w = 0; w < b.batch_size(); ++w) {
      const std::size_t t0 = b.window_start_times[w];
      CHECK(t0 >= split.validation.begin + 4);
      CHECK(t0 + 3 <= split.validation.end);
      CHECK(t0 > prev);
      prev = t0;
      CHECK(b.inputs[(w * 3 + 1) * 4 + 3] == ds.values(1, t0 - 1));
      CHECK(b.targets[(w * 3 + 2) * 3 + 0] == ds.values(2, t0));
    }
    total += b.batch_size();
  }
  CHECK(total == window_count(20, 4, 3));
  CHECK(batches.size() == 3);
}

TEST_CASE("point missingness") {
  Rng rng(9);
  const auto ds = random_dataset(10, 1000, rng);
  CHECK(simulate_point_missing(ds, 0.0, rng).mask == ds.mask);
  const auto all = simulate_point_missing(ds, 1.0, rng);
  CHECK(masked_count(all) == ds.mask.size());
  for (double v : all.values.values()) CHECK(v == 0.0);

  const auto half = simulate_point_missing(ds, 0.5, rng);
  const double sigma = std::sqrt(10000 * 0.25);
  CHECK(std::abs(static_cast<double>(masked_count(half)) - 5000.0) < 4.0 * sigma);
  for (std::size_t k = 0; k < half.mask.size(); ++k) {
    if (half.mask[k] == 0.0) CHECK(half.values[k] == 0.0);
  }

  // Already-missing entries stay missing.
  const auto twice = simulate_point_missing(half, 0.3, rng);
  for (std::size_t k = 0; k < half.mask.size(); ++k) {
    if (half.mask[k] == 0.0) CHECK(twice.mask[k] == 0.0);
  }
}

TEST_CASE("block missingness") {
  Rng rng(4);
  const auto ds = random_dataset(5, 200, rng);
  const auto none = simulate_block_missing(ds, 0.0, 0.0, 12, rng);
  CHECK(none.mask == ds.mask);
  CHECK(none.values == ds.values);

  const auto all = simulate_block_missing(ds, 0.0, 1.0, 12, rng);
  CHECK(masked_count(all) == ds.mask.size());
}

TEST_CASE("block missingness hits the requested ratio on a large grid") {
  MtsDataset ds;
  ds.values = Array({170, 17856}, 1.0);
  ds.mask = Array({170, 17856}, 1.0);
  for (double ratio : {0.1, 0.3, 0.5}) {
    Rng rng(static_cast<std::uint64_t>(ratio * 100));
    const auto out = simulate_block_missing(ds, ratio, 0.0015, 12, rng);
    const double frac = static_cast<double>(masked_count(out)) / static_cast<double>(ds.mask.size());
    CHECK(std::abs(frac - ratio) <= 0.02);
  }
}

TEST_CASE("block missingness produces contiguous runs") {
  MtsDataset ds;
  ds.values = Array({1, 5000}, 1.0);
  ds.mask = Array({1, 5000}, 1.0);
  Rng rng(21);
  const auto out = simulate_block_missing(ds, 0.0, 0.002, 12, rng);
  std::size_t run = 0;
  std::size_t shortest = 1 << 20;
  for (std::size_t t = 0; t < 5000; ++t) {
    if (out.mask(0, t) == 0.0) {
      ++run;
    } else if (run > 0) {
      shortest = std::min(shortest, run);
      run = 0;
    }
  }
  CHECK(masked_count(out) > 0);
  CHECK(shortest >= 6);
}

TEST_CASE("synthetic generator") {
  Rng grng(1);
  const auto graph = random_sensor_graph(8, 0.2, grng);

  SyntheticSpec quiet;
  quiet.num_steps = 50;
  quiet.noise_std = 0.0;
  quiet.seasonal_amplitude = 0.0;
  Rng r0(0);
  const auto zeros = make_synthetic(graph, quiet, r0);
  for (double v : zeros.values.values()) CHECK(v == 0.0);

  SyntheticSpec spec;
  spec.num_steps = 2000;
  Rng a(17), b(17);
  const auto first = make_synthetic(graph, spec, a);
  const auto second = make_synthetic(graph, spec, b);
  CHECK(first.values == second.values);

  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    double mean = 0.0;
    for (std::size_t t = 0; t < spec.num_steps; ++t) mean += first.values(i, t);
    mean /= static_cast<double>(spec.num_steps);
    double num = 0.0, den = 0.0;
    for (std::size_t t = 0; t < spec.num_steps; ++t) {
      const double d = first.values(i, t) - mean;
      den += d * d;
      if (t > 0) num += d * (first.values(i, t - 1) - mean);
    }
    CHECK(num / den > 0.5);
  }
}

TEST_CASE("synthetic recursion matches a direct evaluation") {
  const ExplicitGraph graph(3, {{0, 1}, {1, 2}});
  SyntheticSpec spec;
  spec.num_steps = 3;
  spec.noise_std = 0.0;
  spec.seasonal_amplitude = 0.0;
  spec.initial_state = {1.0, 0.0, 0.0};
  Rng rng(0);
  const auto ds = make_synthetic(graph, spec, rng);
  // Row-normalised neighbours: node 0 sees {1}, node 1 sees {0,2} with 1/2 each, node 2 sees {1}.
  CHECK(ds.values(0, 0) == doctest::Approx(0.5));
  CHECK(ds.values(1, 0) == doctest::Approx(0.2));
  CHECK(ds.values(2, 0) == doctest::Approx(0.0));
  CHECK(ds.values(0, 1) == doctest::Approx(0.5 * 0.5 + 0.4 * 0.2));
  CHECK(ds.values(1, 1) == doctest::Approx(0.5 * 0.2 + 0.4 * 0.25));
  CHECK(ds.values(2, 1) == doctest::Approx(0.4 * 0.2));
}

TEST_CASE("observation noise only touches observed entries") {
  Rng rng(8);
  auto ds = random_dataset(2, 50, rng);
  ds = simulate_point_missing(ds, 0.5, rng);
  const auto noisy = add_observation_noise(ds, 0.5, rng);
  for (std::size_t k = 0; k < ds.values.size(); ++k) {
    if (ds.mask[k] == 0.0) CHECK(noisy.values[k] == 0.0);
    else CHECK(noisy.values[k] != ds.values[k]);
  }
}
