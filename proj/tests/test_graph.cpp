#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "mkh/graph.hpp"
#include "test_util.hpp"

using namespace mkh;

namespace {

std::filesystem::path write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("mkh_test_" + name);
  std::ofstream(path) << body;
  return path;
}

ExplicitGraph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return ExplicitGraph(n, edges);
}

ExplicitGraph random_graph(std::size_t n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) edges.emplace_back(i, j);
  return ExplicitGraph(n, edges);
}

// Largest |eigenvalue| of a symmetric matrix by cyclic Jacobi rotations.
double spectral_radius(Array a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double r = 0.0;
  for (std::size_t i = 0; i < n; ++i) r = std::max(r, std::abs(a(i, i)));
  return r;
}

}  // namespace

TEST_CASE("edge list loading") {
  const auto g = load_edge_list(write_temp("path.txt", "0,1\n1,2\n"), 3);
  CHECK(g.num_edges() == 2);
  const Array adj = g.adjacency();
  double ones = 0.0;
  for (double v : adj.values()) ones += v;
  CHECK(ones == 4.0);

  const auto dup = load_edge_list(write_temp("dup.txt", "0,1\n1,0\n0,1,0.7\n"), 2);
  CHECK(dup.num_edges() == 1);

  CHECK_THROWS_AS(load_edge_list(write_temp("loop.txt", "2,2\n"), 3), GraphError);
  CHECK_THROWS_AS(load_edge_list(write_temp("range.txt", "0,3\n"), 3), GraphError);
  CHECK_THROWS_AS(load_edge_list(write_temp("bad.txt", "0;1\n"), 3), GraphError);
}

TEST_CASE("edge list save and load agree") {
  Rng rng(3);
  const auto g = random_graph(9, 0.4, rng);
  const auto path = std::filesystem::temp_directory_path() / "mkh_test_saved_edges.txt";
  save_edge_list(g, path);
  CHECK(load_edge_list(path, 9).edges() == g.edges());
}

TEST_CASE("adjacency and incidence describe the same edge set") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(8, 0.4, rng);
    if (g.num_edges() == 0) continue;
    const Array a = g.adjacency();
    const Array inc = g.incidence();
    for (std::size_t i = 0; i < 8; ++i) {
      CHECK(a(i, i) == 0.0);
      for (std::size_t j = 0; j < 8; ++j) CHECK(a(i, j) == a(j, i));
    }
    for (std::size_t e = 0; e < g.num_edges(); ++e) {
      double col = 0.0;
      for (std::size_t i = 0; i < 8; ++i) col += inc(i, e);
      CHECK(col == 2.0);
      CHECK(a(g.edges()[e].first, g.edges()[e].second) == 1.0);
    }
    double ones = 0.0;
    for (double v : a.values()) ones += v;
    CHECK(ones == 2.0 * static_cast<double>(g.num_edges()));
  }
}

TEST_CASE("dual hypergraph transform") {
  const ExplicitGraph pair(2, {{0, 1}});
  const Array feats = Array::from_rows({{1.0, 2.0}, {3.0, 6.0}});
  const auto dual = dht_transform(pair, feats);
  CHECK(dual.structure.incidence == Array::from_rows({{1.0, 1.0}}));
  CHECK(dual.structure.num_hypernodes == 1);
  CHECK(dual.structure.num_hyperedges == 2);
  CHECK(dual.hypernode_features == Array::from_rows({{2.0, 4.0}}));
  CHECK(dual.hyperedge_features == feats);

  const ExplicitGraph triangle(3, {{0, 1}, {1, 2}, {0, 2}});
  const auto tri = dht_transform(triangle, Array({3, 2}, 1.0));
  CHECK(tri.structure.incidence.shape() == Shape{3, 3});
  for (std::size_t v = 0; v < 3; ++v) {
    double col = 0.0;
    for (std::size_t e = 0; e < 3; ++e) col += tri.structure.incidence(e, v);
    CHECK(col == 2.0);
  }
  CHECK(tri.structure.incidence.transposed() == triangle.incidence());

  CHECK_THROWS_AS(dht_transform(ExplicitGraph(3, {}), Array({3, 2})), GraphError);
}

TEST_CASE("dual incidence degrees on random graphs") {
  Rng rng(13);
  const auto g = random_sensor_graph(12, 0.2, rng);
  const Array x = testing::random_array({12, 3}, rng);
  const auto dual = dht_transform(g, x);
  const Array& inc = dual.structure.incidence;
  CHECK(inc.shape() == Shape{g.num_edges(), 12});
  for (std::size_t v = 0; v < 12; ++v) {
    double col = 0.0;
    for (std::size_t e = 0; e < g.num_edges(); ++e) col += inc(e, v);
    CHECK(col == static_cast<double>(g.degree(v)));
  }
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    double row = 0.0;
    for (std::size_t v = 0; v < 12; ++v) row += inc(e, v);
    CHECK(row == 2.0);
  }
  CHECK(inc.transposed() == g.incidence());

  // The mean operator reproduces the dual hypernode features.
  const Array op = edge_endpoint_mean(g);
  for (std::size_t e = 0; e < g.num_edges(); ++e)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t v = 0; v < 12; ++v) s += op(e, v) * x(v, c);
      CHECK(s == doctest::Approx(dual.hypernode_features(e, c)).epsilon(1e-14));
    }
}

TEST_CASE("p-hop neighbourhoods") {
  const auto path = path_graph(6);
  CHECK(p_hop_neighborhood(path, {3}, 0) == std::vector<std::size_t>{3});
  CHECK(p_hop_neighborhood(path, {0}, 2) == std::vector<std::size_t>{0, 1, 2});

  const ExplicitGraph star(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}});
  CHECK(p_hop_neighborhood(star, {0}, 1).size() == 5);
}

TEST_CASE("patch extraction on a path") {
  const auto patches = extract_patches(path_graph(6), 3, 1);
  REQUIRE(patches.size() == 3);
  CHECK(patches[0].core_nodes == std::vector<std::size_t>{0, 1});
  CHECK(patches[1].core_nodes == std::vector<std::size_t>{2, 3});
  CHECK(patches[2].core_nodes == std::vector<std::size_t>{4, 5});
  CHECK(patches[0].expanded_nodes == std::vector<std::size_t>{0, 1, 2});
  CHECK(patches[1].expanded_nodes == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK(patches[2].expanded_nodes == std::vector<std::size_t>{3, 4, 5});
  CHECK(patches[1].edge_list.size() == 3);

  const auto whole = extract_patches(path_graph(6), 1, 3);
  CHECK(whole.size() == 1);
  CHECK(whole[0].expanded_nodes.size() == 6);
  CHECK(whole[0].edge_list.size() == 5);

  const auto bare = extract_patches(path_graph(6), 2, 0);
  CHECK(bare[0].expanded_nodes == bare[0].core_nodes);
  CHECK(bare[0].edge_list.size() == 2);

  const auto uneven = extract_patches(path_graph(7), 3, 0);
  CHECK(uneven[2].core_nodes == std::vector<std::size_t>{4, 5, 6});

  CHECK_THROWS_AS(extract_patches(path_graph(3), 4, 1), GraphError);
  CHECK_THROWS_AS(extract_patches(path_graph(3), 0, 1), GraphError);
}

TEST_CASE("patch invariants on random graphs") {
  Rng rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    const auto g = random_graph(15, 0.2, rng);
    const auto patches = extract_patches(g, 4, 2);
    std::set<std::size_t> seen;
    for (const auto& patch : patches) {
      for (std::size_t u : patch.core_nodes) {
        CHECK(seen.insert(u).second);
        CHECK(std::binary_search(patch.expanded_nodes.begin(), patch.expanded_nodes.end(), u));
      }
      std::size_t induced = 0;
      for (const auto& [u, v] : g.edges()) {
        if (patch.local_index.contains(u) && patch.local_index.contains(v)) ++induced;
      }
      CHECK(patch.edge_list.size() == induced);
      for (const auto& [u, v] : patch.edge_list) {
        CHECK(patch.local_index.contains(u));
        CHECK(patch.local_index.contains(v));
      }
      for (std::size_t l = 0; l < patch.expanded_nodes.size(); ++l) {
        CHECK(patch.local_index.at(patch.expanded_nodes[l]) == l);
      }
    }
    CHECK(seen.size() == 15);
  }
}

TEST_CASE("normalized adjacency") {
  CHECK(normalized_adjacency(ExplicitGraph(1, {})) == Array::from_rows({{1.0}}));
  const Array pair = normalized_adjacency(ExplicitGraph(2, {{0, 1}}));
  for (double v : pair.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = random_graph(6, 0.5, rng);
    const Array a = normalized_adjacency(g);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j) {
        CHECK(a(i, j) >= 0.0);
        CHECK(a(i, j) == a(j, i));
      }
    CHECK(spectral_radius(a) <= 1.0 + 1e-12);
  }
}

TEST_CASE("patch adjacency uses local ids") {
  const auto patches = extract_patches(path_graph(6), 3, 1);
  const Array a = normalized_adjacency(patches[1]);  // induced path 1-2-3-4
  const Array expected = normalized_adjacency(path_graph(4));
  CHECK(testing::max_abs_diff(a, expected) == 0.0);
}

TEST_CASE("sensor graph generator is a connected ring plus chords") {
  Rng a(5), b(5);
  const auto g1 = random_sensor_graph(20, 0.1, a);
  const auto g2 = random_sensor_graph(20, 0.1, b);
  CHECK(g1.edges() == g2.edges());
  CHECK(g1.num_edges() >= 20);
  for (std::size_t i = 0; i < 20; ++i) CHECK(g1.has_edge(i, (i + 1) % 20));
  CHECK(p_hop_neighborhood(g1, {0}, 20).size() == 20);
}
