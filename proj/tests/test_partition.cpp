// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "pairsel/partition.hpp"

using namespace pairsel;

namespace {

WeightedGraph from_dense(const std::vector<oracle::Vec>& w) {
  WeightedGraph g(w.size());
  for (std::uint32_t a = 0; a < w.size(); ++a) {
    for (std::uint32_t b = a + 1; b < w.size(); ++b) {
      if (w[a][b] > 0) g.add_edge(a, b, w[a][b]);
    }
  }
  return g;
}

std::vector<oracle::Vec> two_cliques(std::size_t half, double inside, double bridge) {
  const std::size_t n = 2 * half;
  std::vector<oracle::Vec> w(n, oracle::Vec(n, 0.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && (a < half) == (b < half)) w[a][b] = inside;
    }
  }
  w[half - 1][half] = w[half][half - 1] = bridge;
  return w;
}

double side_ncut(const std::vector<oracle::Vec>& w, const Bisection& b) {
  std::uint32_t mask = 0;
  const bool zero_in_a = b.a.front() == 0;
  for (std::uint32_t v : zero_in_a ? b.b : b.a) mask |= 1u << v;
  return oracle::ncut_of(w, mask);
}

}  // namespace

TEST_CASE("bridged cliques split at the bridge") {
  const auto w = two_cliques(6, 1.0, 0.1);
  const WeightedGraph g = from_dense(w);
  const Bisection b = normalized_cut_bisect(g, 1);
  CHECK(b.spectral);
  CHECK(b.a.size() == 6);
  CHECK(b.b.size() == 6);
  CHECK(b.cut == doctest::Approx(0.1));
  const oracle::NcutMin best = oracle::ncut_exhaustive(w);
  CHECK(b.ncut == doctest::Approx(best.value).epsilon(1e-9));
  CHECK(side_ncut(w, b) == doctest::Approx(b.ncut).epsilon(1e-9));
}

TEST_CASE("spectral split is near the exhaustive optimum on small random graphs") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 12;
    std::vector<oracle::Vec> w(n, oracle::Vec(n, 0.0));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const bool same = (a < n / 2) == (b < n / 2);
        w[a][b] = w[b][a] = same ? 0.5 + u(rng) : 0.05 * u(rng);
      }
    }
    const Bisection b = normalized_cut_bisect(from_dense(w), trial);
    const double best = oracle::ncut_exhaustive(w).value;
    CHECK(b.ncut >= best - 1e-12);
    CHECK(b.ncut <= best * 1.1 + 1e-12);
  }
}

TEST_CASE("small and degenerate graphs") {
  std::vector<oracle::Vec> k4(4, oracle::Vec(4, 1.0));
  for (int i = 0; i < 4; ++i) k4[i][i] = 0.0;
  const Bisection b = normalized_cut_bisect(from_dense(k4), 3);
  CHECK(b.ncut == doctest::Approx(4.0 / 3.0));
  CHECK(b.ncut == doctest::Approx(oracle::ncut_exhaustive(k4).value));

  WeightedGraph two(2);
  two.add_edge(0, 1, 2.0);
  const Bisection t = normalized_cut_bisect(two, 0);
  CHECK(t.a == std::vector<std::uint32_t>{0});
  CHECK(t.b == std::vector<std::uint32_t>{1});
  CHECK(t.ncut == doctest::Approx(2.0));

  try {
    normalized_cut_bisect(WeightedGraph(1), 0);
    FAIL("expected TooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooSmall);
  }
  WeightedGraph split(4);
  split.add_edge(0, 1, 1);
  split.add_edge(2, 3, 1);
  try {
    normalized_cut_bisect(split, 0);
    FAIL("expected Disconnected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::Disconnected);
  }
  const auto comps = connected_components(split);
  REQUIRE(comps.size() == 2);
  CHECK(comps[1] == std::vector<std::uint32_t>{2, 3});
}

TEST_CASE("Fiedler vector satisfies the eigen equation") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  const std::uint32_t n = 80;
  WeightedGraph g(n);
  for (std::uint32_t v = 0; v + 1 < n; ++v) g.add_edge(v, v + 1, u(rng));
  for (int e = 0; e < 200; ++e) {
    const std::uint32_t a = rng() % n, b = rng() % n;
    if (a != b) g.add_edge(a, b, u(rng));
  }
  const FiedlerVector f = fiedler_vector(g, 5);
  CHECK(f.converged);
  CHECK(f.residual <= 1e-8);
  double norm = 0, dot = 0, res = 0;
  for (std::uint32_t v = 0; v < n; ++v) {
    norm += f.v[v] * f.v[v];
    dot += f.v[v] * std::sqrt(g.degree(v));
    double lv = f.v[v];
    for (const auto& [nb, w] : g.adj[v]) lv -= w * f.v[nb] / std::sqrt(g.degree(v) * g.degree(nb));
    res += (lv - f.lambda * f.v[v]) * (lv - f.lambda * f.v[v]);
  }
  CHECK(norm == doctest::Approx(1.0));
  CHECK(std::abs(dot) < 1e-8);
  CHECK(std::sqrt(res) < 1e-7);
  CHECK(f.lambda > 0.0);
}

TEST_CASE("partition respects the size cap and keeps communities whole") {
  const std::size_t communities = 3, size = 40;
  const std::uint32_t n = communities * size;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 1.0);
  WeightedGraph g(n);
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = a + 1; b < n; ++b) {
      if (a / size == b / size && (rng() % 4 == 0 || b == a + 1)) g.add_edge(a, b, u(rng));
    }
  }
  for (std::uint32_t c = 0; c + 1 < communities; ++c) g.add_edge(c * size + 3, (c + 1) * size + 5, 0.01);

  const PartitionResult p = partition_graph(g, 50, 1);
  CHECK(p.cluster_count == 3);
  for (std::uint32_t v = 0; v < n; ++v) CHECK(p.cluster[v] == v / size);
  CHECK(p.cut_cost == doctest::Approx(0.02));

  const PartitionResult whole = partition_graph(g, 500, 1);
  CHECK(whole.cluster_count == 1);
  CHECK(whole.cut_cost == 0.0);

  const PartitionResult tiny = partition_graph(g, 7, 1);
  for (std::size_t s : tiny.sizes) CHECK(s <= 7);
  std::size_t total = 0;
  for (std::size_t s : tiny.sizes) total += s;
  CHECK(total == n);
  std::uint32_t prev_first = 0;
  for (std::uint32_t c = 0; c < tiny.cluster_count; ++c) {
    std::uint32_t first = n;
    for (std::uint32_t v = 0; v < n; ++v) {
      if (tiny.cluster[v] == c) {
        first = v;
        break;
      }
    }
    if (c > 0) CHECK(first > prev_first);
    prev_first = first;
  }
}

TEST_CASE("components become separate clusters without bisection") {
  WeightedGraph g(6);
  g.add_edge(0, 1, 1);
  g.add_edge(1, 2, 1);
  g.add_edge(3, 4, 1);
  const PartitionResult p = partition_graph(g, 10, 0);
  CHECK(p.cluster_count == 3);
  CHECK(p.cluster == std::vector<std::uint32_t>{0, 0, 0, 1, 1, 2});
  CHECK(p.splits.empty());
  CHECK(p.cluster_of(4) == 1);
}

TEST_CASE("view graph partition uses image ids") {
  ViewGraph vg;
  for (std::uint64_t id : {5, 9, 12, 40}) vg.vertices.push_back({id, 100, 100});
  vg.edges = {{5, 9, 0.9, 20, 1, 0.8}, {9, 12, 0.05, 20, 1, 0.0}, {12, 40, 0.9, 20, 1, 0.8}};
  const PartitionResult p = partition_view_graph(vg, 2, 3);
  CHECK(p.image_ids == std::vector<std::uint64_t>{5, 9, 12, 40});
  CHECK(p.cluster == std::vector<std::uint32_t>{0, 0, 1, 1});
  CHECK(p.cut_cost == doctest::Approx(0.05));
  CHECK(p.cluster_of(40) == 1);
}
