// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pairsel/retrieval.hpp"
#include "test_util.hpp"

using namespace pairsel;

namespace {

SimilarityList from_scores(const std::vector<double>& s) {
  SimilarityList l;
  for (std::size_t i = 0; i < s.size(); ++i) l.candidates.push_back({i + 1, static_cast<double>(i), s[i]});
  return l;
}

}  // namespace

TEST_CASE("inverse linear normalization") {
  const std::vector<Neighbor> n = {{1, 2.0}, {2, 4.0}, {3, 6.0}};
  const SimilarityList l = normalize_similarities(0, n);
  REQUIRE(l.candidates.size() == 3);
  CHECK(l.candidates[0].similarity == 1.0);
  CHECK(l.candidates[1].similarity == 0.5);
  CHECK(l.candidates[2].similarity == 0.0);
  CHECK_FALSE(l.degenerate);

  const std::vector<Neighbor> same = {{1, 3.0}, {2, 3.0}};
  const SimilarityList d = normalize_similarities(0, same);
  CHECK(d.degenerate);
  CHECK(d.candidates[0].similarity == 1.0);
  CHECK(d.candidates[1].similarity == 1.0);

  try {
    normalize_similarities(0, std::vector<Neighbor>{});
    FAIL("expected EmptyList");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyList);
  }

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  std::vector<Neighbor> many;
  for (std::uint64_t i = 0; i < 300; ++i) many.push_back({i, u(rng)});
  std::sort(many.begin(), many.end(), [](const Neighbor& a, const Neighbor& b) { return a.distance < b.distance; });
  const SimilarityList r = normalize_similarities(0, many);
  const double lo = many.front().distance, hi = many.back().distance;
  for (std::size_t i = 0; i < 300; ++i) {
    CHECK(r.candidates[i].similarity == doctest::Approx((hi - many[i].distance) / (hi - lo)));
    if (i > 0) CHECK(r.candidates[i].similarity <= r.candidates[i - 1].similarity);
  }
  CHECK(r.candidates.front().similarity == 1.0);
  CHECK(r.candidates.back().similarity == 0.0);
}

TEST_CASE("power-law fit recovers exact curves") {
  std::vector<double> y, x;
  for (int i = 1; i <= 300; ++i) {
    x.push_back(i);
    y.push_back(2.0 * std::pow(i, -0.7));
  }
  const PowerFit f = fit_power_curve(from_scores(y), 300);
  CHECK(std::abs(f.a - 2.0) < 1e-6);
  CHECK(std::abs(f.b + 0.7) < 1e-6);
  CHECK(f.residual < 1e-9);
  const auto [oa, ob] = oracle::loglog_fit(x, y);
  CHECK(std::abs(f.a - oa) < 1e-9);
  CHECK(std::abs(f.b - ob) < 1e-9);

  double mean = 0, sq = 0;
  for (double v : y) mean += v / 300;
  for (double v : y) sq += (v - mean) * (v - mean) / 300;
  CHECK(f.mu == doctest::Approx(mean));
  CHECK(f.delta == doctest::Approx(std::sqrt(sq)));

  std::vector<double> inv;
  for (int i = 1; i <= 50; ++i) inv.push_back(1.0 / i);
  const PowerFit g = fit_power_curve(from_scores(inv), 300);
  CHECK(std::abs(g.a - 1.0) < 1e-9);
  CHECK(std::abs(g.b + 1.0) < 1e-9);
  CHECK(g.samples == 50);
}

TEST_CASE("fit errors") {
  try {
    fit_power_curve(from_scores(std::vector<double>(20, 0.3)), 300);
    FAIL("expected DegenerateScores");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateScores);
  }
  std::vector<double> short_list = {1.0, 0.5, 0.4, 0.3, 0.2, 0.0, 0.0, 0.0, 0.0, 0.0};
  try {
    fit_power_curve(from_scores(short_list), 300);
    FAIL("expected InsufficientSamples");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InsufficientSamples);
  }
}

TEST_CASE("selection on a head and floor profile") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> jitter(-0.002, 0.002);
  std::vector<double> s;
  for (int i = 1; i <= 20; ++i) s.push_back(std::pow(i, -0.5));
  for (int i = 0; i < 280; ++i) s.push_back(0.02 + jitter(rng));
  const SimilarityList l = from_scores(s);
  const PowerFit f = fit_power_curve(l, 300);
  const std::size_t n = select_count(l, f, {});
  CHECK(n >= 16);
  CHECK(n <= 24);
  const auto chosen = select_pairs(l, f, {});
  REQUIRE(chosen.size() == n);
  for (std::size_t i = 0; i < n; ++i) CHECK(chosen[i].image_id == l.candidates[i].image_id);

  CHECK(select_count(l, f, {1e6, 5, 300}) == 5);
  CHECK(select_count(l, f, {-1e6, 5, 300}) == 300);
  CHECK(select_count(l, f, {-1e6, 5, 100}) == 100);
}

TEST_CASE("retrieval merges both directions and drops self hits") {
  const std::vector<std::uint64_t> ids = {10, 20};
  const NeighborSource two = [&](std::size_t q, std::size_t) {
    return std::vector<Neighbor>{{ids[q], 0.0}, {ids[1 - q], 1.0}};
  };
  const RetrievalResult r = retrieve_pairs(ids, two, {});
  REQUIRE(r.pairs.size() == 1);
  CHECK(r.pairs.pairs[0].i == 10);
  CHECK(r.pairs.pairs[0].j == 20);
  CHECK(r.pairs.pairs[0].sources == std::vector<std::uint64_t>{10, 20});
  CHECK(r.pairs.contains(20, 10));
  CHECK_FALSE(r.pairs.contains(10, 30));

  // Ten images on a line: each query's similarity profile falls steeply.
  std::vector<std::uint64_t> line;
  for (std::uint64_t i = 0; i < 40; ++i) line.push_back(i);
  const NeighborSource on_line = [&](std::size_t q, std::size_t depth) {
    std::vector<Neighbor> out;
    for (std::uint64_t j : line) out.push_back({j, std::abs(static_cast<double>(j) - static_cast<double>(q))});
    std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
      return a.distance < b.distance || (a.distance == b.distance && a.image_id < b.image_id);
    });
    out.resize(std::min(depth, out.size()));
    return out;
  };
  RetrievalConfig cfg;
  cfg.exec = Exec::serial;
  const RetrievalResult a = retrieve_pairs(line, on_line, cfg);
  cfg.exec = Exec::parallel;
  const RetrievalResult b = retrieve_pairs(line, on_line, cfg);
  REQUIRE(a.pairs.size() == b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    CHECK(a.pairs.pairs[i].i < a.pairs.pairs[i].j);
    CHECK(a.pairs.pairs[i].i == b.pairs.pairs[i].i);
    CHECK(a.pairs.pairs[i].j == b.pairs.pairs[i].j);
  }
  for (const QuerySummary& q : a.queries) CHECK(q.selected >= 5);
}

TEST_CASE("pair list round trip") {
  testutil::TempDir dir("ret");
  MatchPairCandidateSet s;
  s.pairs.push_back({1, 2, 0.5, {1}});
  s.pairs.push_back({1, 5, 0.25, {5}});
  write_pairs(s, dir / "p.txt");
  const MatchPairCandidateSet back = read_pairs(dir / "p.txt");
  REQUIRE(back.size() == 2);
  CHECK(back.pairs[1].j == 5);
  CHECK(back.pairs[1].similarity == 0.25);
}
