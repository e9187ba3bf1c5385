// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pairsel/view_graph.hpp"
#include "test_util.hpp"

using namespace pairsel;

TEST_CASE("convex hull cases") {
  const ConvexHull sq = convex_hull({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.5, 0.5}, {0.5, 0}});
  CHECK(sq.area == doctest::Approx(1.0));
  CHECK(sq.vertices.size() == 4);
  CHECK(polygon_area(sq.vertices) == doctest::Approx(1.0));

  CHECK(convex_hull({}).area == 0.0);
  CHECK(convex_hull({{1, 1}}).area == 0.0);
  CHECK(convex_hull({{0, 0}, {3, 3}}).area == 0.0);
  CHECK(convex_hull({{0, 0}, {1, 1}, {2, 2}, {3, 3}}).area == 0.0);
  CHECK(convex_hull({{2, 2}, {2, 2}, {2, 2}}).area == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 100);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> pts;
    std::vector<oracle::P2> opts;
    for (int i = 0; i < 40; ++i) {
      const Point2 p{u(rng), u(rng)};
      pts.push_back(p);
      opts.push_back({p.x, p.y});
    }
    CHECK(convex_hull(pts).area == doctest::Approx(oracle::hull_area_brute(opts)).epsilon(1e-12));
  }
}

TEST_CASE("edge weight hand cases") {
  const ImageDims a{1, 100, 100}, b{2, 100, 100};
  const EdgeWeights e = edge_weight(100, 100, 5000, 5000, a, b);
  CHECK(e.w_inlier == doctest::Approx(1.0));
  CHECK(e.w_overlap == doctest::Approx(0.5));
  CHECK(e.w == doctest::Approx(0.75));

  const EdgeWeights h = edge_weight(10, 100, 10000, 10000, a, b, 0.25);
  CHECK(h.w_inlier == doctest::Approx(0.5));
  CHECK(h.w_overlap == doctest::Approx(1.0));
  CHECK(h.w == doctest::Approx(0.25 * 0.5 + 0.75));

  CHECK(edge_weight(16, 16, 0, 0, a, b).w_overlap == 0.0);
  CHECK(edge_weight(16, 16, 0, 0, a, b, 1.0).w == doctest::Approx(1.0));
  CHECK(edge_weight(16, 400, 200, 200, a, b, 0.0).w == doctest::Approx(0.02));

  CHECK_THROWS_AS(edge_weight(10, 100, 1, 1, ImageDims{1, 0, 100}, b), Error);
  CHECK_THROWS_AS(edge_weight(1, 100, 1, 1, a, b), Error);
  CHECK_THROWS_AS(edge_weight(200, 100, 1, 1, a, b), Error);
}

TEST_CASE("edge weights are bounded and monotone") {
  const ImageDims a{1, 640, 480}, b{2, 640, 480};
  const double area = 640.0 * 480.0;
  double prev = -1;
  for (std::size_t n = 16; n <= 1000; n += 7) {
    const EdgeWeights e = edge_weight(n, 1000, 0.3 * area, 0.3 * area, a, b);
    CHECK(e.w > prev);
    CHECK(e.w >= 0.0);
    CHECK(e.w <= 1.0);
    prev = e.w;
  }
  prev = -1;
  for (double f = 0.0; f <= 1.0; f += 0.05) {
    const EdgeWeights e = edge_weight(50, 1000, f * area, f * area, a, b);
    CHECK(e.w > prev);
    CHECK(e.w <= 1.0 + 1e-12);
    prev = e.w;
  }
}

TEST_CASE("graph construction, isolated vertices and persistence") {
  std::mt19937_64 rng(2);
  std::vector<DescriptorSet> sets;
  for (std::uint64_t i = 0; i < 4; ++i) sets.push_back(testutil::random_set(i * 10, 60, rng));

  auto pair = [&](std::uint64_t i, std::uint64_t j, std::size_t n) {
    VerifiedPair p;
    p.i = i;
    p.j = j;
    for (std::uint32_t k = 0; k < n; ++k) p.inliers.push_back({k, k, 0.0f});
    return p;
  };
  const std::vector<VerifiedPair> pairs = {pair(0, 10, 40), pair(10, 20, 20)};
  const ViewGraph g = build_view_graph(pairs, sets, 0.5, Exec::serial);
  CHECK(g.vertices.size() == 4);
  CHECK(g.n_max_inlier == 40);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0].w_inlier == doctest::Approx(1.0));
  CHECK(g.edges[1].w_inlier == doctest::Approx(std::log(20.0) / std::log(40.0)));
  CHECK(g.isolated() == std::vector<std::uint64_t>{30});

  // Overlap term matches the hull of the inlier keypoints.
  std::vector<Point2> pa, pb;
  for (std::uint32_t k = 0; k < 40; ++k) {
    pa.push_back({sets[0].features[k].x, sets[0].features[k].y});
    pb.push_back({sets[1].features[k].x, sets[1].features[k].y});
  }
  const double expect = (convex_hull(pa).area + convex_hull(pb).area) / (2 * 640.0 * 480.0);
  CHECK(g.edges[0].w_overlap == doctest::Approx(expect));

  const ViewGraph par = build_view_graph(pairs, sets, 0.5, Exec::parallel);
  CHECK(par.edges[1].w == g.edges[1].w);

  testutil::TempDir dir("vg");
  write_view_graph(g, dir / "g.txt");
  const ViewGraph back = read_view_graph(dir / "g.txt");
  CHECK(back.vertices == g.vertices);
  REQUIRE(back.edges.size() == 2);
  CHECK(back.edges[1].w == doctest::Approx(g.edges[1].w).epsilon(1e-12));
  CHECK(back.n_max_inlier == 40);
  CHECK(back.isolated() == g.isolated());

  const ViewGraph none = build_view_graph(std::span<const VerifiedPair>{}, sets);
  CHECK(none.edges.empty());
  CHECK(none.isolated().size() == 4);
}
