// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "pairsel/codebook.hpp"
#include "pairsel/kernels.hpp"
#include "test_util.hpp"

using namespace pairsel;

namespace {

Matrix from_rows(const std::vector<std::vector<float>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row_ptr(r));
  return m;
}

Matrix random_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  Matrix m(n, d);
  for (float& v : m.data) v = g(rng);
  return m;
}

}  // namespace

TEST_CASE("sampling picks ceil(p n) images and their largest features") {
  std::mt19937_64 rng(1);
  std::vector<DescriptorSet> sets;
  for (std::uint64_t i = 0; i < 10; ++i) sets.push_back(testutil::random_set(i, 30 + i, rng));
  const TrainingSample s = sample_training_descriptors(sets, {0.2, 1500, 4});
  CHECK(s.images.size() == 2);
  std::size_t expected_rows = 0;
  for (std::uint64_t id : s.images) expected_rows += sets[id].features.size();
  CHECK(s.descriptors.rows == expected_rows);

  const TrainingSample all = sample_training_descriptors(sets, {1.0, 100000, 4});
  CHECK(all.images.size() == 10);
  std::size_t total = 0;
  for (const auto& set : sets) total += set.features.size();
  CHECK(all.descriptors.rows == total);

  const TrainingSample few = sample_training_descriptors(sets, {1.0, 5, 4});
  CHECK(few.descriptors.rows == 50);

  const TrainingSample again = sample_training_descriptors(sets, {0.2, 1500, 4});
  CHECK(again.images == s.images);
  CHECK(again.descriptors == s.descriptors);

  CHECK_THROWS_AS(sample_training_descriptors(std::span<const DescriptorSet>{}, {}), Error);
  CHECK_THROWS_AS(sample_training_descriptors(sets, {0.0, 10, 1}), Error);
}

TEST_CASE("k equal to the point count reproduces the points") {
  const Matrix pts = from_rows({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
  KMeansConfig cfg;
  cfg.k = 4;
  const Codebook cb = train_codebook(pts, cfg);
  CHECK(cb.inertia == 0.0);
  std::set<std::pair<float, float>> centers, points;
  for (std::size_t r = 0; r < 4; ++r) {
    centers.emplace(cb.centers.row(r)[0], cb.centers.row(r)[1]);
    points.emplace(pts.row(r)[0], pts.row(r)[1]);
  }
  CHECK(centers == points);
}

TEST_CASE("three separated blobs are recovered") {
  const std::vector<std::vector<double>> truth = {{0, 0, 0}, {1, 0, 0}, {0.5, 0.8660254, 0}};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.01);
  Matrix pts(300, 3);
  std::vector<std::vector<double>> sums(3, std::vector<double>(3, 0.0));
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      pts.row_ptr(i)[c] = static_cast<float>(truth[i % 3][c] + g(rng));
      sums[i % 3][c] += pts.row_ptr(i)[c];
    }
  }
  KMeansConfig cfg;
  cfg.k = 3;
  cfg.seed = 8;
  const Codebook cb = train_codebook(pts, cfg);
  for (const auto& s : sums) {
    std::vector<double> mean = s;
    for (double& v : mean) v /= 100.0;
    double best = 1e9;
    for (std::size_t r = 0; r < 3; ++r) {
      double d = 0;
      for (std::size_t c = 0; c < 3; ++c) d += (cb.centers.row(r)[c] - mean[c]) * (cb.centers.row(r)[c] - mean[c]);
      best = std::min(best, std::sqrt(d));
    }
    CHECK(best < 0.05);
  }
}

TEST_CASE("training errors") {
  const Matrix pts = from_rows({{0, 0}, {1, 1}});
  KMeansConfig cfg;
  cfg.k = 3;
  try {
    train_codebook(pts, cfg);
    FAIL("expected TooFewDescriptors");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::TooFewDescriptors);
  }
  Matrix nan = pts;
  nan.data[1] = std::numeric_limits<float>::quiet_NaN();
  cfg.k = 1;
  try {
    train_codebook(nan, cfg);
    FAIL("expected NaNInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NaNInput);
  }
}

TEST_CASE("inertia never increases and centers are assignment means") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix pts = random_points(500, 8, seed);
    KMeansConfig cfg;
    cfg.k = 12;
    cfg.seed = seed;
    cfg.tol = 0.0;
    cfg.max_iters = 30;
    const Codebook cb = train_codebook(pts, cfg);
    for (std::size_t i = 1; i < cb.inertia_history.size(); ++i) {
      CHECK(cb.inertia_history[i] <= cb.inertia_history[i - 1] * (1 + 1e-6));
    }
    // With tol 0 the loop ends on unchanged labels, so one more pass is a fixed point.
    if (cb.iterations < cfg.max_iters) {
      std::vector<std::vector<double>> sum(cb.k(), std::vector<double>(8, 0.0));
      std::vector<std::size_t> count(cb.k(), 0);
      for (std::size_t r = 0; r < pts.rows; ++r) {
        const std::uint32_t c = nearest_center(cb, pts.row(r));
        ++count[c];
        for (std::size_t j = 0; j < 8; ++j) sum[c][j] += pts.row(r)[j];
      }
      for (std::size_t c = 0; c < cb.k(); ++c) {
        REQUIRE(count[c] > 0);
        for (std::size_t j = 0; j < 8; ++j) {
          CHECK(cb.centers.row(c)[j] == doctest::Approx(sum[c][j] / static_cast<double>(count[c])).epsilon(1e-5));
        }
      }
    }
  }
}

TEST_CASE("serial and parallel training agree bit for bit") {
  const Matrix pts = random_points(3000, 16, 5);
  KMeansConfig cfg;
  cfg.k = 20;
  cfg.seed = 2;
  cfg.exec = Exec::serial;
  const Codebook a = train_codebook(pts, cfg);
  cfg.exec = Exec::parallel;
  const Codebook b = train_codebook(pts, cfg);
  CHECK(a.centers == b.centers);
  CHECK(a.inertia_history == b.inertia_history);
}

TEST_CASE("permuting the input keeps the centers up to order") {
  std::mt19937_64 rng(6);
  std::normal_distribution<float> g(0.0f, 0.02f);
  Matrix pts(400, 4);
  for (std::size_t r = 0; r < pts.rows; ++r) {
    for (std::size_t c = 0; c < 4; ++c) pts.row_ptr(r)[c] = (c == r % 4 ? 1.0f : 0.0f) + g(rng);
  }
  Matrix perm(pts.rows, pts.cols);
  for (std::size_t r = 0; r < pts.rows; ++r) std::copy_n(pts.row_ptr(pts.rows - 1 - r), pts.cols, perm.row_ptr(r));
  KMeansConfig cfg;
  cfg.k = 4;
  cfg.seed = 1;
  const Codebook a = train_codebook(pts, cfg);
  const Codebook b = train_codebook(perm, cfg);
  for (std::size_t r = 0; r < 4; ++r) {
    double best = 1e9;
    for (std::size_t q = 0; q < 4; ++q) best = std::min(best, kernels::squared_l2(a.centers.row(r), b.centers.row(q)));
    CHECK(best < 1e-10);
  }
}

TEST_CASE("nearest center matches an exhaustive scan") {
  const Matrix centers = random_points(256, 128, 12);
  Codebook cb;
  cb.centers = centers;
  std::vector<oracle::Vec> oc;
  for (std::size_t r = 0; r < centers.rows; ++r) oc.emplace_back(centers.row(r).begin(), centers.row(r).end());
  const Matrix queries = random_points(200, 128, 13);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    const oracle::Vec v(queries.row(q).begin(), queries.row(q).end());
    CHECK(nearest_center(cb, queries.row(q)) == oracle::nearest(oc, v));
  }
  CHECK(nearest_center(cb, centers.row(2)) == 2);

  Codebook tie;
  tie.centers = from_rows({{0, 0}, {2, 0}});
  const std::vector<float> mid = {1, 0};
  CHECK(nearest_center(tie, mid) == 0);
  const std::vector<float> wrong = {1, 0, 0};
  CHECK_THROWS_AS(nearest_center(tie, wrong), Error);
}

TEST_CASE("codebook persistence") {
  testutil::TempDir dir("cb");
  KMeansConfig cfg;
  cfg.k = 4;
  const Codebook cb = train_codebook(random_points(50, 128, 4), cfg);
  save_codebook(cb, dir / "c.uvc");
  CHECK(std::filesystem::exists(dir / "c.uvc.meta"));
  const Codebook back = load_codebook(dir / "c.uvc");
  CHECK(back.centers == cb.centers);
  CHECK(back.iterations == cb.iterations);
  CHECK(back.training_size == cb.training_size);
}
