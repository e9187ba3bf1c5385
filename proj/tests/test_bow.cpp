// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>

#include "pairsel/bow.hpp"
#include "test_util.hpp"

using namespace pairsel;

namespace {

Matrix rows(const std::vector<std::vector<float>>& r) {
  Matrix m(r.size(), r[0].size());
  for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), m.row_ptr(i));
  return m;
}

// Dense TF-IDF vectors straight from the definition.
std::vector<std::vector<double>> dense_tfidf(std::size_t words, const std::vector<TermCounts>& counts) {
  const double n = static_cast<double>(counts.size());
  std::vector<double> df(words, 0.0);
  for (const auto& c : counts) {
    for (const auto& [w, k] : c) df[w] += 1;
  }
  std::vector<std::vector<double>> out;
  for (const auto& c : counts) {
    std::vector<double> v(words, 0.0);
    double nd = 0;
    for (const auto& [w, k] : c) nd += k;
    for (const auto& [w, k] : c) v[w] = (k / nd) * std::log(n / df[w]);
    double norm = 0;
    for (double x : v) norm += x * x;
    if (norm > 0) {
      for (double& x : v) x /= std::sqrt(norm);
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("single split recovers two clusters") {
  const Matrix pts = rows({{0, 0}, {0.1f, 0}, {5, 5}, {5.1f, 5}});
  VocabularyConfig cfg;
  cfg.branching = 2;
  cfg.depth = 1;
  const VocabularyTree t = train_vocabulary(pts, cfg);
  CHECK(t.words == 2);
  const float a[2] = {0.05f, 0.0f}, b[2] = {5.05f, 5.0f};
  CHECK(t.quantize(a) != t.quantize(b));
  std::vector<std::vector<float>> centers;
  for (std::size_t r = 0; r < t.centers.rows; ++r) centers.emplace_back(t.centers.row(r).begin(), t.centers.row(r).end());
  std::sort(centers.begin(), centers.end());
  CHECK(centers[0][0] == doctest::Approx(0.05));
  CHECK(centers[1][0] == doctest::Approx(5.05));
}

TEST_CASE("depth zero gives one word and trees respect the branching bound") {
  std::mt19937_64 rng(1);
  std::vector<DescriptorSet> sets;
  for (std::uint64_t i = 0; i < 6; ++i) sets.push_back(testutil::random_set(i, 200, rng));
  Matrix all(0, kDescriptorDim);
  for (const auto& s : sets) {
    const Matrix u = unit_descriptors(s);
    for (std::size_t r = 0; r < u.rows; ++r) all.append_row(u.row(r));
  }
  VocabularyConfig cfg;
  cfg.depth = 0;
  const VocabularyTree flat = train_vocabulary(all, cfg);
  CHECK(flat.words == 1);
  const TermCounts c = quantize_image(flat, sets[0]);
  REQUIRE(c.size() == 1);
  CHECK(c[0].second == 200);

  cfg.depth = 3;
  cfg.branching = 10;
  const VocabularyTree tree = train_vocabulary(all, cfg);
  CHECK(tree.words <= 1000);
  std::size_t leaves = 0;
  for (const VocabularyNode& n : tree.nodes) {
    CHECK(n.child_count <= 10);
    if (n.child_count == 0) {
      CHECK(n.word >= 0);
      ++leaves;
    }
  }
  CHECK(leaves == tree.words);
  for (const auto& s : sets) {
    std::size_t sum = 0;
    for (const auto& [w, k] : quantize_image(tree, s)) {
      CHECK(w < tree.words);
      sum += k;
    }
    CHECK(sum == s.features.size());
  }
  DescriptorSet empty;
  empty.image_width = empty.image_height = 1;
  CHECK(quantize_image(tree, empty).empty());
  CHECK_THROWS_AS(train_vocabulary(rows({{0, 0}}), VocabularyConfig{}), Error);
}

TEST_CASE("TF-IDF hand cases") {
  const std::vector<std::uint64_t> ids = {0, 1};
  const std::vector<TermCounts> counts = {{{0, 3}}, {{1, 2}}};
  const BowDatabase db = build_bow_database(2, ids, counts);
  CHECK(db.idf[0] == doctest::Approx(std::log(2.0)));
  CHECK(db.vectors[0].weights.size() == 1);
  CHECK(db.vectors[0].weights[0].second == doctest::Approx(1.0));

  const std::vector<TermCounts> shared = {{{0, 1}, {1, 2}}, {{0, 4}}};
  const BowDatabase db2 = build_bow_database(2, ids, shared);
  CHECK(db2.idf[0] == 0.0);
  for (const auto& [w, t] : db2.vectors[0].weights) {
    if (w == 0) CHECK(t == 0.0);
  }
  CHECK(db2.vectors[1].degenerate);

  const std::vector<std::uint64_t> one = {5};
  const std::vector<TermCounts> single = {{{0, 2}, {3, 1}}};
  const BowDatabase db3 = build_bow_database(4, one, single);
  CHECK(db3.vectors[0].degenerate);
}

TEST_CASE("inverted-file scores equal dense dot products") {
  std::mt19937_64 rng(5);
  const std::size_t words = 300, images = 200;
  std::vector<TermCounts> counts(images);
  std::vector<std::uint64_t> ids;
  for (std::size_t i = 0; i < images; ++i) {
    ids.push_back(1000 + i);
    std::map<std::uint32_t, std::uint32_t> h;
    std::uniform_int_distribution<std::uint32_t> w(0, words - 1);
    for (int f = 0; f < 40; ++f) ++h[w(rng)];
    counts[i].assign(h.begin(), h.end());
  }
  const BowDatabase db = build_bow_database(words, ids, counts);
  const auto dense = dense_tfidf(words, counts);
  for (std::size_t q = 0; q < images; q += 7) {
    const auto got = bow_query(db, db.vectors[q], images);
    std::map<std::uint64_t, double> score;
    for (const auto& s : got) score[s.image_id] = s.score;
    for (std::size_t i = 0; i < images; ++i) {
      double dot = 0;
      for (std::size_t w = 0; w < words; ++w) dot += dense[q][w] * dense[i][w];
      const double s = score.count(ids[i]) ? score[ids[i]] : 0.0;
      CHECK(std::abs(s - dot) <= 1e-6);
    }
    REQUIRE(!got.empty());
    CHECK(got[0].image_id == ids[q]);
    CHECK(got[0].score == doctest::Approx(1.0));
  }
  for (std::size_t w = 0; w < words; ++w) {
    for (std::size_t p = 1; p < db.postings[w].size(); ++p) {
      CHECK(db.postings[w][p - 1].image_id < db.postings[w][p].image_id);
    }
  }
}

TEST_CASE("disjoint vocabularies do not score and empty databases throw") {
  const std::vector<std::uint64_t> ids = {0, 1, 2};
  const std::vector<TermCounts> counts = {{{0, 1}}, {{1, 1}}, {{2, 1}}};
  const BowDatabase db = build_bow_database(3, ids, counts);
  const auto got = bow_query(db, db.vectors[0], 3);
  REQUIRE(got.size() == 1);
  CHECK(got[0].image_id == 0);

  BowDatabase empty;
  try {
    bow_query(empty, db.vectors[0], 3);
    FAIL("expected EmptyDatabase");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptyDatabase);
  }
}

TEST_CASE("vocabulary and database persistence") {
  testutil::TempDir dir("bow");
  std::mt19937_64 rng(8);
  std::vector<DescriptorSet> sets;
  for (std::uint64_t i = 0; i < 4; ++i) sets.push_back(testutil::random_set(i, 50, rng));
  Matrix all(0, kDescriptorDim);
  for (const auto& s : sets) {
    const Matrix u = unit_descriptors(s);
    for (std::size_t r = 0; r < u.rows; ++r) all.append_row(u.row(r));
  }
  VocabularyConfig cfg;
  cfg.branching = 4;
  cfg.depth = 2;
  const VocabularyTree tree = train_vocabulary(all, cfg);
  save_vocabulary(tree, dir / "t.uvt");
  const VocabularyTree back = load_vocabulary(dir / "t.uvt");
  CHECK(back.words == tree.words);
  CHECK(back.centers == tree.centers);
  for (const auto& s : sets) CHECK(quantize_image(back, s) == quantize_image(tree, s));

  const BowDatabase db = build_bow_database(tree, sets);
  save_bow_database(db, dir / "d.uvb");
  const BowDatabase dback = load_bow_database(dir / "d.uvb");
  CHECK(dback.idf == db.idf);
  CHECK(bow_query(dback, db.vectors[1], 4) == bow_query(db, db.vectors[1], 4));
}
