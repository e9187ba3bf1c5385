// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <fstream>
#include <sstream>

#include "pairsel/pipeline.hpp"
#include "pairsel/synthetic.hpp"
#include "test_util.hpp"

using namespace pairsel;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SyntheticDataset small_strip(std::size_t n) {
  SyntheticConfig s;
  s.n_images = n;
  s.features_per_image = 300;
  s.seed = 3;
  return generate_synthetic_dataset(s);
}

PipelineConfig small_config(const std::filesystem::path& in, const std::filesystem::path& out) {
  PipelineConfig cfg;
  cfg.input_dir = in;
  cfg.output_dir = out;
  cfg.k = 16;
  cfg.image_fraction = 0.5;
  cfg.features_per_image = 300;
  cfg.hnsw.M = 8;
  cfg.hnsw.ef_construction = 40;
  cfg.max_cluster_size = 12;
  return cfg;
}

}  // namespace

TEST_CASE("config round trip and validation") {
  PipelineConfig cfg;
  cfg.k = 64;
  cfg.selection.kappa = 0.7;
  cfg.residual = EpipolarResidual::one_sided;
  cfg.exec = Exec::serial;
  const PipelineConfig back = pipeline_config_from(to_key_values(cfg));
  CHECK(back.k == 64);
  CHECK(back.selection.kappa == 0.7);
  CHECK(back.residual == EpipolarResidual::one_sided);
  CHECK(back.exec == Exec::serial);
  CHECK(to_key_values(back).to_string() == to_key_values(cfg).to_string());

  try {
    pipeline_config_from(KeyValues::parse("kk = 3\n"));
    FAIL("expected InvalidConfig");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::InvalidConfig);
  }
  PipelineConfig bad;
  bad.image_fraction = 1.5;
  CHECK_THROWS_AS(validate(bad), Error);
  bad = {};
  bad.k = 0;
  CHECK_THROWS_AS(validate(bad), Error);
  CHECK(stage_seed(cfg, "codebook") != stage_seed(cfg, "index"));
}

TEST_CASE("pipeline on a short strip") {
  testutil::TempDir dir("pipe");
  const SyntheticDataset data = small_strip(24);
  write_synthetic_dataset(data, dir / "in", false);
  const auto truth = data.truth.pair_set();

  PipelineConfig cfg = small_config(dir / "in", dir / "out");
  const PipelineResult r = run_pipeline(cfg);
  CHECK(r.images == 24);
  CHECK(r.candidate_pairs >= r.verified_pairs);
  for (const auto& path : {r.paths.codebook, r.paths.vlads, r.paths.index, r.paths.pairs, r.paths.verified,
                           r.paths.view_graph, r.paths.partition, r.paths.manifest, r.paths.timings}) {
    CHECK(std::filesystem::exists(path));
  }

  const auto verified = load_verified_pairs(r.paths.verified);
  std::set<std::pair<std::uint64_t, std::uint64_t>> got;
  for (const auto& p : verified) got.emplace(p.i, p.j);
  const auto [precision, recall] = precision_recall(got, truth);
  CHECK(precision >= 0.95);
  CHECK(recall >= 0.9);

  const std::string partition = slurp(r.paths.partition);
  std::istringstream lines(partition);
  std::map<std::uint32_t, std::size_t> sizes;
  std::uint64_t id = 0;
  std::uint32_t c = 0;
  while (lines >> id >> c) ++sizes[c];
  for (const auto& [cluster, n] : sizes) CHECK(n <= 12);

  cfg.output_dir = dir / "again";
  cfg.exec = Exec::serial;
  const PipelineResult r2 = run_pipeline(cfg);
  CHECK(slurp(r2.paths.pairs) == slurp(r.paths.pairs));
  CHECK(slurp(r2.paths.verified) == slurp(r.paths.verified));
  CHECK(slurp(r2.paths.partition) == slurp(r.paths.partition));
  CHECK(slurp(r2.paths.index) != std::string());
}

TEST_CASE("stage failures name the stage") {
  testutil::TempDir dir("pipe_err");
  PipelineConfig cfg = small_config(dir / "missing", dir / "out");
  try {
    run_pipeline(cfg);
    FAIL("expected StageError");
  } catch (const StageError& e) {
    CHECK(e.stage() == 0);
    CHECK(std::string(e.what()).find("stage 0") != std::string::npos);
  }
  try {
    load_collection(dir.path(), kDefaultFeatureCap);
    FAIL("expected IoFailure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::IoFailure);
  }
}

TEST_CASE("benchmark compares the three methods") {
  const SyntheticDataset data = small_strip(24);
  BenchmarkConfig cfg;
  cfg.pipeline = small_config({}, {});
  cfg.pipeline.sample_count = 23;
  cfg.vocabulary_branching = 4;
  cfg.vocabulary_depth = 3;
  try {
    run_benchmark(data.images, data.truth.pair_set(), cfg);
    FAIL("expected UnknownMethod");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::UnknownMethod);
  }
  cfg.methods = {"nope"};
  CHECK_THROWS_AS(run_benchmark(data.images, data.truth.pair_set(), cfg), Error);

  cfg.methods = {"vlad_hnsw", "vlad_brute", "bow"};
  cfg.verify = true;
  const BenchmarkReport rep = run_benchmark(data.images, data.truth.pair_set(), cfg);
  CHECK(rep.images == 24);
  CHECK(rep.depth == 24);
  REQUIRE(rep.methods.size() == 3);
  const MethodReport* hnsw = rep.find("vlad_hnsw");
  const MethodReport* brute = rep.find("vlad_brute");
  REQUIRE(hnsw != nullptr);
  REQUIRE(brute != nullptr);
  REQUIRE(rep.find("bow") != nullptr);
  CHECK(rep.find("other") == nullptr);
  CHECK(hnsw->recall_at_depth >= 0.99);
  CHECK(hnsw->recall >= 0.9);
  CHECK(hnsw->verified_precision >= 0.95);
  CHECK(brute->candidate_pairs == hnsw->candidate_pairs);

  testutil::TempDir dir("bench");
  write_benchmark_report(rep, dir.path());
  CHECK(std::filesystem::exists(dir / "bench_report.json"));
  CHECK(std::filesystem::exists(dir / "bench_report.csv"));
}

TEST_CASE("precision and recall of pair sets") {
  const std::set<std::pair<std::uint64_t, std::uint64_t>> truth = {{1, 2}, {2, 3}, {3, 4}, {4, 5}};
  const std::set<std::pair<std::uint64_t, std::uint64_t>> got = {{1, 2}, {2, 3}, {1, 5}};
  const auto [p, r] = precision_recall(got, truth);
  CHECK(p == doctest::Approx(2.0 / 3.0));
  CHECK(r == doctest::Approx(0.5));
}

TEST_CASE("retrieval on a 50-image strip") {
  SyntheticConfig s;
  s.n_images = 50;
  const SyntheticDataset data = generate_synthetic_dataset(s);
  BenchmarkConfig cfg;
  // A strip image has at most four true neighbours, so the default floor of
  // five selections per query would cap precision near 0.65.
  cfg.pipeline.selection.min_select = 3;
  cfg.methods = {"vlad_hnsw"};
  const BenchmarkReport rep = run_benchmark(data.images, data.truth.pair_set(), cfg);
  const MethodReport* m = rep.find("vlad_hnsw");
  REQUIRE(m != nullptr);
  CHECK(m->precision >= 0.9);
  CHECK(m->recall >= 0.9);
}
