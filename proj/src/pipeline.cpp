// SPDX-License-Identifier: Apache-2.0
#include "pairsel/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "pairsel/log.hpp"
#include "pairsel/parallel.hpp"
#include "pairsel/vlad.hpp"

namespace pairsel {
namespace {

using PairSet = std::set<std::pair<std::uint64_t, std::uint64_t>>;

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = {
      "input_dir",        "output_dir",          "seed",
      "feature_cap",      "sample.image_fraction", "sample.features_per_image",
      "k",                "kmeans.max_iters",    "kmeans.tol",
      "kmeans.init",      "hnsw.M",              "hnsw.M0",
      "hnsw.ef_construction", "hnsw.ef_search",  "hnsw.ml",
      "retrieval.sample_count", "retrieval.kappa", "retrieval.min_select",
      "retrieval.max_select", "retrieval.ef_search", "verify.ratio",
      "verify.max_error_px", "verify.confidence", "verify.max_iters",
      "verify.residual",  "verify.min_inliers",  "graph.r_ew",
      "partition.max_size", "partition.tol",     "partition.max_iters",
      "threads",          "exec"};
  return keys;
}

PairSet to_pair_set(const MatchPairCandidateSet& pairs) {
  PairSet out;
  for (const CandidatePair& p : pairs.pairs) out.emplace(p.i, p.j);
  return out;
}

PairSet to_pair_set(std::span<const VerifiedPair> pairs) {
  PairSet out;
  for (const VerifiedPair& p : pairs) out.emplace(std::min(p.i, p.j), std::max(p.i, p.j));
  return out;
}

RetrievalConfig retrieval_config(const PipelineConfig& cfg) {
  RetrievalConfig rc;
  rc.sample_count = cfg.sample_count;
  rc.selection = cfg.selection;
  rc.ef_search = cfg.ef_search_retrieval;
  rc.exec = cfg.exec;
  return rc;
}

VerifyConfig verify_config(const PipelineConfig& cfg) {
  VerifyConfig vc;
  vc.ratio = cfg.ratio;
  vc.ransac.max_error_px = cfg.max_error_px;
  vc.ransac.confidence = cfg.confidence;
  vc.ransac.max_iters = cfg.ransac_max_iters;
  vc.ransac.residual = cfg.residual;
  vc.min_inliers = cfg.min_inliers;
  vc.seed = stage_seed(cfg, "verify");
  vc.exec = cfg.exec;
  return vc;
}

KMeansConfig kmeans_config(const PipelineConfig& cfg) {
  KMeansConfig kc;
  kc.k = cfg.k;
  kc.max_iters = cfg.kmeans_iters;
  kc.tol = cfg.kmeans_tol;
  kc.seed = stage_seed(cfg, "codebook");
  kc.init = cfg.kmeans_init;
  kc.exec = cfg.exec;
  return kc;
}

HnswParams hnsw_params(const PipelineConfig& cfg) {
  HnswParams p = cfg.hnsw;
  p.seed = stage_seed(cfg, "index");
  return p;
}

SamplingConfig sampling_config(const PipelineConfig& cfg) {
  return {cfg.image_fraction, cfg.features_per_image, stage_seed(cfg, "sample")};
}

}  // namespace

void validate(const PipelineConfig& c) {
  const auto fail = [](const std::string& what) { throw Error(Errc::InvalidConfig, what); };
  if (c.feature_cap == 0) fail("feature_cap must be positive");
  if (!(c.image_fraction > 0.0 && c.image_fraction <= 1.0)) fail("sample.image_fraction must lie in (0, 1]");
  if (c.features_per_image == 0) fail("sample.features_per_image must be positive");
  if (c.k == 0) fail("k must be positive");
  if (c.kmeans_iters == 0) fail("kmeans.max_iters must be positive");
  if (!(c.kmeans_tol >= 0.0)) fail("kmeans.tol must be non-negative");
  (void)c.hnsw.resolved();
  if (c.sample_count == 0) fail("retrieval.sample_count must be positive");
  if (c.selection.min_select > c.selection.max_select) fail("retrieval.min_select exceeds retrieval.max_select");
  if (!std::isfinite(c.selection.kappa)) fail("retrieval.kappa must be finite");
  if (!(c.ratio > 0.0 && c.ratio <= 1.0)) fail("verify.ratio must lie in (0, 1]");
  if (!(c.max_error_px > 0.0)) fail("verify.max_error_px must be positive");
  if (!(c.confidence > 0.0 && c.confidence < 1.0)) fail("verify.confidence must lie in (0, 1)");
  if (c.ransac_max_iters == 0) fail("verify.max_iters must be positive");
  if (!(c.r_ew >= 0.0 && c.r_ew <= 1.0)) fail("graph.r_ew must lie in [0, 1]");
  if (c.max_cluster_size == 0) fail("partition.max_size must be positive");
  if (c.threads < 0) fail("threads must be non-negative");
}

PipelineConfig pipeline_config_from(const KeyValues& kv, PipelineConfig base) {
  for (const auto& [key, value] : kv.entries()) {
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw Error(Errc::InvalidConfig, "unknown configuration key '" + key + "'");
    }
  }
  PipelineConfig c = std::move(base);
  c.input_dir = kv.get("input_dir", c.input_dir.string());
  c.output_dir = kv.get("output_dir", c.output_dir.string());
  c.seed = kv.get("seed", c.seed);
  c.feature_cap = kv.get("feature_cap", std::uint64_t{c.feature_cap});
  c.image_fraction = kv.get("sample.image_fraction", c.image_fraction);
  c.features_per_image = kv.get("sample.features_per_image", std::uint64_t{c.features_per_image});
  c.k = kv.get("k", std::uint64_t{c.k});
  c.kmeans_iters = kv.get("kmeans.max_iters", std::uint64_t{c.kmeans_iters});
  c.kmeans_tol = kv.get("kmeans.tol", c.kmeans_tol);
  const std::string init = kv.get("kmeans.init", c.kmeans_init == KMeansInit::random ? "random" : "plus_plus");
  if (init == "plus_plus") {
    c.kmeans_init = KMeansInit::plus_plus;
  } else if (init == "random") {
    c.kmeans_init = KMeansInit::random;
  } else {
    throw Error(Errc::InvalidConfig, "unknown kmeans.init '" + init + "'");
  }
  c.hnsw.M = kv.get("hnsw.M", std::uint64_t{c.hnsw.M});
  c.hnsw.M0 = kv.get("hnsw.M0", std::uint64_t{c.hnsw.M0});
  c.hnsw.ef_construction = kv.get("hnsw.ef_construction", std::uint64_t{c.hnsw.ef_construction});
  c.hnsw.ef_search = kv.get("hnsw.ef_search", std::uint64_t{c.hnsw.ef_search});
  c.hnsw.ml = kv.get("hnsw.ml", c.hnsw.ml);
  c.sample_count = kv.get("retrieval.sample_count", std::uint64_t{c.sample_count});
  c.selection.kappa = kv.get("retrieval.kappa", c.selection.kappa);
  c.selection.min_select = kv.get("retrieval.min_select", std::uint64_t{c.selection.min_select});
  c.selection.max_select = kv.get("retrieval.max_select", std::uint64_t{c.selection.max_select});
  c.ef_search_retrieval = kv.get("retrieval.ef_search", std::uint64_t{c.ef_search_retrieval});
  c.ratio = kv.get("verify.ratio", c.ratio);
  c.max_error_px = kv.get("verify.max_error_px", c.max_error_px);
  c.confidence = kv.get("verify.confidence", c.confidence);
  c.ransac_max_iters = kv.get("verify.max_iters", std::uint64_t{c.ransac_max_iters});
  const std::string residual =
      kv.get("verify.residual", c.residual == EpipolarResidual::one_sided ? "one_sided" : "symmetric");
  if (residual == "symmetric") {
    c.residual = EpipolarResidual::symmetric;
  } else if (residual == "one_sided") {
    c.residual = EpipolarResidual::one_sided;
  } else {
    throw Error(Errc::InvalidConfig, "unknown verify.residual '" + residual + "'");
  }
  c.min_inliers = kv.get("verify.min_inliers", std::uint64_t{c.min_inliers});
  c.r_ew = kv.get("graph.r_ew", c.r_ew);
  c.max_cluster_size = kv.get("partition.max_size", std::uint64_t{c.max_cluster_size});
  c.eigen.tol = kv.get("partition.tol", c.eigen.tol);
  c.eigen.max_iters = kv.get("partition.max_iters", std::uint64_t{c.eigen.max_iters});
  c.threads = static_cast<int>(kv.get("threads", static_cast<std::uint64_t>(c.threads)));
  const std::string exec = kv.get("exec", c.exec == Exec::serial ? "serial" : "parallel");
  if (exec == "serial") {
    c.exec = Exec::serial;
  } else if (exec == "parallel") {
    c.exec = Exec::parallel;
  } else {
    throw Error(Errc::InvalidConfig, "unknown exec '" + exec + "'");
  }
  return c;
}

KeyValues to_key_values(const PipelineConfig& c) {
  KeyValues kv;
  kv.set("input_dir", c.input_dir.string());
  kv.set("output_dir", c.output_dir.string());
  kv.set("seed", std::to_string(c.seed));
  kv.set("feature_cap", std::to_string(c.feature_cap));
  kv.set("sample.image_fraction", num(c.image_fraction));
  kv.set("sample.features_per_image", std::to_string(c.features_per_image));
  kv.set("k", std::to_string(c.k));
  kv.set("kmeans.max_iters", std::to_string(c.kmeans_iters));
  kv.set("kmeans.tol", num(c.kmeans_tol));
  kv.set("kmeans.init", c.kmeans_init == KMeansInit::random ? "random" : "plus_plus");
  kv.set("hnsw.M", std::to_string(c.hnsw.M));
  kv.set("hnsw.M0", std::to_string(c.hnsw.M0));
  kv.set("hnsw.ef_construction", std::to_string(c.hnsw.ef_construction));
  kv.set("hnsw.ef_search", std::to_string(c.hnsw.ef_search));
  kv.set("hnsw.ml", num(c.hnsw.ml));
  kv.set("retrieval.sample_count", std::to_string(c.sample_count));
  kv.set("retrieval.kappa", num(c.selection.kappa));
  kv.set("retrieval.min_select", std::to_string(c.selection.min_select));
  kv.set("retrieval.max_select", std::to_string(c.selection.max_select));
  kv.set("retrieval.ef_search", std::to_string(c.ef_search_retrieval));
  kv.set("verify.ratio", num(c.ratio));
  kv.set("verify.max_error_px", num(c.max_error_px));
  kv.set("verify.confidence", num(c.confidence));
  kv.set("verify.max_iters", std::to_string(c.ransac_max_iters));
  kv.set("verify.residual", c.residual == EpipolarResidual::one_sided ? "one_sided" : "symmetric");
  kv.set("verify.min_inliers", std::to_string(c.min_inliers));
  kv.set("graph.r_ew", num(c.r_ew));
  kv.set("partition.max_size", std::to_string(c.max_cluster_size));
  kv.set("partition.tol", num(c.eigen.tol));
  kv.set("partition.max_iters", std::to_string(c.eigen.max_iters));
  kv.set("threads", std::to_string(c.threads));
  kv.set("exec", c.exec == Exec::serial ? "serial" : "parallel");
  return kv;
}

std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stage) { return derive_seed(cfg.seed, stage); }

ArtifactPaths ArtifactPaths::in(const std::filesystem::path& dir) {
  ArtifactPaths p;
  p.training_sample = dir / "training_sample.txt";
  p.codebook = dir / "codebook.uvc";
  p.vlads = dir / "vlad.uvl";
  p.index = dir / "index.uvh";
  p.pairs = dir / "pairs.txt";
  p.retrieval_summary = dir / "retrieval.json";
  p.verified = dir / "verified.uvm";
  p.view_graph = dir / "view_graph.txt";
  p.partition = dir / "partition.txt";
  p.manifest = dir / "manifest.json";
  p.timings = dir / "timings.json";
  return p;
}

StageError::StageError(int stage, std::string name, const std::string& cause)
    : std::runtime_error("stage " + std::to_string(stage) + " (" + name + "): " + cause),
      stage_(stage),
      name_(std::move(name)) {}

std::vector<DescriptorSet> load_collection(const std::filesystem::path& dir, std::size_t feature_cap, Exec exec) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::IoFailure, "descriptor directory " + dir.string() + " does not exist");
  }
  const std::vector<std::filesystem::path> files = list_descriptor_files(dir);
  if (files.empty()) throw Error(Errc::IoFailure, "no .uvd files in " + dir.string());
  std::vector<DescriptorSet> sets(files.size());
  const LoadOptions options{feature_cap};
  for_each_index(files.size(), exec, [&](std::size_t i) { sets[i] = load_descriptor_set(files[i], options); });
  std::sort(sets.begin(), sets.end(),
            [](const DescriptorSet& a, const DescriptorSet& b) { return a.image_id < b.image_id; });
  for (std::size_t i = 1; i < sets.size(); ++i) {
    if (sets[i].image_id == sets[i - 1].image_id) {
      throw Error(Errc::DuplicateImageId, "image id " + std::to_string(sets[i].image_id) + " appears twice in " +
                                              dir.string());
    }
  }
  return sets;
}

TrainingSample run_sample_stage(std::span<const DescriptorSet> sets, const PipelineConfig& cfg,
                                const std::filesystem::path& out) {
  TrainingSample sample = sample_training_descriptors(sets, sampling_config(cfg));
  std::ofstream f(out);
  for (std::uint64_t id : sample.images) f << id << '\n';
  if (!f) throw Error(Errc::IoFailure, "cannot write " + out.string());
  return sample;
}

std::vector<std::uint64_t> read_training_sample(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::vector<std::uint64_t> ids;
  std::uint64_t id = 0;
  while (in >> id) ids.push_back(id);
  if (!in.eof()) throw Error(Errc::MalformedHeader, path.string() + " is not a list of image ids");
  return ids;
}

Codebook run_codebook_stage(std::span<const DescriptorSet> sets, const std::vector<std::uint64_t>& sample_ids,
                            const PipelineConfig& cfg, const std::filesystem::path& out) {
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  for (std::size_t s = 0; s < sets.size(); ++s) by_id.emplace(sets[s].image_id, s);
  std::vector<DescriptorSet> chosen;
  for (std::uint64_t id : sample_ids) {
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(Errc::InvalidArgument, "sampled image " + std::to_string(id) + " is missing");
    chosen.push_back(sets[it->second]);
  }
  // Every listed image contributes, in list order.
  const TrainingSample sample =
      sample_training_descriptors(chosen, {1.0, cfg.features_per_image, stage_seed(cfg, "sample")});
  Codebook cb = train_codebook(sample.descriptors, kmeans_config(cfg));
  save_codebook(cb, out);
  return cb;
}

std::vector<VladDescriptor> run_vlad_stage(std::span<const DescriptorSet> sets, const Codebook& codebook,
                                           const PipelineConfig& cfg, const std::filesystem::path& out) {
  std::vector<VladDescriptor> vlads = batch_aggregate(sets, codebook, cfg.exec);
  for (const VladDescriptor& v : vlads) {
    if (v.degenerate) log::warn("image " + std::to_string(v.image_id) + " has a degenerate VLAD and is not indexed");
  }
  save_vlads(vlads, out);
  return vlads;
}

HnswIndex run_index_stage(std::span<const VladDescriptor> vlads, const PipelineConfig& cfg,
                          const std::filesystem::path& vlad_path, const std::filesystem::path& out) {
  HnswIndex index = HnswIndex::build(vlads, hnsw_params(cfg));
  index.save(out, vlad_path);
  return index;
}

RetrievalResult run_retrieve_stage(const HnswIndex& index, std::span<const VladDescriptor> vlads,
                                   const PipelineConfig& cfg, const std::filesystem::path& out,
                                   const std::filesystem::path& summary) {
  const RetrievalConfig rc = retrieval_config(cfg);
  RetrievalResult r = retrieve_all_pairs(index, vlads, rc);
  write_pairs(r.pairs, out);
  write_retrieval_summary(r, rc, summary);
  return r;
}

VerifyReport run_verify_stage(const MatchPairCandidateSet& pairs, std::span<const DescriptorSet> sets,
                              const PipelineConfig& cfg, const std::filesystem::path& out) {
  VerifyReport report = verify_pairs(pairs, sets, verify_config(cfg));
  save_verified_pairs(report.retained, out);
  return report;
}

ViewGraph run_graph_stage(std::span<const VerifiedPair> pairs, std::span<const DescriptorSet> sets,
                          const PipelineConfig& cfg, const std::filesystem::path& out) {
  ViewGraph g = build_view_graph(pairs, sets, cfg.r_ew, cfg.exec);
  write_view_graph(g, out);
  return g;
}

PartitionResult run_partition_stage(const ViewGraph& graph, const PipelineConfig& cfg,
                                    const std::filesystem::path& out) {
  PartitionResult r = partition_view_graph(graph, cfg.max_cluster_size, stage_seed(cfg, "partition"), cfg.eigen);
  write_partition(r, out);
  return r;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult result;
  result.paths = ArtifactPaths::in(cfg.output_dir);
  const ArtifactPaths& p = result.paths;

  int stage = 0;
  std::string name = "load";
  const auto begin = [&](int index, std::string stage_name) {
    stage = index;
    name = std::move(stage_name);
    log::info("stage " + std::to_string(stage) + ": " + name);
  };
  Stopwatch clock;
  const auto lap = [&] {
    result.stage_seconds.emplace_back(name, clock.seconds());
    clock = Stopwatch();
  };

  try {
    validate(cfg);
    std::vector<DescriptorSet> sets = load_collection(cfg.input_dir, cfg.feature_cap, cfg.exec);
    result.images = sets.size();
    std::filesystem::create_directories(cfg.output_dir);
    lap();

    begin(1, "sample");
    const TrainingSample sample = run_sample_stage(sets, cfg, p.training_sample);
    lap();
    begin(2, "codebook");
    const Codebook codebook = run_codebook_stage(sets, sample.images, cfg, p.codebook);
    lap();
    begin(3, "vlad");
    const std::vector<VladDescriptor> vlads = run_vlad_stage(sets, codebook, cfg, p.vlads);
    lap();
    begin(4, "index");
    const HnswIndex index = run_index_stage(vlads, cfg, p.vlads, p.index);
    lap();
    begin(5, "retrieve");
    const RetrievalResult retrieved = run_retrieve_stage(index, vlads, cfg, p.pairs, p.retrieval_summary);
    result.candidate_pairs = retrieved.pairs.size();
    lap();
    begin(6, "verify");
    const VerifyReport verified = run_verify_stage(retrieved.pairs, sets, cfg, p.verified);
    result.verified_pairs = verified.retained.size();
    lap();
    begin(7, "graph");
    const ViewGraph graph = run_graph_stage(verified.retained, sets, cfg, p.view_graph);
    lap();
    begin(8, "partition");
    const PartitionResult partition = run_partition_stage(graph, cfg, p.partition);
    result.clusters = partition.cluster_count;
    lap();

    begin(9, "manifest");
    KeyValues echo = to_key_values(cfg);
    KeyValues hashed = echo;
    hashed.set("output_dir", "");
    hashed.set("threads", "");
    nlohmann::ordered_json m;
    m["config_hash"] = hex64(fnv1a64(hashed.to_string()));
    auto& config = m["config"] = nlohmann::ordered_json::object();
    for (const auto& [key, value] : echo.entries()) config[key] = value;
    m["images"] = result.images;
    m["candidate_pairs"] = result.candidate_pairs;
    m["verified_pairs"] = result.verified_pairs;
    m["clusters"] = result.clusters;
    auto& artifacts = m["artifacts"] = nlohmann::ordered_json::array();
    for (const auto& path : {p.training_sample, p.codebook, std::filesystem::path(p.codebook.string() + ".meta"),
                             p.vlads, p.index, p.pairs, p.retrieval_summary, p.verified, p.view_graph,
                             std::filesystem::path(p.view_graph.string() + ".json"), p.partition,
                             std::filesystem::path(p.partition.string() + ".json")}) {
      artifacts.push_back({{"file", path.filename().string()}, {"fnv1a64", hex64(hash_file(path))}});
    }
    std::ofstream mf(p.manifest);
    mf << m.dump(2) << '\n';
    if (!mf) throw Error(Errc::IoFailure, "cannot write " + p.manifest.string());

    nlohmann::ordered_json t = nlohmann::ordered_json::object();
    for (const auto& [stage_name, seconds] : result.stage_seconds) t[stage_name] = seconds;
    std::ofstream tf(p.timings);
    tf << t.dump(2) << '\n';
    if (!tf) throw Error(Errc::IoFailure, "cannot write " + p.timings.string());
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, name, e.what());
  }
  return result;
}

// --- benchmark -----------------------------------------------------------

std::pair<double, double> precision_recall(const PairSet& got, const PairSet& truth) {
  std::size_t hit = 0;
  for (const auto& p : got) hit += truth.count(p);
  const double precision = got.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(got.size());
  const double recall = truth.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(truth.size());
  return {precision, recall};
}

const MethodReport* BenchmarkReport::find(const std::string& method) const {
  for (const MethodReport& m : methods) {
    if (m.method == method) return &m;
  }
  return nullptr;
}

double BenchmarkReport::query_speedup_over_bow(const std::string& method) const {
  const MethodReport* bow = find("bow");
  const MethodReport* m = find(method);
  if (!bow || !m || !(m->query_seconds > 0.0)) return 0.0;
  return bow->query_seconds / m->query_seconds;
}

BenchmarkReport run_benchmark(std::span<const DescriptorSet> sets, const PairSet& truth, const BenchmarkConfig& cfg) {
  static const std::set<std::string> kKnown = {"vlad_hnsw", "vlad_brute", "bow"};
  if (cfg.methods.empty()) throw Error(Errc::UnknownMethod, "no benchmark method requested");
  for (const std::string& m : cfg.methods) {
    if (!kKnown.count(m)) throw Error(Errc::UnknownMethod, "unknown benchmark method '" + m + "'");
  }
  const PipelineConfig& pc = cfg.pipeline;
  validate(pc);
  const RetrievalConfig rc = retrieval_config(pc);
  const VerifyConfig vc = verify_config(pc);

  BenchmarkReport report;
  report.images = sets.size();
  report.truth_pairs = truth.size();
  report.depth = pc.sample_count + 1;

  Stopwatch clock;
  const TrainingSample sample = sample_training_descriptors(sets, sampling_config(pc));
  const double sample_seconds = clock.seconds();

  const auto finish = [&](MethodReport& m, const std::vector<std::uint64_t>& query_ids,
                          const std::vector<std::vector<Neighbor>>& lists) {
    Stopwatch select_clock;
    const RetrievalResult r =
        retrieve_pairs(query_ids, [&](std::size_t q, std::size_t) { return lists[q]; }, rc);
    m.select_seconds = select_clock.seconds();
    m.candidate_pairs = r.pairs.size();
    std::tie(m.precision, m.recall) = precision_recall(to_pair_set(r.pairs), truth);
    if (cfg.verify) {
      Stopwatch verify_clock;
      const VerifyReport v = verify_pairs(r.pairs, sets, vc);
      m.verify_seconds = verify_clock.seconds();
      m.verified_pairs = v.retained.size();
      std::tie(m.verified_precision, m.verified_recall) = precision_recall(to_pair_set(v.retained), truth);
    }
  };

  const bool want_hnsw = cfg.methods.count("vlad_hnsw") != 0;
  const bool want_brute = cfg.methods.count("vlad_brute") != 0;
  if (want_hnsw || want_brute) {
    clock = Stopwatch();
    const Codebook codebook = train_codebook(sample.descriptors, kmeans_config(pc));
    const double train_seconds = sample_seconds + clock.seconds();
    clock = Stopwatch();
    const std::vector<VladDescriptor> vlads = batch_aggregate(sets, codebook, pc.exec);
    const double aggregate_seconds = clock.seconds();
    std::vector<std::uint64_t> ids;
    const Matrix stacked = stack_vlads(vlads, ids);
    std::vector<const VladDescriptor*> queries;
    for (const VladDescriptor& v : vlads) {
      if (!v.degenerate) queries.push_back(&v);
    }

    std::vector<std::vector<Neighbor>> exact;
    if (want_brute) {
      MethodReport m;
      m.method = "vlad_brute";
      m.words = codebook.k();
      m.train_seconds = train_seconds;
      m.aggregate_seconds = aggregate_seconds;
      exact.resize(queries.size());
      clock = Stopwatch();
      for_each_index(queries.size(), pc.exec, [&](std::size_t q) {
        exact[q] = brute_force_knn(stacked, ids, queries[q]->values, report.depth);
      });
      m.query_seconds = clock.seconds();
      m.distance_computations = static_cast<double>(ids.size());
      finish(m, ids, exact);
      report.methods.push_back(std::move(m));
    }
    if (want_hnsw) {
      MethodReport m;
      m.method = "vlad_hnsw";
      m.words = codebook.k();
      m.train_seconds = train_seconds;
      m.aggregate_seconds = aggregate_seconds;
      clock = Stopwatch();
      const HnswIndex index = HnswIndex::build(stacked, ids, hnsw_params(pc));
      m.index_seconds = clock.seconds();
      std::vector<std::vector<Neighbor>> lists(queries.size());
      std::vector<std::size_t> evals(queries.size());
      const std::size_t ef =
          pc.ef_search_retrieval ? pc.ef_search_retrieval : std::max(index.params().ef_search, report.depth);
      clock = Stopwatch();
      for_each_index(queries.size(), pc.exec, [&](std::size_t q) {
        SearchStats stats;
        lists[q] = index.search(queries[q]->values, report.depth, ef, &stats);
        evals[q] = stats.distance_computations;
      });
      m.query_seconds = clock.seconds();
      double total = 0.0;
      for (std::size_t e : evals) total += static_cast<double>(e);
      m.distance_computations = queries.empty() ? 0.0 : total / static_cast<double>(queries.size());
      if (!exact.empty()) {
        std::size_t hit = 0, want = 0;
        for (std::size_t q = 0; q < queries.size(); ++q) {
          std::set<std::uint64_t> truth_ids;
          for (const Neighbor& n : exact[q]) truth_ids.insert(n.image_id);
          for (const Neighbor& n : lists[q]) hit += truth_ids.count(n.image_id);
          want += truth_ids.size();
        }
        m.recall_at_depth = want == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(want);
      }
      finish(m, ids, lists);
      report.methods.push_back(std::move(m));
    }
  }

  if (cfg.methods.count("bow")) {
    MethodReport m;
    m.method = "bow";
    VocabularyConfig vcfg;
    vcfg.branching = cfg.vocabulary_branching;
    vcfg.depth = cfg.vocabulary_depth;
    vcfg.kmeans_iters = cfg.vocabulary_iters;
    vcfg.seed = stage_seed(pc, "vocabulary");
    vcfg.exec = pc.exec;
    clock = Stopwatch();
    const VocabularyTree tree = train_vocabulary(sample.descriptors, vcfg);
    m.train_seconds = sample_seconds + clock.seconds();
    m.words = tree.words;

    clock = Stopwatch();
    std::vector<TermCounts> counts(sets.size());
    for_each_index(sets.size(), pc.exec, [&](std::size_t i) { counts[i] = quantize_image(tree, sets[i]); });
    m.aggregate_seconds = clock.seconds();
    std::vector<std::uint64_t> ids;
    for (const DescriptorSet& s : sets) ids.push_back(s.image_id);
    clock = Stopwatch();
    const BowDatabase db = build_bow_database(tree.words, ids, counts);
    m.index_seconds = clock.seconds();

    std::vector<std::vector<Neighbor>> lists(sets.size());
    clock = Stopwatch();
    for_each_index(sets.size(), pc.exec, [&](std::size_t q) {
      for (const ScoredImage& s : bow_query(db, db.vectors[q], report.depth)) {
        // Euclidean distance between unit vectors with this cosine.
        lists[q].push_back({s.image_id, std::sqrt(std::max(0.0, 2.0 - 2.0 * s.score))});
      }
    });
    m.query_seconds = clock.seconds();
    finish(m, ids, lists);
    report.methods.push_back(std::move(m));
  }
  return report;
}

void write_benchmark_report(const BenchmarkReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json j;
  j["images"] = report.images;
  j["truth_pairs"] = report.truth_pairs;
  j["depth"] = report.depth;
  auto& methods = j["methods"] = nlohmann::ordered_json::array();
  for (const MethodReport& m : report.methods) {
    methods.push_back({{"method", m.method},
                       {"words", m.words},
                       {"train_seconds", m.train_seconds},
                       {"aggregate_seconds", m.aggregate_seconds},
                       {"index_seconds", m.index_seconds},
                       {"query_seconds", m.query_seconds},
                       {"select_seconds", m.select_seconds},
                       {"verify_seconds", m.verify_seconds},
                       {"candidate_pairs", m.candidate_pairs},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"verified_pairs", m.verified_pairs},
                       {"verified_precision", m.verified_precision},
                       {"verified_recall", m.verified_recall},
                       {"recall_at_depth", m.recall_at_depth},
                       {"distance_computations_per_query", m.distance_computations},
                       {"query_speedup_over_bow", report.query_speedup_over_bow(m.method)}});
  }
  std::ofstream js(dir / "bench_report.json");
  js << j.dump(2) << '\n';
  if (!js) throw Error(Errc::IoFailure, "cannot write " + (dir / "bench_report.json").string());

  std::ofstream csv(dir / "bench_report.csv");
  csv.precision(9);
  csv << "method,words,train_seconds,aggregate_seconds,index_seconds,query_seconds,select_seconds,verify_seconds,"
         "candidate_pairs,precision,recall,verified_pairs,verified_precision,verified_recall,recall_at_depth,"
         "distance_computations_per_query,query_speedup_over_bow\n";
  for (const MethodReport& m : report.methods) {
    csv << m.method << ',' << m.words << ',' << m.train_seconds << ',' << m.aggregate_seconds << ','
        << m.index_seconds << ',' << m.query_seconds << ',' << m.select_seconds << ',' << m.verify_seconds << ','
        << m.candidate_pairs << ',' << m.precision << ',' << m.recall << ',' << m.verified_pairs << ','
        << m.verified_precision << ',' << m.verified_recall << ',' << m.recall_at_depth << ','
        << m.distance_computations << ',' << report.query_speedup_over_bow(m.method) << '\n';
  }
  if (!csv) throw Error(Errc::IoFailure, "cannot write " + (dir / "bench_report.csv").string());
}

}  // namespace pairsel
