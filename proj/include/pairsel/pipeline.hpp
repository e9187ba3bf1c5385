// SPDX-License-Identifier: Apache-2.0
#pragma once

// End-to-end match-pair selection: sample -> codebook -> VLAD -> index ->
// retrieve -> verify -> view graph -> partition. Every stage reads only the
// artifacts written by earlier stages.

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "pairsel/bow.hpp"
#include "pairsel/codebook.hpp"
#include "pairsel/hnsw.hpp"
#include "pairsel/key_values.hpp"
#include "pairsel/partition.hpp"
#include "pairsel/retrieval.hpp"
#include "pairsel/verification.hpp"
#include "pairsel/view_graph.hpp"

namespace pairsel {

struct PipelineConfig {
  std::filesystem::path input_dir;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  std::size_t feature_cap = kDefaultFeatureCap;
  double image_fraction = 0.2;
  std::size_t features_per_image = 1500;
  std::size_t k = 256;
  std::size_t kmeans_iters = 50;
  double kmeans_tol = 1e-4;
  KMeansInit kmeans_init = KMeansInit::plus_plus;
  HnswParams hnsw;
  std::size_t sample_count = 300;
  SelectionConfig selection;
  std::size_t ef_search_retrieval = 0;
  double ratio = 0.8;
  double max_error_px = 1.0;
  double confidence = 0.999;
  std::size_t ransac_max_iters = 10000;
  EpipolarResidual residual = EpipolarResidual::symmetric;
  std::size_t min_inliers = 15;
  double r_ew = 0.5;
  std::size_t max_cluster_size = 500;
  EigenConfig eigen;
  int threads = 0;
  Exec exec = Exec::parallel;
};

/// Throws InvalidConfig for out-of-range values.
void validate(const PipelineConfig& cfg);

/// Keys mirror the CLI flags (`k`, `hnsw.M`, `retrieval.kappa`, ...). Unknown
/// keys throw InvalidConfig.
PipelineConfig pipeline_config_from(const KeyValues& kv, PipelineConfig base = {});
KeyValues to_key_values(const PipelineConfig& cfg);

/// Seed of one stage, derived from the root seed.
std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stage);

/// Artifact locations inside an output directory.
struct ArtifactPaths {
  std::filesystem::path training_sample;
  std::filesystem::path codebook;
  std::filesystem::path vlads;
  std::filesystem::path index;
  std::filesystem::path pairs;
  std::filesystem::path retrieval_summary;
  std::filesystem::path verified;
  std::filesystem::path view_graph;
  std::filesystem::path partition;
  std::filesystem::path manifest;
  std::filesystem::path timings;

  static ArtifactPaths in(const std::filesystem::path& dir);
};

/// Failure of one pipeline stage; `stage` is the stage index (0 = load).
class StageError : public std::runtime_error {
 public:
  StageError(int stage, std::string name, const std::string& cause);
  int stage() const noexcept { return stage_; }
  const std::string& name() const noexcept { return name_; }

 private:
  int stage_;
  std::string name_;
};

/// Loads every "*.uvd" file of a directory. Throws IoFailure when the
/// directory is missing or holds no descriptor files, DuplicateImageId when
/// two files share an id.
std::vector<DescriptorSet> load_collection(const std::filesystem::path& dir, std::size_t feature_cap,
                                           Exec exec = Exec::parallel);

// Individual stages. Each writes its artifact and returns the in-memory result.
TrainingSample run_sample_stage(std::span<const DescriptorSet> sets, const PipelineConfig& cfg,
                                const std::filesystem::path& out);
std::vector<std::uint64_t> read_training_sample(const std::filesystem::path& path);
Codebook run_codebook_stage(std::span<const DescriptorSet> sets, const std::vector<std::uint64_t>& sample_ids,
                            const PipelineConfig& cfg, const std::filesystem::path& out);
std::vector<VladDescriptor> run_vlad_stage(std::span<const DescriptorSet> sets, const Codebook& codebook,
                                           const PipelineConfig& cfg, const std::filesystem::path& out);
HnswIndex run_index_stage(std::span<const VladDescriptor> vlads, const PipelineConfig& cfg,
                          const std::filesystem::path& vlad_path, const std::filesystem::path& out);
RetrievalResult run_retrieve_stage(const HnswIndex& index, std::span<const VladDescriptor> vlads,
                                   const PipelineConfig& cfg, const std::filesystem::path& out,
                                   const std::filesystem::path& summary);
VerifyReport run_verify_stage(const MatchPairCandidateSet& pairs, std::span<const DescriptorSet> sets,
                              const PipelineConfig& cfg, const std::filesystem::path& out);
ViewGraph run_graph_stage(std::span<const VerifiedPair> pairs, std::span<const DescriptorSet> sets,
                          const PipelineConfig& cfg, const std::filesystem::path& out);
PartitionResult run_partition_stage(const ViewGraph& graph, const PipelineConfig& cfg,
                                    const std::filesystem::path& out);

struct PipelineResult {
  ArtifactPaths paths;
  std::size_t images = 0;
  std::size_t candidate_pairs = 0;
  std::size_t verified_pairs = 0;
  std::size_t clusters = 0;
  std::vector<std::pair<std::string, double>> stage_seconds;
};

/// Runs all stages, then writes `manifest.json` (config echo, config hash,
/// artifact checksums) and `timings.json`. Throws StageError.
PipelineResult run_pipeline(const PipelineConfig& cfg);

// --- benchmark -----------------------------------------------------------

struct BenchmarkConfig {
  PipelineConfig pipeline;                  // codebook, HNSW and selection settings
  std::set<std::string> methods;            // subset of vlad_hnsw, vlad_brute, bow
  std::size_t vocabulary_branching = 10;
  std::size_t vocabulary_depth = 4;
  std::size_t vocabulary_iters = 10;
  bool verify = false;                      // also run geometric verification on the selected pairs
};

struct MethodReport {
  std::string method;
  double train_seconds = 0.0;      // codebook or vocabulary
  double aggregate_seconds = 0.0;  // VLAD aggregation or BoW quantization + weighting
  double index_seconds = 0.0;      // HNSW build or inverted-file build
  double query_seconds = 0.0;      // all kNN queries at the fixed retrieval depth
  double select_seconds = 0.0;     // adaptive selection and merge
  double verify_seconds = 0.0;
  std::size_t words = 0;           // codebook centers or vocabulary words
  std::size_t candidate_pairs = 0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t verified_pairs = 0;
  double verified_precision = 0.0;
  double verified_recall = 0.0;
  double recall_at_depth = 1.0;    // overlap with the exact kNN lists
  double distance_computations = 0.0;  // per query
};

struct BenchmarkReport {
  std::size_t images = 0;
  std::size_t truth_pairs = 0;
  std::size_t depth = 0;
  std::vector<MethodReport> methods;

  const MethodReport* find(const std::string& method) const;
  /// BoW query time over the method's query time; 0 when either is missing.
  double query_speedup_over_bow(const std::string& method) const;
};

/// Evaluates the requested retrieval methods on one collection with known
/// overlap pairs. Every method uses the same retrieval depth
/// (sample_count + 1 neighbours) and the same selection and verification
/// settings. Throws UnknownMethod for an empty or unrecognised method set.
BenchmarkReport run_benchmark(std::span<const DescriptorSet> sets,
                              const std::set<std::pair<std::uint64_t, std::uint64_t>>& truth,
                              const BenchmarkConfig& cfg);

/// `bench_report.json` and `bench_report.csv` in `dir`.
void write_benchmark_report(const BenchmarkReport& report, const std::filesystem::path& dir);

/// Fraction of `got` found in `truth` and of `truth` found in `got`.
std::pair<double, double> precision_recall(const std::set<std::pair<std::uint64_t, std::uint64_t>>& got,
                                           const std::set<std::pair<std::uint64_t, std::uint64_t>>& truth);

}  // namespace pairsel
