// SPDX-License-Identifier: Apache-2.0
// Command-line front end: per-stage subcommands, the full pipeline and the
// retrieval benchmark. Exit codes: 0 success, 1 usage error, 2 stage failure.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pairsel/log.hpp"
#include "pairsel/pipeline.hpp"
#include "pairsel/synthetic.hpp"
#include "pairsel/vlad.hpp"

namespace {

using namespace pairsel;

constexpr int kUsage = 1;
constexpr int kFailure = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flags that map one-to-one onto configuration keys.
struct KeyFlags {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> options;

  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    options.emplace_back(app->add_option(flag, values[key], help), key);
  }
  KeyValues collected() const {
    KeyValues kv;
    for (const auto& [opt, key] : options) {
      if (opt->count() > 0) kv.set(key, values.at(key));
    }
    return kv;
  }
};

struct Common {
  std::string config;
  std::string seed;
  std::string threads;
  std::string output_dir;
  std::string input_dir;
  bool verbose = false;
  bool quiet = false;
  KeyFlags keys;
};

void add_common(CLI::App* app, Common& c, bool pipeline_keys) {
  app->add_option("--config", c.config, "key = value configuration file; flags override it");
  app->add_option("--seed", c.seed, "root seed");
  app->add_option("--threads", c.threads, "worker thread cap (0 = all cores)");
  app->add_option("--output-dir", c.output_dir, "artifact directory");
  app->add_option("--input-dir", c.input_dir, "directory of .uvd descriptor files");
  app->add_flag("-v,--verbose", c.verbose, "log progress");
  app->add_flag("-q,--quiet", c.quiet, "suppress warnings");
  if (!pipeline_keys) return;
  KeyFlags& k = c.keys;
  k.add(app, "--feature-cap", "feature_cap", "max features kept per image");
  k.add(app, "--image-fraction", "sample.image_fraction", "fraction p of images sampled for the codebook");
  k.add(app, "--features-per-image", "sample.features_per_image", "largest-scale features h per sampled image");
  k.add(app, "--k", "k", "codebook size");
  k.add(app, "--kmeans-iters", "kmeans.max_iters", "k-means iteration cap");
  k.add(app, "--kmeans-tol", "kmeans.tol", "relative inertia decrease that stops k-means");
  k.add(app, "--kmeans-init", "kmeans.init", "plus_plus or random");
  k.add(app, "--M", "hnsw.M", "HNSW friend number");
  k.add(app, "--M0", "hnsw.M0", "HNSW layer-0 degree cap (0 = 2M)");
  k.add(app, "--ef-construction", "hnsw.ef_construction", "HNSW build candidate width");
  k.add(app, "--ef-search", "hnsw.ef_search", "HNSW query candidate width");
  k.add(app, "--sample-count", "retrieval.sample_count", "neighbours fitted per query");
  k.add(app, "--kappa", "retrieval.kappa", "separation line offset in standard deviations");
  k.add(app, "--min-select", "retrieval.min_select", "minimum pairs kept per query");
  k.add(app, "--max-select", "retrieval.max_select", "maximum pairs kept per query");
  k.add(app, "--ratio", "verify.ratio", "ratio-test threshold");
  k.add(app, "--max-error-px", "verify.max_error_px", "RANSAC epipolar threshold in pixels");
  k.add(app, "--residual", "verify.residual", "symmetric or one_sided epipolar distance");
  k.add(app, "--min-inliers", "verify.min_inliers", "pairs need more inliers than this");
  k.add(app, "--r-ew", "graph.r_ew", "edge weight mix of inlier and overlap terms");
  k.add(app, "--max-cluster-size", "partition.max_size", "largest allowed cluster");
  k.add(app, "--exec", "exec", "serial or parallel kernels");
}

void apply_logging(const Common& c) {
  if (c.quiet) {
    log::set_level(log::Level::quiet);
  } else if (c.verbose) {
    log::set_level(log::Level::info);
  }
}

PipelineConfig resolve(const Common& c) {
  KeyValues kv;
  if (!c.config.empty()) kv = KeyValues::read(c.config);
  kv.merge(c.keys.collected());
  if (!c.seed.empty()) kv.set("seed", c.seed);
  if (!c.threads.empty()) kv.set("threads", c.threads);
  if (!c.output_dir.empty()) kv.set("output_dir", c.output_dir);
  if (!c.input_dir.empty()) kv.set("input_dir", c.input_dir);
  PipelineConfig cfg;
  try {
    cfg = pipeline_config_from(kv);
    validate(cfg);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  set_thread_count(cfg.threads);
  return cfg;
}

void require_input(const PipelineConfig& cfg) {
  if (cfg.input_dir.empty()) throw UsageError("--input-dir is required");
}

std::vector<DescriptorSet> load_or_stage0(const PipelineConfig& cfg) {
  try {
    return load_collection(cfg.input_dir, cfg.feature_cap, cfg.exec);
  } catch (const std::exception& e) {
    throw StageError(0, "load", e.what());
  }
}

template <class Fn>
auto in_stage(int stage, const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, name, e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Match-pair selection for structure from motion: VLAD + HNSW retrieval, verification, "
               "view graph and partitioning"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic descriptor collection with ground truth");
  std::string gen_config, gen_out = "data", gen_seed;
  std::map<std::string, std::string> gen_values;
  std::vector<std::pair<CLI::Option*, std::string>> gen_options;
  bool gen_matches = false;
  gen->add_option("--config", gen_config, "synthetic generator key = value file");
  gen->add_option("--output-dir", gen_out, "destination directory");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_flag("--with-matches", gen_matches, "also write ground_truth_matches.txt");
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"--n-images", "n_images"},
           {"--features-per-image", "features_per_image"},
           {"--model", "model"},
           {"--overlap", "overlap"},
           {"--side-overlap", "side_overlap"},
           {"--grid-columns", "grid_columns"},
           {"--distractor-fraction", "distractor_fraction"},
           {"--descriptor-noise", "descriptor_noise"},
           {"--pixel-noise", "pixel_noise"},
           {"--min-shared", "min_shared"}}) {
    gen_options.emplace_back(gen->add_option(flag, gen_values[key], "generator " + key), key);
  }

  Common c_codebook, c_vlad, c_index, c_retrieve, c_verify, c_graph, c_partition, c_pipeline, c_bench;
  auto* codebook = app.add_subcommand("codebook", "sample training features and train the codebook");
  add_common(codebook, c_codebook, true);
  auto* vlad = app.add_subcommand("vlad", "aggregate VLAD descriptors with the trained codebook");
  add_common(vlad, c_vlad, true);
  auto* index = app.add_subcommand("index", "build the HNSW index over the VLAD descriptors");
  add_common(index, c_index, true);
  auto* retrieve = app.add_subcommand("retrieve", "select candidate match pairs from the index");
  add_common(retrieve, c_retrieve, true);
  auto* verify = app.add_subcommand("verify", "match and geometrically verify the candidate pairs");
  add_common(verify, c_verify, true);
  auto* graph = app.add_subcommand("graph", "build the weighted view graph from verified pairs");
  add_common(graph, c_graph, true);
  auto* partition = app.add_subcommand("partition", "split the view graph by recursive normalized cut");
  add_common(partition, c_partition, true);
  auto* pipeline = app.add_subcommand("pipeline", "run every stage and write the manifest");
  add_common(pipeline, c_pipeline, true);
  auto* bench = app.add_subcommand("bench", "compare VLAD + HNSW, exact VLAD search and BoW retrieval");
  add_common(bench, c_bench, true);
  std::vector<std::string> methods;
  std::string truth_file;
  std::size_t vocab_b = 10, vocab_l = 4;
  bool bench_verify = false;
  bench->add_option("--methods", methods, "any of vlad_hnsw, vlad_brute, bow")->delimiter(',');
  bench->add_option("--ground-truth", truth_file, "pair list (default <input-dir>/ground_truth.txt)");
  bench->add_option("--vocab-branching", vocab_b, "BoW vocabulary branching factor");
  bench->add_option("--vocab-depth", vocab_l, "BoW vocabulary depth");
  bench->add_flag("--verify-pairs", bench_verify, "also verify the selected pairs geometrically");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (gen->parsed()) {
      KeyValues kv;
      if (!gen_config.empty()) kv = KeyValues::read(gen_config);
      for (const auto& [opt, key] : gen_options) {
        if (opt->count() > 0) kv.set(key, gen_values.at(key));
      }
      if (!gen_seed.empty()) kv.set("seed", gen_seed);
      SyntheticConfig cfg;
      try {
        cfg = synthetic_config_from(kv);
        validate(cfg);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      const SyntheticDataset data = generate_synthetic_dataset(cfg);
      write_synthetic_dataset(data, gen_out, gen_matches);
      std::cout << "wrote " << data.images.size() << " images and " << data.truth.pairs.size()
                << " ground-truth pairs to " << gen_out << '\n';
      return 0;
    }

    const auto stage_setup = [](const Common& c) {
      apply_logging(c);
      PipelineConfig cfg = resolve(c);
      std::filesystem::create_directories(cfg.output_dir);
      return std::pair{cfg, ArtifactPaths::in(cfg.output_dir)};
    };

    if (codebook->parsed()) {
      const auto [cfg, p] = stage_setup(c_codebook);
      require_input(cfg);
      const auto sets = load_or_stage0(cfg);
      const TrainingSample sample = in_stage(1, "sample", [&] { return run_sample_stage(sets, cfg, p.training_sample); });
      const Codebook cb = in_stage(2, "codebook", [&] { return run_codebook_stage(sets, sample.images, cfg, p.codebook); });
      std::cout << "codebook: k=" << cb.k() << " from " << cb.training_size << " descriptors, " << cb.iterations
                << " iterations -> " << p.codebook.string() << '\n';
    } else if (vlad->parsed()) {
      const auto [cfg, p] = stage_setup(c_vlad);
      require_input(cfg);
      const auto sets = load_or_stage0(cfg);
      const auto vlads = in_stage(3, "vlad", [&] {
        return run_vlad_stage(sets, load_codebook(p.codebook), cfg, p.vlads);
      });
      std::cout << "vlad: " << vlads.size() << " descriptors -> " << p.vlads.string() << '\n';
    } else if (index->parsed()) {
      const auto [cfg, p] = stage_setup(c_index);
      const HnswIndex ix = in_stage(4, "index", [&] {
        const auto vlads = load_vlads(p.vlads);
        return run_index_stage(vlads, cfg, p.vlads, p.index);
      });
      std::cout << "index: " << ix.size() << " vectors, top layer " << ix.max_layer() << " -> " << p.index.string()
                << '\n';
    } else if (retrieve->parsed()) {
      const auto [cfg, p] = stage_setup(c_retrieve);
      const RetrievalResult r = in_stage(5, "retrieve", [&] {
        const HnswIndex ix = HnswIndex::load(p.index);
        const auto vlads = load_vlads(p.vlads);
        return run_retrieve_stage(ix, vlads, cfg, p.pairs, p.retrieval_summary);
      });
      std::cout << "retrieve: " << r.pairs.size() << " candidate pairs -> " << p.pairs.string() << '\n';
    } else if (verify->parsed()) {
      const auto [cfg, p] = stage_setup(c_verify);
      require_input(cfg);
      const auto sets = load_or_stage0(cfg);
      const VerifyReport r = in_stage(6, "verify", [&] { return run_verify_stage(read_pairs(p.pairs), sets, cfg, p.verified); });
      std::cout << "verify: " << r.retained.size() << " retained, " << r.dropped.size() << " dropped -> "
                << p.verified.string() << '\n';
    } else if (graph->parsed()) {
      const auto [cfg, p] = stage_setup(c_graph);
      require_input(cfg);
      const auto sets = load_or_stage0(cfg);
      const ViewGraph g = in_stage(7, "graph", [&] {
        const auto pairs = load_verified_pairs(p.verified);
        return run_graph_stage(pairs, sets, cfg, p.view_graph);
      });
      std::cout << "graph: " << g.vertices.size() << " vertices, " << g.edges.size() << " edges, "
                << g.isolated().size() << " isolated -> " << p.view_graph.string() << '\n';
    } else if (partition->parsed()) {
      const auto [cfg, p] = stage_setup(c_partition);
      const PartitionResult r = in_stage(8, "partition", [&] {
        return run_partition_stage(read_view_graph(p.view_graph), cfg, p.partition);
      });
      std::cout << "partition: " << r.cluster_count << " clusters -> " << p.partition.string() << '\n';
    } else if (pipeline->parsed()) {
      apply_logging(c_pipeline);
      const PipelineConfig cfg = resolve(c_pipeline);
      require_input(cfg);
      const PipelineResult r = run_pipeline(cfg);
      std::cout << "pipeline: " << r.images << " images, " << r.candidate_pairs << " candidate pairs, "
                << r.verified_pairs << " verified, " << r.clusters << " clusters -> " << cfg.output_dir.string()
                << '\n';
    } else if (bench->parsed()) {
      apply_logging(c_bench);
      const PipelineConfig cfg = resolve(c_bench);
      require_input(cfg);
      BenchmarkConfig bc;
      bc.pipeline = cfg;
      bc.methods = {methods.begin(), methods.end()};
      if (methods.empty()) bc.methods = {"vlad_hnsw", "vlad_brute", "bow"};
      bc.vocabulary_branching = vocab_b;
      bc.vocabulary_depth = vocab_l;
      bc.verify = bench_verify;
      const auto sets = load_or_stage0(cfg);
      const auto truth = read_ground_truth_pairs(truth_file.empty() ? cfg.input_dir / "ground_truth.txt"
                                                                     : std::filesystem::path(truth_file));
      const BenchmarkReport report = run_benchmark(sets, truth, bc);
      write_benchmark_report(report, cfg.output_dir);
      for (const MethodReport& m : report.methods) {
        std::cout << m.method << ": query " << m.query_seconds << " s, precision " << m.precision << ", recall "
                  << m.recall << '\n';
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    if (e.code() == Errc::UnknownMethod || e.code() == Errc::InvalidConfig) {
      std::cerr << "usage error: " << e.what() << '\n';
      return kUsage;
    }
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return 0;
}
