// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adaptive match-pair selection: kNN distances become similarity scores,
// a power law y = a * x^b is fitted over rank positions, and candidates above
// the line y = mu + kappa * delta are kept.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "pairsel/hnsw.hpp"

namespace pairsel {

struct Candidate {
  std::uint64_t image_id = 0;
  double distance = 0.0;
  double similarity = 0.0;
};

struct SimilarityList {
  std::uint64_t query_id = 0;
  std::vector<Candidate> candidates;  // ascending distance
  double d_min = 0.0;
  double d_max = 0.0;
  bool degenerate = false;  // all distances equal, every similarity is 1
};

/// s_i = (d_max - d_i) / (d_max - d_min). Throws EmptyList.
SimilarityList normalize_similarities(std::uint64_t query_id, std::span<const Neighbor> neighbors);

struct PowerFit {
  double a = 0.0;
  double b = 0.0;
  double mu = 0.0;     // mean of the sampled similarities
  double delta = 0.0;  // population standard deviation of the sampled similarities
  std::size_t samples = 0;      // ranks considered, min(m, sample_count)
  std::size_t fit_points = 0;   // ranks with similarity above the fit floor
  double residual = 0.0;        // RMS residual in log space
};

inline constexpr double kFitFloor = 1e-6;

/// Least squares of log s = log a + b log x over ranks x = 1..min(m, n) with
/// s > 1e-6. Throws DegenerateScores when the sampled similarities are all
/// equal and InsufficientSamples when fewer than 8 ranks qualify.
PowerFit fit_power_curve(const SimilarityList& list, std::size_t sample_count = 300);

struct SelectionConfig {
  double kappa = 0.4;
  std::size_t min_select = 5;
  std::size_t max_select = 300;
};

/// Number of leading candidates kept: those with s > mu + kappa * delta,
/// clamped to [min_select, max_select] and to the list length.
std::size_t select_count(const SimilarityList& list, const PowerFit& fit, const SelectionConfig& cfg);
std::vector<Candidate> select_pairs(const SimilarityList& list, const PowerFit& fit, const SelectionConfig& cfg);

struct CandidatePair {
  std::uint64_t i = 0;  // i < j
  std::uint64_t j = 0;
  double similarity = 0.0;             // best over the queries that produced it
  std::vector<std::uint64_t> sources;  // query image ids, ascending
};

struct MatchPairCandidateSet {
  std::vector<CandidatePair> pairs;  // sorted by (i, j)

  bool contains(std::uint64_t a, std::uint64_t b) const;
  std::size_t size() const { return pairs.size(); }
};

struct QuerySummary {
  std::uint64_t query_id = 0;
  std::size_t candidates = 0;
  bool fit_ok = false;
  bool degenerate = false;
  PowerFit fit;
  double threshold = 0.0;
  std::size_t selected = 0;
};

struct RetrievalConfig {
  std::size_t sample_count = 300;
  SelectionConfig selection;
  std::size_t ef_search = 0;  // 0: max(index ef_search, sample_count + 1)
  Exec exec = Exec::parallel;
};

struct RetrievalResult {
  MatchPairCandidateSet pairs;
  std::vector<QuerySummary> queries;  // input order
};

/// Ranked neighbors of one query image, nearest first; may include the query.
using NeighborSource = std::function<std::vector<Neighbor>(std::size_t query_index, std::size_t depth)>;

/// Selection over arbitrary neighbor lists: drops the self-hit, normalizes,
/// fits, selects and merges. A query whose fit fails keeps its first
/// min_select candidates.
RetrievalResult retrieve_pairs(std::span<const std::uint64_t> query_ids, const NeighborSource& source,
                               const RetrievalConfig& cfg);

/// Queries the index with every non-degenerate descriptor.
RetrievalResult retrieve_all_pairs(const HnswIndex& index, std::span<const VladDescriptor> vlads,
                                   const RetrievalConfig& cfg);

/// `i j similarity` per line, sorted by (i, j).
void write_pairs(const MatchPairCandidateSet& pairs, const std::filesystem::path& path);
MatchPairCandidateSet read_pairs(const std::filesystem::path& path);
/// Per-query fit parameters as JSON.
void write_retrieval_summary(const RetrievalResult& result, const RetrievalConfig& cfg,
                             const std::filesystem::path& path);

}  // namespace pairsel
