// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vocabulary-tree bag-of-words retrieval with TF-IDF weighting and an
// inverted file; the comparison baseline for VLAD + HNSW.

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "pairsel/common.hpp"
#include "pairsel/descriptor_io.hpp"

namespace pairsel {

struct VocabularyConfig {
  std::size_t branching = 10;  // b
  std::size_t depth = 4;       // L
  std::size_t kmeans_iters = 10;
  std::uint64_t seed = 0;
  Exec exec = Exec::parallel;
};

struct VocabularyNode {
  std::uint32_t first_child = 0;  // index into nodes
  std::uint32_t child_count = 0;
  std::int32_t word = -1;         // leaf word id, -1 for internal nodes
};

/// Node 0 is the root; every other node owns one row of `centers` (row i-1
/// for node i). Words are numbered by depth-first leaf order.
struct VocabularyTree {
  std::size_t branching = 0;
  std::size_t depth = 0;
  std::vector<VocabularyNode> nodes;
  Matrix centers;
  std::size_t words = 0;

  /// Word reached by greedy descent (nearest child per level).
  std::uint32_t quantize(const float* v) const;
};

/// Recursive k-means: a node is split while its level is below L and it holds
/// at least b descriptors. Throws TooFewDescriptors when fewer than b rows.
VocabularyTree train_vocabulary(const Matrix& descriptors, const VocabularyConfig& cfg);

/// Sparse word histogram of one image, sorted by word id.
using TermCounts = std::vector<std::pair<std::uint32_t, std::uint32_t>>;
TermCounts quantize_image(const VocabularyTree& tree, const DescriptorSet& set);
TermCounts quantize_descriptors(const VocabularyTree& tree, const Matrix& unit_descriptors);

struct BowVector {
  std::uint64_t image_id = 0;
  std::vector<std::pair<std::uint32_t, double>> weights;  // sorted by word, L2-normalized
  bool degenerate = false;                                 // every weight zero
};

struct Posting {
  std::uint32_t doc = 0;  // position in BowDatabase::vectors
  std::uint64_t image_id = 0;
  std::uint32_t count = 0;  // n_id
  double weight = 0.0;      // normalized t_i of this image
};

struct BowDatabase {
  std::size_t images = 0;                     // N
  std::vector<std::uint32_t> document_freq;   // N_i per word
  std::vector<double> idf;                    // log(N / N_i), 0 for unseen words
  std::vector<std::vector<Posting>> postings; // per word, sorted by image id
  std::vector<BowVector> vectors;             // one per image, input order
};

/// TF-IDF: t_i = (n_id / n_d) * log(N / N_i), then L2 normalization.
BowDatabase build_bow_database(const VocabularyTree& tree, std::span<const DescriptorSet> sets,
                               Exec exec = Exec::parallel);
/// Database from precomputed term counts (ids parallel to `counts`).
BowDatabase build_bow_database(std::size_t words, std::span<const std::uint64_t> ids,
                               std::span<const TermCounts> counts);

/// Weights term counts with the database IDF.
BowVector make_bow_vector(const BowDatabase& db, std::uint64_t image_id, const TermCounts& counts);

struct ScoredImage {
  std::uint64_t image_id = 0;
  double score = 0.0;
  bool operator==(const ScoredImage&) const = default;
};

/// Accumulates dot products over the postings of the query's words. Results
/// are ordered by descending score, then ascending image id; images sharing
/// no weighted word are not returned. Throws EmptyDatabase.
std::vector<ScoredImage> bow_query(const BowDatabase& db, const BowVector& query, std::size_t topk);

/// "UVT1" tree persistence.
void save_vocabulary(const VocabularyTree& tree, const std::filesystem::path& path);
VocabularyTree load_vocabulary(const std::filesystem::path& path);

/// "UVB1" dump: IDF, postings and the normalized vectors.
void save_bow_database(const BowDatabase& db, const std::filesystem::path& path);
BowDatabase load_bow_database(const std::filesystem::path& path);

}  // namespace pairsel
