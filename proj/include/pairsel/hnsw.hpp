// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hierarchical navigable small world graph over dense vectors (squared
// Euclidean internally, true Euclidean distance at the API).
//
// Build is single-writer and deterministic for a fixed seed and input order.
// A built index is immutable; concurrent searches need no synchronization.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pairsel/common.hpp"
#include "pairsel/vlad.hpp"

namespace pairsel {

struct HnswParams {
  std::size_t M = 32;                 // max neighbors on layers > 0
  std::size_t M0 = 0;                 // max neighbors on layer 0; 0 selects 2 * M
  std::size_t ef_construction = 200;
  std::size_t ef_search = 128;        // a query uses max(ef_search, topk)
  double ml = 0.0;                    // level multiplier; 0 selects 1 / ln(M)
  std::uint64_t seed = 0;

  /// Copy with the derived defaults filled in. Throws InvalidConfig when
  /// M < 2, ef_construction < M or ef_search == 0.
  HnswParams resolved() const;
};

struct Neighbor {
  std::uint64_t image_id = 0;
  double distance = 0.0;
  bool operator==(const Neighbor&) const = default;
};

struct SearchStats {
  std::size_t distance_computations = 0;
};

struct HnswAudit {
  std::vector<std::string> problems;  // empty when all structural invariants hold
  std::size_t edges = 0;              // undirected edges summed over layers
  std::size_t layer0_components = 0;
  bool ok() const { return problems.empty(); }
};

class HnswIndex {
 public:
  /// Rows of `vectors` are the points; `ids` their image ids.
  /// Throws DuplicateImageId or DimensionMismatch.
  static HnswIndex build(Matrix vectors, std::vector<std::uint64_t> ids, const HnswParams& params);
  /// Indexes the non-degenerate descriptors; degenerate ones are logged and skipped.
  static HnswIndex build(std::span<const VladDescriptor> vlads, const HnswParams& params);

  /// Up to `topk` results ordered by (distance, image_id). `ef_search` of 0
  /// uses the index parameter. Throws EmptyIndex or DimensionMismatch.
  std::vector<Neighbor> search(std::span<const float> query, std::size_t topk, std::size_t ef_search = 0,
                               SearchStats* stats = nullptr) const;

  HnswAudit audit() const;

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return vectors_.cols; }
  int max_layer() const { return max_layer_; }
  std::uint32_t entry_point() const { return entry_; }
  int level(std::uint32_t v) const { return static_cast<int>(links_[v].size()) - 1; }
  const std::vector<std::uint32_t>& neighbors(std::uint32_t v, int layer) const { return links_[v][layer]; }
  std::uint64_t image_id(std::uint32_t v) const { return ids_[v]; }
  const HnswParams& params() const { return params_; }
  const Matrix& vectors() const { return vectors_; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

  /// "UVH1" persistence. Vectors are not copied: the file refers to the
  /// "UVL1" file they came from and records its content hash.
  void save(const std::filesystem::path& path, const std::filesystem::path& vlad_path) const;
  /// Throws ContentMismatch when the referenced vector file changed.
  static HnswIndex load(const std::filesystem::path& path);

 private:
  class Builder;

  HnswParams params_;
  Matrix vectors_;
  std::vector<std::uint64_t> ids_;
  std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // [vertex][layer] -> neighbors
  std::uint32_t entry_ = 0;
  int max_layer_ = -1;
};

/// Exact scan; ties go to the lower image id. Throws EmptyInput.
std::vector<Neighbor> brute_force_knn(const Matrix& vectors, std::span<const std::uint64_t> ids,
                                      std::span<const float> query, std::size_t topk);

}  // namespace pairsel
