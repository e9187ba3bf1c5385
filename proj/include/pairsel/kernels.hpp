// SPDX-License-Identifier: Apache-2.0
#pragma once

// Hot loops of the pipeline. Each kernel has one entry point taking an Exec
// policy: Exec::serial is the reference implementation kept for testing and
// Exec::parallel is the OpenMP path. The two must agree bit-for-bit; every
// reduction that crosses threads is merged in a fixed order.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "pairsel/common.hpp"

namespace pairsel::kernels {

/// Squared Euclidean distance of two f32 vectors with f64 accumulation.
inline double squared_l2(const float* a, const float* b, std::size_t d) noexcept {
  constexpr std::size_t kLanes = 8;
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= d; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) {
      const double diff = static_cast<double>(a[i + l]) - static_cast<double>(b[i + l]);
      acc[l] += diff * diff;
    }
  }
  double tail = 0.0;
  for (; i < d; ++i) {
    const double diff = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    tail += diff * diff;
  }
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail;
}

inline double squared_l2(std::span<const float> a, std::span<const float> b) noexcept {
  return squared_l2(a.data(), b.data(), a.size());
}

/// Index of the nearest row of `centers` (ties -> lowest index).
std::uint32_t nearest_row(const Matrix& centers, const float* v, double* dist2 = nullptr) noexcept;

struct Assignment {
  std::vector<std::uint32_t> labels;
  std::vector<double> dist2;
};

/// Nearest center for every row of `points`.
Assignment assign_nearest(const Matrix& points, const Matrix& centers, Exec exec);

/// Per-cluster coordinate sums (f64) and counts. Partial sums are formed over
/// fixed-size chunks and merged in chunk order, so the result does not depend
/// on the thread count.
struct ClusterSums {
  std::vector<double> sums;  // k x d
  std::vector<std::uint64_t> counts;
};
ClusterSums accumulate_clusters(const Matrix& points, std::span<const std::uint32_t> labels,
                                std::size_t k, Exec exec);

/// Best and second-best neighbour of one row.
struct TwoNearest {
  std::uint32_t best = 0;
  double best_dist2 = std::numeric_limits<double>::infinity();
  std::uint32_t second = 0;
  double second_dist2 = std::numeric_limits<double>::infinity();

  void offer(std::uint32_t idx, double d2) noexcept {
    if (d2 < best_dist2 || (d2 == best_dist2 && idx < best)) {
      second = best;
      second_dist2 = best_dist2;
      best = idx;
      best_dist2 = d2;
    } else if (d2 < second_dist2 || (d2 == second_dist2 && idx < second)) {
      second = idx;
      second_dist2 = d2;
    }
  }
  void merge(const TwoNearest& other) noexcept {
    if (other.best_dist2 != std::numeric_limits<double>::infinity()) offer(other.best, other.best_dist2);
    if (other.second_dist2 != std::numeric_limits<double>::infinity()) offer(other.second, other.second_dist2);
  }
};

struct MutualTwoNearest {
  std::vector<TwoNearest> a_to_b;  // one entry per row of a
  std::vector<TwoNearest> b_to_a;  // one entry per row of b
};

/// Exhaustive two-nearest-neighbour search in both directions, sharing one
/// pass over the a x b distance matrix.
MutualTwoNearest two_nearest_both_ways(const Matrix& a, const Matrix& b, Exec exec);

struct KnnHit {
  std::uint64_t id = 0;
  double dist2 = 0.0;
  friend bool operator<(const KnnHit& x, const KnnHit& y) noexcept {
    return x.dist2 < y.dist2 || (x.dist2 == y.dist2 && x.id < y.id);
  }
  bool operator==(const KnnHit&) const = default;
};

/// Exact k nearest rows of `base` for one query, ordered by (dist2, id).
std::vector<KnnHit> exhaustive_knn(const Matrix& base, std::span<const std::uint64_t> ids,
                                   const float* query, std::size_t topk);

/// exhaustive_knn for every row of `queries`.
std::vector<std::vector<KnnHit>> exhaustive_knn_batch(const Matrix& base,
                                                      std::span<const std::uint64_t> ids,
                                                      const Matrix& queries, std::size_t topk,
                                                      Exec exec);

}  // namespace pairsel::kernels
