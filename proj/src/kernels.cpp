// SPDX-License-Identifier: Apache-2.0
#include "pairsel/kernels.hpp"

#include <algorithm>

#include "pairsel/parallel.hpp"

namespace pairsel::kernels {
namespace {

constexpr std::size_t kChunk = 1024;

}  // namespace

std::uint32_t nearest_row(const Matrix& centers, const float* v, double* dist2) noexcept {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows; ++c) {
    const double d = squared_l2(centers.row_ptr(c), v, centers.cols);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  if (dist2) *dist2 = best_d;
  return best;
}

Assignment assign_nearest(const Matrix& points, const Matrix& centers, Exec exec) {
  Assignment out;
  out.labels.resize(points.rows);
  out.dist2.resize(points.rows);
  const std::size_t chunks = (points.rows + kChunk - 1) / kChunk;
  for_each_index(chunks, exec, [&](std::size_t chunk) {
    const std::size_t end = std::min(points.rows, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      out.labels[i] = nearest_row(centers, points.row_ptr(i), &out.dist2[i]);
    }
  });
  return out;
}

ClusterSums accumulate_clusters(const Matrix& points, std::span<const std::uint32_t> labels,
                                std::size_t k, Exec exec) {
  const std::size_t d = points.cols;
  const std::size_t chunks = (points.rows + kChunk - 1) / kChunk;
  std::vector<ClusterSums> partial(chunks);
  for_each_index(chunks, exec, [&](std::size_t chunk) {
    ClusterSums& p = partial[chunk];
    p.sums.assign(k * d, 0.0);
    p.counts.assign(k, 0);
    const std::size_t end = std::min(points.rows, (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      const std::uint32_t c = labels[i];
      const float* x = points.row_ptr(i);
      double* s = p.sums.data() + c * d;
      for (std::size_t j = 0; j < d; ++j) s[j] += x[j];
      ++p.counts[c];
    }
  });
  ClusterSums total;
  total.sums.assign(k * d, 0.0);
  total.counts.assign(k, 0);
  for (const ClusterSums& p : partial) {
    for (std::size_t i = 0; i < total.sums.size(); ++i) total.sums[i] += p.sums[i];
    for (std::size_t c = 0; c < k; ++c) total.counts[c] += p.counts[c];
  }
  return total;
}

MutualTwoNearest two_nearest_both_ways(const Matrix& a, const Matrix& b, Exec exec) {
  if (a.cols != b.cols && a.rows > 0 && b.rows > 0) {
    throw Error(Errc::DimensionMismatch, "descriptor dimensions differ");
  }
  constexpr std::size_t kRowBlock = 64;
  MutualTwoNearest out;
  out.a_to_b.resize(a.rows);
  const std::size_t blocks = (a.rows + kRowBlock - 1) / kRowBlock;
  std::vector<std::vector<TwoNearest>> column_partial(blocks);
  for_each_index(blocks, exec, [&](std::size_t blk) {
    auto& cols = column_partial[blk];
    cols.assign(b.rows, TwoNearest{});
    const std::size_t end = std::min(a.rows, (blk + 1) * kRowBlock);
    for (std::size_t i = blk * kRowBlock; i < end; ++i) {
      TwoNearest row;
      const float* x = a.row_ptr(i);
      for (std::size_t j = 0; j < b.rows; ++j) {
        const double d2 = squared_l2(x, b.row_ptr(j), a.cols);
        row.offer(static_cast<std::uint32_t>(j), d2);
        cols[j].offer(static_cast<std::uint32_t>(i), d2);
      }
      out.a_to_b[i] = row;
    }
  });
  out.b_to_a.assign(b.rows, TwoNearest{});
  for (const auto& cols : column_partial) {
    for (std::size_t j = 0; j < b.rows; ++j) out.b_to_a[j].merge(cols[j]);
  }
  return out;
}

std::vector<KnnHit> exhaustive_knn(const Matrix& base, std::span<const std::uint64_t> ids,
                                   const float* query, std::size_t topk) {
  std::vector<KnnHit> hits(base.rows);
  for (std::size_t i = 0; i < base.rows; ++i) {
    hits[i] = {ids[i], squared_l2(base.row_ptr(i), query, base.cols)};
  }
  const std::size_t k = std::min(topk, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end());
  hits.resize(k);
  return hits;
}

std::vector<std::vector<KnnHit>> exhaustive_knn_batch(const Matrix& base,
                                                      std::span<const std::uint64_t> ids,
                                                      const Matrix& queries, std::size_t topk,
                                                      Exec exec) {
  std::vector<std::vector<KnnHit>> out(queries.rows);
  for_each_index(queries.rows, exec, [&](std::size_t q) {
    out[q] = exhaustive_knn(base, ids, queries.row_ptr(q), topk);
  });
  return out;
}

}  // namespace pairsel::kernels
