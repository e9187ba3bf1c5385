// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pairsel/descriptor_io.hpp"
#include "pairsel/geometry.hpp"
#include "pairsel/verification.hpp"

namespace pairsel {

struct ImageDims {
  std::uint64_t image_id = 0;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  bool operator==(const ImageDims&) const = default;
};

struct EdgeWeights {
  double w = 0.0;          // R_ew * w_inlier + (1 - R_ew) * w_overlap
  double w_inlier = 0.0;   // ln N_inlier / ln N_max
  double w_overlap = 0.0;  // (CH_i + CH_j) / (A_i + A_j)
};

/// Throws InvalidDims for a zero image area and InvalidArgument when
/// N_inlier < 2 or N_max < N_inlier.
EdgeWeights edge_weight(std::size_t n_inlier, std::size_t n_max_inlier, double hull_area_a, double hull_area_b,
                        const ImageDims& a, const ImageDims& b, double r_ew = 0.5);

/// Hulls of the inlier keypoints of each image.
EdgeWeights edge_weight(const VerifiedPair& pair, const DescriptorSet& a, const DescriptorSet& b,
                        std::size_t n_max_inlier, double r_ew = 0.5);

struct ViewEdge {
  std::uint64_t i = 0;  // i < j
  std::uint64_t j = 0;
  double w = 0.0;
  std::size_t n_inlier = 0;
  double w_inlier = 0.0;
  double w_overlap = 0.0;
};

struct ViewGraph {
  std::vector<ImageDims> vertices;  // ascending image id
  std::vector<ViewEdge> edges;      // sorted by (i, j)
  double r_ew = 0.5;
  std::size_t n_max_inlier = 0;

  /// Vertices without any edge.
  std::vector<std::uint64_t> isolated() const;
};

/// One edge per verified pair; N_max is taken over all pairs first.
/// `sets` supplies image sizes and keypoints.
ViewGraph build_view_graph(std::span<const VerifiedPair> pairs, std::span<const DescriptorSet> sets,
                           double r_ew = 0.5, Exec exec = Exec::parallel);

/// Text edge list `i j w_ij N_inlier w_inlier w_overlap` plus `<path>.json`
/// holding the vertices, R_ew, N_max and the isolated vertices.
void write_view_graph(const ViewGraph& graph, const std::filesystem::path& path);
ViewGraph read_view_graph(const std::filesystem::path& path);

}  // namespace pairsel
