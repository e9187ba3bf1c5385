// SPDX-License-Identifier: Apache-2.0
#pragma once

// Recursive normalized-cut partitioning of the view graph into clusters no
// larger than a size cap.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pairsel/view_graph.hpp"

namespace pairsel {

/// Undirected weighted graph on vertices 0..n-1 (both directions stored).
struct WeightedGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;

  explicit WeightedGraph(std::size_t n = 0) : adj(n) {}
  std::size_t size() const { return adj.size(); }
  void add_edge(std::uint32_t a, std::uint32_t b, double w);
  double degree(std::uint32_t v) const;
};

/// cut(A,B)/assoc(A,V) + cut(A,B)/assoc(B,V) for side[v] in {0,1}.
double ncut_value(const WeightedGraph& g, const std::vector<std::uint8_t>& side, double* cut = nullptr);

/// Connected components as vertex lists, each ascending, ordered by first vertex.
std::vector<std::vector<std::uint32_t>> connected_components(const WeightedGraph& g);

struct EigenConfig {
  double tol = 1e-8;
  std::size_t max_iters = 5000;
};

struct FiedlerVector {
  std::vector<double> v;  // unit eigenvector of L_sym for the second-smallest eigenvalue
  double lambda = 0.0;
  double residual = 0.0;  // ||L_sym v - lambda v||
  std::size_t iterations = 0;
  bool converged = false;
};

/// Inverse iteration on L_sym = I - D^-1/2 W D^-1/2 restricted to the
/// complement of the trivial eigenvector; each step solves by conjugate
/// gradients. The graph must be connected with positive degrees.
FiedlerVector fiedler_vector(const WeightedGraph& g, std::uint64_t seed, const EigenConfig& cfg = {});

struct Bisection {
  std::vector<std::uint32_t> a;  // ascending, holds vertex 0
  std::vector<std::uint32_t> b;  // ascending
  double ncut = 0.0;
  double cut = 0.0;
  bool spectral = true;  // false when the greedy fallback was used
};

/// Sweeps every split of the vertices sorted by D^-1/2 v and keeps the one of
/// minimum Ncut. Falls back to a breadth-first order from the highest-degree
/// vertex when the eigensolver does not converge.
/// Throws TooSmall (< 2 vertices) or Disconnected.
Bisection normalized_cut_bisect(const WeightedGraph& g, std::uint64_t seed, const EigenConfig& cfg = {});

struct SplitRecord {
  std::size_t size_a = 0;
  std::size_t size_b = 0;
  double ncut = 0.0;
  double cut = 0.0;
  bool spectral = true;
};

struct PartitionResult {
  std::vector<std::uint64_t> image_ids;  // ascending
  std::vector<std::uint32_t> cluster;    // parallel to image_ids
  std::size_t cluster_count = 0;
  std::vector<std::size_t> sizes;        // per cluster
  double cut_cost = 0.0;                 // weight of edges between clusters
  std::vector<SplitRecord> splits;

  std::uint32_t cluster_of(std::uint64_t image_id) const;
};

/// Splits into connected components, then bisects any cluster larger than
/// max_size until all comply. Cluster ids are dense and ordered by each
/// cluster's smallest image id.
PartitionResult partition_view_graph(const ViewGraph& graph, std::size_t max_size = 500, std::uint64_t seed = 0,
                                     const EigenConfig& cfg = {});

/// Same on a bare graph; vertex v gets image id v.
PartitionResult partition_graph(const WeightedGraph& g, std::size_t max_size, std::uint64_t seed,
                                const EigenConfig& cfg = {});

/// `image_id cluster_id` per line plus `<path>.json` with sizes and split costs.
void write_partition(const PartitionResult& result, const std::filesystem::path& path);

}  // namespace pairsel
