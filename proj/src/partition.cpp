// SPDX-License-Identifier: Apache-2.0
#include "pairsel/partition.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "pairsel/log.hpp"

namespace pairsel {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

/// L_sym restricted to the complement of the unit vector `u`.
struct RestrictedLaplacian {
  const WeightedGraph& g;
  std::vector<double> inv_sqrt_deg;
  std::vector<double> u;

  explicit RestrictedLaplacian(const WeightedGraph& graph) : g(graph), inv_sqrt_deg(graph.size()), u(graph.size()) {
    double norm2 = 0.0;
    for (std::uint32_t v = 0; v < g.size(); ++v) {
      const double d = g.degree(v);
      if (!(d > 0.0)) throw Error(Errc::Disconnected, "vertex " + std::to_string(v) + " has no edges");
      inv_sqrt_deg[v] = 1.0 / std::sqrt(d);
      u[v] = std::sqrt(d);
      norm2 += d;
    }
    for (double& x : u) x /= std::sqrt(norm2);
  }

  void project(std::vector<double>& x) const { axpy(-dot(u, x), u, x); }

  void apply(const std::vector<double>& x, std::vector<double>& y) const {
    for (std::uint32_t v = 0; v < g.size(); ++v) {
      double s = 0.0;
      for (const auto& [w_to, w] : g.adj[v]) s += w * inv_sqrt_deg[w_to] * x[w_to];
      y[v] = x[v] - inv_sqrt_deg[v] * s;
    }
  }

  // Conjugate gradients for L x = b on the complement of u.
  std::vector<double> solve(std::vector<double> b) const {
    const std::size_t n = g.size();
    project(b);
    std::vector<double> x(n, 0.0), r = b, p = b, ap(n);
    const double target = 1e-26 * dot(b, b);
    double rr = dot(r, r);
    const std::size_t cap = std::max<std::size_t>(1000, 10 * n);
    for (std::size_t it = 0; it < cap && rr > target; ++it) {
      apply(p, ap);
      project(ap);
      const double pap = dot(p, ap);
      if (!(pap > 0.0)) break;
      const double alpha = rr / pap;
      axpy(alpha, p, x);
      axpy(-alpha, ap, r);
      project(r);
      const double rr_next = dot(r, r);
      const double beta = rr_next / rr;
      rr = rr_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    project(x);
    return x;
  }
};

// Minimum-Ncut prefix of `order`.
Bisection sweep(const WeightedGraph& g, const std::vector<std::uint32_t>& order) {
  const std::size_t n = g.size();
  std::vector<double> deg(n);
  double total = 0.0;
  for (std::uint32_t v = 0; v < n; ++v) total += (deg[v] = g.degree(v));
  std::vector<std::uint8_t> in_a(n, 0);
  double assoc_a = 0.0, cut = 0.0, best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const std::uint32_t x = order[k];
    double to_a = 0.0;
    for (const auto& [y, w] : g.adj[x]) {
      if (in_a[y]) to_a += w;
    }
    in_a[x] = 1;
    assoc_a += deg[x];
    cut += deg[x] - 2.0 * to_a;
    const double value = cut / assoc_a + cut / (total - assoc_a);
    if (value < best) {
      best = value;
      best_k = k + 1;
    }
  }
  std::vector<std::uint8_t> side(n, 1);
  for (std::size_t k = 0; k < best_k; ++k) side[order[k]] = 0;
  if (side[0] == 1) {
    for (auto& s : side) s ^= 1;
  }
  Bisection out;
  out.ncut = ncut_value(g, side, &out.cut);
  for (std::uint32_t v = 0; v < n; ++v) (side[v] == 0 ? out.a : out.b).push_back(v);
  return out;
}

std::vector<std::uint32_t> bfs_order(const WeightedGraph& g) {
  const std::size_t n = g.size();
  std::uint32_t start = 0;
  for (std::uint32_t v = 1; v < n; ++v) {
    if (g.degree(v) > g.degree(start)) start = v;
  }
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::uint32_t> order{start};
  seen[start] = 1;
  for (std::size_t head = 0; head < order.size(); ++head) {
    std::vector<std::uint32_t> next;
    for (const auto& [y, w] : g.adj[order[head]]) {
      if (!seen[y]) {
        seen[y] = 1;
        next.push_back(y);
      }
    }
    std::sort(next.begin(), next.end());
    order.insert(order.end(), next.begin(), next.end());
  }
  return order;
}

WeightedGraph induced(const WeightedGraph& g, const std::vector<std::uint32_t>& vertices) {
  std::unordered_map<std::uint32_t, std::uint32_t> local;
  for (std::uint32_t i = 0; i < vertices.size(); ++i) local.emplace(vertices[i], i);
  WeightedGraph sub(vertices.size());
  for (std::uint32_t i = 0; i < vertices.size(); ++i) {
    for (const auto& [y, w] : g.adj[vertices[i]]) {
      const auto it = local.find(y);
      if (it != local.end()) sub.adj[i].emplace_back(it->second, w);
    }
  }
  return sub;
}

}  // namespace

void WeightedGraph::add_edge(std::uint32_t a, std::uint32_t b, double w) {
  if (a == b) throw Error(Errc::InvalidArgument, "self-loop at vertex " + std::to_string(a));
  adj[a].emplace_back(b, w);
  adj[b].emplace_back(a, w);
}

double WeightedGraph::degree(std::uint32_t v) const {
  double d = 0.0;
  for (const auto& [u, w] : adj[v]) d += w;
  return d;
}

double ncut_value(const WeightedGraph& g, const std::vector<std::uint8_t>& side, double* cut_out) {
  double cut = 0.0, assoc[2] = {0.0, 0.0};
  for (std::uint32_t v = 0; v < g.size(); ++v) {
    for (const auto& [u, w] : g.adj[v]) {
      assoc[side[v]] += w;
      if (side[v] != side[u] && v < u) cut += w;
    }
  }
  if (cut_out) *cut_out = cut;
  if (cut == 0.0) return 0.0;
  return cut / assoc[0] + cut / assoc[1];
}

std::vector<std::vector<std::uint32_t>> connected_components(const WeightedGraph& g) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint8_t> seen(g.size(), 0);
  for (std::uint32_t s = 0; s < g.size(); ++s) {
    if (seen[s]) continue;
    std::vector<std::uint32_t> comp{s};
    seen[s] = 1;
    for (std::size_t head = 0; head < comp.size(); ++head) {
      for (const auto& [y, w] : g.adj[comp[head]]) {
        if (!seen[y]) {
          seen[y] = 1;
          comp.push_back(y);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

FiedlerVector fiedler_vector(const WeightedGraph& g, std::uint64_t seed, const EigenConfig& cfg) {
  const std::size_t n = g.size();
  if (n < 2) throw Error(Errc::TooSmall, "graph with fewer than two vertices");
  const RestrictedLaplacian lap(g);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> x(n);
  for (double& v : x) v = normal(rng);
  lap.project(x);
  const auto normalize = [](std::vector<double>& v) {
    const double nv = std::sqrt(dot(v, v));
    if (nv > 0) {
      for (double& e : v) e /= nv;
    }
    return nv;
  };
  normalize(x);

  FiedlerVector out;
  std::vector<double> lx(n), res(n);
  for (out.iterations = 1; out.iterations <= cfg.max_iters; ++out.iterations) {
    x = lap.solve(x);
    if (normalize(x) == 0.0) break;
    lap.apply(x, lx);
    out.lambda = dot(x, lx);
    for (std::size_t i = 0; i < n; ++i) res[i] = lx[i] - out.lambda * x[i];
    out.residual = std::sqrt(dot(res, res));
    if (out.residual <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  out.iterations = std::min(out.iterations, cfg.max_iters);
  out.v = std::move(x);
  return out;
}

Bisection normalized_cut_bisect(const WeightedGraph& g, std::uint64_t seed, const EigenConfig& cfg) {
  if (g.size() < 2) throw Error(Errc::TooSmall, "graph with fewer than two vertices");
  if (connected_components(g).size() > 1) throw Error(Errc::Disconnected, "bisection of a disconnected graph");

  const FiedlerVector f = fiedler_vector(g, seed, cfg);
  if (!f.converged) {
    log::warn("eigensolver did not converge on a " + std::to_string(g.size()) +
              "-vertex graph (residual " + std::to_string(f.residual) + "); using a greedy bisection");
    Bisection b = sweep(g, bfs_order(g));
    b.spectral = false;
    return b;
  }
  std::vector<double> y(g.size());
  for (std::uint32_t v = 0; v < g.size(); ++v) y[v] = f.v[v] / std::sqrt(g.degree(v));
  std::vector<std::uint32_t> order(g.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return y[a] < y[b]; });
  return sweep(g, order);
}

std::uint32_t PartitionResult::cluster_of(std::uint64_t image_id) const {
  const auto it = std::lower_bound(image_ids.begin(), image_ids.end(), image_id);
  if (it == image_ids.end() || *it != image_id) {
    throw Error(Errc::InvalidArgument, "image " + std::to_string(image_id) + " is not partitioned");
  }
  return cluster[static_cast<std::size_t>(it - image_ids.begin())];
}

PartitionResult partition_graph(const WeightedGraph& g, std::size_t max_size, std::uint64_t seed,
                                const EigenConfig& cfg) {
  if (max_size == 0) throw Error(Errc::InvalidConfig, "max cluster size must be positive");
  PartitionResult out;
  std::vector<std::vector<std::uint32_t>> pending = connected_components(g);
  std::reverse(pending.begin(), pending.end());
  std::vector<std::vector<std::uint32_t>> done;
  while (!pending.empty()) {
    std::vector<std::uint32_t> cluster = std::move(pending.back());
    pending.pop_back();
    if (cluster.size() <= max_size) {
      done.push_back(std::move(cluster));
      continue;
    }
    const WeightedGraph sub = induced(g, cluster);
    const Bisection b = normalized_cut_bisect(sub, derive_seed(seed, cluster.front(), cluster.size()), cfg);
    out.splits.push_back({b.a.size(), b.b.size(), b.ncut, b.cut, b.spectral});
    for (const auto* side : {&b.b, &b.a}) {
      std::vector<std::uint32_t> global;
      for (std::uint32_t v : *side) global.push_back(cluster[v]);
      auto comps = connected_components(induced(g, global));
      for (auto it = comps.rbegin(); it != comps.rend(); ++it) {
        std::vector<std::uint32_t> part;
        for (std::uint32_t v : *it) part.push_back(global[v]);
        std::sort(part.begin(), part.end());
        pending.push_back(std::move(part));
      }
    }
  }
  std::sort(done.begin(), done.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  out.image_ids.resize(g.size());
  std::iota(out.image_ids.begin(), out.image_ids.end(), 0);
  out.cluster.assign(g.size(), 0);
  for (std::uint32_t c = 0; c < done.size(); ++c) {
    for (std::uint32_t v : done[c]) out.cluster[v] = c;
    out.sizes.push_back(done[c].size());
  }
  out.cluster_count = done.size();
  for (std::uint32_t v = 0; v < g.size(); ++v) {
    for (const auto& [u, w] : g.adj[v]) {
      if (v < u && out.cluster[v] != out.cluster[u]) out.cut_cost += w;
    }
  }
  return out;
}

PartitionResult partition_view_graph(const ViewGraph& graph, std::size_t max_size, std::uint64_t seed,
                                     const EigenConfig& cfg) {
  std::vector<std::uint64_t> ids;
  for (const ImageDims& v : graph.vertices) ids.push_back(v.image_id);
  std::sort(ids.begin(), ids.end());
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  for (std::uint32_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  WeightedGraph g(ids.size());
  for (const ViewEdge& e : graph.edges) {
    const auto a = index.find(e.i);
    const auto b = index.find(e.j);
    if (a == index.end() || b == index.end()) {
      throw Error(Errc::InvalidArgument, "edge " + std::to_string(e.i) + "-" + std::to_string(e.j) +
                                             " refers to an unknown image");
    }
    if (e.w > 0.0) g.add_edge(a->second, b->second, e.w);
  }
  for (auto& list : g.adj) std::sort(list.begin(), list.end());
  PartitionResult r = partition_graph(g, max_size, seed, cfg);
  r.image_ids = std::move(ids);
  return r;
}

void write_partition(const PartitionResult& result, const std::filesystem::path& path) {
  std::ofstream out(path);
  for (std::size_t v = 0; v < result.image_ids.size(); ++v) out << result.image_ids[v] << ' ' << result.cluster[v] << '\n';
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());

  nlohmann::ordered_json j;
  j["cluster_count"] = result.cluster_count;
  j["sizes"] = result.sizes;
  j["cut_cost"] = result.cut_cost;
  auto& splits = j["splits"] = nlohmann::ordered_json::array();
  for (const SplitRecord& s : result.splits) {
    splits.push_back({{"size_a", s.size_a}, {"size_b", s.size_b}, {"ncut", s.ncut}, {"cut", s.cut},
                      {"spectral", s.spectral}});
  }
  const std::filesystem::path summary(path.string() + ".json");
  std::ofstream js(summary);
  js << j.dump(2) << '\n';
  if (!js) throw Error(Errc::IoFailure, "cannot write " + summary.string());
}

}  // namespace pairsel
