// SPDX-License-Identifier: Apache-2.0
#include "pairsel/view_graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "pairsel/parallel.hpp"

namespace pairsel {
namespace {

std::filesystem::path header_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

}  // namespace

EdgeWeights edge_weight(std::size_t n_inlier, std::size_t n_max_inlier, double hull_area_a, double hull_area_b,
                        const ImageDims& a, const ImageDims& b, double r_ew) {
  const double area_a = static_cast<double>(a.width) * a.height;
  const double area_b = static_cast<double>(b.width) * b.height;
  if (!(area_a > 0.0) || !(area_b > 0.0)) {
    throw Error(Errc::InvalidDims, "image " + std::to_string(area_a > 0.0 ? b.image_id : a.image_id) +
                                       " has zero area");
  }
  if (n_inlier < 2 || n_max_inlier < n_inlier) {
    throw Error(Errc::InvalidArgument, "inlier count " + std::to_string(n_inlier) + " against maximum " +
                                           std::to_string(n_max_inlier));
  }
  EdgeWeights e;
  e.w_inlier = n_inlier == n_max_inlier
                   ? 1.0
                   : std::log(static_cast<double>(n_inlier)) / std::log(static_cast<double>(n_max_inlier));
  e.w_overlap = std::clamp((hull_area_a + hull_area_b) / (area_a + area_b), 0.0, 1.0);
  e.w = r_ew * e.w_inlier + (1.0 - r_ew) * e.w_overlap;
  return e;
}

EdgeWeights edge_weight(const VerifiedPair& pair, const DescriptorSet& a, const DescriptorSet& b,
                        std::size_t n_max_inlier, double r_ew) {
  std::vector<Point2> pa, pb;
  pa.reserve(pair.inliers.size());
  pb.reserve(pair.inliers.size());
  for (const FeatureMatch& m : pair.inliers) {
    if (m.index_a >= a.features.size() || m.index_b >= b.features.size()) {
      throw Error(Errc::InvalidArgument, "inlier index outside images " + std::to_string(pair.i) + "/" +
                                             std::to_string(pair.j));
    }
    pa.push_back({a.features[m.index_a].x, a.features[m.index_a].y});
    pb.push_back({b.features[m.index_b].x, b.features[m.index_b].y});
  }
  return edge_weight(pair.n_inlier(), n_max_inlier, convex_hull(std::move(pa)).area, convex_hull(std::move(pb)).area,
                     {a.image_id, a.image_width, a.image_height}, {b.image_id, b.image_width, b.image_height}, r_ew);
}

std::vector<std::uint64_t> ViewGraph::isolated() const {
  std::vector<std::uint64_t> touched;
  for (const ViewEdge& e : edges) {
    touched.push_back(e.i);
    touched.push_back(e.j);
  }
  std::sort(touched.begin(), touched.end());
  std::vector<std::uint64_t> out;
  for (const ImageDims& v : vertices) {
    if (!std::binary_search(touched.begin(), touched.end(), v.image_id)) out.push_back(v.image_id);
  }
  return out;
}

ViewGraph build_view_graph(std::span<const VerifiedPair> pairs, std::span<const DescriptorSet> sets, double r_ew,
                           Exec exec) {
  ViewGraph g;
  g.r_ew = r_ew;
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    by_id.emplace(sets[s].image_id, s);
    g.vertices.push_back({sets[s].image_id, sets[s].image_width, sets[s].image_height});
  }
  std::sort(g.vertices.begin(), g.vertices.end(),
            [](const ImageDims& a, const ImageDims& b) { return a.image_id < b.image_id; });
  for (const VerifiedPair& p : pairs) g.n_max_inlier = std::max(g.n_max_inlier, p.n_inlier());

  g.edges.resize(pairs.size());
  for_each_index(pairs.size(), exec, [&](std::size_t k) {
    const VerifiedPair& p = pairs[k];
    const auto a = by_id.find(p.i);
    const auto b = by_id.find(p.j);
    if (a == by_id.end() || b == by_id.end()) {
      throw Error(Errc::InvalidArgument, "pair " + std::to_string(p.i) + "-" + std::to_string(p.j) +
                                             " refers to an unknown image");
    }
    if (p.i == p.j) throw Error(Errc::InvalidArgument, "self-pair " + std::to_string(p.i));
    const EdgeWeights w = edge_weight(p, sets[a->second], sets[b->second], g.n_max_inlier, r_ew);
    g.edges[k] = {std::min(p.i, p.j), std::max(p.i, p.j), w.w, p.n_inlier(), w.w_inlier, w.w_overlap};
  });
  std::sort(g.edges.begin(), g.edges.end(),
            [](const ViewEdge& x, const ViewEdge& y) { return std::pair{x.i, x.j} < std::pair{y.i, y.j}; });
  const auto dup = std::adjacent_find(g.edges.begin(), g.edges.end(),
                                      [](const ViewEdge& x, const ViewEdge& y) { return x.i == y.i && x.j == y.j; });
  if (dup != g.edges.end()) {
    throw Error(Errc::InvalidArgument, "pair " + std::to_string(dup->i) + "-" + std::to_string(dup->j) + " repeats");
  }
  return g;
}

void write_view_graph(const ViewGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path);
  out.precision(17);
  for (const ViewEdge& e : graph.edges) {
    out << e.i << ' ' << e.j << ' ' << e.w << ' ' << e.n_inlier << ' ' << e.w_inlier << ' ' << e.w_overlap << '\n';
  }
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());

  nlohmann::ordered_json j;
  j["vertex_count"] = graph.vertices.size();
  j["edge_count"] = graph.edges.size();
  j["r_ew"] = graph.r_ew;
  j["n_max_inlier"] = graph.n_max_inlier;
  j["isolated"] = graph.isolated();
  auto& vs = j["vertices"] = nlohmann::ordered_json::array();
  for (const ImageDims& v : graph.vertices) vs.push_back({v.image_id, v.width, v.height});
  std::ofstream header(header_path(path));
  header << j.dump(2) << '\n';
  if (!header) throw Error(Errc::IoFailure, "cannot write " + header_path(path).string());
}

ViewGraph read_view_graph(const std::filesystem::path& path) {
  std::ifstream hin(header_path(path));
  if (!hin) throw Error(Errc::IoFailure, "cannot open " + header_path(path).string());
  ViewGraph g;
  try {
    const nlohmann::json j = nlohmann::json::parse(hin);
    g.r_ew = j.at("r_ew").get<double>();
    g.n_max_inlier = j.at("n_max_inlier").get<std::size_t>();
    for (const auto& v : j.at("vertices")) {
      g.vertices.push_back({v.at(0).get<std::uint64_t>(), v.at(1).get<std::uint32_t>(), v.at(2).get<std::uint32_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedHeader, header_path(path).string() + ": " + e.what());
  }
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  ViewEdge e;
  while (in >> e.i >> e.j >> e.w >> e.n_inlier >> e.w_inlier >> e.w_overlap) g.edges.push_back(e);
  if (!in.eof()) throw Error(Errc::MalformedHeader, path.string() + " is not an edge list");
  return g;
}

}  // namespace pairsel
