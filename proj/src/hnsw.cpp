// SPDX-License-Identifier: Apache-2.0
#include "pairsel/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "pairsel/binary_io.hpp"
#include "pairsel/kernels.hpp"
#include "pairsel/log.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kPairCacheLimit = std::size_t{1} << 22;

using Scored = std::pair<double, std::uint32_t>;  // (dist2, vertex)

/// Visited marks and a distance memo, reset in O(1) by bumping epochs.
struct Scratch {
  std::vector<std::uint32_t> visit_tag;
  std::vector<std::uint32_t> dist_tag;
  std::vector<double> dist;
  std::vector<std::uint32_t> fresh;
  std::uint32_t visit_epoch = 0;
  std::uint32_t dist_epoch = 0;

  void reset(std::size_t n) {
    if (visit_tag.size() != n) {
      visit_tag.assign(n, 0);
      dist_tag.assign(n, 0);
      dist.assign(n, 0.0);
      visit_epoch = dist_epoch = 0;
    }
    ++dist_epoch;
    if (dist_epoch == 0) {
      std::fill(dist_tag.begin(), dist_tag.end(), 0);
      dist_epoch = 1;
    }
  }
  void new_layer() {
    ++visit_epoch;
    if (visit_epoch == 0) {
      std::fill(visit_tag.begin(), visit_tag.end(), 0);
      visit_epoch = 1;
    }
  }
  bool visit(std::uint32_t v) {
    if (visit_tag[v] == visit_epoch) return false;
    visit_tag[v] = visit_epoch;
    return true;
  }
};

/// Best-first search of one layer. Returns up to `ef` vertices ascending by
/// (dist2, vertex). `row` maps a vertex to its vector for prefetching.
template <class Dist, class Links, class Row>
std::vector<Scored> search_layer(const std::vector<Scored>& entry, std::size_t ef, Dist&& dist, Links&& links,
                                 Row&& row, Scratch& scratch) {
  scratch.new_layer();
  std::priority_queue<Scored, std::vector<Scored>, std::greater<>> candidates;
  std::priority_queue<Scored> best;
  for (const Scored& e : entry) {
    if (!scratch.visit(e.second)) continue;
    candidates.push(e);
    best.push(e);
    if (best.size() > ef) best.pop();
  }
  while (!candidates.empty()) {
    const Scored cur = candidates.top();
    if (best.size() >= ef && cur > best.top()) break;
    candidates.pop();
    scratch.fresh.clear();
    for (std::uint32_t nb : links(cur.second)) {
      if (!scratch.visit(nb)) continue;
      scratch.fresh.push_back(nb);
      const char* p = reinterpret_cast<const char*>(row(nb));
      for (int line = 0; line < 4; ++line) __builtin_prefetch(p + 64 * line);
    }
    for (std::uint32_t nb : scratch.fresh) {
      const Scored s{dist(nb), nb};
      if (best.size() < ef || s < best.top()) {
        candidates.push(s);
        best.push(s);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Scored> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top();
    best.pop();
  }
  return out;
}

/// Diversity heuristic: keep a candidate when it is closer to the base than
/// to every neighbor kept so far; top up with the pruned ones nearest-first.
template <class PairDist>
std::vector<std::uint32_t> select_neighbors(const std::vector<Scored>& sorted, std::size_t cap, PairDist&& pair_dist) {
  std::vector<std::uint32_t> kept;
  std::vector<std::uint32_t> pruned;
  for (const auto& [d, c] : sorted) {
    if (kept.size() >= cap) break;
    bool diverse = true;
    for (std::uint32_t r : kept) {
      if (pair_dist(c, r) < d) {
        diverse = false;
        break;
      }
    }
    (diverse ? kept : pruned).push_back(c);
  }
  for (std::size_t i = 0; i < pruned.size() && kept.size() < cap; ++i) kept.push_back(pruned[i]);
  return kept;
}

void erase_value(std::vector<std::uint32_t>& v, std::uint32_t x) {
  const auto it = std::find(v.begin(), v.end(), x);
  if (it != v.end()) v.erase(it);
}

}  // namespace

HnswParams HnswParams::resolved() const {
  HnswParams p = *this;
  if (p.M < 2) throw Error(Errc::InvalidConfig, "M must be at least 2");
  if (p.M0 == 0) p.M0 = 2 * p.M;
  if (p.M0 < p.M) throw Error(Errc::InvalidConfig, "M0 must be at least M");
  if (p.ef_construction < p.M) throw Error(Errc::InvalidConfig, "ef_construction must be at least M");
  if (p.ef_search == 0) throw Error(Errc::InvalidConfig, "ef_search must be positive");
  if (p.ml == 0.0) p.ml = 1.0 / std::log(static_cast<double>(p.M));
  if (!(p.ml > 0.0)) throw Error(Errc::InvalidConfig, "ml must be positive");
  return p;
}

class HnswIndex::Builder {
 public:
  explicit Builder(HnswIndex& index) : ix_(index) {}

  auto row_fn() {
    return [this](std::uint32_t v) { return ix_.vectors_.row_ptr(v); };
  }

  auto pair_dist_fn() {
    return [this](std::uint32_t a, std::uint32_t b) { return pair_dist(a, b); };
  }

  void insert(std::uint32_t q, int level) {
    auto& links = ix_.links_;
    links[q].resize(static_cast<std::size_t>(level) + 1);
    if (ix_.max_layer_ < 0) {
      ix_.entry_ = q;
      ix_.max_layer_ = level;
      return;
    }
    scratch_.reset(ix_.size());
    const float* qv = ix_.vectors_.row_ptr(q);
    auto dist_q = [&](std::uint32_t v) {
      if (scratch_.dist_tag[v] != scratch_.dist_epoch) {
        scratch_.dist_tag[v] = scratch_.dist_epoch;
        scratch_.dist[v] = kernels::squared_l2(qv, ix_.vectors_.row_ptr(v), ix_.dim());
      }
      return scratch_.dist[v];
    };

    std::vector<Scored> entry{{dist_q(ix_.entry_), ix_.entry_}};
    for (int layer = ix_.max_layer_; layer > level; --layer) {
      entry = search_layer(entry, 1, dist_q, [&](std::uint32_t v) -> const auto& { return links[v][layer]; },
                           row_fn(), scratch_);
    }
    for (int layer = std::min(level, ix_.max_layer_); layer >= 0; --layer) {
      const std::vector<Scored> found = search_layer(
          entry, ix_.params_.ef_construction, dist_q,
          [&](std::uint32_t v) -> const auto& { return links[v][layer]; }, row_fn(), scratch_);
      links[q][layer] = select_neighbors(found, ix_.params_.M, pair_dist_fn());
      const std::vector<std::uint32_t> chosen = links[q][layer];
      for (std::uint32_t n : chosen) connect(n, q, layer);
      entry = found;
    }
    if (level > ix_.max_layer_) {
      ix_.max_layer_ = level;
      ix_.entry_ = q;
    }
  }

 private:
  double pair_dist(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = (static_cast<std::uint64_t>(a) << 32) | b;
    if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
    if (cache_.size() >= kPairCacheLimit) cache_.clear();
    const double d = kernels::squared_l2(ix_.vectors_.row_ptr(a), ix_.vectors_.row_ptr(b), ix_.dim());
    cache_.emplace(key, d);
    return d;
  }

  // Adds the reverse edge n -> q; on overflow re-selects n's neighbors and
  // drops the removed edge from both endpoints.
  void connect(std::uint32_t n, std::uint32_t q, int layer) {
    auto& list = ix_.links_[n][layer];
    list.push_back(q);
    const std::size_t cap = layer == 0 ? ix_.params_.M0 : ix_.params_.M;
    if (list.size() <= cap) return;
    std::vector<Scored> cand;
    cand.reserve(list.size());
    for (std::uint32_t c : list) cand.emplace_back(pair_dist(n, c), c);
    std::sort(cand.begin(), cand.end());
    std::vector<std::uint32_t> kept = select_neighbors(cand, cap, pair_dist_fn());
    for (const Scored& c : cand) {
      if (std::find(kept.begin(), kept.end(), c.second) == kept.end()) erase_value(ix_.links_[c.second][layer], n);
    }
    list = std::move(kept);
  }

  HnswIndex& ix_;
  Scratch scratch_;
  std::unordered_map<std::uint64_t, double> cache_;
};

HnswIndex HnswIndex::build(Matrix vectors, std::vector<std::uint64_t> ids, const HnswParams& params) {
  if (ids.size() != vectors.rows) {
    throw Error(Errc::DimensionMismatch, std::to_string(ids.size()) + " ids for " + std::to_string(vectors.rows) +
                                             " vectors");
  }
  {
    std::vector<std::uint64_t> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end()) throw Error(Errc::DuplicateImageId, "image id " + std::to_string(*dup) + " repeats");
  }
  HnswIndex ix;
  ix.params_ = params.resolved();
  ix.vectors_ = std::move(vectors);
  ix.ids_ = std::move(ids);
  ix.links_.resize(ix.ids_.size());

  std::mt19937_64 rng(ix.params_.seed);
  Builder builder(ix);
  for (std::uint32_t v = 0; v < ix.size(); ++v) {
    const double u = 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;  // (0, 1]
    const int level = static_cast<int>(std::floor(-std::log(u) * ix.params_.ml));
    builder.insert(v, level);
  }
  return ix;
}

HnswIndex HnswIndex::build(std::span<const VladDescriptor> vlads, const HnswParams& params) {
  const std::size_t dim = vlads.empty() ? 0 : vlads.front().values.size();
  for (const VladDescriptor& v : vlads) {
    if (v.values.size() != dim) throw Error(Errc::DimensionMismatch, "VLAD descriptors of mixed dimension");
    if (v.degenerate) log::info("image " + std::to_string(v.image_id) + " has a degenerate VLAD, not indexed");
  }
  std::vector<std::uint64_t> ids;
  Matrix m = stack_vlads(vlads, ids);
  m.cols = dim;
  return build(std::move(m), std::move(ids), params);
}

std::vector<Neighbor> HnswIndex::search(std::span<const float> query, std::size_t topk, std::size_t ef_search,
                                        SearchStats* stats) const {
  if (size() == 0) throw Error(Errc::EmptyIndex, "search on an empty index");
  if (query.size() != dim()) {
    throw Error(Errc::DimensionMismatch, "query of dimension " + std::to_string(query.size()) +
                                             " against index of dimension " + std::to_string(dim()));
  }
  if (topk == 0) return {};
  thread_local Scratch scratch;
  scratch.reset(size());
  std::size_t computed = 0;
  auto dist = [&](std::uint32_t v) {
    if (scratch.dist_tag[v] != scratch.dist_epoch) {
      scratch.dist_tag[v] = scratch.dist_epoch;
      scratch.dist[v] = kernels::squared_l2(query.data(), vectors_.row_ptr(v), dim());
      ++computed;
    }
    return scratch.dist[v];
  };
  auto row = [this](std::uint32_t v) { return vectors_.row_ptr(v); };

  std::vector<Scored> entry{{dist(entry_), entry_}};
  for (int layer = max_layer_; layer > 0; --layer) {
    entry = search_layer(entry, 1, dist, [&](std::uint32_t v) -> const auto& { return links_[v][layer]; }, row,
                         scratch);
  }
  const std::size_t ef = std::max(ef_search == 0 ? params_.ef_search : ef_search, topk);
  const std::vector<Scored> found =
      search_layer(entry, ef, dist, [&](std::uint32_t v) -> const auto& { return links_[v][0]; }, row, scratch);

  std::vector<kernels::KnnHit> hits;
  hits.reserve(found.size());
  for (const auto& [d2, v] : found) hits.push_back({ids_[v], d2});
  std::sort(hits.begin(), hits.end());
  hits.resize(std::min(hits.size(), topk));
  std::vector<Neighbor> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.id, std::sqrt(h.dist2)});
  if (stats) stats->distance_computations = computed;
  return out;
}

HnswAudit HnswIndex::audit() const {
  HnswAudit a;
  const auto note = [&](const std::string& s) {
    if (a.problems.size() < 50) a.problems.push_back(s);
  };
  if (size() == 0) return a;
  if (level(entry_) != max_layer_) note("entry point is not on the top layer");
  for (std::uint32_t v = 0; v < size(); ++v) {
    if (links_[v].empty()) note("vertex " + std::to_string(v) + " has no layer 0");
    if (level(v) > max_layer_) note("vertex " + std::to_string(v) + " above the top layer");
    for (int layer = 0; layer <= level(v); ++layer) {
      const auto& list = links_[v][layer];
      const std::size_t cap = layer == 0 ? params_.M0 : params_.M;
      if (list.size() > cap) note("vertex " + std::to_string(v) + " exceeds the degree cap on layer " + std::to_string(layer));
      std::unordered_set<std::uint32_t> seen;
      for (std::uint32_t u : list) {
        if (u == v) note("self-loop at vertex " + std::to_string(v));
        if (!seen.insert(u).second) note("duplicate edge at vertex " + std::to_string(v));
        if (u >= size() || level(u) < layer) {
          note("edge " + std::to_string(v) + "-" + std::to_string(u) + " leaves layer " + std::to_string(layer));
          continue;
        }
        const auto& back = links_[u][layer];
        if (std::find(back.begin(), back.end(), v) == back.end()) {
          note("edge " + std::to_string(v) + "->" + std::to_string(u) + " on layer " + std::to_string(layer) +
               " is one-way");
        }
        if (v < u) ++a.edges;
      }
    }
  }
  std::vector<std::uint8_t> seen(size(), 0);
  for (std::uint32_t s = 0; s < size(); ++s) {
    if (seen[s]) continue;
    ++a.layer0_components;
    std::vector<std::uint32_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      const std::uint32_t v = stack.back();
      stack.pop_back();
      if (links_[v].empty()) continue;
      for (std::uint32_t u : links_[v][0]) {
        if (u < size() && !seen[u]) {
          seen[u] = 1;
          stack.push_back(u);
        }
      }
    }
  }
  return a;
}

void HnswIndex::save(const std::filesystem::path& path, const std::filesystem::path& vlad_path) const {
  BinaryWriter out(path);
  out.magic("UVH1");
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(params_.M));
  out.u32(static_cast<std::uint32_t>(params_.M0));
  out.u32(static_cast<std::uint32_t>(params_.ef_construction));
  out.u32(static_cast<std::uint32_t>(params_.ef_search));
  out.f64(params_.ml);
  out.u64(params_.seed);
  out.u64(size());
  out.u32(static_cast<std::uint32_t>(dim()));
  out.u64(entry_);
  out.u32(static_cast<std::uint32_t>(max_layer_ + 1));

  const auto base = std::filesystem::absolute(path).parent_path();
  const auto ref = std::filesystem::absolute(vlad_path).lexically_relative(base);
  out.string(ref.empty() ? std::filesystem::absolute(vlad_path).generic_string() : ref.generic_string());
  out.u64(hash_file(vlad_path));

  for (std::uint32_t v = 0; v < size(); ++v) out.u64(ids_[v]);
  std::uint64_t records = 0;
  for (const auto& layers : links_) records += layers.size();
  out.u64(records);
  for (int layer = 0; layer <= max_layer_; ++layer) {
    for (std::uint32_t v = 0; v < size(); ++v) {
      if (level(v) < layer) continue;
      out.u32(static_cast<std::uint32_t>(layer));
      out.u64(v);
      out.u32(static_cast<std::uint32_t>(links_[v][layer].size()));
      for (std::uint32_t u : links_[v][layer]) out.u64(u);
    }
  }
  out.finish();
}

HnswIndex HnswIndex::load(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVH1");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  HnswIndex ix;
  ix.params_.M = in.u32();
  ix.params_.M0 = in.u32();
  ix.params_.ef_construction = in.u32();
  ix.params_.ef_search = in.u32();
  ix.params_.ml = in.f64();
  ix.params_.seed = in.u64();
  const std::uint64_t n = in.u64();
  const std::uint32_t dim = in.u32();
  ix.entry_ = static_cast<std::uint32_t>(in.u64());
  const std::uint32_t layers = in.u32();
  ix.max_layer_ = static_cast<int>(layers) - 1;
  std::filesystem::path ref = in.string();
  if (ref.is_relative()) ref = std::filesystem::absolute(path).parent_path() / ref;
  const std::uint64_t expected = in.u64();
  ix.ids_.resize(n);
  for (auto& id : ix.ids_) id = in.u64();
  ix.links_.resize(n);
  const std::uint64_t records = in.u64();
  for (std::uint64_t r = 0; r < records; ++r) {
    const std::uint32_t layer = in.u32();
    const std::uint64_t v = in.u64();
    const std::uint32_t degree = in.u32();
    if (v >= n || layer >= layers) throw Error(Errc::MalformedHeader, path.string() + " has an adjacency record out of range");
    auto& lv = ix.links_[v];
    if (lv.size() <= layer) lv.resize(layer + 1);
    auto& list = lv[layer];
    list.resize(degree);
    for (auto& u : list) u = static_cast<std::uint32_t>(in.u64());
  }

  if (hash_file(ref) != expected) {
    throw Error(Errc::ContentMismatch, ref.string() + " no longer matches the index " + path.string());
  }
  const std::vector<VladDescriptor> vlads = load_vlads(ref);
  std::unordered_map<std::uint64_t, const VladDescriptor*> by_id;
  for (const auto& v : vlads) by_id.emplace(v.image_id, &v);
  ix.vectors_ = Matrix(n, dim);
  for (std::uint64_t v = 0; v < n; ++v) {
    const auto it = by_id.find(ix.ids_[v]);
    if (it == by_id.end() || it->second->values.size() != dim) {
      throw Error(Errc::ContentMismatch, ref.string() + " lacks the vector of image " + std::to_string(ix.ids_[v]));
    }
    std::copy(it->second->values.begin(), it->second->values.end(), ix.vectors_.row_ptr(v));
  }
  return ix;
}

std::vector<Neighbor> brute_force_knn(const Matrix& vectors, std::span<const std::uint64_t> ids,
                                      std::span<const float> query, std::size_t topk) {
  if (vectors.rows == 0) throw Error(Errc::EmptyInput, "brute-force search over no vectors");
  if (query.size() != vectors.cols) {
    throw Error(Errc::DimensionMismatch, "query of dimension " + std::to_string(query.size()) +
                                             " against vectors of dimension " + std::to_string(vectors.cols));
  }
  std::vector<Neighbor> out;
  for (const auto& h : kernels::exhaustive_knn(vectors, ids, query.data(), topk)) {
    out.push_back({h.id, std::sqrt(h.dist2)});
  }
  return out;
}

}  // namespace pairsel
