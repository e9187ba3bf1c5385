// SPDX-License-Identifier: Apache-2.0
#include "pairsel/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "pairsel/parallel.hpp"

namespace pairsel {

SimilarityList normalize_similarities(std::uint64_t query_id, std::span<const Neighbor> neighbors) {
  if (neighbors.empty()) throw Error(Errc::EmptyList, "no candidates for image " + std::to_string(query_id));
  SimilarityList list;
  list.query_id = query_id;
  list.d_min = neighbors.front().distance;
  list.d_max = neighbors.front().distance;
  for (const Neighbor& n : neighbors) {
    list.d_min = std::min(list.d_min, n.distance);
    list.d_max = std::max(list.d_max, n.distance);
  }
  list.degenerate = list.d_max == list.d_min;
  const double range = list.d_max - list.d_min;
  for (const Neighbor& n : neighbors) {
    const double s = list.degenerate ? 1.0 : (list.d_max - n.distance) / range;
    list.candidates.push_back({n.image_id, n.distance, s});
  }
  return list;
}

PowerFit fit_power_curve(const SimilarityList& list, std::size_t sample_count) {
  PowerFit fit;
  fit.samples = std::min(list.candidates.size(), sample_count);
  if (fit.samples == 0) throw Error(Errc::InsufficientSamples, "no similarity samples");

  double sum = 0.0;
  bool all_equal = true;
  for (std::size_t r = 0; r < fit.samples; ++r) {
    const double s = list.candidates[r].similarity;
    sum += s;
    all_equal = all_equal && s == list.candidates[0].similarity;
  }
  if (all_equal) {
    throw Error(Errc::DegenerateScores, "all similarities of image " + std::to_string(list.query_id) + " are equal");
  }
  fit.mu = sum / static_cast<double>(fit.samples);
  double var = 0.0;
  for (std::size_t r = 0; r < fit.samples; ++r) {
    const double e = list.candidates[r].similarity - fit.mu;
    var += e * e;
  }
  fit.delta = std::sqrt(var / static_cast<double>(fit.samples));

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t r = 0; r < fit.samples; ++r) {
    const double s = list.candidates[r].similarity;
    if (!(s > kFitFloor)) continue;
    const double lx = std::log(static_cast<double>(r + 1));
    const double ly = std::log(s);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++fit.fit_points;
  }
  if (fit.fit_points < 8) {
    throw Error(Errc::InsufficientSamples, "image " + std::to_string(list.query_id) + " has " +
                                               std::to_string(fit.fit_points) + " positive similarities");
  }
  const double n = static_cast<double>(fit.fit_points);
  const double denom = n * sxx - sx * sx;
  fit.b = (n * sxy - sx * sy) / denom;
  const double log_a = (sy - fit.b * sx) / n;
  fit.a = std::exp(log_a);

  double ss = 0.0;
  for (std::size_t r = 0; r < fit.samples; ++r) {
    const double s = list.candidates[r].similarity;
    if (!(s > kFitFloor)) continue;
    const double e = std::log(s) - (log_a + fit.b * std::log(static_cast<double>(r + 1)));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

std::size_t select_count(const SimilarityList& list, const PowerFit& fit, const SelectionConfig& cfg) {
  const double t = fit.mu + cfg.kappa * fit.delta;
  std::size_t n = 0;
  while (n < list.candidates.size() && list.candidates[n].similarity > t) ++n;
  n = std::clamp(n, cfg.min_select, std::max(cfg.min_select, cfg.max_select));
  return std::min(n, list.candidates.size());
}

std::vector<Candidate> select_pairs(const SimilarityList& list, const PowerFit& fit, const SelectionConfig& cfg) {
  const std::size_t n = select_count(list, fit, cfg);
  return {list.candidates.begin(), list.candidates.begin() + static_cast<std::ptrdiff_t>(n)};
}

bool MatchPairCandidateSet::contains(std::uint64_t a, std::uint64_t b) const {
  if (a > b) std::swap(a, b);
  const auto it = std::lower_bound(pairs.begin(), pairs.end(), std::pair{a, b}, [](const CandidatePair& p, const auto& key) {
    return std::pair{p.i, p.j} < key;
  });
  return it != pairs.end() && it->i == a && it->j == b;
}

RetrievalResult retrieve_pairs(std::span<const std::uint64_t> query_ids, const NeighborSource& source,
                               const RetrievalConfig& cfg) {
  RetrievalResult out;
  out.queries.resize(query_ids.size());
  std::vector<std::vector<Candidate>> chosen(query_ids.size());
  for_each_index(query_ids.size(), cfg.exec, [&](std::size_t q) {
    const std::uint64_t self = query_ids[q];
    std::vector<Neighbor> hits = source(q, cfg.sample_count + 1);
    const auto it = std::find_if(hits.begin(), hits.end(), [&](const Neighbor& n) { return n.image_id == self; });
    if (it != hits.end()) {
      hits.erase(it);
    } else if (hits.size() > cfg.sample_count) {
      hits.pop_back();
    }
    QuerySummary& summary = out.queries[q];
    summary.query_id = self;
    summary.candidates = hits.size();
    if (hits.empty()) return;

    const SimilarityList list = normalize_similarities(self, hits);
    summary.degenerate = list.degenerate;
    std::size_t n = std::min(cfg.selection.min_select, list.candidates.size());
    try {
      summary.fit = fit_power_curve(list, cfg.sample_count);
      summary.fit_ok = true;
      summary.threshold = summary.fit.mu + cfg.selection.kappa * summary.fit.delta;
      n = select_count(list, summary.fit, cfg.selection);
    } catch (const Error& e) {
      if (e.code() != Errc::InsufficientSamples && e.code() != Errc::DegenerateScores) throw;
    }
    summary.selected = n;
    chosen[q].assign(list.candidates.begin(), list.candidates.begin() + static_cast<std::ptrdiff_t>(n));
  });

  std::map<std::pair<std::uint64_t, std::uint64_t>, CandidatePair> merged;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    for (const Candidate& c : chosen[q]) {
      const std::uint64_t a = std::min(query_ids[q], c.image_id);
      const std::uint64_t b = std::max(query_ids[q], c.image_id);
      auto [it, fresh] = merged.try_emplace({a, b});
      CandidatePair& p = it->second;
      if (fresh) {
        p.i = a;
        p.j = b;
        p.similarity = c.similarity;
      } else {
        p.similarity = std::max(p.similarity, c.similarity);
      }
      p.sources.push_back(query_ids[q]);
    }
  }
  out.pairs.pairs.reserve(merged.size());
  for (auto& [key, p] : merged) {
    std::sort(p.sources.begin(), p.sources.end());
    out.pairs.pairs.push_back(std::move(p));
  }
  return out;
}

RetrievalResult retrieve_all_pairs(const HnswIndex& index, std::span<const VladDescriptor> vlads,
                                   const RetrievalConfig& cfg) {
  std::vector<std::uint64_t> ids;
  std::vector<const VladDescriptor*> queries;
  for (const VladDescriptor& v : vlads) {
    if (v.degenerate) continue;
    ids.push_back(v.image_id);
    queries.push_back(&v);
  }
  const NeighborSource source = [&](std::size_t q, std::size_t depth) {
    const std::size_t ef = cfg.ef_search ? cfg.ef_search : std::max(index.params().ef_search, depth);
    return index.search(queries[q]->values, depth, ef);
  };
  return retrieve_pairs(ids, source, cfg);
}

void write_pairs(const MatchPairCandidateSet& pairs, const std::filesystem::path& path) {
  std::ofstream out(path);
  out.precision(9);
  for (const CandidatePair& p : pairs.pairs) out << p.i << ' ' << p.j << ' ' << p.similarity << '\n';
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
}

MatchPairCandidateSet read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  MatchPairCandidateSet set;
  CandidatePair p;
  while (in >> p.i >> p.j >> p.similarity) {
    if (p.i > p.j) std::swap(p.i, p.j);
    if (p.i == p.j) throw Error(Errc::InvalidArgument, path.string() + " lists a self-pair");
    set.pairs.push_back(p);
  }
  if (!in.eof()) throw Error(Errc::InvalidArgument, path.string() + " is not a pair list");
  std::sort(set.pairs.begin(), set.pairs.end(),
            [](const CandidatePair& a, const CandidatePair& b) { return std::pair{a.i, a.j} < std::pair{b.i, b.j}; });
  return set;
}

void write_retrieval_summary(const RetrievalResult& result, const RetrievalConfig& cfg,
                             const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["sample_count"] = cfg.sample_count;
  j["kappa"] = cfg.selection.kappa;
  j["min_select"] = cfg.selection.min_select;
  j["max_select"] = cfg.selection.max_select;
  j["pairs"] = result.pairs.size();
  auto& queries = j["queries"] = nlohmann::ordered_json::array();
  for (const QuerySummary& q : result.queries) {
    nlohmann::ordered_json e;
    e["image_id"] = q.query_id;
    e["candidates"] = q.candidates;
    e["fit_ok"] = q.fit_ok;
    e["degenerate"] = q.degenerate;
    e["a"] = q.fit.a;
    e["b"] = q.fit.b;
    e["mu"] = q.fit.mu;
    e["delta"] = q.fit.delta;
    e["threshold"] = q.threshold;
    e["selected"] = q.selected;
    queries.push_back(std::move(e));
  }
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path.string());
}

}  // namespace pairsel
