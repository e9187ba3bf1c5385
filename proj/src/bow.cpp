// SPDX-License-Identifier: Apache-2.0
#include "pairsel/bow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pairsel/binary_io.hpp"
#include "pairsel/codebook.hpp"
#include "pairsel/kernels.hpp"
#include "pairsel/parallel.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;

struct TreeBuilder {
  const Matrix& x;
  const VocabularyConfig& cfg;
  VocabularyTree& tree;
  std::vector<std::vector<float>> center_rows;  // per node, empty for the root

  // Splits `node` over the descriptors in `members`; children are appended
  // contiguously, then expanded depth-first so words follow DFS order.
  void expand(std::uint32_t node, const std::vector<std::uint32_t>& members, std::size_t level) {
    if (level >= cfg.depth || members.size() < cfg.branching) {
      tree.nodes[node].word = static_cast<std::int32_t>(tree.words++);
      return;
    }
    Matrix sub(members.size(), x.cols);
    for (std::size_t i = 0; i < members.size(); ++i) std::copy_n(x.row_ptr(members[i]), x.cols, sub.row_ptr(i));
    KMeansConfig km;
    km.k = cfg.branching;
    km.max_iters = cfg.kmeans_iters;
    km.seed = derive_seed(cfg.seed, node, level);
    km.exec = cfg.exec;
    const Codebook cb = train_codebook(sub, km);
    const kernels::Assignment asg = kernels::assign_nearest(sub, cb.centers, cfg.exec);

    std::vector<std::vector<std::uint32_t>> parts(cfg.branching);
    for (std::size_t i = 0; i < members.size(); ++i) parts[asg.labels[i]].push_back(members[i]);
    std::vector<std::size_t> used;
    for (std::size_t c = 0; c < cfg.branching; ++c) {
      if (!parts[c].empty()) used.push_back(c);
    }
    const auto first = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes[node].first_child = first;
    tree.nodes[node].child_count = static_cast<std::uint32_t>(used.size());
    for (std::size_t c : used) {
      tree.nodes.push_back({});
      center_rows.emplace_back(cb.centers.row_ptr(c), cb.centers.row_ptr(c) + x.cols);
    }
    for (std::size_t i = 0; i < used.size(); ++i) expand(first + static_cast<std::uint32_t>(i), parts[used[i]], level + 1);
  }
};

}  // namespace

std::uint32_t VocabularyTree::quantize(const float* v) const {
  std::uint32_t node = 0;
  while (nodes[node].word < 0) {
    const VocabularyNode& n = nodes[node];
    std::uint32_t best = n.first_child;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = n.first_child; c < n.first_child + n.child_count; ++c) {
      const double d = kernels::squared_l2(centers.row_ptr(c - 1), v, centers.cols);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    node = best;
  }
  return static_cast<std::uint32_t>(nodes[node].word);
}

VocabularyTree train_vocabulary(const Matrix& descriptors, const VocabularyConfig& cfg) {
  if (cfg.branching < 2) throw Error(Errc::InvalidConfig, "branching factor must be at least 2");
  if (descriptors.rows < cfg.branching) {
    throw Error(Errc::TooFewDescriptors, std::to_string(descriptors.rows) + " descriptors for branching factor " +
                                             std::to_string(cfg.branching));
  }
  VocabularyTree tree;
  tree.branching = cfg.branching;
  tree.depth = cfg.depth;
  tree.nodes.push_back({});
  TreeBuilder b{descriptors, cfg, tree, {}};
  b.center_rows.emplace_back();
  std::vector<std::uint32_t> all(descriptors.rows);
  std::iota(all.begin(), all.end(), 0);
  b.expand(0, all, 0);
  tree.centers = Matrix(tree.nodes.size() - 1, descriptors.cols);
  for (std::size_t i = 1; i < tree.nodes.size(); ++i) {
    std::copy(b.center_rows[i].begin(), b.center_rows[i].end(), tree.centers.row_ptr(i - 1));
  }
  return tree;
}

TermCounts quantize_descriptors(const VocabularyTree& tree, const Matrix& unit) {
  if (unit.rows > 0 && unit.cols != tree.centers.cols && tree.centers.rows > 0) {
    throw Error(Errc::DimensionMismatch, "descriptors of dimension " + std::to_string(unit.cols) +
                                             " against vocabulary of dimension " + std::to_string(tree.centers.cols));
  }
  std::vector<std::uint32_t> words(unit.rows);
  for (std::size_t i = 0; i < unit.rows; ++i) words[i] = tree.quantize(unit.row_ptr(i));
  std::sort(words.begin(), words.end());
  TermCounts out;
  for (std::uint32_t w : words) {
    if (out.empty() || out.back().first != w) out.emplace_back(w, 0);
    ++out.back().second;
  }
  return out;
}

TermCounts quantize_image(const VocabularyTree& tree, const DescriptorSet& set) {
  return quantize_descriptors(tree, unit_descriptors(set));
}

BowVector make_bow_vector(const BowDatabase& db, std::uint64_t image_id, const TermCounts& counts) {
  BowVector v;
  v.image_id = image_id;
  std::uint64_t n_d = 0;
  for (const auto& [w, c] : counts) n_d += c;
  double norm2 = 0.0;
  for (const auto& [w, c] : counts) {
    const double idf = w < db.idf.size() ? db.idf[w] : 0.0;
    const double t = static_cast<double>(c) / static_cast<double>(n_d) * idf;
    v.weights.emplace_back(w, t);
    norm2 += t * t;
  }
  if (norm2 == 0.0) {
    v.degenerate = true;
    return v;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (auto& [w, t] : v.weights) t *= inv;
  return v;
}

BowDatabase build_bow_database(std::size_t words, std::span<const std::uint64_t> ids,
                               std::span<const TermCounts> counts) {
  BowDatabase db;
  db.images = counts.size();
  db.document_freq.assign(words, 0);
  for (const TermCounts& tc : counts) {
    for (const auto& [w, c] : tc) {
      if (w >= words) throw Error(Errc::InvalidArgument, "word id " + std::to_string(w) + " outside the vocabulary");
      ++db.document_freq[w];
    }
  }
  db.idf.assign(words, 0.0);
  for (std::size_t w = 0; w < words; ++w) {
    if (db.document_freq[w] > 0) {
      db.idf[w] = std::log(static_cast<double>(db.images) / static_cast<double>(db.document_freq[w]));
    }
  }
  db.postings.resize(words);
  db.vectors.reserve(counts.size());
  std::vector<std::size_t> order(counts.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  for (std::size_t i = 0; i < counts.size(); ++i) db.vectors.push_back(make_bow_vector(db, ids[i], counts[i]));
  for (std::size_t i : order) {
    const BowVector& v = db.vectors[i];
    for (std::size_t t = 0; t < counts[i].size(); ++t) {
      db.postings[counts[i][t].first].push_back(
          {static_cast<std::uint32_t>(i), ids[i], counts[i][t].second, v.weights[t].second});
    }
  }
  return db;
}

BowDatabase build_bow_database(const VocabularyTree& tree, std::span<const DescriptorSet> sets, Exec exec) {
  std::vector<TermCounts> counts(sets.size());
  std::vector<std::uint64_t> ids(sets.size());
  for_each_index(sets.size(), exec, [&](std::size_t i) {
    counts[i] = quantize_image(tree, sets[i]);
    ids[i] = sets[i].image_id;
  });
  return build_bow_database(tree.words, ids, counts);
}

std::vector<ScoredImage> bow_query(const BowDatabase& db, const BowVector& query, std::size_t topk) {
  if (db.vectors.empty()) throw Error(Errc::EmptyDatabase, "query against an empty database");
  std::vector<double> score(db.vectors.size(), 0.0);
  std::vector<std::uint32_t> touched;
  for (const auto& [w, qw] : query.weights) {
    if (qw == 0.0 || w >= db.postings.size()) continue;
    for (const Posting& p : db.postings[w]) {
      if (p.weight == 0.0) continue;
      if (score[p.doc] == 0.0) touched.push_back(p.doc);
      score[p.doc] += qw * p.weight;
    }
  }
  std::vector<ScoredImage> out;
  out.reserve(touched.size());
  for (std::uint32_t d : touched) out.push_back({db.vectors[d].image_id, score[d]});
  const auto better = [](const ScoredImage& a, const ScoredImage& b) {
    return a.score > b.score || (a.score == b.score && a.image_id < b.image_id);
  };
  const std::size_t keep = std::min(topk, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(keep), out.end(), better);
  out.resize(keep);
  return out;
}

void save_vocabulary(const VocabularyTree& tree, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("UVT1");
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(tree.branching));
  out.u32(static_cast<std::uint32_t>(tree.depth));
  out.u32(static_cast<std::uint32_t>(tree.centers.cols));
  out.u64(tree.nodes.size());
  out.u64(tree.words);
  for (const VocabularyNode& n : tree.nodes) {
    out.u32(n.first_child);
    out.u32(n.child_count);
    out.u32(static_cast<std::uint32_t>(n.word));
  }
  out.f32s(tree.centers.data);
  out.finish();
}

VocabularyTree load_vocabulary(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVT1");
  if (const std::uint32_t version = in.u32(); version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  VocabularyTree tree;
  tree.branching = in.u32();
  tree.depth = in.u32();
  const std::uint32_t dim = in.u32();
  const std::uint64_t nodes = in.u64();
  tree.words = in.u64();
  if (nodes == 0) throw Error(Errc::MalformedHeader, path.string() + " has no root node");
  tree.nodes.resize(nodes);
  for (VocabularyNode& n : tree.nodes) {
    n.first_child = in.u32();
    n.child_count = in.u32();
    n.word = static_cast<std::int32_t>(in.u32());
  }
  tree.centers = Matrix(nodes - 1, dim);
  if (in.remaining() != tree.centers.data.size() * 4) {
    throw Error(Errc::TruncatedFile, path.string() + " does not hold all node centers");
  }
  in.f32s(tree.centers.data);
  return tree;
}

void save_bow_database(const BowDatabase& db, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("UVB1");
  out.u32(kFormatVersion);
  out.u64(db.images);
  out.u64(db.idf.size());
  for (std::size_t w = 0; w < db.idf.size(); ++w) {
    out.u32(db.document_freq[w]);
    out.f64(db.idf[w]);
  }
  for (const auto& list : db.postings) {
    out.u64(list.size());
    for (const Posting& p : list) {
      out.u32(p.doc);
      out.u64(p.image_id);
      out.u32(p.count);
      out.f64(p.weight);
    }
  }
  out.u64(db.vectors.size());
  for (const BowVector& v : db.vectors) {
    out.u64(v.image_id);
    out.u32(v.degenerate ? 1 : 0);
    out.u64(v.weights.size());
    for (const auto& [w, t] : v.weights) {
      out.u32(w);
      out.f64(t);
    }
  }
  out.finish();
}

BowDatabase load_bow_database(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVB1");
  if (const std::uint32_t version = in.u32(); version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  BowDatabase db;
  db.images = in.u64();
  const std::uint64_t words = in.u64();
  db.document_freq.resize(words);
  db.idf.resize(words);
  for (std::size_t w = 0; w < words; ++w) {
    db.document_freq[w] = in.u32();
    db.idf[w] = in.f64();
  }
  db.postings.resize(words);
  for (auto& list : db.postings) {
    list.resize(in.u64());
    for (Posting& p : list) {
      p.doc = in.u32();
      p.image_id = in.u64();
      p.count = in.u32();
      p.weight = in.f64();
    }
  }
  db.vectors.resize(in.u64());
  for (BowVector& v : db.vectors) {
    v.image_id = in.u64();
    v.degenerate = in.u32() != 0;
    v.weights.resize(in.u64());
    for (auto& [w, t] : v.weights) {
      w = in.u32();
      t = in.f64();
    }
  }
  return db;
}

}  // namespace pairsel
