// SPDX-License-Identifier: Apache-2.0
#include "pairsel/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "pairsel/binary_io.hpp"
#include "pairsel/kernels.hpp"
#include "pairsel/key_values.hpp"
#include "pairsel/parallel.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;

std::filesystem::path meta_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta");
}

// Uniform double in [0, 1) from the top 53 bits.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Matrix init_plus_plus(const Matrix& x, std::size_t k, std::mt19937_64& rng, Exec exec) {
  Matrix centers(k, x.cols);
  std::vector<double> dist(x.rows, std::numeric_limits<double>::infinity());
  std::size_t pick = static_cast<std::size_t>(rng() % x.rows);
  for (std::size_t c = 0; c < k; ++c) {
    std::copy_n(x.row_ptr(pick), x.cols, centers.row_ptr(c));
    const float* center = centers.row_ptr(c);
    for_each_index(x.rows, exec, [&](std::size_t i) {
      dist[i] = std::min(dist[i], kernels::squared_l2(x.row_ptr(i), center, x.cols));
    }, 4096);
    if (c + 1 == k) break;
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (!(total > 0.0)) {
      // Every point already coincides with a center.
      pick = static_cast<std::size_t>(rng() % x.rows);
      continue;
    }
    const double target = unit_draw(rng) * total;
    double run = 0.0;
    pick = x.rows - 1;
    for (std::size_t i = 0; i < x.rows; ++i) {
      run += dist[i];
      if (run > target && dist[i] > 0.0) {
        pick = i;
        break;
      }
    }
  }
  return centers;
}

Matrix init_random(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(x.rows);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, x.rows - 1);
    std::swap(idx[i], idx[u(rng)]);
  }
  Matrix centers(k, x.cols);
  for (std::size_t c = 0; c < k; ++c) std::copy_n(x.row_ptr(idx[c]), x.cols, centers.row_ptr(c));
  return centers;
}

double sum_in_order(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TrainingSample sample_training_descriptors(std::span<const DescriptorSet> sets, const SamplingConfig& cfg) {
  if (sets.empty()) throw Error(Errc::EmptyInput, "no images to sample from");
  if (!(cfg.image_fraction > 0.0 && cfg.image_fraction <= 1.0)) {
    throw Error(Errc::InvalidConfig, "image fraction must lie in (0, 1]");
  }
  if (cfg.features_per_image == 0) throw Error(Errc::InvalidConfig, "features per image must be positive");

  const std::size_t n = sets.size();
  // The epsilon keeps exact products such as 0.2 * 10 from rounding up.
  const auto want = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::ceil(cfg.image_fraction * static_cast<double>(n) - 1e-9)), 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed);
  for (std::size_t i = 0; i < want; ++i) {
    std::uniform_int_distribution<std::size_t> u(i, n - 1);
    std::swap(order[i], order[u(rng)]);
  }
  order.resize(want);
  std::sort(order.begin(), order.end());

  TrainingSample out;
  out.descriptors.cols = kDescriptorDim;
  for (std::size_t s : order) {
    const DescriptorSet& set = sets[s];
    out.images.push_back(set.image_id);
    std::vector<std::size_t> by_scale(set.features.size());
    std::iota(by_scale.begin(), by_scale.end(), 0);
    std::stable_sort(by_scale.begin(), by_scale.end(), [&](std::size_t a, std::size_t b) {
      return set.features[a].scale > set.features[b].scale;
    });
    by_scale.resize(std::min(by_scale.size(), cfg.features_per_image));
    DescriptorSet top;
    top.image_id = set.image_id;
    for (std::size_t f : by_scale) top.features.push_back(set.features[f]);
    const Matrix unit = unit_descriptors(top);
    out.descriptors.data.insert(out.descriptors.data.end(), unit.data.begin(), unit.data.end());
    out.descriptors.rows += unit.rows;
  }
  std::sort(out.images.begin(), out.images.end());
  return out;
}

Codebook train_codebook(const Matrix& x, const KMeansConfig& cfg) {
  if (cfg.k == 0) throw Error(Errc::InvalidArgument, "k must be positive");
  if (x.rows < cfg.k) {
    throw Error(Errc::TooFewDescriptors, std::to_string(x.rows) + " descriptors for k = " + std::to_string(cfg.k));
  }
  for (float v : x.data) {
    if (!std::isfinite(v)) throw Error(Errc::NaNInput, "training descriptors contain a non-finite value");
  }

  std::mt19937_64 rng(cfg.seed);
  Codebook cb;
  cb.training_size = x.rows;
  cb.centers = cfg.init == KMeansInit::plus_plus ? init_plus_plus(x, cfg.k, rng, cfg.exec)
                                                 : init_random(x, cfg.k, rng);

  kernels::Assignment asg = kernels::assign_nearest(x, cb.centers, cfg.exec);
  cb.inertia_history.push_back(sum_in_order(asg.dist2));

  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const kernels::ClusterSums sums = kernels::accumulate_clusters(x, asg.labels, cfg.k, cfg.exec);
    std::vector<std::size_t> far;  // reseed candidates, farthest first
    for (std::size_t c = 0; c < cfg.k; ++c) {
      float* center = cb.centers.row_ptr(c);
      if (sums.counts[c] > 0) {
        const double inv = 1.0 / static_cast<double>(sums.counts[c]);
        for (std::size_t j = 0; j < x.cols; ++j) center[j] = static_cast<float>(sums.sums[c * x.cols + j] * inv);
        continue;
      }
      if (far.empty()) {
        far.resize(x.rows);
        std::iota(far.begin(), far.end(), 0);
        std::stable_sort(far.begin(), far.end(),
                         [&](std::size_t a, std::size_t b) { return asg.dist2[a] > asg.dist2[b]; });
        std::reverse(far.begin(), far.end());  // pop_back yields the farthest
      }
      const std::size_t p = far.back();
      far.pop_back();
      std::copy_n(x.row_ptr(p), x.cols, center);
    }
    ++cb.iterations;

    kernels::Assignment next = kernels::assign_nearest(x, cb.centers, cfg.exec);
    const double prev = cb.inertia_history.back();
    const double cur = sum_in_order(next.dist2);
    cb.inertia_history.push_back(cur);
    const bool stable = next.labels == asg.labels;
    asg = std::move(next);
    if (stable || prev - cur <= cfg.tol * prev) break;
  }
  cb.inertia = cb.inertia_history.back();
  return cb;
}

std::uint32_t nearest_center(const Codebook& codebook, std::span<const float> v) {
  if (v.size() != codebook.dim()) {
    throw Error(Errc::DimensionMismatch, "vector of dimension " + std::to_string(v.size()) +
                                             " against codebook of dimension " + std::to_string(codebook.dim()));
  }
  if (codebook.k() == 0) throw Error(Errc::InvalidArgument, "empty codebook");
  return kernels::nearest_row(codebook.centers, v.data());
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("UVC1");
  out.u32(kFormatVersion);
  out.u32(static_cast<std::uint32_t>(codebook.k()));
  out.u32(static_cast<std::uint32_t>(codebook.dim()));
  out.f32s(codebook.centers.data);
  out.finish();

  std::ofstream meta(meta_path(path));
  meta.precision(17);
  meta << "k = " << codebook.k() << "\n"
       << "dim = " << codebook.dim() << "\n"
       << "iterations = " << codebook.iterations << "\n"
       << "inertia = " << codebook.inertia << "\n"
       << "training_size = " << codebook.training_size << "\n"
       << "inertia_history = ";
  for (std::size_t i = 0; i < codebook.inertia_history.size(); ++i) {
    meta << (i ? "," : "") << codebook.inertia_history[i];
  }
  meta << "\n";
  if (!meta) throw Error(Errc::IoFailure, "cannot write " + meta_path(path).string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVC1");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  const std::uint32_t k = in.u32();
  const std::uint32_t d = in.u32();
  if (in.remaining() != static_cast<std::uint64_t>(k) * d * 4) {
    throw Error(Errc::TruncatedFile, path.string() + " does not hold " + std::to_string(k) + " centers");
  }
  Codebook cb;
  cb.centers = Matrix(k, d);
  in.f32s(cb.centers.data);

  if (std::filesystem::exists(meta_path(path))) {
    const KeyValues kv = KeyValues::read(meta_path(path));
    cb.iterations = kv.get("iterations", std::uint64_t{0});
    cb.inertia = kv.get("inertia", 0.0);
    cb.training_size = kv.get("training_size", std::uint64_t{0});
    std::stringstream hist(kv.get("inertia_history", ""));
    for (std::string item; std::getline(hist, item, ',');) {
      if (!item.empty()) cb.inertia_history.push_back(std::stod(item));
    }
  }
  return cb;
}

}  // namespace pairsel
