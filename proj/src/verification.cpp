// SPDX-License-Identifier: Apache-2.0
#include "pairsel/verification.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "pairsel/binary_io.hpp"
#include "pairsel/kernels.hpp"
#include "pairsel/parallel.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
constexpr std::size_t kMinimalSample = 8;

bool passes_ratio(const kernels::TwoNearest& t, double ratio2) {
  if (t.second_dist2 == std::numeric_limits<double>::infinity()) return true;
  return t.best_dist2 < ratio2 * t.second_dist2;
}

// Similarity transform taking the points to centroid 0 and mean distance sqrt(2).
Eigen::Matrix3d conditioning(std::span<const Point2> p) {
  double cx = 0, cy = 0;
  for (const Point2& q : p) {
    cx += q.x;
    cy += q.y;
  }
  cx /= static_cast<double>(p.size());
  cy /= static_cast<double>(p.size());
  double mean = 0;
  for (const Point2& q : p) mean += std::hypot(q.x - cx, q.y - cy);
  mean /= static_cast<double>(p.size());
  if (!(mean > 0)) throw Error(Errc::DegenerateConfiguration, "coincident points");
  const double s = std::sqrt(2.0) / mean;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Mat3 to_array(const Eigen::Matrix3d& m) {
  Mat3 out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) out[r * 3 + c] = m(r, c);
  }
  return out;
}

std::size_t score(const Mat3& F, std::span<const Point2> a, std::span<const Point2> b, const RansacConfig& cfg,
                  std::vector<std::uint8_t>* mask, double* mean_error) {
  std::size_t count = 0;
  double sum = 0.0;
  if (mask) mask->assign(a.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double e = epipolar_distance(F, a[i], b[i], cfg.residual);
    if (e < cfg.max_error_px) {
      ++count;
      sum += e;
      if (mask) (*mask)[i] = 1;
    }
  }
  if (mean_error) *mean_error = count ? sum / static_cast<double>(count) : 0.0;
  return count;
}

std::size_t required_iterations(double inlier_ratio, double confidence, std::size_t cap) {
  const double p_good = std::pow(inlier_ratio, static_cast<double>(kMinimalSample));
  if (p_good >= 1.0 - 1e-12) return 1;
  if (p_good <= 0.0) return cap;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!(n < static_cast<double>(cap))) return cap;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(n)));
}

}  // namespace

std::vector<FeatureMatch> match_descriptors(const Matrix& a, const Matrix& b, double ratio, Exec exec) {
  if (a.rows == 0 || b.rows == 0) throw Error(Errc::EmptySet, "matching against an empty descriptor set");
  const kernels::MutualTwoNearest nn = kernels::two_nearest_both_ways(a, b, exec);
  const double ratio2 = ratio * ratio;
  std::vector<FeatureMatch> out;
  for (std::size_t i = 0; i < a.rows; ++i) {
    const kernels::TwoNearest& fwd = nn.a_to_b[i];
    if (!passes_ratio(fwd, ratio2)) continue;
    const kernels::TwoNearest& back = nn.b_to_a[fwd.best];
    if (back.best != i || !passes_ratio(back, ratio2)) continue;
    out.push_back({static_cast<std::uint32_t>(i), fwd.best, static_cast<float>(std::sqrt(fwd.best_dist2))});
  }
  return out;
}

std::vector<FeatureMatch> match_descriptors(const DescriptorSet& a, const DescriptorSet& b, double ratio, Exec exec) {
  return match_descriptors(unit_descriptors(a), unit_descriptors(b), ratio, exec);
}

double epipolar_distance(const Mat3& F, const Point2& a, const Point2& b, EpipolarResidual type) {
  // line in image b: F a; line in image a: F^T b
  const double lb0 = F[0] * a.x + F[1] * a.y + F[2];
  const double lb1 = F[3] * a.x + F[4] * a.y + F[5];
  const double lb2 = F[6] * a.x + F[7] * a.y + F[8];
  const double num = std::abs(b.x * lb0 + b.y * lb1 + lb2);
  const double nb = std::hypot(lb0, lb1);
  const double db = nb > 0 ? num / nb : std::numeric_limits<double>::infinity();
  if (type == EpipolarResidual::one_sided) return db;
  const double la0 = F[0] * b.x + F[3] * b.y + F[6];
  const double la1 = F[1] * b.x + F[4] * b.y + F[7];
  const double na = std::hypot(la0, la1);
  const double da = na > 0 ? num / na : std::numeric_limits<double>::infinity();
  return 0.5 * (da + db);
}

Mat3 fundamental_eight_point(std::span<const Point2> a, std::span<const Point2> b) {
  if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "correspondence lists differ in length");
  if (a.size() < kMinimalSample) {
    throw Error(Errc::TooFewMatches, std::to_string(a.size()) + " correspondences, need 8");
  }
  const Eigen::Matrix3d ta = conditioning(a);
  const Eigen::Matrix3d tb = conditioning(b);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(a.size()), 9);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Eigen::Vector3d p = ta * Eigen::Vector3d(a[i].x, a[i].y, 1.0);
    const Eigen::Vector3d q = tb * Eigen::Vector3d(b[i].x, b[i].y, 1.0);
    A.row(static_cast<Eigen::Index>(i)) << q.x() * p.x(), q.x() * p.y(), q.x(), q.y() * p.x(), q.y() * p.y(), q.y(),
        p.x(), p.y(), 1.0;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  // A rank below 8 leaves the null space ambiguous (collinear or repeated points).
  if (!(sv(7) > 1e-10 * sv(0))) throw Error(Errc::DegenerateConfiguration, "correspondences do not fix F");
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Eigen::Matrix3d Fn;
  Fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd3(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Vector3d s = svd3.singularValues();
  s(2) = 0.0;
  const Eigen::Matrix3d rank2 = svd3.matrixU() * s.asDiagonal() * svd3.matrixV().transpose();

  Eigen::Matrix3d F = tb.transpose() * rank2 * ta;
  F /= F.norm();
  Eigen::Index r = 0, c = 0;
  F.cwiseAbs().maxCoeff(&r, &c);
  if (F(r, c) < 0) F = -F;
  return to_array(F);
}

RansacResult estimate_fundamental_ransac(std::span<const Point2> a, std::span<const Point2> b,
                                         const RansacConfig& cfg) {
  if (a.size() != b.size()) throw Error(Errc::InvalidArgument, "correspondence lists differ in length");
  const std::size_t n = a.size();
  if (n < kMinimalSample) throw Error(Errc::TooFewMatches, std::to_string(n) + " correspondences, need 8");

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::array<Point2, kMinimalSample> sa, sb;

  RansacResult best;
  std::size_t needed = cfg.max_iters;
  std::size_t iter = 0;
  while (iter < needed && iter < cfg.max_iters) {
    ++iter;
    for (std::size_t k = 0; k < kMinimalSample; ++k) {
      std::uniform_int_distribution<std::size_t> u(k, n - 1);
      std::swap(idx[k], idx[u(rng)]);
      sa[k] = a[idx[k]];
      sb[k] = b[idx[k]];
    }
    Mat3 F;
    try {
      F = fundamental_eight_point(sa, sb);
    } catch (const Error& e) {
      if (e.code() == Errc::DegenerateConfiguration) continue;
      throw;
    }
    const std::size_t count = score(F, a, b, cfg, nullptr, nullptr);
    if (count > best.inlier_count) {
      best.inlier_count = count;
      best.F = F;
      needed = required_iterations(static_cast<double>(count) / static_cast<double>(n), cfg.confidence, cfg.max_iters);
    }
  }
  best.iterations = iter;
  if (best.inlier_count == 0) throw Error(Errc::DegenerateConfiguration, "no sample produced a consistent model");

  score(best.F, a, b, cfg, &best.inliers, &best.mean_error);
  if (best.inlier_count >= kMinimalSample) {
    std::vector<Point2> ia, ib;
    for (std::size_t i = 0; i < n; ++i) {
      if (best.inliers[i]) {
        ia.push_back(a[i]);
        ib.push_back(b[i]);
      }
    }
    try {
      const Mat3 refit = fundamental_eight_point(ia, ib);
      std::vector<std::uint8_t> mask;
      double mean = 0.0;
      const std::size_t count = score(refit, a, b, cfg, &mask, &mean);
      if (count >= best.inlier_count) {
        best.F = refit;
        best.inliers = std::move(mask);
        best.inlier_count = count;
        best.mean_error = mean;
      }
    } catch (const Error& e) {
      if (e.code() != Errc::DegenerateConfiguration) throw;
    }
  }
  return best;
}

std::optional<VerifiedPair> verify_pair(const DescriptorSet& a, const DescriptorSet& b, const VerifyConfig& cfg,
                                        DroppedPair* why) {
  DroppedPair drop{a.image_id, b.image_id, 0, 0, {}};
  const auto dropped = [&](std::string reason) -> std::optional<VerifiedPair> {
    drop.reason = std::move(reason);
    if (why) *why = drop;
    return std::nullopt;
  };
  if (a.features.empty() || b.features.empty()) return dropped("empty descriptor set");

  const std::vector<FeatureMatch> matches = match_descriptors(a, b, cfg.ratio, Exec::serial);
  drop.matches = matches.size();
  if (matches.size() < kMinimalSample) return dropped("too few matches");

  std::vector<Point2> pa, pb;
  pa.reserve(matches.size());
  pb.reserve(matches.size());
  for (const FeatureMatch& m : matches) {
    pa.push_back({a.features[m.index_a].x, a.features[m.index_a].y});
    pb.push_back({b.features[m.index_b].x, b.features[m.index_b].y});
  }
  RansacConfig rc = cfg.ransac;
  rc.seed = derive_seed(cfg.seed, a.image_id, b.image_id);
  RansacResult fit;
  try {
    fit = estimate_fundamental_ransac(pa, pb, rc);
  } catch (const Error& e) {
    if (e.code() != Errc::DegenerateConfiguration) throw;
    return dropped("degenerate configuration");
  }
  drop.inliers = fit.inlier_count;
  if (fit.inlier_count <= cfg.min_inliers) return dropped("too few inliers");

  VerifiedPair vp;
  vp.i = a.image_id;
  vp.j = b.image_id;
  vp.F = fit.F;
  vp.mean_error = fit.mean_error;
  for (std::size_t k = 0; k < matches.size(); ++k) {
    if (fit.inliers[k]) vp.inliers.push_back(matches[k]);
  }
  return vp;
}

VerifyReport verify_pairs(const MatchPairCandidateSet& candidates, std::span<const DescriptorSet> sets,
                          const VerifyConfig& cfg) {
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  for (std::size_t s = 0; s < sets.size(); ++s) by_id.emplace(sets[s].image_id, s);

  const auto& pairs = candidates.pairs;
  std::vector<std::optional<VerifiedPair>> kept(pairs.size());
  std::vector<DroppedPair> why(pairs.size());
  for_each_index(pairs.size(), cfg.exec, [&](std::size_t p) {
    const auto ia = by_id.find(pairs[p].i);
    const auto ib = by_id.find(pairs[p].j);
    if (ia == by_id.end() || ib == by_id.end()) {
      why[p] = {pairs[p].i, pairs[p].j, 0, 0, "image not found"};
      return;
    }
    kept[p] = verify_pair(sets[ia->second], sets[ib->second], cfg, &why[p]);
  });

  VerifyReport report;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    if (kept[p]) {
      report.retained.push_back(std::move(*kept[p]));
    } else {
      report.dropped.push_back(std::move(why[p]));
    }
  }
  return report;
}

void save_verified_pairs(std::span<const VerifiedPair> pairs, const std::filesystem::path& path) {
  BinaryWriter out(path);
  out.magic("UVM1");
  out.u32(kFormatVersion);
  out.u64(pairs.size());
  for (const VerifiedPair& p : pairs) {
    out.u64(p.i);
    out.u64(p.j);
    out.u32(static_cast<std::uint32_t>(p.inliers.size()));
    for (double v : p.F) out.f64(v);
    for (const FeatureMatch& m : p.inliers) {
      out.u32(m.index_a);
      out.u32(m.index_b);
    }
  }
  out.finish();
}

std::vector<VerifiedPair> load_verified_pairs(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVM1");
  if (const std::uint32_t version = in.u32(); version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  std::vector<VerifiedPair> pairs(in.u64());
  for (VerifiedPair& p : pairs) {
    p.i = in.u64();
    p.j = in.u64();
    p.inliers.resize(in.u32());
    for (double& v : p.F) v = in.f64();
    for (FeatureMatch& m : p.inliers) {
      m.index_a = in.u32();
      m.index_b = in.u32();
    }
  }
  if (!in.at_end()) throw Error(Errc::MalformedHeader, path.string() + " has trailing bytes");
  return pairs;
}

}  // namespace pairsel
