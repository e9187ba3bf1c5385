// SPDX-License-Identifier: Apache-2.0
#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's numeric code; each oracle is the plainest direct evaluation of
// its definition.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dist2(const float* a, const float* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double t = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += t * t;
  }
  return s;
}

/// Exhaustive kNN: full sort of (dist2, id), ties by lower id.
inline std::vector<std::pair<std::uint64_t, double>> knn(const std::vector<float>& rows, std::size_t d,
                                                         const std::vector<std::uint64_t>& ids, const float* q,
                                                         std::size_t k) {
  std::vector<std::pair<double, std::uint64_t>> all;
  for (std::size_t r = 0; r < ids.size(); ++r) all.emplace_back(dist2(&rows[r * d], q, d), ids[r]);
  std::sort(all.begin(), all.end());
  std::vector<std::pair<std::uint64_t, double>> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.emplace_back(all[i].second, std::sqrt(all[i].first));
  return out;
}

/// Nearest row by linear scan, lowest index on ties.
inline std::size_t nearest(const std::vector<Vec>& centers, const Vec& v) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.size(); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += (v[i] - centers[c][i]) * (v[i] - centers[c][i]);
    if (s < best_d) {
      best_d = s;
      best = c;
    }
  }
  return best;
}

/// Residual sums per center, each block L2-normalized, then the whole vector.
inline Vec vlad(const std::vector<Vec>& features, const std::vector<Vec>& centers) {
  const std::size_t k = centers.size(), d = centers[0].size();
  Vec v(k * d, 0.0);
  for (const Vec& f : features) {
    const std::size_t c = nearest(centers, f);
    for (std::size_t i = 0; i < d; ++i) v[c * d + i] += f[i] - centers[c][i];
  }
  for (std::size_t c = 0; c < k; ++c) {
    double n = 0.0;
    for (std::size_t i = 0; i < d; ++i) n += v[c * d + i] * v[c * d + i];
    if (n > 0) {
      for (std::size_t i = 0; i < d; ++i) v[c * d + i] /= std::sqrt(n);
    }
  }
  double n = 0.0;
  for (double x : v) n += x * x;
  if (n > 0) {
    for (double& x : v) x /= std::sqrt(n);
  }
  return v;
}

/// Least squares of log y on log x: returns (a, b) of y = a x^b.
inline std::pair<double, double> loglog_fit(const Vec& x, const Vec& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double b = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double a = std::exp((sy - b * sx) / n);
  return {a, b};
}

struct P2 {
  double x, y;
};

/// Hull area from every ordered pair (i, j) that has all other points strictly
/// on its left; O(n^3). Assumes general position.
inline double hull_area_brute(const std::vector<P2>& p) {
  double area2 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < p.size(); ++j) {
      if (i == j) continue;
      bool edge = true;
      for (std::size_t k = 0; k < p.size() && edge; ++k) {
        if (k == i || k == j) continue;
        const double c = (p[j].x - p[i].x) * (p[k].y - p[i].y) - (p[j].y - p[i].y) * (p[k].x - p[i].x);
        if (c <= 0) edge = false;
      }
      if (edge) area2 += p[i].x * p[j].y - p[j].x * p[i].y;
    }
  }
  return area2 / 2.0;
}

/// Minimum Ncut over all bipartitions of a dense weight matrix (n <= 20).
struct NcutMin {
  double value = std::numeric_limits<double>::infinity();
  std::uint32_t mask = 0;  // vertices on side 1 (vertex 0 is always on side 0)
};
inline double ncut_of(const std::vector<Vec>& w, std::uint32_t mask) {
  const std::size_t n = w.size();
  double cut = 0, assoc0 = 0, assoc1 = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const bool sa = (mask >> a) & 1u, sb = (mask >> b) & 1u;
      (sa ? assoc1 : assoc0) += w[a][b];
      if (sa != sb && a < b) cut += w[a][b];
    }
  }
  return cut / assoc0 + cut / assoc1;
}
inline NcutMin ncut_exhaustive(const std::vector<Vec>& w) {
  NcutMin best;
  const std::uint32_t n = static_cast<std::uint32_t>(w.size());
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    if (mask & 1u) continue;
    const double v = ncut_of(w, mask);
    if (v < best.value) {
      best.value = v;
      best.mask = mask;
    }
  }
  return best;
}

using M3 = std::array<double, 9>;

inline M3 mul(const M3& a, const M3& b) {
  M3 c{};
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k)
      for (int q = 0; q < 3; ++q) c[r * 3 + q] += a[r * 3 + k] * b[k * 3 + q];
  return c;
}
inline M3 transpose(const M3& a) { return {a[0], a[3], a[6], a[1], a[4], a[7], a[2], a[5], a[8]}; }

/// Rotation from Euler angles (radians) about x, then y, then z.
inline M3 rotation(double rx, double ry, double rz) {
  const M3 x{1, 0, 0, 0, std::cos(rx), -std::sin(rx), 0, std::sin(rx), std::cos(rx)};
  const M3 y{std::cos(ry), 0, std::sin(ry), 0, 1, 0, -std::sin(ry), 0, std::cos(ry)};
  const M3 z{std::cos(rz), -std::sin(rz), 0, std::sin(rz), std::cos(rz), 0, 0, 0, 1};
  return mul(z, mul(y, x));
}

/// Two-view pinhole setup with the first camera at the origin looking down +z.
struct TwoView {
  double f = 800, cx = 500, cy = 375;
  M3 R{1, 0, 0, 0, 1, 0, 0, 0, 1};  // second camera orientation
  std::array<double, 3> t{0, 0, 0};   // second camera translation (x2 = R X + t)

  /// F with x2^T F x1 = 0: K^-T [t]x R K^-1.
  M3 fundamental() const {
    const M3 tx{0, -t[2], t[1], t[2], 0, -t[0], -t[1], t[0], 0};
    const M3 kinv{1 / f, 0, -cx / f, 0, 1 / f, -cy / f, 0, 0, 1};
    return mul(transpose(kinv), mul(mul(tx, R), kinv));
  }
  bool project(const std::array<double, 3>& X, P2& a, P2& b) const {
    if (X[2] <= 0) return false;
    a = {f * X[0] / X[2] + cx, f * X[1] / X[2] + cy};
    std::array<double, 3> Y{};
    for (int r = 0; r < 3; ++r) Y[r] = R[r * 3] * X[0] + R[r * 3 + 1] * X[1] + R[r * 3 + 2] * X[2] + t[r];
    if (Y[2] <= 0) return false;
    b = {f * Y[0] / Y[2] + cx, f * Y[1] / Y[2] + cy};
    return true;
  }
};

/// Symmetric epipolar distance written out from the definition.
inline double sym_epipolar(const M3& F, const P2& a, const P2& b) {
  const double l2[3] = {F[0] * a.x + F[1] * a.y + F[2], F[3] * a.x + F[4] * a.y + F[5],
                        F[6] * a.x + F[7] * a.y + F[8]};
  const double l1[3] = {F[0] * b.x + F[3] * b.y + F[6], F[1] * b.x + F[4] * b.y + F[7],
                        F[2] * b.x + F[5] * b.y + F[8]};
  const double e = b.x * l2[0] + b.y * l2[1] + l2[2];
  return 0.5 * (std::abs(e) / std::hypot(l2[0], l2[1]) + std::abs(e) / std::hypot(l1[0], l1[1]));
}

}  // namespace oracle
