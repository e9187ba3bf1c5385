// SPDX-License-Identifier: Apache-2.0
#include "pairsel/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace pairsel {
namespace {

constexpr double kMinScale = 1.6;
constexpr double kMaxScale = 12.8;
constexpr double kCellSize = 200.0;

struct Landmark {
  double x, y, z;
  float scale;
  float orientation;
  std::array<std::uint8_t, kDescriptorDim> descriptor;
};

using Prototype = std::array<double, kDescriptorDim>;

std::array<std::uint8_t, kDescriptorDim> perturbed(const Prototype& proto, double spread,
                                                   std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, spread);
  std::array<std::uint8_t, kDescriptorDim> out{};
  for (std::size_t j = 0; j < kDescriptorDim; ++j) {
    out[j] = static_cast<std::uint8_t>(std::clamp(std::lround(proto[j] + noise(rng)), 0L, 255L));
  }
  return out;
}

float random_scale(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(std::log(kMinScale), std::log(kMaxScale));
  return static_cast<float>(std::exp(u(rng)));
}

struct Scene {
  SyntheticConfig cfg;
  std::vector<SyntheticCamera> cameras;
  std::vector<Prototype> prototypes;
  std::vector<Landmark> landmarks;
  double x0 = 0, y0 = 0;
  std::size_t cells_x = 0, cells_y = 0;
  std::vector<std::vector<std::uint32_t>> cells;

  explicit Scene(const SyntheticConfig& c) : cfg(c), cameras(synthetic_cameras(c)) {
    std::mt19937_64 proto_rng(derive_seed(cfg.seed, "prototypes"));
    std::exponential_distribution<double> expo(1.0 / 25.0);
    prototypes.resize(std::max<std::size_t>(cfg.prototypes, 1));
    for (auto& p : prototypes) {
      for (double& v : p) v = std::min(expo(proto_rng), 255.0);
    }

    const double w = cfg.image_width, h = cfg.image_height;
    double x1 = -1e300, y1 = -1e300;
    x0 = 1e300;
    y0 = 1e300;
    for (const auto& cam : cameras) {
      x0 = std::min(x0, cam.center[0] - w);
      x1 = std::max(x1, cam.center[0] + w);
      y0 = std::min(y0, cam.center[1] - h);
      y1 = std::max(y1, cam.center[1] + h);
    }
    cells_x = static_cast<std::size_t>(std::ceil((x1 - x0) / kCellSize));
    cells_y = static_cast<std::size_t>(std::ceil((y1 - y0) / kCellSize));
    cells.resize(cells_x * cells_y);

    const double density = static_cast<double>(cfg.features_per_image) *
                           (1.0 - cfg.distractor_fraction) / (w * h);
    const auto count = static_cast<std::size_t>(std::llround(density * (x1 - x0) * (y1 - y0)));
    std::mt19937_64 rng(derive_seed(cfg.seed, "landmarks"));
    std::uniform_real_distribution<double> ux(x0, x1), uy(y0, y1), uz(0.0, cfg.relief),
        uo(-std::numbers::pi, std::numbers::pi);
    std::uniform_int_distribution<std::size_t> pick(0, prototypes.size() - 1);
    landmarks.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      Landmark lm;
      lm.x = ux(rng);
      lm.y = uy(rng);
      lm.z = cfg.relief > 0 ? uz(rng) : 0.0;
      lm.scale = random_scale(rng);
      lm.orientation = static_cast<float>(uo(rng));
      lm.descriptor = perturbed(prototypes[pick(rng)], cfg.landmark_spread, rng);
      const auto cx = std::min(cells_x - 1, static_cast<std::size_t>((lm.x - x0) / kCellSize));
      const auto cy = std::min(cells_y - 1, static_cast<std::size_t>((lm.y - y0) / kCellSize));
      cells[cy * cells_x + cx].push_back(static_cast<std::uint32_t>(i));
      landmarks.push_back(lm);
    }
  }

  bool project(const SyntheticCamera& cam, const Landmark& lm, double& u, double& v) const {
    const double d[3] = {lm.x - cam.center[0], lm.y - cam.center[1], lm.z - cam.center[2]};
    const auto& r = cam.rotation;
    const double pc0 = r[0] * d[0] + r[1] * d[1] + r[2] * d[2];
    const double pc1 = r[3] * d[0] + r[4] * d[1] + r[5] * d[2];
    const double pc2 = r[6] * d[0] + r[7] * d[1] + r[8] * d[2];
    if (pc2 <= 0) return false;
    u = cam.focal * pc0 / pc2 + cam.cx;
    v = cam.focal * pc1 / pc2 + cam.cy;
    return u >= 0 && v >= 0 && u < cfg.image_width && v < cfg.image_height;
  }

  /// Landmarks projecting inside image i, ascending by landmark id.
  std::vector<std::uint32_t> visible(std::size_t i) const {
    const auto& cam = cameras[i];
    const double margin = 0.15 * std::max(cfg.image_width, cfg.image_height) + cfg.position_jitter;
    const double hx = 0.5 * cfg.image_width + margin, hy = 0.5 * cfg.image_height + margin;
    const auto cell = [&](double v, double origin, std::size_t n) {
      return static_cast<std::size_t>(std::clamp((v - origin) / kCellSize, 0.0, static_cast<double>(n - 1)));
    };
    const std::size_t cx0 = cell(cam.center[0] - hx, x0, cells_x), cx1 = cell(cam.center[0] + hx, x0, cells_x);
    const std::size_t cy0 = cell(cam.center[1] - hy, y0, cells_y), cy1 = cell(cam.center[1] + hy, y0, cells_y);
    std::vector<std::uint32_t> out;
    double u, v;
    for (std::size_t cy = cy0; cy <= cy1; ++cy) {
      for (std::size_t cx = cx0; cx <= cx1; ++cx) {
        for (std::uint32_t id : cells[cy * cells_x + cx]) {
          if (project(cam, landmarks[id], u, v)) out.push_back(id);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  void image(std::size_t i, DescriptorSet& set, std::vector<std::int64_t>& owners) const {
    const auto& cam = cameras[i];
    std::mt19937_64 rng(derive_seed(derive_seed(cfg.seed, "images"), i, 0));
    const int dnoise = static_cast<int>(std::lround(cfg.descriptor_noise));
    std::uniform_int_distribution<int> desc_noise(-dnoise, dnoise);
    std::uniform_real_distribution<double> pix_noise(-cfg.pixel_noise, cfg.pixel_noise);
    const double w = cfg.image_width, h = cfg.image_height;
    const double yaw = std::atan2(cam.rotation[1], cam.rotation[0]);

    set = DescriptorSet{};
    set.image_id = i;
    set.image_width = cfg.image_width;
    set.image_height = cfg.image_height;
    owners.clear();

    for (std::uint32_t id : visible(i)) {
      const Landmark& lm = landmarks[id];
      double u = 0, v = 0;
      project(cam, lm, u, v);
      if (cfg.pixel_noise > 0) {
        u += pix_noise(rng);
        v += pix_noise(rng);
      }
      LocalFeature f;
      f.x = static_cast<float>(std::clamp(u, 0.0, w - 1e-3));
      f.y = static_cast<float>(std::clamp(v, 0.0, h - 1e-3));
      f.scale = static_cast<float>(lm.scale * cfg.altitude / (cfg.altitude - lm.z));
      f.orientation = static_cast<float>(lm.orientation - yaw);
      f.descriptor.assign(lm.descriptor.begin(), lm.descriptor.end());
      if (dnoise > 0) {
        for (auto& c : f.descriptor) c = static_cast<std::uint8_t>(std::clamp(c + desc_noise(rng), 0, 255));
      }
      set.features.push_back(std::move(f));
      owners.push_back(id);
    }

    const auto distractors = static_cast<std::size_t>(
        std::llround(static_cast<double>(cfg.features_per_image) * cfg.distractor_fraction));
    std::uniform_real_distribution<double> uu(0.0, w), uv(0.0, h),
        uo(-std::numbers::pi, std::numbers::pi);
    std::uniform_int_distribution<std::size_t> pick(0, prototypes.size() - 1);
    for (std::size_t k = 0; k < distractors; ++k) {
      LocalFeature f;
      f.x = static_cast<float>(std::min(uu(rng), w - 1e-3));
      f.y = static_cast<float>(std::min(uv(rng), h - 1e-3));
      f.scale = random_scale(rng);
      f.orientation = static_cast<float>(uo(rng));
      const auto desc = perturbed(prototypes[pick(rng)], cfg.landmark_spread, rng);
      f.descriptor.assign(desc.begin(), desc.end());
      set.features.push_back(std::move(f));
      owners.push_back(-1);
    }

    // Descending scale, stable; carry the landmark owners along.
    std::vector<std::size_t> order(set.features.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return set.features[a].scale > set.features[b].scale;
    });
    std::vector<LocalFeature> sorted;
    std::vector<std::int64_t> sorted_owners;
    sorted.reserve(order.size());
    sorted_owners.reserve(order.size());
    for (std::size_t k : order) {
      sorted.push_back(std::move(set.features[k]));
      sorted_owners.push_back(owners[k]);
    }
    set.features = std::move(sorted);
    owners = std::move(sorted_owners);
  }
};

std::array<double, 9> rotation_zyx(double yaw, double pitch, double roll) {
  const double cz = std::cos(yaw), sz = std::sin(yaw);
  const double cy = std::cos(pitch), sy = std::sin(pitch);
  const double cx = std::cos(roll), sx = std::sin(roll);
  // Rz * Ry * Rx
  return {cz * cy, cz * sy * sx - sz * cx, cz * sy * cx + sz * sx,
          sz * cy, sz * sy * sx + cz * cx, sz * sy * cx - cz * sx,
          -sy,     cy * sx,                cy * cx};
}

}  // namespace

void validate(const SyntheticConfig& cfg) {
  const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (cfg.n_images < 2) throw Error(Errc::InvalidConfig, "n_images must be at least 2");
  if (!in_unit(cfg.overlap) || !in_unit(cfg.side_overlap)) {
    throw Error(Errc::InvalidConfig, "overlap fractions must lie in [0,1]");
  }
  if (!in_unit(cfg.distractor_fraction)) {
    throw Error(Errc::InvalidConfig, "distractor_fraction must lie in [0,1]");
  }
  if (cfg.image_width == 0 || cfg.image_height == 0) throw Error(Errc::InvalidConfig, "image size must be positive");
  if (!(cfg.altitude > cfg.relief) || cfg.relief < 0) {
    throw Error(Errc::InvalidConfig, "altitude must exceed a non-negative relief");
  }
  if (cfg.descriptor_noise < 0 || cfg.pixel_noise < 0 || cfg.landmark_spread < 0 ||
      cfg.position_jitter < 0 || cfg.attitude_jitter_deg < 0) {
    throw Error(Errc::InvalidConfig, "noise and jitter amplitudes must be non-negative");
  }
  if (cfg.model == OverlapModel::grid && cfg.grid_columns == 0) {
    throw Error(Errc::InvalidConfig, "grid_columns must be positive");
  }
}

SyntheticConfig synthetic_config_from(const KeyValues& kv, SyntheticConfig base) {
  SyntheticConfig c = base;
  c.n_images = kv.get("n_images", std::uint64_t{c.n_images});
  c.features_per_image = kv.get("features_per_image", std::uint64_t{c.features_per_image});
  const std::string model = kv.get("model", c.model == OverlapModel::grid ? "grid" : "strip");
  if (model == "strip") {
    c.model = OverlapModel::strip;
  } else if (model == "grid") {
    c.model = OverlapModel::grid;
  } else {
    throw Error(Errc::InvalidConfig, "unknown overlap model '" + model + "'");
  }
  c.overlap = kv.get("overlap", c.overlap);
  c.side_overlap = kv.get("side_overlap", c.side_overlap);
  c.grid_columns = kv.get("grid_columns", std::uint64_t{c.grid_columns});
  c.distractor_fraction = kv.get("distractor_fraction", c.distractor_fraction);
  c.descriptor_noise = kv.get("descriptor_noise", c.descriptor_noise);
  c.pixel_noise = kv.get("pixel_noise", c.pixel_noise);
  c.relief = kv.get("relief", c.relief);
  c.altitude = kv.get("altitude", c.altitude);
  c.attitude_jitter_deg = kv.get("attitude_jitter_deg", c.attitude_jitter_deg);
  c.position_jitter = kv.get("position_jitter", c.position_jitter);
  c.image_width = static_cast<std::uint32_t>(kv.get("image_width", std::uint64_t{c.image_width}));
  c.image_height = static_cast<std::uint32_t>(kv.get("image_height", std::uint64_t{c.image_height}));
  c.prototypes = kv.get("prototypes", std::uint64_t{c.prototypes});
  c.landmark_spread = kv.get("landmark_spread", c.landmark_spread);
  c.min_shared = kv.get("min_shared", std::uint64_t{c.min_shared});
  c.seed = kv.get("seed", c.seed);
  return c;
}

KeyValues to_key_values(const SyntheticConfig& c) {
  KeyValues kv;
  const auto num = [](double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
  };
  kv.set("n_images", std::to_string(c.n_images));
  kv.set("features_per_image", std::to_string(c.features_per_image));
  kv.set("model", c.model == OverlapModel::grid ? "grid" : "strip");
  kv.set("overlap", num(c.overlap));
  kv.set("side_overlap", num(c.side_overlap));
  kv.set("grid_columns", std::to_string(c.grid_columns));
  kv.set("distractor_fraction", num(c.distractor_fraction));
  kv.set("descriptor_noise", num(c.descriptor_noise));
  kv.set("pixel_noise", num(c.pixel_noise));
  kv.set("relief", num(c.relief));
  kv.set("altitude", num(c.altitude));
  kv.set("attitude_jitter_deg", num(c.attitude_jitter_deg));
  kv.set("position_jitter", num(c.position_jitter));
  kv.set("image_width", std::to_string(c.image_width));
  kv.set("image_height", std::to_string(c.image_height));
  kv.set("prototypes", std::to_string(c.prototypes));
  kv.set("landmark_spread", num(c.landmark_spread));
  kv.set("min_shared", std::to_string(c.min_shared));
  kv.set("seed", std::to_string(c.seed));
  return kv;
}

std::vector<SyntheticCamera> synthetic_cameras(const SyntheticConfig& cfg) {
  validate(cfg);
  std::mt19937_64 rng(derive_seed(cfg.seed, "cameras"));
  const double jit = cfg.attitude_jitter_deg * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> att(-jit, jit);
  std::uniform_real_distribution<double> pos(-cfg.position_jitter, cfg.position_jitter);
  const double step_x = cfg.image_width * (1.0 - cfg.overlap);
  const double step_y = cfg.image_height * (1.0 - cfg.side_overlap);
  // Nadir view: camera x = world X, camera y = -world Y, camera z = -world Z.
  const std::array<double, 9> nadir = {1, 0, 0, 0, -1, 0, 0, 0, -1};

  std::vector<SyntheticCamera> cams(cfg.n_images);
  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    std::size_t col = i, row = 0;
    if (cfg.model == OverlapModel::grid) {
      col = i % cfg.grid_columns;
      row = i / cfg.grid_columns;
    }
    const double yaw = att(rng), pitch = att(rng), roll = att(rng);
    const double jx = pos(rng), jy = pos(rng);
    const auto jitter = rotation_zyx(yaw, pitch, roll);
    SyntheticCamera& cam = cams[i];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += jitter[r * 3 + k] * nadir[k * 3 + c];
        cam.rotation[r * 3 + c] = s;
      }
    }
    cam.center = {col * step_x + jx, row * step_y + jy, cfg.altitude};
    cam.focal = cfg.altitude;
    cam.cx = 0.5 * cfg.image_width;
    cam.cy = 0.5 * cfg.image_height;
  }
  return cams;
}

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
  validate(cfg);
  const Scene scene(cfg);
  SyntheticDataset out;
  out.images.resize(cfg.n_images);
  out.feature_landmarks.resize(cfg.n_images);
  for (std::size_t i = 0; i < cfg.n_images; ++i) scene.image(i, out.images[i], out.feature_landmarks[i]);

  // landmark -> (image, feature) observations, in image order
  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> seen(scene.landmarks.size());
  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    const auto& owners = out.feature_landmarks[i];
    for (std::size_t f = 0; f < owners.size(); ++f) {
      if (owners[f] >= 0) {
        seen[static_cast<std::size_t>(owners[f])].emplace_back(static_cast<std::uint32_t>(i),
                                                              static_cast<std::uint32_t>(f));
      }
    }
  }
  std::unordered_map<std::uint64_t, std::vector<Correspondence>> shared;
  for (const auto& obs : seen) {
    for (std::size_t a = 0; a < obs.size(); ++a) {
      for (std::size_t b = a + 1; b < obs.size(); ++b) {
        const std::uint64_t key = obs[a].first * static_cast<std::uint64_t>(cfg.n_images) + obs[b].first;
        shared[key].push_back({obs[a].second, obs[b].second});
      }
    }
  }
  std::vector<std::uint64_t> keys;
  for (const auto& [key, corr] : shared) {
    if (corr.size() >= cfg.min_shared) keys.push_back(key);
  }
  std::sort(keys.begin(), keys.end());
  for (std::uint64_t key : keys) {
    GroundTruthPair p;
    p.image_a = key / cfg.n_images;
    p.image_b = key % cfg.n_images;
    p.correspondences = std::move(shared[key]);
    std::sort(p.correspondences.begin(), p.correspondences.end(),
              [](const Correspondence& x, const Correspondence& y) { return x.index_a < y.index_a; });
    out.truth.pairs.push_back(std::move(p));
  }
  return out;
}

std::set<std::pair<std::uint64_t, std::uint64_t>> SyntheticGroundTruth::pair_set() const {
  std::set<std::pair<std::uint64_t, std::uint64_t>> s;
  for (const auto& p : pairs) s.emplace(p.image_a, p.image_b);
  return s;
}

void write_synthetic_dataset(const SyntheticDataset& data, const std::filesystem::path& dir,
                             bool with_correspondences) {
  std::filesystem::create_directories(dir);
  for (const auto& set : data.images) {
    char name[32];
    std::snprintf(name, sizeof(name), "image_%06llu.uvd", static_cast<unsigned long long>(set.image_id));
    save_descriptor_set(set, dir / name);
  }
  std::ofstream gt(dir / "ground_truth.txt");
  for (const auto& p : data.truth.pairs) gt << p.image_a << ' ' << p.image_b << ' ' << p.correspondences.size() << '\n';
  if (!gt) throw Error(Errc::IoFailure, "cannot write ground truth in " + dir.string());
  if (with_correspondences) {
    std::ofstream m(dir / "ground_truth_matches.txt");
    for (const auto& p : data.truth.pairs) {
      for (const auto& c : p.correspondences) m << p.image_a << ' ' << p.image_b << ' ' << c.index_a << ' ' << c.index_b << '\n';
    }
    if (!m) throw Error(Errc::IoFailure, "cannot write ground-truth matches in " + dir.string());
  }
}

std::set<std::pair<std::uint64_t, std::uint64_t>> read_ground_truth_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path.string());
  std::set<std::pair<std::uint64_t, std::uint64_t>> out;
  std::uint64_t i, j, shared;
  while (in >> i >> j >> shared) out.emplace(std::min(i, j), std::max(i, j));
  return out;
}

}  // namespace pairsel
