// SPDX-License-Identifier: Apache-2.0
#include "pairsel/descriptor_io.hpp"

#include <algorithm>
#include <cmath>

#include "pairsel/binary_io.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;
// Per-feature record: x, y, scale, orientation (4 x f32) + 128 u8.
constexpr std::uint64_t kRecordBytes = 16 + kDescriptorDim;

}  // namespace

void validate(const DescriptorSet& set) {
  const auto where = [&] { return "image " + std::to_string(set.image_id); };
  if (set.image_width == 0 || set.image_height == 0) {
    throw Error(Errc::InvalidArgument, where() + " has zero image size");
  }
  for (std::size_t i = 0; i < set.features.size(); ++i) {
    const LocalFeature& f = set.features[i];
    if (f.descriptor.size() != kDescriptorDim) {
      throw Error(Errc::BadDimension, where() + " feature " + std::to_string(i) + " has " +
                                          std::to_string(f.descriptor.size()) + " components");
    }
    if (!std::isfinite(f.x) || !std::isfinite(f.y) || !std::isfinite(f.orientation) ||
        !std::isfinite(f.scale) || !(f.scale > 0.0f)) {
      throw Error(Errc::InvalidArgument, where() + " feature " + std::to_string(i) +
                                             " has a non-finite field or non-positive scale");
    }
  }
}

void sort_by_scale(DescriptorSet& set) {
  std::stable_sort(set.features.begin(), set.features.end(),
                   [](const LocalFeature& a, const LocalFeature& b) { return a.scale > b.scale; });
}

DescriptorSet load_descriptor_set(const std::filesystem::path& path, const LoadOptions& options) {
  BinaryReader in(path);
  in.expect_magic("UVD1");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  DescriptorSet set;
  set.image_id = in.u64();
  set.image_width = in.u32();
  set.image_height = in.u32();
  const std::uint32_t count = in.u32();
  const std::uint32_t dim = in.u32();
  if (dim != kDescriptorDim) {
    throw Error(Errc::BadDimension, path.string() + " declares descriptor dimension " + std::to_string(dim));
  }
  if (in.remaining() != count * kRecordBytes) {
    throw Error(Errc::TruncatedFile, path.string() + " declares " + std::to_string(count) +
                                         " features but holds " + std::to_string(in.remaining()) +
                                         " payload bytes");
  }
  set.features.resize(count);
  for (LocalFeature& f : set.features) {
    f.x = in.f32();
    f.y = in.f32();
    f.scale = in.f32();
    f.orientation = in.f32();
    f.descriptor.resize(kDescriptorDim);
    in.bytes(f.descriptor);
  }
  sort_by_scale(set);
  if (set.features.size() > options.feature_cap) set.features.resize(options.feature_cap);
  return set;
}

void save_descriptor_set(const DescriptorSet& set, const std::filesystem::path& path) {
  validate(set);
  BinaryWriter out(path);
  out.magic("UVD1");
  out.u32(kFormatVersion);
  out.u64(set.image_id);
  out.u32(set.image_width);
  out.u32(set.image_height);
  out.u32(static_cast<std::uint32_t>(set.features.size()));
  out.u32(static_cast<std::uint32_t>(kDescriptorDim));
  for (const LocalFeature& f : set.features) {
    out.f32(f.x);
    out.f32(f.y);
    out.f32(f.scale);
    out.f32(f.orientation);
    out.bytes(f.descriptor);
  }
  out.finish();
}

std::vector<std::filesystem::path> list_descriptor_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw Error(Errc::IoFailure, "descriptor directory " + dir.string() + " does not exist");
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".uvd") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

Matrix unit_descriptors(const DescriptorSet& set, std::size_t max_features) {
  const std::size_t n = std::min(max_features, set.features.size());
  Matrix m(n, kDescriptorDim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& raw = set.features[i].descriptor;
    if (raw.size() != kDescriptorDim) {
      throw Error(Errc::BadDimension, "image " + std::to_string(set.image_id) + " feature " +
                                          std::to_string(i) + " is not 128-dimensional");
    }
    double norm2 = 0.0;
    for (std::uint8_t v : raw) norm2 += static_cast<double>(v) * v;
    if (norm2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(norm2);
    float* row = m.row_ptr(i);
    for (std::size_t j = 0; j < kDescriptorDim; ++j) row[j] = static_cast<float>(raw[j] * inv);
  }
  return m;
}

}  // namespace pairsel
