// SPDX-License-Identifier: Apache-2.0
#include "pairsel/vlad.hpp"

#include <algorithm>
#include <cmath>

#include "pairsel/binary_io.hpp"
#include "pairsel/kernels.hpp"
#include "pairsel/parallel.hpp"

namespace pairsel {
namespace {

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

VladDescriptor aggregate_vlad(std::uint64_t image_id, const Matrix& x, const Codebook& codebook) {
  const std::size_t k = codebook.k();
  const std::size_t d = codebook.dim();
  if (x.rows > 0 && x.cols != d) {
    throw Error(Errc::DimensionMismatch, "descriptors of dimension " + std::to_string(x.cols) +
                                             " against codebook of dimension " + std::to_string(d));
  }
  std::vector<double> acc(k * d, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const float* v = x.row_ptr(i);
    const std::uint32_t c = kernels::nearest_row(codebook.centers, v);
    const float* center = codebook.centers.row_ptr(c);
    double* block = acc.data() + c * d;
    for (std::size_t j = 0; j < d; ++j) block[j] += static_cast<double>(v[j]) - static_cast<double>(center[j]);
  }

  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double* block = acc.data() + c * d;
    double n2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) n2 += block[j] * block[j];
    if (n2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t j = 0; j < d; ++j) block[j] *= inv;
    total += 1.0;  // each non-zero block now has unit norm
  }

  VladDescriptor out;
  out.image_id = image_id;
  out.k = k;
  out.d = d;
  out.values.assign(k * d, 0.0f);
  if (total == 0.0) {
    out.degenerate = true;
    return out;
  }
  const double inv = 1.0 / std::sqrt(total);
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] * inv);
  return out;
}

VladDescriptor aggregate_vlad(const DescriptorSet& set, const Codebook& codebook) {
  if (codebook.dim() != kDescriptorDim) {
    throw Error(Errc::DimensionMismatch, "codebook dimension " + std::to_string(codebook.dim()) +
                                             " does not match descriptor dimension 128");
  }
  return aggregate_vlad(set.image_id, unit_descriptors(set), codebook);
}

std::vector<VladDescriptor> batch_aggregate(std::span<const DescriptorSet> sets, const Codebook& codebook,
                                            Exec exec) {
  std::vector<VladDescriptor> out(sets.size());
  for_each_index(sets.size(), exec, [&](std::size_t i) {
    try {
      out[i] = aggregate_vlad(sets[i], codebook);
    } catch (const Error& e) {
      throw Error(e.code(), "image " + std::to_string(sets[i].image_id) + ": " + e.what());
    }
  });
  return out;
}

Matrix stack_vlads(std::span<const VladDescriptor> vlads, std::vector<std::uint64_t>& ids) {
  ids.clear();
  Matrix m;
  for (const VladDescriptor& v : vlads) {
    if (v.degenerate) continue;
    m.append_row(v.values);
    ids.push_back(v.image_id);
  }
  return m;
}

void save_vlads(std::span<const VladDescriptor> vlads, const std::filesystem::path& path) {
  const std::size_t k = vlads.empty() ? 0 : vlads.front().k;
  const std::size_t d = vlads.empty() ? 0 : vlads.front().d;
  for (const VladDescriptor& v : vlads) {
    if (v.k != k || v.d != d || v.values.size() != k * d) {
      throw Error(Errc::DimensionMismatch, "VLAD descriptors of mixed shape");
    }
  }
  BinaryWriter out(path);
  out.magic("UVL1");
  out.u32(kFormatVersion);
  out.u64(vlads.size());
  out.u32(static_cast<std::uint32_t>(k));
  out.u32(static_cast<std::uint32_t>(d));
  for (const VladDescriptor& v : vlads) {
    out.u64(v.image_id);
    out.f32s(v.values);
  }
  out.finish();
}

std::vector<VladDescriptor> load_vlads(const std::filesystem::path& path) {
  BinaryReader in(path);
  in.expect_magic("UVL1");
  const std::uint32_t version = in.u32();
  if (version != kFormatVersion) {
    throw Error(Errc::MalformedHeader, path.string() + " has unsupported version " + std::to_string(version));
  }
  const std::uint64_t count = in.u64();
  const std::uint32_t k = in.u32();
  const std::uint32_t d = in.u32();
  const std::uint64_t record = 8 + static_cast<std::uint64_t>(k) * d * 4;
  if (in.remaining() != count * record) {
    throw Error(Errc::TruncatedFile, path.string() + " does not hold " + std::to_string(count) + " descriptors");
  }
  std::vector<VladDescriptor> out(count);
  for (VladDescriptor& v : out) {
    v.image_id = in.u64();
    v.k = k;
    v.d = d;
    v.values.resize(static_cast<std::size_t>(k) * d);
    in.f32s(v.values);
    v.degenerate = std::all_of(v.values.begin(), v.values.end(), [](float x) { return x == 0.0f; });
  }
  return out;
}

}  // namespace pairsel
