// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "pairsel/descriptor_io.hpp"

namespace testutil {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("pairsel_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Random image with `n` features and distinct-ish descriptors.
inline pairsel::DescriptorSet random_set(std::uint64_t id, std::size_t n, std::mt19937_64& rng) {
  pairsel::DescriptorSet s;
  s.image_id = id;
  s.image_width = 640;
  s.image_height = 480;
  std::uniform_real_distribution<float> ux(0.0f, 640.0f), uy(0.0f, 480.0f), us(1.0f, 10.0f), uo(-3.1f, 3.1f);
  std::uniform_int_distribution<int> ub(0, 255);
  for (std::size_t i = 0; i < n; ++i) {
    pairsel::LocalFeature f;
    f.x = ux(rng);
    f.y = uy(rng);
    f.scale = us(rng);
    f.orientation = uo(rng);
    f.descriptor.resize(pairsel::kDescriptorDim);
    for (auto& b : f.descriptor) b = static_cast<std::uint8_t>(ub(rng));
    s.features.push_back(std::move(f));
  }
  return s;
}

}  // namespace testutil
