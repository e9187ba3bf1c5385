// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace pairsel {

/// Plain-text `key = value` configuration. Blank lines and `#` comments are
/// ignored; later keys override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text);
  static KeyValues read(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void merge(const KeyValues& overrides);

  /// Typed getters; a present but unparsable value throws InvalidConfig.
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string get(const std::string& key, const char* fallback) const {
    return get(key, std::string(fallback));
  }
  double get(const std::string& key, double fallback) const;
  std::uint64_t get(const std::string& key, std::uint64_t fallback) const;
  bool get(const std::string& key, bool fallback) const;

  /// Canonical text form: sorted keys, one `key = value` per line.
  std::string to_string() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace pairsel
