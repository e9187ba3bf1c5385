// SPDX-License-Identifier: Apache-2.0
#include "pairsel/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace pairsel::log {
namespace {

std::atomic<Level> g_level{Level::warn};
std::mutex g_mu;

void emit(Level at, std::string_view tag, std::string_view message) {
  if (static_cast<int>(g_level.load()) < static_cast<int>(at)) return;
  std::lock_guard lock(g_mu);
  std::cerr << '[' << tag << "] " << message << '\n';
}

}  // namespace

void set_level(Level level) { g_level = level; }
Level level() { return g_level; }

void warn(std::string_view message) { emit(Level::warn, "warn", message); }
void info(std::string_view message) { emit(Level::info, "info", message); }
void debug(std::string_view message) { emit(Level::debug, "debug", message); }

}  // namespace pairsel::log
