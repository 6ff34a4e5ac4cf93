// Copyright 2026 The nhlearn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nhlearn/log.h"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace nhlearn {
namespace {

std::optional<LogLevel>& LevelSlot() {
  static std::optional<LogLevel> level;
  return level;
}

LogLevel LevelFromEnv() {
  const char* env = std::getenv("NHLEARN_LOG");
  if (!env) return LogLevel::kWarn;
  std::string value(env);
  if (value == "quiet" || value == "0") return LogLevel::kQuiet;
  if (value == "info" || value == "2") return LogLevel::kInfo;
  if (value == "debug" || value == "3") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

}  // namespace

LogLevel CurrentLogLevel() {
  auto& slot = LevelSlot();
  if (!slot) slot = LevelFromEnv();
  return *slot;
}

void SetLogLevel(LogLevel level) { LevelSlot() = level; }

void Log(LogLevel level, std::string_view message) {
  if (static_cast<int>(level) > static_cast<int>(CurrentLogLevel())) return;
  static constexpr const char* kTags[] = {"", "warn", "info", "debug"};
  std::cerr << "[" << kTags[static_cast<int>(level)] << "] " << message
            << '\n';
}

}  // namespace nhlearn
