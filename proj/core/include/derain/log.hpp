// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <string_view>

namespace derain {

enum class LogLevel { debug = 0, info = 1, warning = 2, error = 3, quiet = 4 };

/// Messages below the threshold are dropped. Default: info.
void set_log_level(LogLevel level);
LogLevel log_level();

/// Replaces the stderr sink; pass an empty function to restore it.
using LogSink = std::function<void(LogLevel, std::string_view)>;
void set_log_sink(LogSink sink);

void log(LogLevel level, std::string_view message);
inline void log_info(std::string_view m) { log(LogLevel::info, m); }
inline void log_warning(std::string_view m) { log(LogLevel::warning, m); }

}  // namespace derain
