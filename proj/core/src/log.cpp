// Copyright (c) 2026, derain authors
// SPDX-License-Identifier: Apache-2.0

#include "derain/log.hpp"

#include <cstdio>
#include <mutex>

namespace derain {

namespace {

std::mutex g_mutex;
LogLevel g_level = LogLevel::info;
LogSink g_sink;

const char* tag(LogLevel l) {
    switch (l) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warning: return "warning";
        case LogLevel::error: return "error";
        case LogLevel::quiet: break;
    }
    return "";
}

}  // namespace

void set_log_level(LogLevel level) {
    std::lock_guard lock(g_mutex);
    g_level = level;
}

LogLevel log_level() {
    std::lock_guard lock(g_mutex);
    return g_level;
}

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_mutex);
    g_sink = std::move(sink);
}

void log(LogLevel level, std::string_view message) {
    std::lock_guard lock(g_mutex);
    if (level < g_level || level == LogLevel::quiet) return;
    if (g_sink) {
        g_sink(level, message);
        return;
    }
    std::fprintf(stderr, "[%s] %.*s\n", tag(level), static_cast<int>(message.size()), message.data());
}

}  // namespace derain
