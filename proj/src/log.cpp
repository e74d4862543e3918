// Copyright (c) 2026, The Tied-Augment Authors
// SPDX-License-Identifier: Apache-2.0

#include "tiedaug/log.hpp"

#include <iostream>
#include <mutex>

namespace tiedaug {

namespace {

std::mutex g_sink_mutex;
LogSink g_sink;

void default_sink(LogLevel level, std::string_view message) {
    if (level == LogLevel::info) return;
    std::cerr << (level == LogLevel::warning ? "warning: " : "error: ") << message << '\n';
}

}  // namespace

void set_log_sink(LogSink sink) {
    std::lock_guard lock(g_sink_mutex);
    g_sink = std::move(sink);
}

void log_message(LogLevel level, std::string_view message) {
    std::lock_guard lock(g_sink_mutex);
    if (g_sink) {
        g_sink(level, message);
    } else {
        default_sink(level, message);
    }
}

}  // namespace tiedaug
