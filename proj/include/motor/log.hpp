// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace motor {

/// Shared stderr logger. The initial level comes from the MOTOR_LOG
/// environment variable (trace, debug, info, warn, error, off); default warn.
inline std::shared_ptr<spdlog::logger> logger() {
    static std::shared_ptr<spdlog::logger> instance = [] {
        auto existing = spdlog::get("motor");
        if (existing) {
            return existing;
        }
        auto created = spdlog::stderr_color_mt("motor");
        created->set_pattern("[%l] %v");
        auto level = spdlog::level::warn;
        if (const char* env = std::getenv("MOTOR_LOG"); env != nullptr && *env != '\0') {
            level = spdlog::level::from_str(env);
        }
        created->set_level(level);
        return created;
    }();
    return instance;
}

inline void set_log_level(const std::string& name) {
    logger()->set_level(spdlog::level::from_str(name));
}

}  // namespace motor
