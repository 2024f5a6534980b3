// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include <fmt/format.h>
#include <unistd.h>

#include "motor/errors.hpp"

namespace motor::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::kIoError, fmt::format("cannot open '{}'", path.string()));
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

/// Writes to a sibling temp file and renames it over the target, so readers
/// never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    static std::atomic<unsigned> counter{0};
    auto tmp = path;
    tmp += fmt::format(".tmp.{}.{}", ::getpid(), counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::kIoError, fmt::format("cannot write '{}'", tmp.string()));
        }
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw Error(ErrorKind::kIoError, fmt::format("short write to '{}'", tmp.string()));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorKind::kIoError, fmt::format("cannot rename onto '{}'", path.string()));
    }
}

}  // namespace motor::io
