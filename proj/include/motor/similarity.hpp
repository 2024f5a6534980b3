// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include <fmt/format.h>

#include "motor/core.hpp"
#include "motor/errors.hpp"
#include "motor/log.hpp"
#include "motor/matrix.hpp"

namespace motor {

/// Cosine similarity accumulated in double, clamped to [-1, 1]. A zero-norm
/// operand yields 0 and a warning.
template <typename T, typename U>
double cosine_similarity(std::span<const T> a, std::span<const U> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::kDimensionMismatch,
                    fmt::format("cosine similarity of vectors with {} and {} entries", a.size(), b.size()));
    }
    double dot = 0.0;
    double norm_a = 0.0;
    double norm_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double x = static_cast<double>(a[i]);
        const double y = static_cast<double>(b[i]);
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if (norm_a == 0.0 || norm_b == 0.0) {
        logger()->warn("cosine similarity with a zero-norm vector; returning 0");
        return 0.0;
    }
    const double cos = dot / (std::sqrt(norm_a) * std::sqrt(norm_b));
    return std::clamp(cos, -1.0, 1.0);
}

inline double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values(), b.values());
}

/// Entry (i, j) is cosine_similarity(a[i], b[j]). Either side may be empty.
inline Matrix similarity_matrix(std::span<const EmbeddingVector> a, std::span<const EmbeddingVector> b) {
    const auto check_uniform = [](std::span<const EmbeddingVector> vs, const char* side) {
        for (const auto& v : vs) {
            if (v.dim() != vs.front().dim()) {
                throw Error(ErrorKind::kDimensionMismatch,
                            fmt::format("{} side mixes dims {} and {}", side, vs.front().dim(), v.dim()));
            }
        }
    };
    if (!a.empty()) {
        check_uniform(a, "left");
    }
    if (!b.empty()) {
        check_uniform(b, "right");
    }
    if (!a.empty() && !b.empty() && a.front().dim() != b.front().dim()) {
        throw Error(ErrorKind::kDimensionMismatch,
                    fmt::format("similarity matrix between dims {} and {}", a.front().dim(), b.front().dim()));
    }
    Matrix out(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            out(i, j) = cosine_similarity(a[i], b[j]);
        }
    }
    return out;
}

inline Matrix similarity_matrix(const std::vector<EmbeddingVector>& a, const std::vector<EmbeddingVector>& b) {
    return similarity_matrix(std::span<const EmbeddingVector>(a), std::span<const EmbeddingVector>(b));
}

}  // namespace motor
