// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file core.hpp
/// \brief Domain types shared across retrieval, re-ranking and evaluation.
///
/// Embeddings are stored as float32 (the on-disk precision) and promoted to
/// double for every arithmetic operation. All types are plain values and
/// immutable once validated.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "motor/errors.hpp"

namespace motor {

/// Finite, non-empty embedding. An empty (default-constructed) vector marks a
/// missing embedding and fails dimension checks.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {
        if (values_.empty()) {
            throw Error(ErrorKind::kDimensionMismatch, "embedding must have at least one entry");
        }
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw Error(ErrorKind::kNonFiniteInput, fmt::format("embedding entry {} is not finite", i));
            }
        }
    }

    EmbeddingVector(std::initializer_list<float> values) : EmbeddingVector(std::vector<float>(values)) {}

    std::size_t dim() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }
    std::span<const float> values() const noexcept { return values_; }
    float operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<float> values_;
};

/// Normalized image coordinates, 0 <= min < max <= 1 on both axes.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 1.0;
    double y_max = 1.0;

    bool is_valid() const noexcept {
        const bool finite = std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
                            std::isfinite(y_max);
        return finite && 0.0 <= x_min && x_min < x_max && x_max <= 1.0 && 0.0 <= y_min && y_min < y_max &&
               y_max <= 1.0;
    }

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One abnormality description with its localizing box and both feature
/// embeddings.
struct GroundedFinding {
    std::string description;
    BoundingBox box;
    EmbeddingVector text_embedding;
    EmbeddingVector box_embedding;

    friend bool operator==(const GroundedFinding&, const GroundedFinding&) = default;
};

struct GroundedCaption {
    std::vector<GroundedFinding> findings;

    std::size_t size() const noexcept { return findings.size(); }
    bool empty() const noexcept { return findings.empty(); }

    friend bool operator==(const GroundedCaption&, const GroundedCaption&) = default;
};

struct QueryContext {
    std::string id;
    EmbeddingVector image_embedding;
    GroundedCaption caption;
    std::string question_text;
    EmbeddingVector question_embedding;
    // Opaque reference forwarded to the generation service (path or id).
    std::string image_ref;

    friend bool operator==(const QueryContext&, const QueryContext&) = default;
};

struct CandidateRecord {
    std::string id;
    EmbeddingVector image_embedding;
    GroundedCaption caption;
    std::string report_text;
    EmbeddingVector report_embedding;

    friend bool operator==(const CandidateRecord&, const CandidateRecord&) = default;
};

struct EmbeddingDims {
    std::size_t visual = 768;
    std::size_t text = 512;

    friend bool operator==(const EmbeddingDims&, const EmbeddingDims&) = default;
};

enum class SinkhornMode {
    kAuto,       // plain scaling for gamma >= kLogDomainGammaThreshold, log-domain below
    kPlain,
    kLogDomain,
};

inline constexpr double kLogDomainGammaThreshold = 0.05;
inline constexpr double kWeightSumTolerance = 1e-9;

struct RerankConfig {
    double alpha = 0.2;
    double beta = 0.3;
    double delta = 0.5;
    double gamma = 1.0;
    std::size_t k = 10;
    std::size_t s = 5;
    std::size_t sinkhorn_max_iters = 1000;
    double sinkhorn_tol = 1e-6;
    SinkhornMode sinkhorn_mode = SinkhornMode::kAuto;
    EmbeddingDims dims{};
    // Worker threads for per-candidate scoring; results do not depend on it.
    std::size_t threads = 1;

    friend bool operator==(const RerankConfig&, const RerankConfig&) = default;
};

inline void validate_config(const RerankConfig& cfg) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidConfig, msg); };
    for (double w : {cfg.alpha, cfg.beta, cfg.delta}) {
        if (!std::isfinite(w) || w < 0.0) {
            fail(fmt::format("weights must be nonnegative (alpha={}, beta={}, delta={})", cfg.alpha, cfg.beta,
                             cfg.delta));
        }
    }
    const double sum = cfg.alpha + cfg.beta + cfg.delta;
    if (std::abs(sum - 1.0) > kWeightSumTolerance) {
        fail(fmt::format("weights must sum to 1 (alpha + beta + delta = {})", sum));
    }
    if (!std::isfinite(cfg.gamma) || cfg.gamma <= 0.0) {
        fail(fmt::format("gamma must be positive (got {})", cfg.gamma));
    }
    if (cfg.k == 0) {
        fail("k must be positive");
    }
    if (cfg.s == 0) {
        fail("s must be positive");
    }
    if (cfg.s > cfg.k) {
        fail("s must not exceed k");
    }
    if (cfg.sinkhorn_max_iters == 0) {
        fail("sinkhorn_max_iters must be positive");
    }
    if (!std::isfinite(cfg.sinkhorn_tol) || cfg.sinkhorn_tol <= 0.0) {
        fail("sinkhorn_tol must be positive");
    }
    if (cfg.dims.visual == 0 || cfg.dims.text == 0) {
        fail("embedding dims must be positive");
    }
    if (cfg.threads == 0) {
        fail("threads must be positive");
    }
}

namespace presets {

/// alpha = 0.2, beta = 0.3, delta = 0.5, gamma = 1, k = 10, s = 5.
inline RerankConfig standard() { return RerankConfig{}; }

/// Ablation preset leaning on the visual (box feature) term; same weights
/// as the default configuration.
inline RerankConfig visual_prioritized() { return RerankConfig{}; }

/// Ablation preset leaning on the finding-text term.
inline RerankConfig text_prioritized() {
    RerankConfig cfg;
    cfg.beta = 0.5;
    cfg.delta = 0.3;
    return cfg;
}

}  // namespace presets

namespace detail {

inline void check_dim(const EmbeddingVector& v, std::size_t expected, std::string_view what) {
    if (v.dim() != expected) {
        throw Error(ErrorKind::kDimensionMismatch,
                    fmt::format("{} has {} entries, expected {}", what, v.dim(), expected));
    }
}

inline void check_caption(const GroundedCaption& caption, const EmbeddingDims& dims, std::string_view owner) {
    for (std::size_t i = 0; i < caption.findings.size(); ++i) {
        const auto& f = caption.findings[i];
        if (f.description.empty()) {
            throw Error(ErrorKind::kEmptyDescription, fmt::format("{} finding {} has an empty description", owner, i));
        }
        if (!f.box.is_valid()) {
            throw Error(ErrorKind::kMalformedBox,
                        fmt::format("{} finding {} box [{},{},{},{}] is not a normalized box", owner, i, f.box.x_min,
                                    f.box.y_min, f.box.x_max, f.box.y_max));
        }
        check_dim(f.text_embedding, dims.text, fmt::format("{} finding {} text embedding", owner, i));
        check_dim(f.box_embedding, dims.visual, fmt::format("{} finding {} box embedding", owner, i));
    }
}

}  // namespace detail

/// Returns the query unchanged if every invariant holds under the dims
/// carried by cfg. Checks run in a fixed order so exactly one error is raised.
inline QueryContext validate_query(const QueryContext& q, const RerankConfig& cfg) {
    if (q.question_text.empty()) {
        throw Error(ErrorKind::kEmptyQuestion, fmt::format("query '{}' has an empty question", q.id));
    }
    detail::check_dim(q.image_embedding, cfg.dims.visual, fmt::format("query '{}' image embedding", q.id));
    detail::check_dim(q.question_embedding, cfg.dims.text, fmt::format("query '{}' question embedding", q.id));
    detail::check_caption(q.caption, cfg.dims, fmt::format("query '{}'", q.id));
    return q;
}

inline CandidateRecord validate_record(const CandidateRecord& r, const EmbeddingDims& dims) {
    if (r.report_text.empty()) {
        throw Error(ErrorKind::kEmptyReport, fmt::format("record '{}' has an empty report", r.id));
    }
    detail::check_dim(r.image_embedding, dims.visual, fmt::format("record '{}' image embedding", r.id));
    detail::check_dim(r.report_embedding, dims.text, fmt::format("record '{}' report embedding", r.id));
    detail::check_caption(r.caption, dims, fmt::format("record '{}'", r.id));
    return r;
}

}  // namespace motor
