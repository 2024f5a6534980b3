// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file reranker.hpp
/// \brief Multimodal optimal-transport re-ranking of retrieved candidates.
///
/// For a query Q and candidate R the finding-level similarity is
///
///   F(i, j) = alpha * cos(U, M) + beta * cos(t_i^q, t_j^r) + delta * cos(b_i^q, b_j^r)
///
/// where U / M are the question and report embeddings, t the finding text
/// embeddings and b the box feature embeddings. The transport cost is
/// C = 1 - F and a candidate scores the entropic OT cost between uniform
/// distributions over the two finding sets. Candidates are re-ordered by
/// ascending cost. When either caption is empty the score falls back to
/// 1 - cos(U, M).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <fmt/format.h>

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/log.hpp"
#include "motor/matrix.hpp"
#include "motor/ot_solver.hpp"
#include "motor/retriever.hpp"
#include "motor/similarity.hpp"

namespace motor {

struct CandidateScore {
    std::string record_id;
    double ot_cost = std::numeric_limits<double>::infinity();
    std::size_t initial_rank = 0;
    std::size_t final_rank = 0;
    bool fallback_used = false;
    std::size_t iterations = 0;
    bool converged = true;
    // Set when scoring failed; such candidates carry an infinite cost.
    std::optional<std::string> error;

    friend bool operator==(const CandidateScore&, const CandidateScore&) = default;
};

struct RerankCandidate {
    std::reference_wrapper<const CandidateRecord> record;
    RetrievalResult retrieval;
};

inline SinkhornOptions sinkhorn_options(const RerankConfig& cfg) {
    return {cfg.gamma, cfg.sinkhorn_max_iters, cfg.sinkhorn_tol, cfg.sinkhorn_mode};
}

namespace detail {

inline std::vector<EmbeddingVector> finding_text_embeddings(const GroundedCaption& caption) {
    std::vector<EmbeddingVector> out;
    out.reserve(caption.size());
    for (const auto& f : caption.findings) {
        out.push_back(f.text_embedding);
    }
    return out;
}

inline std::vector<EmbeddingVector> finding_box_embeddings(const GroundedCaption& caption) {
    std::vector<EmbeddingVector> out;
    out.reserve(caption.size());
    for (const auto& f : caption.findings) {
        out.push_back(f.box_embedding);
    }
    return out;
}

}  // namespace detail

/// n_q x n_r composite similarity, clamped to [-1, 1].
inline Matrix composite_similarity(const QueryContext& q, const CandidateRecord& r, const RerankConfig& cfg) {
    const double question_report = cosine_similarity(q.question_embedding, r.report_embedding);
    const Matrix text = similarity_matrix(detail::finding_text_embeddings(q.caption),
                                          detail::finding_text_embeddings(r.caption));
    const Matrix visual = similarity_matrix(detail::finding_box_embeddings(q.caption),
                                            detail::finding_box_embeddings(r.caption));
    Matrix out(q.caption.size(), r.caption.size());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        for (std::size_t j = 0; j < out.cols(); ++j) {
            const double f = cfg.alpha * question_report + cfg.beta * text(i, j) + cfg.delta * visual(i, j);
            out(i, j) = std::clamp(f, -1.0, 1.0);
        }
    }
    return out;
}

/// Scores a precomputed cost matrix with uniform marginals.
inline CandidateScore score_cost_matrix(const CostMatrix& cost, const RerankConfig& cfg) {
    const auto u = uniform_marginal(cost.rows());
    const auto v = uniform_marginal(cost.cols());
    const auto plan = sinkhorn(cost, u, v, sinkhorn_options(cfg));
    CandidateScore score;
    score.ot_cost = plan.cost;
    score.iterations = plan.iterations;
    score.converged = plan.converged;
    return score;
}

/// Unranked score for one candidate. Sinkhorn non-convergence is recorded in
/// `converged` and logged, and the best iterate's cost is kept.
inline CandidateScore score_candidate(const QueryContext& q, const CandidateRecord& r, const RerankConfig& cfg) {
    CandidateScore score;
    if (q.caption.empty() || r.caption.empty()) {
        score.ot_cost = 1.0 - cosine_similarity(q.question_embedding, r.report_embedding);
        score.fallback_used = true;
    } else {
        score = score_cost_matrix(build_cost_matrix(composite_similarity(q, r, cfg)), cfg);
        if (!score.converged) {
            logger()->warn("sinkhorn did not converge for query '{}' vs '{}' after {} iterations", q.id, r.id,
                           score.iterations);
        }
    }
    score.record_id = r.id;
    return score;
}

/// Sorts by ascending cost (ties by initial rank) and assigns final ranks 1..n.
/// Non-finite costs sort last.
inline std::vector<CandidateScore> rank_scores(std::vector<CandidateScore> scores) {
    auto key = [](const CandidateScore& s) {
        return std::isnan(s.ot_cost) ? std::numeric_limits<double>::infinity() : s.ot_cost;
    };
    std::sort(scores.begin(), scores.end(), [&](const CandidateScore& x, const CandidateScore& y) {
        const double kx = key(x);
        const double ky = key(y);
        return kx < ky || (kx == ky && x.initial_rank < y.initial_rank);
    });
    for (std::size_t i = 0; i < scores.size(); ++i) {
        scores[i].final_rank = i + 1;
    }
    return scores;
}

/// Scores every candidate (concurrently when cfg.threads > 1) and returns
/// them in final order. A candidate whose scoring throws gets cost +inf and
/// the error text; it never aborts the re-ranking.
inline std::vector<CandidateScore> rerank(const QueryContext& q, const std::vector<RerankCandidate>& candidates,
                                          const RerankConfig& cfg) {
    std::vector<CandidateScore> scores(candidates.size());
    auto score_one = [&](std::size_t i) {
        const auto& cand = candidates[i];
        try {
            scores[i] = score_candidate(q, cand.record.get(), cfg);
        } catch (const std::exception& e) {
            scores[i] = CandidateScore{};
            scores[i].record_id = cand.record.get().id;
            scores[i].converged = false;
            scores[i].error = e.what();
            logger()->warn("scoring '{}' failed: {}", cand.record.get().id, e.what());
        }
        scores[i].initial_rank = cand.retrieval.initial_rank;
    };
    const std::size_t workers = std::min(cfg.threads, candidates.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            score_one(i);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < candidates.size(); i = next.fetch_add(1)) {
                    score_one(i);
                }
            });
        }
    }
    return rank_scores(std::move(scores));
}

/// Report texts of the s best-ranked candidates, in final-rank order.
/// Fewer are returned when fewer scores exist.
inline std::vector<std::string> select_context(const std::vector<CandidateScore>& scores, const CorpusStore& store,
                                               std::size_t s) {
    std::vector<const CandidateScore*> ordered;
    ordered.reserve(scores.size());
    for (const auto& sc : scores) {
        ordered.push_back(&sc);
    }
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const CandidateScore* x, const CandidateScore* y) { return x->final_rank < y->final_rank; });
    std::vector<std::string> reports;
    for (std::size_t i = 0; i < std::min(s, ordered.size()); ++i) {
        const auto* record = store.find(ordered[i]->record_id);
        if (record == nullptr) {
            throw Error(ErrorKind::kUnknownRecordId, ordered[i]->record_id);
        }
        reports.push_back(record->report_text);
    }
    return reports;
}

}  // namespace motor
