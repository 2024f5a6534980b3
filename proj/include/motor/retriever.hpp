// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/similarity.hpp"

namespace motor {

struct RetrievalResult {
    std::string record_id;
    std::size_t initial_rank = 0;  // 1-based
    double similarity = 0.0;

    friend bool operator==(const RetrievalResult&, const RetrievalResult&) = default;
};

/// Exhaustive top-k scan by image-embedding cosine similarity. Results are
/// ordered by similarity descending, ties by insertion order. An empty store
/// yields an empty list.
inline std::vector<RetrievalResult> retrieve_top_k(const CorpusStore& store, const EmbeddingVector& query_image,
                                                   std::size_t k) {
    if (k == 0) {
        throw Error(ErrorKind::kInvalidConfig, "k must be positive");
    }
    if (store.empty()) {
        return {};
    }
    if (query_image.dim() != store.visual_dim()) {
        throw Error(ErrorKind::kDimensionMismatch, fmt::format("query image embedding has {} entries, store uses {}",
                                                               query_image.dim(), store.visual_dim()));
    }
    const auto& records = store.records();
    std::vector<double> sims(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        sims[i] = cosine_similarity(query_image, records[i].image_embedding);
    }
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t x, std::size_t y) { return sims[x] > sims[y] || (sims[x] == sims[y] && x < y); });
    std::vector<RetrievalResult> out;
    out.reserve(take);
    for (std::size_t r = 0; r < take; ++r) {
        out.push_back({records[order[r]].id, r + 1, sims[order[r]]});
    }
    return out;
}

}  // namespace motor
