// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file evalkit.hpp
/// \brief Offline evaluation: re-ranking change rate, planted-relevance
/// precision and MRR, a seeded synthetic corpus generator and weight sweeps.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/pipeline.hpp"

namespace motor::eval {

using Ranking = std::vector<std::string>;
using PlantedMap = std::map<std::string, std::vector<std::string>>;

// Change rate ----------------------------------------------------------------

/// Fraction of samples whose re-ranked order differs from the initial one.
/// With `top_s` set only the first top_s positions are compared; otherwise the
/// whole list is. Each pair must be a permutation of the same ids.
inline double change_rate(const std::vector<Ranking>& initial, const std::vector<Ranking>& reranked,
                          std::optional<std::size_t> top_s = std::nullopt) {
    if (initial.size() != reranked.size()) {
        throw Error(ErrorKind::kMisalignedSamples,
                    fmt::format("{} initial rankings vs {} re-ranked", initial.size(), reranked.size()));
    }
    if (initial.empty()) {
        return 0.0;
    }
    std::size_t changed = 0;
    for (std::size_t n = 0; n < initial.size(); ++n) {
        auto a = initial[n];
        auto b = reranked[n];
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        if (a != b) {
            throw Error(ErrorKind::kNotAPermutation, fmt::format("sample {} re-ranked ids differ from initial", n));
        }
        const std::size_t depth = top_s ? std::min(*top_s, initial[n].size()) : initial[n].size();
        if (!std::equal(initial[n].begin(), initial[n].begin() + static_cast<std::ptrdiff_t>(depth),
                        reranked[n].begin())) {
            ++changed;
        }
    }
    return static_cast<double>(changed) / static_cast<double>(initial.size());
}

// Planted relevance ---------------------------------------------------------

struct PlantedMetrics {
    double precision_at_s = 0.0;
    double mrr = 0.0;
};

/// precision_at_s averages |top-s ∩ planted| / min(s, |planted|) over queries;
/// mrr averages 1 / rank of the first planted id (0 when absent).
inline PlantedMetrics planted_precision(const std::vector<std::string>& query_ids, const std::vector<Ranking>& rankings,
                                        const PlantedMap& planted, std::size_t s) {
    if (query_ids.size() != rankings.size()) {
        throw Error(ErrorKind::kMisalignedSamples,
                    fmt::format("{} queries vs {} rankings", query_ids.size(), rankings.size()));
    }
    if (s == 0) {
        throw Error(ErrorKind::kInvalidConfig, "s must be positive");
    }
    PlantedMetrics out;
    if (query_ids.empty()) {
        return out;
    }
    for (std::size_t n = 0; n < query_ids.size(); ++n) {
        auto it = planted.find(query_ids[n]);
        if (it == planted.end() || it->second.empty()) {
            throw Error(ErrorKind::kMissingQuery, query_ids[n]);
        }
        const std::unordered_set<std::string> relevant(it->second.begin(), it->second.end());
        const auto& ranking = rankings[n];
        std::size_t hits = 0;
        for (std::size_t r = 0; r < std::min(s, ranking.size()); ++r) {
            hits += relevant.contains(ranking[r]) ? 1 : 0;
        }
        out.precision_at_s += static_cast<double>(hits) / static_cast<double>(std::min(s, relevant.size()));
        for (std::size_t r = 0; r < ranking.size(); ++r) {
            if (relevant.contains(ranking[r])) {
                out.mrr += 1.0 / static_cast<double>(r + 1);
                break;
            }
        }
    }
    out.precision_at_s /= static_cast<double>(query_ids.size());
    out.mrr /= static_cast<double>(query_ids.size());
    return out;
}

enum class RankingStage { kInitial, kFinal };

inline std::vector<Ranking> rankings_of(const std::vector<GenerationRequest>& requests, RankingStage stage) {
    std::vector<Ranking> out;
    out.reserve(requests.size());
    for (const auto& req : requests) {
        out.push_back(stage == RankingStage::kFinal ? final_ids(req.trace) : initial_ids(req.trace));
    }
    return out;
}

/// Request-based form: the ranking comes from each request's trace
/// (re-ranked by default, first-stage retrieval for a no-re-ranking baseline).
inline PlantedMetrics planted_precision(const std::vector<std::string>& query_ids,
                                        const std::vector<GenerationRequest>& requests, const PlantedMap& planted,
                                        std::size_t s, RankingStage stage = RankingStage::kFinal) {
    return planted_precision(query_ids, rankings_of(requests, stage), planted, s);
}

// Synthetic corpora ---------------------------------------------------------

struct SyntheticCorpusSpec {
    std::size_t n_records = 50;
    std::size_t n_queries = 20;
    std::size_t visual_dim = 768;
    std::size_t text_dim = 512;
    std::size_t n_planted_relevant = 1;
    std::size_t findings_min = 1;
    std::size_t findings_max = 4;
    // Relative size of the perturbation applied to planted finding embeddings.
    double noise_scale = 0.1;
    // Perturbation of planted image embeddings; defaults to noise_scale.
    std::optional<double> planted_image_noise;
    // Records per query whose image is a near copy of the query image but
    // whose findings and report are unrelated.
    std::size_t image_decoys_per_query = 0;
    double decoy_image_noise = 0.05;
    std::uint64_t seed = 0;
};

struct SyntheticCorpus {
    CorpusStore store;
    std::vector<QueryContext> queries;
    PlantedMap planted;
};

inline void validate_spec(const SyntheticCorpusSpec& spec) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::kInvalidSpec, msg); };
    if (spec.visual_dim < 2 || spec.text_dim < 2) {
        fail("embedding dims must be at least 2");
    }
    if (spec.n_queries == 0) {
        fail("n_queries must be positive");
    }
    if (spec.n_planted_relevant > spec.n_records) {
        fail("n_planted_relevant exceeds n_records");
    }
    const std::size_t reserved = spec.n_queries * (spec.n_planted_relevant + spec.image_decoys_per_query);
    if (reserved > spec.n_records) {
        fail(fmt::format("{} queries need {} planted and decoy records but n_records is {}", spec.n_queries, reserved,
                         spec.n_records));
    }
    if (spec.findings_min > spec.findings_max) {
        fail("findings_min exceeds findings_max");
    }
    for (double noise : {spec.noise_scale, spec.planted_image_noise.value_or(0.0), spec.decoy_image_noise}) {
        if (!std::isfinite(noise) || noise < 0.0) {
            fail("noise scales must be finite and nonnegative");
        }
    }
}

namespace detail {

inline constexpr const char* kFindingVocabulary[] = {
    "left lower lobe opacity", "right pleural effusion",  "cardiomegaly",
    "left pneumothorax",       "right upper lobe nodule", "bibasilar atelectasis",
    "pulmonary edema",         "hilar enlargement",       "endotracheal tube",
    "rib fracture",            "consolidation",           "hiatal hernia",
};

class Generator {
public:
    explicit Generator(std::uint64_t seed) : rng_(seed) {}

    std::vector<double> unit(std::size_t dim) {
        std::normal_distribution<double> normal(0.0, 1.0);
        std::vector<double> v(dim);
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& x : v) {
                x = normal(rng_);
                norm += x * x;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& x : v) {
            x /= norm;
        }
        return v;
    }

    /// normalize(base + noise * random unit direction)
    std::vector<double> perturb(const std::vector<double>& base, double noise) {
        auto dir = unit(base.size());
        std::vector<double> v(base.size());
        double norm = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = base[i] + noise * dir[i];
            norm += v[i] * v[i];
        }
        norm = std::sqrt(norm);
        for (auto& x : v) {
            x /= norm;
        }
        return v;
    }

    std::size_t uniform_index(std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }

    BoundingBox box() {
        std::uniform_real_distribution<double> coord(0.0, 0.6);
        std::uniform_real_distribution<double> extent(0.1, 0.4);
        const double x = coord(rng_);
        const double y = coord(rng_);
        return {x, y, x + extent(rng_), y + extent(rng_)};
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

inline EmbeddingVector to_embedding(const std::vector<double>& v) {
    return EmbeddingVector(std::vector<float>(v.begin(), v.end()));
}

inline std::vector<double> to_doubles(const EmbeddingVector& v) {
    return {v.values().begin(), v.values().end()};
}

/// Exact copy when noise is zero, so planted findings match bit for bit.
inline EmbeddingVector perturbed(Generator& gen, const EmbeddingVector& base, double noise) {
    if (noise == 0.0) {
        return base;
    }
    return to_embedding(gen.perturb(to_doubles(base), noise));
}

inline GroundedCaption random_caption(Generator& gen, const SyntheticCorpusSpec& spec) {
    GroundedCaption caption;
    const std::size_t n = gen.uniform_index(spec.findings_min, spec.findings_max);
    constexpr std::size_t vocab = std::size(kFindingVocabulary);
    for (std::size_t i = 0; i < n; ++i) {
        caption.findings.push_back({kFindingVocabulary[gen.uniform_index(0, vocab - 1)], gen.box(),
                                    to_embedding(gen.unit(spec.text_dim)), to_embedding(gen.unit(spec.visual_dim))});
    }
    return caption;
}

inline std::string report_for(const GroundedCaption& caption) {
    if (caption.empty()) {
        return "No acute cardiopulmonary abnormality.";
    }
    std::string out = "Findings:";
    for (const auto& f : caption.findings) {
        out += " " + f.description + ".";
    }
    return out;
}

}  // namespace detail

/// Builds a corpus in which each query has n_planted_relevant records made by
/// perturbing the query's finding embeddings (and shuffling their order) and
/// copying its question embedding as the report embedding. The remaining
/// records are independent random distractors, plus optional image decoys.
/// All embeddings are unit-normalized. Pure function of `spec`.
inline SyntheticCorpus generate_synthetic_corpus(const SyntheticCorpusSpec& spec) {
    validate_spec(spec);
    detail::Generator gen(spec.seed);
    const double image_noise = spec.planted_image_noise.value_or(spec.noise_scale);

    SyntheticCorpus out;
    for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
        QueryContext q;
        q.id = fmt::format("q-{:04d}", qi);
        q.image_embedding = detail::to_embedding(gen.unit(spec.visual_dim));
        q.caption = detail::random_caption(gen, spec);
        q.question_text = q.caption.empty() ? "Is there any abnormality?"
                                            : fmt::format("Where is the {}?", q.caption.findings.front().description);
        q.question_embedding = detail::to_embedding(gen.unit(spec.text_dim));
        q.image_ref = fmt::format("synthetic://{}", q.id);
        out.queries.push_back(std::move(q));
    }

    struct Pending {
        CandidateRecord record;
        std::optional<std::size_t> planted_for;
    };
    std::vector<Pending> pending;
    for (std::size_t qi = 0; qi < spec.n_queries; ++qi) {
        const auto& q = out.queries[qi];
        for (std::size_t p = 0; p < spec.n_planted_relevant; ++p) {
            CandidateRecord r;
            r.image_embedding = detail::perturbed(gen, q.image_embedding, image_noise);
            for (const auto& f : q.caption.findings) {
                r.caption.findings.push_back({f.description, f.box, detail::perturbed(gen, f.text_embedding, spec.noise_scale),
                                              detail::perturbed(gen, f.box_embedding, spec.noise_scale)});
            }
            std::shuffle(r.caption.findings.begin(), r.caption.findings.end(), gen.engine());
            r.report_text = detail::report_for(r.caption);
            r.report_embedding = q.question_embedding;
            pending.push_back({std::move(r), qi});
        }
        for (std::size_t d = 0; d < spec.image_decoys_per_query; ++d) {
            CandidateRecord r;
            r.image_embedding = detail::perturbed(gen, q.image_embedding, spec.decoy_image_noise);
            r.caption = detail::random_caption(gen, spec);
            r.report_text = detail::report_for(r.caption);
            r.report_embedding = detail::to_embedding(gen.unit(spec.text_dim));
            pending.push_back({std::move(r), std::nullopt});
        }
    }
    while (pending.size() < spec.n_records) {
        CandidateRecord r;
        r.image_embedding = detail::to_embedding(gen.unit(spec.visual_dim));
        r.caption = detail::random_caption(gen, spec);
        r.report_text = detail::report_for(r.caption);
        r.report_embedding = detail::to_embedding(gen.unit(spec.text_dim));
        pending.push_back({std::move(r), std::nullopt});
    }
    std::shuffle(pending.begin(), pending.end(), gen.engine());

    std::vector<CandidateRecord> records;
    records.reserve(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        auto& p = pending[i];
        p.record.id = fmt::format("rec-{:04d}", i);
        if (p.planted_for) {
            out.planted[out.queries[*p.planted_for].id].push_back(p.record.id);
        }
        records.push_back(std::move(p.record));
    }
    out.store = CorpusStore(std::move(records), {spec.visual_dim, spec.text_dim});
    return out;
}

inline std::string planted_to_json(const PlantedMap& planted) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [query, ids] : planted) {
        out[query] = ids;
    }
    return out.dump(2) + "\n";
}

inline PlantedMap planted_from_json(std::string_view text, std::string_view source) {
    PlantedMap out;
    try {
        const auto doc = nlohmann::json::parse(text);
        if (!doc.is_object()) {
            throw Error(ErrorKind::kParseError, fmt::format("{}: expected an object query -> [ids]", source));
        }
        for (const auto& [query, ids] : doc.items()) {
            out[query] = ids.get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::kParseError, fmt::format("{}: {}", source, e.what()));
    }
    return out;
}

// Evaluation runs -----------------------------------------------------------

struct EvalMetrics {
    double change_rate = 0.0;
    double precision_at_s = 0.0;
    double mrr = 0.0;
    std::size_t n_queries = 0;
};

inline std::vector<GenerationRequest> run_all(const std::vector<QueryContext>& queries, const CorpusStore& store,
                                              const RerankConfig& cfg) {
    std::vector<GenerationRequest> requests;
    requests.reserve(queries.size());
    for (const auto& q : queries) {
        requests.push_back(run_query(q, store, cfg));
    }
    return requests;
}

inline std::vector<std::string> query_ids(const std::vector<QueryContext>& queries) {
    std::vector<std::string> ids;
    for (const auto& q : queries) {
        ids.push_back(q.id);
    }
    return ids;
}

inline EvalMetrics evaluate(const std::vector<QueryContext>& queries, const CorpusStore& store,
                            const PlantedMap& planted, const RerankConfig& cfg,
                            std::optional<std::size_t> change_depth = std::nullopt) {
    const auto requests = run_all(queries, store, cfg);
    const auto metrics = planted_precision(query_ids(queries), requests, planted, cfg.s);
    EvalMetrics out;
    out.change_rate = change_rate(rankings_of(requests, RankingStage::kInitial),
                                  rankings_of(requests, RankingStage::kFinal), change_depth);
    out.precision_at_s = metrics.precision_at_s;
    out.mrr = metrics.mrr;
    out.n_queries = queries.size();
    return out;
}

struct Weights {
    double alpha = 0.2;
    double beta = 0.3;
    double delta = 0.5;
};

struct AblationRow {
    Weights weights;
    double gamma = 1.0;
    EvalMetrics metrics;
};

struct AblationTable {
    std::size_t k = 0;
    std::size_t s = 0;
    std::vector<AblationRow> rows;
};

/// One row per (weights, gamma), weights outermost. Other settings come
/// from `base`.
inline AblationTable ablation_sweep(const CorpusStore& store, const std::vector<QueryContext>& queries,
                                    const PlantedMap& planted, const std::vector<Weights>& weight_tuples,
                                    const std::vector<double>& gamma_values, const RerankConfig& base = {}) {
    AblationTable table{base.k, base.s, {}};
    for (const auto& w : weight_tuples) {
        for (double gamma : gamma_values) {
            RerankConfig cfg = base;
            cfg.alpha = w.alpha;
            cfg.beta = w.beta;
            cfg.delta = w.delta;
            cfg.gamma = gamma;
            validate_config(cfg);
            table.rows.push_back({w, gamma, evaluate(queries, store, planted, cfg)});
        }
    }
    return table;
}

inline constexpr std::string_view kMetricsCsvHeader = "alpha,beta,delta,gamma,k,s,n_queries,change_rate,precision_at_s,mrr";

inline std::string metrics_csv_row(const Weights& w, double gamma, std::size_t k, std::size_t s,
                                   const EvalMetrics& m) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{}", w.alpha, w.beta, w.delta, gamma, k, s, m.n_queries,
                       m.change_rate, m.precision_at_s, m.mrr);
}

inline nlohmann::ordered_json metrics_json(const Weights& w, double gamma, std::size_t k, std::size_t s,
                                           const EvalMetrics& m) {
    return {{"alpha", w.alpha},
            {"beta", w.beta},
            {"delta", w.delta},
            {"gamma", gamma},
            {"k", k},
            {"s", s},
            {"n_queries", m.n_queries},
            {"change_rate", m.change_rate},
            {"precision_at_s", m.precision_at_s},
            {"mrr", m.mrr}};
}

inline std::string to_csv(const AblationTable& table) {
    std::string out(kMetricsCsvHeader);
    out += '\n';
    for (const auto& row : table.rows) {
        out += metrics_csv_row(row.weights, row.gamma, table.k, table.s, row.metrics);
        out += '\n';
    }
    return out;
}

inline nlohmann::ordered_json to_json(const AblationTable& table) {
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : table.rows) {
        rows.push_back(metrics_json(row.weights, row.gamma, table.k, table.s, row.metrics));
    }
    return rows;
}

}  // namespace motor::eval
