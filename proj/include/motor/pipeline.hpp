// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file pipeline.hpp
/// \brief End-to-end query flow: validate, retrieve top-k, re-rank by OT
/// cost, keep the top-s reports and package them for a generation service.

#include <chrono>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/log.hpp"
#include "motor/reranker.hpp"
#include "motor/retriever.hpp"

namespace motor {

struct StageTiming {
    double validate_ms = 0.0;
    double retrieve_ms = 0.0;
    double rerank_ms = 0.0;
    double select_ms = 0.0;
};

struct DispatchRecord {
    std::string endpoint;
    std::string prompt;
    std::string image_ref;
    int attempts = 0;
    int status = 0;
    std::string answer;
};

struct Trace {
    std::string query_id;
    std::vector<RetrievalResult> initial_ranking;
    std::vector<CandidateScore> final_ranking;
    std::optional<std::string> failed_stage;
    StageTiming timing;
    std::vector<DispatchRecord> dispatches;
};

struct GenerationRequest {
    std::string question_text;
    std::string grounded_caption_rendering;
    std::vector<std::string> context_reports;
    std::string query_image_ref;
    Trace trace;
};

/// Raised when a pipeline stage fails; carries the trace up to that point.
class PipelineError : public Error {
public:
    PipelineError(const Error& cause, std::string stage, Trace trace)
        : Error(cause.kind(), fmt::format("stage '{}': {}", stage, cause.detail())),
          stage_(std::move(stage)),
          trace_(std::move(trace)) {}

    const std::string& stage() const noexcept { return stage_; }
    const Trace& trace() const noexcept { return trace_; }

private:
    std::string stage_;
    Trace trace_;
};

/// One line per finding: "<description> [x_min,y_min,x_max,y_max]" with
/// three-decimal coordinates.
inline std::string render_caption(const GroundedCaption& caption) {
    if (caption.empty()) {
        return "(no findings)";
    }
    std::string out;
    for (std::size_t i = 0; i < caption.size(); ++i) {
        const auto& f = caption.findings[i];
        if (i > 0) {
            out += '\n';
        }
        out += fmt::format("{} [{:.3f},{:.3f},{:.3f},{:.3f}]", f.description, f.box.x_min, f.box.y_min, f.box.x_max,
                           f.box.y_max);
    }
    return out;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace detail

/// Runs one query through retrieval and re-ranking. An empty store gives a
/// request with no context (standalone generation). On failure a
/// PipelineError names the stage and carries the partial trace.
inline GenerationRequest run_query(const QueryContext& q, const CorpusStore& store, const RerankConfig& cfg) {
    GenerationRequest req;
    req.trace.query_id = q.id;
    std::string stage = "validate";
    try {
        auto t0 = detail::Clock::now();
        validate_config(cfg);
        validate_query(q, cfg);
        req.question_text = q.question_text;
        req.grounded_caption_rendering = render_caption(q.caption);
        req.query_image_ref = q.image_ref.empty() ? q.id : q.image_ref;
        req.trace.timing.validate_ms = detail::elapsed_ms(t0);

        stage = "retrieve";
        t0 = detail::Clock::now();
        req.trace.initial_ranking = retrieve_top_k(store, q.image_embedding, cfg.k);
        req.trace.timing.retrieve_ms = detail::elapsed_ms(t0);

        stage = "rerank";
        t0 = detail::Clock::now();
        std::vector<RerankCandidate> candidates;
        candidates.reserve(req.trace.initial_ranking.size());
        for (const auto& hit : req.trace.initial_ranking) {
            const auto* record = store.find(hit.record_id);
            if (record == nullptr) {
                throw Error(ErrorKind::kUnknownRecordId, hit.record_id);
            }
            candidates.push_back({std::cref(*record), hit});
        }
        req.trace.final_ranking = rerank(q, candidates, cfg);
        req.trace.timing.rerank_ms = detail::elapsed_ms(t0);

        stage = "select_context";
        t0 = detail::Clock::now();
        req.context_reports = select_context(req.trace.final_ranking, store, cfg.s);
        req.trace.timing.select_ms = detail::elapsed_ms(t0);
    } catch (const Error& e) {
        req.trace.failed_stage = stage;
        throw PipelineError(e, stage, std::move(req.trace));
    }
    return req;
}

inline constexpr std::string_view kDefaultPromptTemplate =
    "Question: {question}\n"
    "Findings in the query image:\n{grounded_caption}\n"
    "Reports of similar cases, most relevant first:\n{contexts}\n"
    "Answer:";

inline std::string render_contexts(const std::vector<std::string>& reports) {
    if (reports.empty()) {
        return "(no retrieved context)";
    }
    std::string out;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        if (i > 0) {
            out += '\n';
        }
        out += fmt::format("{}. {}", i + 1, reports[i]);
    }
    return out;
}

/// Substitutes {question}, {grounded_caption} and {contexts}. "{{" and "}}"
/// produce literal braces. Any other placeholder name is UnknownPlaceholder.
inline std::string assemble_prompt(const GenerationRequest& req, std::string_view tmpl) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if (c == '{' && i + 1 < tmpl.size() && tmpl[i + 1] == '{') {
            out += '{';
            ++i;
            continue;
        }
        if (c == '}' && i + 1 < tmpl.size() && tmpl[i + 1] == '}') {
            out += '}';
            ++i;
            continue;
        }
        if (c != '{') {
            out += c;
            continue;
        }
        const auto close = tmpl.find('}', i + 1);
        if (close == std::string_view::npos) {
            throw Error(ErrorKind::kUnknownPlaceholder, fmt::format("unterminated placeholder at offset {}", i));
        }
        const auto name = tmpl.substr(i + 1, close - i - 1);
        if (name == "question") {
            out += req.question_text;
        } else if (name == "grounded_caption") {
            out += req.grounded_caption_rendering;
        } else if (name == "contexts") {
            out += render_contexts(req.context_reports);
        } else {
            throw Error(ErrorKind::kUnknownPlaceholder, fmt::format("{{{}}}", name));
        }
        i = close;
    }
    return out;
}

/// HTTP generation service. `url` is "http://host:port" optionally followed
/// by a path; the request is POST {prompt, image_ref} and the response must
/// be {answer}.
struct GenerationEndpoint {
    std::string url;
    std::chrono::milliseconds timeout{60000};
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
};

namespace detail {

inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme = url.find("://");
    const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
    const auto slash = url.find('/', host_start);
    if (slash == std::string::npos) {
        return {url, "/generate"};
    }
    return {url.substr(0, slash), url.substr(slash)};
}

}  // namespace detail

/// Sends the prompt and returns the answer text verbatim. Connection
/// failures are retried with exponential backoff (500 ms, 1 s, ...) and end
/// in ServiceUnavailable; a non-2xx reply is ServiceError with the body.
inline std::string dispatch_generation(const std::string& prompt, const std::string& image_ref,
                                       const GenerationEndpoint& endpoint, Trace* trace = nullptr) {
    const auto [base, path] = detail::split_url(endpoint.url);
    httplib::Client client(base);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    DispatchRecord record{endpoint.url, prompt, image_ref, 0, 0, {}};
    const std::string body = nlohmann::json{{"prompt", prompt}, {"image_ref", image_ref}}.dump();
    auto backoff = endpoint.initial_backoff;
    for (int attempt = 1; attempt <= endpoint.max_attempts; ++attempt) {
        record.attempts = attempt;
        auto res = client.Post(path, body, "application/json");
        if (!res) {
            logger()->warn("generation service {} unreachable (attempt {}/{}): {}", endpoint.url, attempt,
                           endpoint.max_attempts, httplib::to_string(res.error()));
            if (attempt < endpoint.max_attempts) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            continue;
        }
        record.status = res->status;
        if (res->status < 200 || res->status >= 300) {
            if (trace != nullptr) {
                trace->dispatches.push_back(record);
            }
            throw Error(ErrorKind::kServiceError, fmt::format("HTTP {}: {}", res->status, res->body));
        }
        std::string answer;
        try {
            answer = nlohmann::json::parse(res->body).at("answer").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            if (trace != nullptr) {
                trace->dispatches.push_back(record);
            }
            throw Error(ErrorKind::kServiceError, fmt::format("malformed response ({}): {}", e.what(), res->body));
        }
        record.answer = answer;
        if (trace != nullptr) {
            trace->dispatches.push_back(record);
        }
        return answer;
    }
    if (trace != nullptr) {
        trace->dispatches.push_back(record);
    }
    throw Error(ErrorKind::kServiceUnavailable,
                fmt::format("{} unreachable after {} attempts", endpoint.url, endpoint.max_attempts));
}

// JSON ---------------------------------------------------------------------

inline nlohmann::ordered_json to_json(const RetrievalResult& r) {
    return {{"record_id", r.record_id}, {"initial_rank", r.initial_rank}, {"similarity", r.similarity}};
}

inline nlohmann::ordered_json to_json(const CandidateScore& s) {
    nlohmann::ordered_json out = {{"record_id", s.record_id},
                                  {"initial_rank", s.initial_rank},
                                  {"final_rank", s.final_rank},
                                  {"ot_cost", std::isfinite(s.ot_cost) ? nlohmann::ordered_json(s.ot_cost)
                                                                        : nlohmann::ordered_json(nullptr)},
                                  {"fallback_used", s.fallback_used},
                                  {"iterations", s.iterations},
                                  {"converged", s.converged}};
    if (s.error) {
        out["error"] = *s.error;
    }
    return out;
}

/// Timing is wall-clock and excluded unless asked for, so the default
/// serialization is byte-identical across runs.
inline nlohmann::ordered_json to_json(const Trace& t, bool include_timing = false) {
    nlohmann::ordered_json out;
    out["query_id"] = t.query_id;
    auto initial = nlohmann::ordered_json::array();
    for (const auto& r : t.initial_ranking) {
        initial.push_back(to_json(r));
    }
    out["initial_ranking"] = std::move(initial);
    auto final_ranking = nlohmann::ordered_json::array();
    for (const auto& s : t.final_ranking) {
        final_ranking.push_back(to_json(s));
    }
    out["final_ranking"] = std::move(final_ranking);
    out["failed_stage"] = t.failed_stage ? nlohmann::ordered_json(*t.failed_stage) : nlohmann::ordered_json(nullptr);
    if (include_timing) {
        out["timing_ms"] = {{"validate", t.timing.validate_ms},
                            {"retrieve", t.timing.retrieve_ms},
                            {"rerank", t.timing.rerank_ms},
                            {"select_context", t.timing.select_ms}};
    }
    if (!t.dispatches.empty()) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& d : t.dispatches) {
            arr.push_back({{"endpoint", d.endpoint},
                           {"image_ref", d.image_ref},
                           {"attempts", d.attempts},
                           {"status", d.status},
                           {"prompt", d.prompt},
                           {"answer", d.answer}});
        }
        out["dispatches"] = std::move(arr);
    }
    return out;
}

inline nlohmann::ordered_json to_json(const GenerationRequest& req, bool include_timing = false) {
    return {{"question_text", req.question_text},
            {"grounded_caption_rendering", req.grounded_caption_rendering},
            {"context_reports", req.context_reports},
            {"query_image_ref", req.query_image_ref},
            {"trace", to_json(req.trace, include_timing)}};
}

/// Record ids in final-rank order.
inline std::vector<std::string> final_ids(const Trace& t) {
    std::vector<std::string> ids;
    for (const auto& s : t.final_ranking) {
        ids.push_back(s.record_id);
    }
    return ids;
}

inline std::vector<std::string> initial_ids(const Trace& t) {
    std::vector<std::string> ids;
    for (const auto& r : t.initial_ranking) {
        ids.push_back(r.record_id);
    }
    return ids;
}

}  // namespace motor
