// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <cmath>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "motor/pipeline.hpp"
#include "test_support.hpp"

namespace motor {
namespace {

using testing::finding;
using testing::query;
using testing::record;
using testing::vec;

TEST(RunQuery, EmptyStoreGivesContextFreeRequest) {
    const CorpusStore store({}, {2, 2});
    auto q = query("q1", vec({1, 0}), {finding("nodule", vec({1, 0}), vec({0, 1}))}, vec({1, 0}), "What is it?");
    q.image_ref = "img/q1.png";
    const auto req = run_query(q, store, testing::small_config(2, 2));
    EXPECT_TRUE(req.context_reports.empty());
    EXPECT_TRUE(req.trace.initial_ranking.empty());
    EXPECT_TRUE(req.trace.final_ranking.empty());
    EXPECT_FALSE(req.trace.failed_stage.has_value());
    EXPECT_EQ(req.question_text, "What is it?");
    EXPECT_EQ(req.query_image_ref, "img/q1.png");
    EXPECT_EQ(assemble_prompt(req, kDefaultPromptTemplate).find("(no retrieved context)") != std::string::npos, true);
}

TEST(RunQuery, UniqueMatchLeadsContext) {
    const auto q = query("q", vec({1, 0, 0}), {finding("a", vec({1, 0, 0}), vec({1, 0, 0}))}, vec({1, 0, 0}));
    std::vector<CandidateRecord> records;
    records.push_back(record("other1", vec({1, 0, 0}), {finding("b", vec({0, 1, 0}), vec({0, 1, 0}))}, vec({0, 1, 0})));
    records.push_back(record("match", vec({0.5f, 0.5f, 0}), q.caption.findings, vec({1, 0, 0}), "the match"));
    records.push_back(record("other2", vec({1, 0.1f, 0}), {finding("c", vec({0, 0, 1}), vec({0, 0, 1}))}, vec({0, 0, 1})));
    const CorpusStore store(records, {3, 3});
    const auto req = run_query(q, store, testing::small_config(3, 3));
    ASSERT_FALSE(req.context_reports.empty());
    EXPECT_EQ(req.context_reports[0], "the match");
    EXPECT_EQ(req.trace.final_ranking[0].record_id, "match");
    EXPECT_NEAR(req.trace.final_ranking[0].ot_cost, 0.0, 1e-9);
    EXPECT_EQ(req.trace.initial_ranking.back().record_id, "match");
}

// Single-finding records make each cost the scalar 1 - F, which the test
// recomputes from long double cosines.
TEST(RunQuery, TenCandidatesKeepFiveLowestCosts) {
    testing::Rng rng(99);
    const EmbeddingDims dims{4, 3};
    auto cfg = testing::small_config(4, 3);
    for (int trial = 0; trial < 10; ++trial) {
        const auto q = query("q", rng.embedding(4), testing::random_caption(rng, 1, dims).findings, rng.embedding(3));
        std::vector<CandidateRecord> records;
        std::vector<std::pair<long double, std::string>> expected;
        for (int i = 0; i < 10; ++i) {
            auto r = record("c" + std::to_string(i), rng.embedding(4), testing::random_caption(rng, 1, dims).findings,
                            rng.embedding(3), "report " + std::to_string(i));
            const auto& qf = q.caption.findings[0];
            const auto& rf = r.caption.findings[0];
            const long double f = cfg.alpha * testing::oracle_cosine(q.question_embedding, r.report_embedding) +
                                  cfg.beta * testing::oracle_cosine(qf.text_embedding, rf.text_embedding) +
                                  cfg.delta * testing::oracle_cosine(qf.box_embedding, rf.box_embedding);
            expected.emplace_back(1.0L - f, r.report_text);
            records.push_back(std::move(r));
        }
        std::sort(expected.begin(), expected.end());
        const auto req = run_query(q, CorpusStore(records, dims), cfg);
        ASSERT_EQ(req.context_reports.size(), 5u);
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_EQ(req.context_reports[i], expected[i].second);
            EXPECT_NEAR(req.trace.final_ranking[i].ot_cost, static_cast<double>(expected[i].first), 1e-12);
        }
    }
}

TEST(RunQuery, TraceMatchesStagesRunIndependently) {
    testing::Rng rng(5);
    const EmbeddingDims dims{6, 5};
    std::vector<CandidateRecord> records;
    for (int i = 0; i < 30; ++i) {
        records.push_back(record("r" + std::to_string(i), rng.embedding(6),
                                 testing::random_caption(rng, rng.index(0, 3), dims).findings, rng.embedding(5)));
    }
    const CorpusStore store(records, dims);
    const auto q = query("q", rng.embedding(6), testing::random_caption(rng, 2, dims).findings, rng.embedding(5));
    const auto cfg = testing::small_config(6, 5);
    const auto req = run_query(q, store, cfg);

    const auto hits = retrieve_top_k(store, q.image_embedding, cfg.k);
    std::vector<RerankCandidate> candidates;
    for (const auto& h : hits) {
        candidates.push_back({std::cref(*store.find(h.record_id)), h});
    }
    EXPECT_EQ(req.trace.initial_ranking, hits);
    EXPECT_EQ(req.trace.final_ranking, rerank(q, candidates, cfg));
    EXPECT_LE(req.context_reports.size(), cfg.s);
    for (const auto& report : req.context_reports) {
        const bool retrieved = std::any_of(hits.begin(), hits.end(), [&](const RetrievalResult& h) {
            return store.find(h.record_id)->report_text == report;
        });
        EXPECT_TRUE(retrieved);
    }
}

TEST(RunQuery, DeterministicJson) {
    const auto store = ingest_corpus(testing::fixture("records.jsonl"), testing::fixture("embeddings.json"));
    const auto queries = ingest_queries(testing::fixture("queries.jsonl"), testing::fixture("query_embeddings.json"));
    auto cfg = testing::small_config(3, 2);
    const auto a = to_json(run_query(queries[0], store, cfg)).dump(2);
    cfg.threads = 4;
    const auto b = to_json(run_query(queries[0], store, cfg)).dump(2);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.find("timing"), std::string::npos);
    EXPECT_NE(to_json(run_query(queries[0], store, cfg), true).dump().find("timing_ms"), std::string::npos);
}

TEST(RunQuery, FailureNamesStage) {
    const CorpusStore store({record("r", vec({1, 0}), {}, vec({1, 0}))}, {2, 2});
    auto q = query("bad", vec({1, 0}), {}, vec({1, 0}));
    q.question_text.clear();
    try {
        run_query(q, store, testing::small_config(2, 2));
        FAIL();
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kEmptyQuestion);
        EXPECT_EQ(e.stage(), "validate");
        EXPECT_EQ(e.trace().failed_stage, "validate");
        EXPECT_EQ(e.trace().query_id, "bad");
    }
    auto cfg = testing::small_config(2, 2);
    cfg.s = 20;
    try {
        run_query(query("q", vec({1, 0}), {}, vec({1, 0})), store, cfg);
        FAIL();
    } catch (const PipelineError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kInvalidConfig);
    }
}

GenerationRequest one_finding_request() {
    GenerationRequest req;
    req.question_text = "Is the heart enlarged?";
    GroundedCaption caption{{finding("cardiomegaly", vec({1}), vec({1}), {0.3, 0.4, 0.7, 0.8})}};
    req.grounded_caption_rendering = render_caption(caption);
    req.context_reports = {"Cardiomegaly without pleural effusion."};
    return req;
}

TEST(AssemblePrompt, GoldenSingleFindingSingleContext) {
    EXPECT_EQ(assemble_prompt(one_finding_request(), kDefaultPromptTemplate),
              io::read_file(testing::fixture("golden_prompt.txt")));
}

TEST(AssemblePrompt, PlaceholderRules) {
    auto req = one_finding_request();
    EXPECT_EQ(assemble_prompt(req, "no question here: {contexts}"),
              "no question here: 1. Cardiomegaly without pleural effusion.");
    EXPECT_EQ(assemble_prompt(req, "{{literal}} {question}"), "{literal} Is the heart enlarged?");
    req.context_reports = {"a", "b"};
    EXPECT_EQ(assemble_prompt(req, "{contexts}"), "1. a\n2. b");
    req.context_reports.clear();
    EXPECT_EQ(assemble_prompt(req, "{contexts}"), "(no retrieved context)");
    for (const char* bad : {"{answer}", "{question", "{}"}) {
        try {
            assemble_prompt(req, bad);
            FAIL() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::kUnknownPlaceholder);
        }
    }
}

TEST(RenderCaption, ThreeDecimalBoxes) {
    GroundedCaption c{{finding("a", vec({1}), vec({1}), {0, 0.12345, 0.5, 1}),
                       finding("b", vec({1}), vec({1}), {0.1, 0.2, 0.3, 0.4})}};
    EXPECT_EQ(render_caption(c), "a [0.000,0.123,0.500,1.000]\nb [0.100,0.200,0.300,0.400]");
    EXPECT_EQ(render_caption({}), "(no findings)");
}

// Local HTTP stub for the generation service.
class StubServer {
public:
    explicit StubServer(httplib::Server::Handler handler) {
        server_.Post("/generate", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

TEST(Dispatch, EchoStubReturnsPrompt) {
    StubServer stub([](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(nlohmann::json{{"answer", body.at("prompt")}}.dump(), "application/json");
    });
    Trace trace;
    const std::string prompt = "Question: \"quoted\"\nline two é";
    EXPECT_EQ(dispatch_generation(prompt, "img.png", {stub.url()}, &trace), prompt);
    ASSERT_EQ(trace.dispatches.size(), 1u);
    EXPECT_EQ(trace.dispatches[0].status, 200);
    EXPECT_EQ(trace.dispatches[0].answer, prompt);
    EXPECT_EQ(trace.dispatches[0].image_ref, "img.png");
}

TEST(Dispatch, CannedAnswer) {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"answer": "yes"})", "application/json");
    });
    EXPECT_EQ(dispatch_generation("p", "i", {stub.url() + "/generate"}), "yes");
}

TEST(Dispatch, NonSuccessIsServiceError) {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        res.status = 500;
        res.set_content("model crashed", "text/plain");
    });
    try {
        dispatch_generation("p", "i", {stub.url()});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kServiceError);
        EXPECT_NE(e.detail().find("model crashed"), std::string::npos);
    }
    StubServer garbage([](const httplib::Request&, httplib::Response& res) { res.set_content("{}", "application/json"); });
    try {
        dispatch_generation("p", "i", {garbage.url()});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kServiceError);
    }
}

TEST(Dispatch, UnreachableAfterThreeAttemptsWithBackoff) {
    const int port = testing::unused_port();
    GenerationEndpoint endpoint{"http://127.0.0.1:" + std::to_string(port)};
    endpoint.timeout = std::chrono::milliseconds(500);
    Trace trace;
    const auto start = std::chrono::steady_clock::now();
    try {
        dispatch_generation("p", "i", endpoint, &trace);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::kServiceUnavailable);
    }
    const auto waited = std::chrono::steady_clock::now() - start;
    EXPECT_GE(waited, std::chrono::milliseconds(1500));
    ASSERT_EQ(trace.dispatches.size(), 1u);
    EXPECT_EQ(trace.dispatches[0].attempts, 3);
}

TEST(Dispatch, SplitUrl) {
    EXPECT_EQ(detail::split_url("http://h:1"), (std::pair<std::string, std::string>{"http://h:1", "/generate"}));
    EXPECT_EQ(detail::split_url("http://h:1/v1/gen"), (std::pair<std::string, std::string>{"http://h:1", "/v1/gen"}));
}

}  // namespace
}  // namespace motor
