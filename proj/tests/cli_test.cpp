// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "motor/cli.hpp"
#include "test_support.hpp"

namespace motor {
namespace {

namespace fs = std::filesystem;
using testing::fixture;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fixture_index(const fs::path& dir) {
    const auto path = dir / "fixture.motoridx";
    const auto r = run({"index", "--records", fixture("records.jsonl").string(), "--embeddings",
                        fixture("embeddings.json").string(), "--out", path.string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return path;
}

std::vector<std::string> rerank_args(const fs::path& index) {
    return {"rerank", "--index", index.string(), "--queries", fixture("queries.jsonl").string(), "--query-embeddings",
            fixture("query_embeddings.json").string()};
}

TEST(CliIndex, HappyPath) {
    const auto dir = testing::temp_dir("cli_index");
    const auto r = run({"index", "--records", fixture("records.jsonl").string(), "--embeddings",
                        fixture("embeddings.json").string(), "--out", (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("indexed 6 records"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(dir / "i.idx"));
    EXPECT_EQ(load_index(dir / "i.idx").size(), 6u);
}

TEST(CliIndex, ThreeRecordFixture) {
    const auto dir = testing::temp_dir("cli_index3");
    std::ofstream(dir / "r.jsonl") << R"({"id": "a", "report_text": "A."}
{"id": "b", "report_text": "B."}
{"id": "c", "report_text": "C."}
)";
    std::ofstream(dir / "e.json") << R"({"a": {"image": [1, 0], "text": [1]}, "b": {"image": [0, 1], "text": [1]},
"c": {"image": [1, 1], "text": [1]}})";
    const auto r = run({"index", "--records", (dir / "r.jsonl").string(), "--embeddings", (dir / "e.json").string(),
                        "--out", (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("indexed 3 records"), std::string::npos);
}

TEST(CliIndex, Errors) {
    const auto dir = testing::temp_dir("cli_index_err");
    std::ofstream(dir / "r.jsonl") << R"({"id": "r1", "report_text": "A."}
{"id": "r7", "report_text": "B."}
)";
    std::ofstream(dir / "e.json") << R"({"r1": {"image": [1, 0], "text": [1]}})";
    auto r = run({"index", "--records", (dir / "r.jsonl").string(), "--embeddings", (dir / "e.json").string(), "--out",
                  (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("MissingEmbedding: r7"), std::string::npos) << r.err;

    r = run({"index", "--records", (dir / "r.jsonl").string(), "--embeddings", (dir / "nope.bin").string(), "--out",
             (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("IoError"), std::string::npos) << r.err;

    std::ofstream(dir / "d.jsonl") << R"({"id": "r1", "report_text": "A."}
{"id": "r1", "report_text": "B."}
)";
    r = run({"index", "--records", (dir / "d.jsonl").string(), "--embeddings", (dir / "e.json").string(), "--out",
             (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("DuplicateId: r1"), std::string::npos) << r.err;

    std::ofstream(dir / "bad.jsonl") << "{\"id\": \"r1\", \"report_text\": \"A.\"}\nnot json\n";
    r = run({"index", "--records", (dir / "bad.jsonl").string(), "--embeddings", (dir / "e.json").string(), "--out",
             (dir / "i.idx").string()});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("bad.jsonl:2:"), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(dir / "i.idx"));
}

TEST(CliRerank, GoldenOutput) {
    const auto dir = testing::temp_dir("cli_golden");
    const auto index = fixture_index(dir);
    const auto r = run(rerank_args(index));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, io::read_file(fixture("golden_request.json")));
    EXPECT_NE(r.err.find("initial"), std::string::npos);
}

TEST(CliRerank, ByteIdenticalAcrossRunsAndThreads) {
    const auto dir = testing::temp_dir("cli_threads");
    const auto index = fixture_index(dir);
    std::vector<std::string> outputs;
    for (const char* threads : {"1", "1", "3", "8"}) {
        auto args = rerank_args(index);
        args.insert(args.end(), {"--threads", threads, "--out", (dir / "out.json").string()});
        const auto r = run(args);
        ASSERT_EQ(r.code, 0) << r.err;
        outputs.push_back(io::read_file(dir / "out.json"));
    }
    for (const auto& o : outputs) {
        EXPECT_EQ(o, outputs[0]);
    }
}

TEST(CliRerank, ConfigViolationsExitOne) {
    const auto dir = testing::temp_dir("cli_cfg");
    const auto index = fixture_index(dir);
    auto args = rerank_args(index);
    args.insert(args.end(), {"--alpha", "0.5", "--beta", "0.5", "--delta", "0.1"});
    auto r = run(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("weights must sum to 1"), std::string::npos) << r.err;

    args = rerank_args(index);
    args.insert(args.end(), {"--s", "12", "--k", "10"});
    r = run(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("s must not exceed k"), std::string::npos) << r.err;

    args = rerank_args(index);
    args.insert(args.end(), {"--sinkhorn-mode", "fast"});
    EXPECT_EQ(run(args).code, 1);
}

TEST(CliRerank, ServiceFailureExitsThree) {
    const auto dir = testing::temp_dir("cli_service");
    const auto index = fixture_index(dir);
    const int port = testing::unused_port();
    auto args = rerank_args(index);
    args.insert(args.end(), {"--endpoint", "http://127.0.0.1:" + std::to_string(port)});
    const auto r = run(args);
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("ServiceUnavailable"), std::string::npos) << r.err;
}

TEST(CliRerank, NumericalFailureExitsTwo) {
    EXPECT_EQ(cli::exit_code_for(ErrorKind::kNumericalUnderflow), 2);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::kNonFiniteInput), 2);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::kParseError), 1);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::kServiceError), 3);
}

TEST(CliHelp, ShowsDefaults) {
    const auto r = run({"rerank", "--help"});
    EXPECT_EQ(r.code, 0);
    for (const char* flag : {"--alpha", "--beta", "--delta", "--gamma", "--k", "--s", "--tol", "--max-iters"}) {
        EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
    }
    for (const char* value : {"0.2", "0.3", "0.5", "10", "1000", "1e-06"}) {
        EXPECT_NE(r.out.find(value), std::string::npos) << value << "\n" << r.out;
    }
    EXPECT_EQ(run({}).code, 1);
    EXPECT_EQ(run({"bogus"}).code, 1);
}

struct SyntheticRun {
    fs::path dir;
    std::vector<std::string> inputs;
};

SyntheticRun synthetic(const std::string& name) {
    const auto dir = testing::temp_dir(name);
    const auto r = run({"gen-synthetic", "--out-dir", dir.string(), "--n-records", "40", "--n-queries", "8",
                        "--visual-dim", "32", "--text-dim", "24", "--seed", "4"});
    EXPECT_EQ(r.code, 0) << r.err;
    return {dir,
            {"--index", (dir / "index.motoridx").string(), "--queries", (dir / "queries.jsonl").string(),
             "--query-embeddings", (dir / "query_embeddings.bin").string(), "--planted",
             (dir / "planted.json").string()}};
}

TEST(CliGenSynthetic, WritesCorpusMatchingLibrary) {
    const auto s = synthetic("cli_syn");
    for (const char* f : {"records.jsonl", "embeddings.bin", "queries.jsonl", "query_embeddings.bin", "planted.json",
                          "index.motoridx"}) {
        EXPECT_TRUE(fs::exists(s.dir / f)) << f;
    }
    eval::SyntheticCorpusSpec spec;
    spec.n_records = 40;
    spec.n_queries = 8;
    spec.visual_dim = 32;
    spec.text_dim = 24;
    spec.seed = 4;
    const auto corpus = eval::generate_synthetic_corpus(spec);
    EXPECT_EQ(ingest_corpus(s.dir / "records.jsonl", s.dir / "embeddings.bin").records(), corpus.store.records());
    EXPECT_EQ(load_index(s.dir / "index.motoridx").records(), corpus.store.records());
    EXPECT_EQ(ingest_queries(s.dir / "queries.jsonl", s.dir / "query_embeddings.bin"), corpus.queries);
}

TEST(CliEval, JsonAndCsvAgree) {
    const auto s = synthetic("cli_eval");
    auto args = std::vector<std::string>{"eval"};
    args.insert(args.end(), s.inputs.begin(), s.inputs.end());
    auto csv_args = args;
    csv_args.insert(csv_args.end(), {"--format", "csv"});
    auto json_args = args;
    json_args.insert(json_args.end(), {"--format", "json"});
    const auto csv = run(csv_args);
    const auto json = run(json_args);
    ASSERT_EQ(csv.code, 0) << csv.err;
    ASSERT_EQ(json.code, 0) << json.err;

    std::istringstream lines(csv.out);
    std::string header;
    std::string row;
    std::getline(lines, header);
    std::getline(lines, row);
    for (const char* metric : {"change_rate", "precision_at_s", "mrr"}) {
        EXPECT_NE(header.find(metric), std::string::npos);
    }
    std::vector<std::string> names;
    std::vector<std::string> values;
    std::istringstream hs(header);
    std::istringstream rs(row);
    for (std::string cell; std::getline(hs, cell, ',');) {
        names.push_back(cell);
    }
    for (std::string cell; std::getline(rs, cell, ',');) {
        values.push_back(cell);
    }
    ASSERT_EQ(names.size(), values.size());
    const auto doc = nlohmann::json::parse(json.out);
    for (std::size_t i = 0; i < names.size(); ++i) {
        EXPECT_EQ(std::stod(values[i]), doc.at(names[i]).get<double>()) << names[i];
    }

    auto text_args = args;
    text_args.insert(text_args.end(), {"--format", "text"});
    EXPECT_NE(run(text_args).out.find("mrr: "), std::string::npos);
}

TEST(CliEval, SingleCandidateGivesZeroChangeRate) {
    const auto s = synthetic("cli_eval_k1");
    auto args = std::vector<std::string>{"eval"};
    args.insert(args.end(), s.inputs.begin(), s.inputs.end());
    args.insert(args.end(), {"--k", "1", "--s", "1", "--format", "json"});
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(nlohmann::json::parse(r.out).at("change_rate").get<double>(), 0.0);
}

TEST(CliEval, MissingPlantedQueryExitsOne) {
    const auto s = synthetic("cli_eval_missing");
    std::ofstream(s.dir / "planted.json") << R"({"q-0000": ["rec-0001"]})";
    auto args = std::vector<std::string>{"eval"};
    args.insert(args.end(), s.inputs.begin(), s.inputs.end());
    const auto r = run(args);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("MissingQuery"), std::string::npos) << r.err;
}

TEST(CliSweep, RowsPerTupleAndGamma) {
    const auto s = synthetic("cli_sweep");
    auto args = std::vector<std::string>{"sweep"};
    args.insert(args.end(), s.inputs.begin(), s.inputs.end());
    args.insert(args.end(), {"--weights", "1,0,0", "--weights", "0,1,0", "--weights", "0,0,1", "--gammas", "1", "0.5",
                             "--format", "json"});
    const auto r = run(args);
    ASSERT_EQ(r.code, 0) << r.err;
    const auto doc = nlohmann::json::parse(r.out);
    ASSERT_EQ(doc.size(), 6u);
    EXPECT_EQ(doc[0].at("alpha").get<double>(), 1.0);
    EXPECT_EQ(doc[1].at("gamma").get<double>(), 0.5);

    auto defaults = std::vector<std::string>{"sweep"};
    defaults.insert(defaults.end(), s.inputs.begin(), s.inputs.end());
    const auto csv = run(defaults);
    ASSERT_EQ(csv.code, 0) << csv.err;
    EXPECT_EQ(std::count(csv.out.begin(), csv.out.end(), '\n'), 3);

    auto bad = std::vector<std::string>{"sweep"};
    bad.insert(bad.end(), s.inputs.begin(), s.inputs.end());
    bad.insert(bad.end(), {"--weights", "0.5,0.5"});
    EXPECT_EQ(run(bad).code, 1);
}

}  // namespace
}  // namespace motor
