// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file cli.hpp
/// \brief The `motor` command line: index, rerank, eval, sweep, gen-synthetic.
///
/// Exit codes: 0 success, 1 input or configuration error, 2 numerical
/// failure, 3 generation service failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "motor/core.hpp"
#include "motor/embedding_store.hpp"
#include "motor/errors.hpp"
#include "motor/evalkit.hpp"
#include "motor/io.hpp"
#include "motor/log.hpp"
#include "motor/pipeline.hpp"

namespace motor::cli {

enum ExitCode : int {
    kOk = 0,
    kInputError = 1,
    kNumericalError = 2,
    kServiceFailure = 3,
};

inline int exit_code_for(ErrorKind kind) {
    if (is_service(kind)) {
        return kServiceFailure;
    }
    if (is_numerical(kind)) {
        return kNumericalError;
    }
    return kInputError;
}

struct ConfigFlags {
    RerankConfig cfg;
    std::string mode = "auto";
};

inline void add_config_flags(CLI::App* cmd, ConfigFlags& flags) {
    auto& cfg = flags.cfg;
    cmd->add_option("--alpha", cfg.alpha, "weight of question/report similarity")->capture_default_str();
    cmd->add_option("--beta", cfg.beta, "weight of finding-text similarity")->capture_default_str();
    cmd->add_option("--delta", cfg.delta, "weight of box-feature similarity")->capture_default_str();
    cmd->add_option("--gamma", cfg.gamma, "entropic regularization")->capture_default_str();
    cmd->add_option("--k", cfg.k, "first-stage retrieval depth")->capture_default_str();
    cmd->add_option("--s", cfg.s, "reports kept after re-ranking")->capture_default_str();
    cmd->add_option("--tol", cfg.sinkhorn_tol, "sinkhorn max marginal violation")->capture_default_str();
    cmd->add_option("--max-iters", cfg.sinkhorn_max_iters, "sinkhorn iteration cap")->capture_default_str();
    cmd->add_option("--sinkhorn-mode", flags.mode, "auto | plain | log")
        ->check(CLI::IsMember({"auto", "plain", "log"}))
        ->capture_default_str();
    cmd->add_option("--threads", cfg.threads, "scoring threads (output does not depend on it)")
        ->capture_default_str();
}

inline RerankConfig resolve_config(const ConfigFlags& flags, const CorpusStore& store,
                                   const std::vector<QueryContext>& queries) {
    RerankConfig cfg = flags.cfg;
    cfg.sinkhorn_mode = flags.mode == "plain" ? SinkhornMode::kPlain
                        : flags.mode == "log" ? SinkhornMode::kLogDomain
                                              : SinkhornMode::kAuto;
    if (!store.empty()) {
        cfg.dims = store.dims();
    } else if (!queries.empty()) {
        cfg.dims = {queries.front().image_embedding.dim(), queries.front().question_embedding.dim()};
    }
    validate_config(cfg);
    return cfg;
}

inline void write_output(const std::string& path, const std::string& contents, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << contents;
        return;
    }
    io::write_file_atomic(path, contents);
}

inline std::string ranking_table(const GenerationRequest& req) {
    std::string out = fmt::format("query {}\n  initial -> final  ot_cost     record\n", req.trace.query_id);
    for (const auto& s : req.trace.final_ranking) {
        out += fmt::format("  {:>7} -> {:<5}  {:<10.6f}  {}{}\n", s.initial_rank, s.final_rank, s.ot_cost,
                           s.record_id, s.fallback_used ? "  (fallback)" : "");
    }
    return out;
}

// Subcommands ----------------------------------------------------------------

struct IndexArgs {
    std::string records;
    std::string embeddings;
    std::string out;
};

inline int cmd_index(const IndexArgs& args, std::ostream& out) {
    const auto store = ingest_corpus(args.records, args.embeddings);
    save_index(store, args.out);
    out << fmt::format("indexed {} records (visual_dim={}, text_dim={}) -> {}\n", store.size(), store.visual_dim(),
                       store.text_dim(), args.out);
    return kOk;
}

struct QueryInputs {
    std::string index;
    std::string queries;
    std::string query_embeddings;
};

inline void add_query_inputs(CLI::App* cmd, QueryInputs& in) {
    cmd->add_option("--index", in.index, "index file written by `motor index`")->required();
    cmd->add_option("--queries", in.queries, "queries JSONL (id, question_text, findings)")->required();
    cmd->add_option("--query-embeddings", in.query_embeddings, "query embeddings (MOTOREMB or JSON)")->required();
}

struct RerankArgs {
    QueryInputs in;
    ConfigFlags flags;
    std::string out = "-";
    std::string template_path;
    std::string endpoint;
    bool timing = false;
};

inline int cmd_rerank(const RerankArgs& args, std::ostream& out, std::ostream& err) {
    const auto store = load_index(args.in.index);
    const auto queries = ingest_queries(args.in.queries, args.in.query_embeddings);
    const auto cfg = resolve_config(args.flags, store, queries);
    std::string tmpl(kDefaultPromptTemplate);
    if (!args.template_path.empty()) {
        tmpl = io::read_file(args.template_path);
    }

    auto doc = nlohmann::ordered_json::array();
    std::string tables;
    for (const auto& q : queries) {
        auto req = run_query(q, store, cfg);
        std::optional<std::string> answer;
        if (!args.endpoint.empty()) {
            const auto prompt = assemble_prompt(req, tmpl);
            answer = dispatch_generation(prompt, req.query_image_ref, GenerationEndpoint{args.endpoint}, &req.trace);
        }
        auto item = to_json(req, args.timing);
        if (answer) {
            item["answer"] = *answer;
        }
        doc.push_back(std::move(item));
        tables += ranking_table(req);
    }
    const bool to_stdout = args.out.empty() || args.out == "-";
    write_output(args.out, doc.dump(2) + "\n", out);
    (to_stdout ? err : out) << tables;
    return kOk;
}

struct EvalArgs {
    QueryInputs in;
    ConfigFlags flags;
    std::string planted;
    std::string format = "csv";
    std::string depth = "full";
    std::string out = "-";
};

inline std::string format_metrics(const std::string& format, const eval::Weights& w, const RerankConfig& cfg,
                                  const eval::EvalMetrics& m) {
    if (format == "json") {
        return eval::metrics_json(w, cfg.gamma, cfg.k, cfg.s, m).dump(2) + "\n";
    }
    if (format == "text") {
        return fmt::format("queries: {}\nchange_rate: {}\nprecision_at_s: {}\nmrr: {}\n", m.n_queries, m.change_rate,
                           m.precision_at_s, m.mrr);
    }
    return fmt::format("{}\n{}\n", eval::kMetricsCsvHeader, eval::metrics_csv_row(w, cfg.gamma, cfg.k, cfg.s, m));
}

inline int cmd_eval(const EvalArgs& args, std::ostream& out) {
    const auto store = load_index(args.in.index);
    const auto queries = ingest_queries(args.in.queries, args.in.query_embeddings);
    const auto planted = eval::planted_from_json(io::read_file(args.planted), args.planted);
    const auto cfg = resolve_config(args.flags, store, queries);
    std::optional<std::size_t> depth;
    if (args.depth == "top-s") {
        depth = cfg.s;
    }
    const auto metrics = eval::evaluate(queries, store, planted, cfg, depth);
    write_output(args.out, format_metrics(args.format, {cfg.alpha, cfg.beta, cfg.delta}, cfg, metrics), out);
    return kOk;
}

struct SweepArgs {
    QueryInputs in;
    ConfigFlags flags;
    std::string planted;
    std::vector<std::string> weights;
    std::vector<double> gammas;
    std::string format = "csv";
    std::string out = "-";
};

inline eval::Weights parse_weights(const std::string& text) {
    std::vector<double> parts;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            parts.push_back(std::stod(item, &used));
            if (used != item.size()) {
                throw std::invalid_argument(item);
            }
        } catch (const std::exception&) {
            throw Error(ErrorKind::kInvalidConfig, fmt::format("bad weight tuple '{}'", text));
        }
    }
    if (parts.size() != 3) {
        throw Error(ErrorKind::kInvalidConfig, fmt::format("weight tuple '{}' needs alpha,beta,delta", text));
    }
    return {parts[0], parts[1], parts[2]};
}

inline int cmd_sweep(const SweepArgs& args, std::ostream& out) {
    const auto store = load_index(args.in.index);
    const auto queries = ingest_queries(args.in.queries, args.in.query_embeddings);
    const auto planted = eval::planted_from_json(io::read_file(args.planted), args.planted);
    const auto base = resolve_config(args.flags, store, queries);
    std::vector<eval::Weights> tuples;
    for (const auto& w : args.weights) {
        tuples.push_back(parse_weights(w));
    }
    if (tuples.empty()) {
        tuples = {{0.2, 0.3, 0.5}, {0.2, 0.5, 0.3}};
    }
    auto gammas = args.gammas;
    if (gammas.empty()) {
        gammas = {base.gamma};
    }
    const auto table = eval::ablation_sweep(store, queries, planted, tuples, gammas, base);
    write_output(args.out, args.format == "json" ? eval::to_json(table).dump(2) + "\n" : eval::to_csv(table), out);
    return kOk;
}

struct SyntheticArgs {
    eval::SyntheticCorpusSpec spec;
    double planted_image_noise = -1.0;
    std::string out_dir;
};

inline int cmd_gen_synthetic(const SyntheticArgs& args, std::ostream& out) {
    auto spec = args.spec;
    if (args.planted_image_noise >= 0.0) {
        spec.planted_image_noise = args.planted_image_noise;
    }
    const auto corpus = eval::generate_synthetic_corpus(spec);
    const std::filesystem::path dir(args.out_dir);
    std::filesystem::create_directories(dir);
    save_corpus(corpus.store, dir / "records.jsonl", dir / "embeddings.bin");
    save_queries(corpus.queries, dir / "queries.jsonl", dir / "query_embeddings.bin");
    io::write_file_atomic(dir / "planted.json", eval::planted_to_json(corpus.planted));
    save_index(corpus.store, dir / "index.motoridx");
    out << fmt::format("generated {} records and {} queries (seed {}) in {}\n", corpus.store.size(),
                       corpus.queries.size(), spec.seed, dir.string());
    return kOk;
}

/// Parses argv and runs one subcommand. Diagnostics go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"motor: multimodal optimal-transport re-ranking for retrieval-augmented generation"};
    app.require_subcommand(1);
    std::string log_level;
    app.add_option("--log-level", log_level, "trace | debug | info | warn | error | off (default from MOTOR_LOG)");

    IndexArgs index_args;
    auto* index = app.add_subcommand("index", "ingest records + embeddings into an index file");
    index->add_option("--records", index_args.records, "records JSONL (id, report_text, findings)")->required();
    index->add_option("--embeddings", index_args.embeddings, "embeddings (MOTOREMB or JSON)")->required();
    index->add_option("--out", index_args.out, "index file to write")->required();

    RerankArgs rerank_args;
    auto* rerank_cmd = app.add_subcommand("rerank", "retrieve, re-rank and emit generation requests as JSON");
    add_query_inputs(rerank_cmd, rerank_args.in);
    add_config_flags(rerank_cmd, rerank_args.flags);
    rerank_cmd->add_option("--out", rerank_args.out, "JSON output path, '-' for stdout")->capture_default_str();
    rerank_cmd->add_option("--template", rerank_args.template_path,
                           "prompt template file with {question}, {grounded_caption}, {contexts}");
    rerank_cmd->add_option("--endpoint", rerank_args.endpoint, "generation service URL, e.g. http://host:8080/generate");
    rerank_cmd->add_flag("--timing", rerank_args.timing, "include stage timings in the trace");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "change rate and planted-relevance metrics");
    add_query_inputs(eval_cmd, eval_args.in);
    add_config_flags(eval_cmd, eval_args.flags);
    eval_cmd->add_option("--planted", eval_args.planted, "JSON map query id -> relevant record ids")->required();
    eval_cmd->add_option("--format", eval_args.format, "json | csv | text")
        ->check(CLI::IsMember({"json", "csv", "text"}))
        ->capture_default_str();
    eval_cmd->add_option("--change-depth", eval_args.depth, "full | top-s")
        ->check(CLI::IsMember({"full", "top-s"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_args.out, "output path, '-' for stdout")->capture_default_str();

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "evaluate a grid of (alpha,beta,delta) x gamma");
    add_query_inputs(sweep, sweep_args.in);
    add_config_flags(sweep, sweep_args.flags);
    sweep->add_option("--planted", sweep_args.planted, "JSON map query id -> relevant record ids")->required();
    sweep->add_option("--weights", sweep_args.weights,
                      "weight tuples 'alpha,beta,delta' (default: 0.2,0.3,0.5 and 0.2,0.5,0.3)");
    sweep->add_option("--gammas", sweep_args.gammas, "gamma values (default: --gamma)");
    sweep->add_option("--format", sweep_args.format, "csv | json")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();
    sweep->add_option("--out", sweep_args.out, "output path, '-' for stdout")->capture_default_str();

    SyntheticArgs syn_args;
    auto& spec = syn_args.spec;
    auto* syn = app.add_subcommand("gen-synthetic", "write a seeded synthetic corpus with planted relevant records");
    syn->add_option("--out-dir", syn_args.out_dir, "output directory")->required();
    syn->add_option("--n-records", spec.n_records)->capture_default_str();
    syn->add_option("--n-queries", spec.n_queries)->capture_default_str();
    syn->add_option("--visual-dim", spec.visual_dim)->capture_default_str();
    syn->add_option("--text-dim", spec.text_dim)->capture_default_str();
    syn->add_option("--planted", spec.n_planted_relevant, "planted relevant records per query")->capture_default_str();
    syn->add_option("--findings-min", spec.findings_min)->capture_default_str();
    syn->add_option("--findings-max", spec.findings_max)->capture_default_str();
    syn->add_option("--noise", spec.noise_scale, "perturbation of planted findings")->capture_default_str();
    syn->add_option("--planted-image-noise", syn_args.planted_image_noise,
                    "perturbation of planted images (default: --noise)");
    syn->add_option("--decoys", spec.image_decoys_per_query, "image-similar decoys per query")->capture_default_str();
    syn->add_option("--decoy-noise", spec.decoy_image_noise)->capture_default_str();
    syn->add_option("--seed", spec.seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kInputError;
    }
    if (!log_level.empty()) {
        set_log_level(log_level);
    }

    try {
        if (*index) {
            return cmd_index(index_args, out);
        }
        if (*rerank_cmd) {
            return cmd_rerank(rerank_args, out, err);
        }
        if (*eval_cmd) {
            return cmd_eval(eval_args, out);
        }
        if (*sweep) {
            return cmd_sweep(sweep_args, out);
        }
        if (*syn) {
            return cmd_gen_synthetic(syn_args, out);
        }
    } catch (const PipelineError& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kInputError;
    }
    return kInputError;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("motor");
    for (const auto& a : args) {
        argv.push_back(a.c_str());
    }
    return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace motor::cli
