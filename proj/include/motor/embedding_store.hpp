// Copyright (C) 2026 MOTOR Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/// \file embedding_store.hpp
/// \brief Corpus ingest and persistence.
///
/// Records arrive as JSON Lines (id, report_text or question_text, findings)
/// and embeddings as a separate container keyed by (id, role, finding index).
/// Two container encodings are accepted:
///
///   binary  "MOTOREMB" | u32 count | count x entry
///           entry = u32 id_len | id bytes | u16 role | [u16 finding] | u32 dim | dim x f32
///           (all little-endian; the finding index is present for roles 2 and 3)
///   json    { "<id>": { "image": [...], "text": [...],
///                       "finding_text": [[...], ...], "finding_box": [[...], ...] } }
///
/// An index file bundles both halves: "MOTORIDX" | u32 version | u64 records
/// byte length | records JSONL | MOTOREMB container.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "motor/core.hpp"
#include "motor/errors.hpp"
#include "motor/io.hpp"
#include "motor/log.hpp"

namespace motor {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
static_assert(sizeof(float) == 4);

enum class EmbeddingRole : std::uint16_t {
    kImage = 0,
    kText = 1,  // report text for records, question text for queries
    kFindingText = 2,
    kFindingBox = 3,
};

inline constexpr bool has_finding_index(EmbeddingRole role) {
    return role == EmbeddingRole::kFindingText || role == EmbeddingRole::kFindingBox;
}

inline constexpr std::string_view role_name(EmbeddingRole role) {
    switch (role) {
        case EmbeddingRole::kImage: return "image";
        case EmbeddingRole::kText: return "text";
        case EmbeddingRole::kFindingText: return "finding_text";
        case EmbeddingRole::kFindingBox: return "finding_box";
    }
    return "unknown";
}

struct EmbeddingEntry {
    std::string id;
    EmbeddingRole role = EmbeddingRole::kImage;
    std::uint16_t finding = 0;
    EmbeddingVector vector;
};

/// Embeddings keyed by (id, role, finding index), kept in file order.
class EmbeddingTable {
public:
    void insert(EmbeddingEntry entry, std::string_view source) {
        if (!has_finding_index(entry.role)) {
            entry.finding = 0;
        }
        auto key = std::make_tuple(entry.id, static_cast<std::uint16_t>(entry.role), entry.finding);
        if (index_.contains(key)) {
            throw Error(ErrorKind::kParseError,
                        fmt::format("{}: duplicate embedding for id '{}' role {} finding {}", source, entry.id,
                                    role_name(entry.role), entry.finding));
        }
        ids_.emplace(entry.id);
        index_.emplace(std::move(key), entries_.size());
        entries_.push_back(std::move(entry));
    }

    const EmbeddingVector* find(const std::string& id, EmbeddingRole role, std::uint16_t finding = 0) const {
        auto it = index_.find(std::make_tuple(id, static_cast<std::uint16_t>(role),
                                              has_finding_index(role) ? finding : std::uint16_t{0}));
        return it == index_.end() ? nullptr : &entries_[it->second].vector;
    }

    bool contains_id(const std::string& id) const { return ids_.contains(id); }
    const std::vector<EmbeddingEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }

private:
    std::vector<EmbeddingEntry> entries_;
    std::map<std::tuple<std::string, std::uint16_t, std::uint16_t>, std::size_t> index_;
    std::set<std::string> ids_;
};

namespace embedding_format {

inline constexpr std::string_view kMagic = "MOTOREMB";
inline constexpr std::string_view kIndexMagic = "MOTORIDX";
inline constexpr std::uint32_t kIndexVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto bits = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFFu));
    }
}

class Reader {
public:
    Reader(std::string_view bytes, std::string_view source) : bytes_(bytes), source_(source) {}

    template <typename T>
    T get_le(std::string_view what) {
        need(sizeof(T), what);
        std::make_unsigned_t<T> bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            bits |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(bits);
    }

    std::string_view take(std::size_t n, std::string_view what) {
        need(n, what);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t offset() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == bytes_.size(); }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorKind::kParseError, fmt::format("{}: byte {}: {}", source_, pos_, msg));
    }

private:
    void need(std::size_t n, std::string_view what) const {
        if (bytes_.size() - pos_ < n) {
            fail(fmt::format("truncated while reading {}", what));
        }
    }

    std::string_view bytes_;
    std::string_view source_;
    std::size_t pos_ = 0;
};

[[noreturn]] inline void parse_fail(std::string_view source, const std::string& msg) {
    throw Error(ErrorKind::kParseError, fmt::format("{}: {}", source, msg));
}

inline EmbeddingRole parse_role(std::uint16_t tag, const Reader& reader) {
    if (tag > 3) {
        reader.fail(fmt::format("unknown role tag {}", tag));
    }
    return static_cast<EmbeddingRole>(tag);
}

}  // namespace detail

inline std::string encode(const std::vector<EmbeddingEntry>& entries) {
    std::string out(kMagic);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.id.size()));
        out += e.id;
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.role));
        if (has_finding_index(e.role)) {
            detail::put_le<std::uint16_t>(out, e.finding);
        }
        detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.vector.dim()));
        for (float v : e.vector.values()) {
            detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
        }
    }
    return out;
}

inline EmbeddingTable decode_binary(std::string_view bytes, std::string_view source) {
    detail::Reader reader(bytes, source);
    if (reader.take(kMagic.size(), "magic") != kMagic) {
        reader.fail("bad magic, expected MOTOREMB");
    }
    const auto count = reader.get_le<std::uint32_t>("record count");
    EmbeddingTable table;
    for (std::uint32_t n = 0; n < count; ++n) {
        const auto id_len = reader.get_le<std::uint32_t>("id length");
        std::string id(reader.take(id_len, "id"));
        const auto role = detail::parse_role(reader.get_le<std::uint16_t>("role"), reader);
        std::uint16_t finding = 0;
        if (has_finding_index(role)) {
            finding = reader.get_le<std::uint16_t>("finding index");
        }
        const auto dim = reader.get_le<std::uint32_t>("dim");
        if (dim == 0) {
            reader.fail(fmt::format("zero-dimensional embedding for '{}'", id));
        }
        std::vector<float> values(dim);
        for (auto& v : values) {
            v = std::bit_cast<float>(reader.get_le<std::uint32_t>("embedding value"));
        }
        try {
            table.insert({std::move(id), role, finding, EmbeddingVector(std::move(values))}, source);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::kParseError) {
                throw;
            }
            reader.fail(e.what());
        }
    }
    if (!reader.done()) {
        reader.fail("trailing bytes after last embedding");
    }
    return table;
}

inline EmbeddingTable decode_json(std::string_view text, std::string_view source) {
    using nlohmann::json;
    auto fail = [&](const std::string& msg) { embedding_format::detail::parse_fail(source, msg); };
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        fail(e.what());
    }
    if (!doc.is_object()) {
        fail("embeddings JSON must be an object keyed by id");
    }
    auto to_vector = [&](const json& arr, const std::string& id, std::string_view role) {
        if (!arr.is_array() || arr.empty()) {
            fail(fmt::format("id '{}' role {}: expected a non-empty numeric array", id, role));
        }
        std::vector<float> values;
        values.reserve(arr.size());
        for (const auto& x : arr) {
            if (!x.is_number()) {
                fail(fmt::format("id '{}' role {}: non-numeric entry", id, role));
            }
            values.push_back(x.get<float>());
        }
        try {
            return EmbeddingVector(std::move(values));
        } catch (const Error& e) {
            throw Error(ErrorKind::kParseError, fmt::format("{}: id '{}' role {}: {}", source, id, role, e.what()));
        }
    };
    static const std::map<std::string, EmbeddingRole, std::less<>> kRoleKeys = {
        {"image", EmbeddingRole::kImage},       {"0", EmbeddingRole::kImage},
        {"text", EmbeddingRole::kText},         {"1", EmbeddingRole::kText},
        {"finding_text", EmbeddingRole::kFindingText}, {"2", EmbeddingRole::kFindingText},
        {"finding_box", EmbeddingRole::kFindingBox},   {"3", EmbeddingRole::kFindingBox},
    };
    EmbeddingTable table;
    for (const auto& [id, roles] : doc.items()) {
        if (!roles.is_object()) {
            fail(fmt::format("id '{}': expected an object of roles", id));
        }
        for (const auto& [key, value] : roles.items()) {
            auto it = kRoleKeys.find(key);
            if (it == kRoleKeys.end()) {
                fail(fmt::format("id '{}': unknown role '{}'", id, key));
            }
            const auto role = it->second;
            if (!has_finding_index(role)) {
                table.insert({id, role, 0, to_vector(value, id, role_name(role))}, source);
                continue;
            }
            if (!value.is_array()) {
                fail(fmt::format("id '{}' role {}: expected an array of arrays", id, role_name(role)));
            }
            for (std::size_t i = 0; i < value.size(); ++i) {
                table.insert({id, role, static_cast<std::uint16_t>(i), to_vector(value[i], id, role_name(role))},
                             source);
            }
        }
    }
    return table;
}

/// Picks the decoder from the leading magic bytes.
inline EmbeddingTable decode(std::string_view bytes, std::string_view source) {
    if (bytes.substr(0, kMagic.size()) == kMagic) {
        return decode_binary(bytes, source);
    }
    return decode_json(bytes, source);
}

}  // namespace embedding_format

inline EmbeddingTable read_embeddings(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return embedding_format::decode(bytes, path.string());
}

/// One JSONL row before embeddings are bound to it.
struct RawFinding {
    std::string description;
    BoundingBox box;
};

struct RawEntry {
    std::string id;
    std::string text;
    std::vector<RawFinding> findings;
    std::string image_ref;
    std::size_t line = 0;
};

inline constexpr std::string_view kReportField = "report_text";
inline constexpr std::string_view kQuestionField = "question_text";

/// Parses JSON Lines rows; `text_field` is report_text for corpora and
/// question_text for queries. Blank lines are skipped.
inline std::vector<RawEntry> parse_entries_jsonl(std::string_view text, std::string_view source,
                                                 std::string_view text_field) {
    using nlohmann::json;
    std::vector<RawEntry> rows;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(start, end - start);
        ++line_no;
        start = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        auto fail = [&](const std::string& msg) {
            embedding_format::detail::parse_fail(fmt::format("{}:{}", source, line_no), msg);
        };
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            fail(e.what());
        }
        if (!row.is_object()) {
            fail("row is not a JSON object");
        }
        RawEntry entry;
        entry.line = line_no;
        if (!row.contains("id") || !row["id"].is_string() || row["id"].get<std::string>().empty()) {
            fail("missing or empty string field 'id'");
        }
        entry.id = row["id"].get<std::string>();
        const std::string field(text_field);
        if (!row.contains(field) || !row[field].is_string()) {
            fail(fmt::format("missing string field '{}'", field));
        }
        entry.text = row[field].get<std::string>();
        if (row.contains("image_ref")) {
            if (!row["image_ref"].is_string()) {
                fail("'image_ref' must be a string");
            }
            entry.image_ref = row["image_ref"].get<std::string>();
        }
        if (row.contains("findings")) {
            const auto& findings = row["findings"];
            if (!findings.is_array()) {
                fail("'findings' must be an array");
            }
            for (std::size_t i = 0; i < findings.size(); ++i) {
                const auto& f = findings[i];
                if (!f.is_object() || !f.contains("description") || !f["description"].is_string()) {
                    fail(fmt::format("finding {} needs a string 'description'", i));
                }
                if (!f.contains("box") || !f["box"].is_array() || f["box"].size() != 4) {
                    fail(fmt::format("finding {} needs 'box' = [x_min,y_min,x_max,y_max]", i));
                }
                std::array<double, 4> c{};
                for (std::size_t k = 0; k < 4; ++k) {
                    if (!f["box"][k].is_number()) {
                        fail(fmt::format("finding {} box coordinate {} is not a number", i, k));
                    }
                    c[k] = f["box"][k].get<double>();
                }
                entry.findings.push_back({f["description"].get<std::string>(), {c[0], c[1], c[2], c[3]}});
            }
        }
        rows.push_back(std::move(entry));
    }
    return rows;
}

namespace detail {

struct BoundEntry {
    EmbeddingVector image;
    EmbeddingVector text;
    GroundedCaption caption;
};

inline BoundEntry bind_embeddings(const RawEntry& row, const EmbeddingTable& table) {
    if (!table.contains_id(row.id)) {
        throw Error(ErrorKind::kMissingEmbedding, row.id);
    }
    auto require = [&](EmbeddingRole role, std::uint16_t finding) -> const EmbeddingVector& {
        const auto* v = table.find(row.id, role, finding);
        if (v == nullptr) {
            if (has_finding_index(role)) {
                throw Error(ErrorKind::kMissingEmbedding,
                            fmt::format("{} ({} for finding {})", row.id, role_name(role), finding));
            }
            throw Error(ErrorKind::kMissingEmbedding, fmt::format("{} ({})", row.id, role_name(role)));
        }
        return *v;
    };
    BoundEntry out;
    out.image = require(EmbeddingRole::kImage, 0);
    out.text = require(EmbeddingRole::kText, 0);
    for (std::size_t i = 0; i < row.findings.size(); ++i) {
        const auto idx = static_cast<std::uint16_t>(i);
        out.caption.findings.push_back({row.findings[i].description, row.findings[i].box,
                                        require(EmbeddingRole::kFindingText, idx),
                                        require(EmbeddingRole::kFindingBox, idx)});
    }
    return out;
}

inline void check_unique_ids(const std::vector<RawEntry>& rows) {
    std::unordered_map<std::string, std::size_t> seen;
    for (const auto& row : rows) {
        if (!seen.emplace(row.id, row.line).second) {
            throw Error(ErrorKind::kDuplicateId, row.id);
        }
    }
}

inline nlohmann::ordered_json findings_json(const GroundedCaption& caption) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& f : caption.findings) {
        arr.push_back({{"description", f.description}, {"box", {f.box.x_min, f.box.y_min, f.box.x_max, f.box.y_max}}});
    }
    return arr;
}

inline void append_caption_entries(std::vector<EmbeddingEntry>& out, const std::string& id,
                                   const GroundedCaption& caption) {
    for (std::size_t i = 0; i < caption.findings.size(); ++i) {
        const auto idx = static_cast<std::uint16_t>(i);
        out.push_back({id, EmbeddingRole::kFindingText, idx, caption.findings[i].text_embedding});
        out.push_back({id, EmbeddingRole::kFindingBox, idx, caption.findings[i].box_embedding});
    }
}

}  // namespace detail

/// The retrieval database: an ordered, immutable set of validated records
/// with unique ids and uniform embedding dims.
class CorpusStore {
public:
    CorpusStore() = default;

    CorpusStore(std::vector<CandidateRecord> records, EmbeddingDims dims) : records_(std::move(records)), dims_(dims) {
        if (dims_.visual == 0 || dims_.text == 0) {
            throw Error(ErrorKind::kDimensionMismatch, "corpus dims must be positive");
        }
        by_id_.reserve(records_.size());
        for (std::size_t i = 0; i < records_.size(); ++i) {
            validate_record(records_[i], dims_);
            if (!by_id_.emplace(records_[i].id, i).second) {
                throw Error(ErrorKind::kDuplicateId, records_[i].id);
            }
        }
    }

    /// Dims are taken from the first record; an empty corpus gets the defaults.
    static CorpusStore from_records(std::vector<CandidateRecord> records) {
        EmbeddingDims dims;
        if (!records.empty()) {
            dims = {records.front().image_embedding.dim(), records.front().report_embedding.dim()};
        }
        return CorpusStore(std::move(records), dims);
    }

    const std::vector<CandidateRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const EmbeddingDims& dims() const noexcept { return dims_; }
    std::size_t visual_dim() const noexcept { return dims_.visual; }
    std::size_t text_dim() const noexcept { return dims_.text; }

    const CandidateRecord* find(const std::string& id) const {
        auto it = by_id_.find(id);
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

private:
    std::vector<CandidateRecord> records_;
    EmbeddingDims dims_{};
    std::unordered_map<std::string, std::size_t> by_id_;
};

inline CorpusStore build_corpus(const std::vector<RawEntry>& rows, const EmbeddingTable& table) {
    detail::check_unique_ids(rows);
    std::vector<CandidateRecord> records;
    records.reserve(rows.size());
    for (const auto& row : rows) {
        auto bound = detail::bind_embeddings(row, table);
        records.push_back({row.id, std::move(bound.image), std::move(bound.caption), row.text, std::move(bound.text)});
    }
    return CorpusStore::from_records(std::move(records));
}

inline CorpusStore ingest_corpus(const std::filesystem::path& records_path,
                                 const std::filesystem::path& embeddings_path) {
    const auto rows = parse_entries_jsonl(io::read_file(records_path), records_path.string(), kReportField);
    const auto table = read_embeddings(embeddings_path);
    auto store = build_corpus(rows, table);
    logger()->info("ingested {} records (visual_dim={}, text_dim={})", store.size(), store.visual_dim(),
                   store.text_dim());
    return store;
}

/// Queries carry no dims of their own; validate them with validate_query.
inline std::vector<QueryContext> build_queries(const std::vector<RawEntry>& rows, const EmbeddingTable& table) {
    detail::check_unique_ids(rows);
    std::vector<QueryContext> queries;
    queries.reserve(rows.size());
    for (const auto& row : rows) {
        auto bound = detail::bind_embeddings(row, table);
        queries.push_back({row.id, std::move(bound.image), std::move(bound.caption), row.text, std::move(bound.text),
                           row.image_ref.empty() ? row.id : row.image_ref});
    }
    return queries;
}

inline std::vector<QueryContext> ingest_queries(const std::filesystem::path& queries_path,
                                                const std::filesystem::path& embeddings_path) {
    const auto rows = parse_entries_jsonl(io::read_file(queries_path), queries_path.string(), kQuestionField);
    return build_queries(rows, read_embeddings(embeddings_path));
}

inline std::string records_to_jsonl(const CorpusStore& store) {
    std::string out;
    for (const auto& r : store.records()) {
        nlohmann::ordered_json row = {
            {"id", r.id}, {"report_text", r.report_text}, {"findings", detail::findings_json(r.caption)}};
        out += row.dump();
        out += '\n';
    }
    return out;
}

inline std::string queries_to_jsonl(const std::vector<QueryContext>& queries) {
    std::string out;
    for (const auto& q : queries) {
        nlohmann::ordered_json row = {
            {"id", q.id}, {"question_text", q.question_text}, {"findings", detail::findings_json(q.caption)}};
        if (!q.image_ref.empty() && q.image_ref != q.id) {
            row["image_ref"] = q.image_ref;
        }
        out += row.dump();
        out += '\n';
    }
    return out;
}

inline std::vector<EmbeddingEntry> embedding_entries(const CorpusStore& store) {
    std::vector<EmbeddingEntry> out;
    for (const auto& r : store.records()) {
        out.push_back({r.id, EmbeddingRole::kImage, 0, r.image_embedding});
        out.push_back({r.id, EmbeddingRole::kText, 0, r.report_embedding});
        detail::append_caption_entries(out, r.id, r.caption);
    }
    return out;
}

inline std::vector<EmbeddingEntry> embedding_entries(const std::vector<QueryContext>& queries) {
    std::vector<EmbeddingEntry> out;
    for (const auto& q : queries) {
        out.push_back({q.id, EmbeddingRole::kImage, 0, q.image_embedding});
        out.push_back({q.id, EmbeddingRole::kText, 0, q.question_embedding});
        detail::append_caption_entries(out, q.id, q.caption);
    }
    return out;
}

/// Writes the records JSONL and binary embeddings pair accepted by ingest_corpus.
inline void save_corpus(const CorpusStore& store, const std::filesystem::path& records_path,
                        const std::filesystem::path& embeddings_path) {
    io::write_file_atomic(records_path, records_to_jsonl(store));
    io::write_file_atomic(embeddings_path, embedding_format::encode(embedding_entries(store)));
}

inline void save_queries(const std::vector<QueryContext>& queries, const std::filesystem::path& queries_path,
                         const std::filesystem::path& embeddings_path) {
    io::write_file_atomic(queries_path, queries_to_jsonl(queries));
    io::write_file_atomic(embeddings_path, embedding_format::encode(embedding_entries(queries)));
}

inline std::string encode_index(const CorpusStore& store) {
    const auto records = records_to_jsonl(store);
    std::string out(embedding_format::kIndexMagic);
    embedding_format::detail::put_le<std::uint32_t>(out, embedding_format::kIndexVersion);
    embedding_format::detail::put_le<std::uint64_t>(out, records.size());
    out += records;
    out += embedding_format::encode(embedding_entries(store));
    return out;
}

inline CorpusStore decode_index(std::string_view bytes, std::string_view source) {
    embedding_format::detail::Reader reader(bytes, source);
    if (reader.take(embedding_format::kIndexMagic.size(), "magic") != embedding_format::kIndexMagic) {
        reader.fail("bad magic, expected MOTORIDX");
    }
    const auto version = reader.get_le<std::uint32_t>("version");
    if (version != embedding_format::kIndexVersion) {
        reader.fail(fmt::format("unsupported index version {}", version));
    }
    const auto records_len = reader.get_le<std::uint64_t>("records length");
    const auto records = reader.take(records_len, "records");
    const auto rows = parse_entries_jsonl(records, source, kReportField);
    const auto table = embedding_format::decode_binary(bytes.substr(reader.offset()), source);
    return build_corpus(rows, table);
}

inline void save_index(const CorpusStore& store, const std::filesystem::path& path) {
    io::write_file_atomic(path, encode_index(store));
}

inline CorpusStore load_index(const std::filesystem::path& path) {
    const auto bytes = io::read_file(path);
    return decode_index(bytes, path.string());
}

}  // namespace motor
