#pragma once

// SQuAD 2.0 JSON ingestion: parse into validated in-memory examples with
// deterministic iteration order and seeded subset selection.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lingqa/common.hpp"

namespace lingqa {

struct GoldAnswer {
    std::string text;
    size_t answer_start = 0;  // codepoint offset into the context
};

struct QaExample {
    std::string qid;
    std::string article_title;
    size_t paragraph_index = 0;
    std::string context;
    std::string question;
    std::vector<GoldAnswer> gold_answers;  // empty iff unanswerable
    bool is_impossible = false;

    // key used by sidecar feature files to locate this paragraph's record
    std::string context_key() const {
        return article_title + "#" + std::to_string(paragraph_index);
    }
};

struct Dataset {
    std::vector<QaExample> examples;
    std::string source_path;
    std::string split_name;

    size_t size() const { return examples.size(); }
    size_t answerable_count() const {
        size_t n = 0;
        for (const auto& ex : examples) n += ex.is_impossible ? 0 : 1;
        return n;
    }
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const char* name,
                                           const std::string& where) {
    auto it = obj.find(name);
    if (it == obj.end())
        fail(ErrorKind::SchemaViolation, "missing field '" + std::string(name) + "' at " + where);
    return *it;
}

}  // namespace detail

// Parse SQuAD v2.0 (or v1.1; missing "is_impossible" defaults to false).
// Validates offsets: every gold answer must equal the context slice at its
// codepoint offset. Throws MalformedJson / SchemaViolation / SpanMismatch.
inline Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open dataset file " + path);

    nlohmann::json root;
    try {
        in >> root;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedJson, path + ": " + e.what());
    }

    Dataset ds;
    ds.source_path = path;
    ds.split_name = std::filesystem::path(path).stem().string();

    if (!root.is_object() || !root.contains("data") || !root["data"].is_array())
        fail(ErrorKind::SchemaViolation, "top-level 'data' array missing in " + path);

    std::unordered_set<std::string> seen_qids;
    for (const auto& article : root["data"]) {
        std::string title = article.value("title", std::string("untitled"));
        const auto& paragraphs = detail::require_field(article, "paragraphs", "article '" + title + "'");
        size_t para_index = 0;
        for (const auto& para : paragraphs) {
            const std::string where = title + "#" + std::to_string(para_index);
            std::string context = detail::require_field(para, "context", where).get<std::string>();
            Utf8Text ctx_cp = utf8_decode(context);
            const auto& qas = detail::require_field(para, "qas", where);
            for (const auto& qa : qas) {
                QaExample ex;
                ex.article_title = title;
                ex.paragraph_index = para_index;
                ex.context = context;
                ex.qid = detail::require_field(qa, "id", where).get<std::string>();
                ex.question = detail::require_field(qa, "question", ex.qid).get<std::string>();
                ex.is_impossible = qa.value("is_impossible", false);
                if (!seen_qids.insert(ex.qid).second)
                    fail(ErrorKind::SchemaViolation, "duplicate qid '" + ex.qid + "' in " + path);

                const auto& answers = detail::require_field(qa, "answers", ex.qid);
                for (const auto& ans : answers) {
                    GoldAnswer g;
                    g.text = detail::require_field(ans, "text", ex.qid).get<std::string>();
                    auto start = detail::require_field(ans, "answer_start", ex.qid);
                    if (!start.is_number_integer() || start.get<long long>() < 0)
                        fail(ErrorKind::SchemaViolation,
                             "answer_start must be a non-negative integer for qid " + ex.qid);
                    g.answer_start = start.get<size_t>();
                    size_t answer_len = utf8_length(g.text);
                    if (g.answer_start + answer_len > ctx_cp.size())
                        fail(ErrorKind::SpanMismatch,
                             "answer offset out of range for qid " + ex.qid);
                    std::string sliced =
                        utf8_slice(context, ctx_cp, g.answer_start, g.answer_start + answer_len);
                    if (sliced != g.text)
                        fail(ErrorKind::SpanMismatch, "answer text does not match context slice for qid " +
                                                          ex.qid + " (got '" + sliced + "')");
                    ex.gold_answers.push_back(std::move(g));
                }
                if (ex.is_impossible && !ex.gold_answers.empty())
                    fail(ErrorKind::SchemaViolation,
                         "is_impossible example carries answers, qid " + ex.qid);
                ds.examples.push_back(std::move(ex));
            }
            ++para_index;
        }
    }
    return ds;
}

// Deterministic pseudo-random subset of size n. The same (dataset, n, seed)
// always selects the same examples in the same order.
inline Dataset split_subset(const Dataset& ds, size_t n, uint64_t seed) {
    if (n == 0 || n > ds.size())
        fail(ErrorKind::BadCount, "subset size " + std::to_string(n) + " out of range for dataset of " +
                                      std::to_string(ds.size()));
    std::vector<size_t> order(ds.size());
    std::iota(order.begin(), order.end(), size_t{0});
    CounterRng rng(seed, "split_subset");
    for (size_t i = ds.size(); i > 1; --i) {
        size_t j = rng.next_below(i);
        std::swap(order[i - 1], order[j]);
    }
    Dataset out;
    out.source_path = ds.source_path;
    out.split_name = ds.split_name + "@" + std::to_string(n);
    out.examples.reserve(n);
    for (size_t i = 0; i < n; ++i) out.examples.push_back(ds.examples[order[i]]);
    return out;
}

}  // namespace lingqa
