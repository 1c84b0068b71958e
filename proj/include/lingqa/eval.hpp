#pragma once

// Scoring: answer normalization, per-example EM and bag-of-words F1 with
// max over gold answers, aggregate metrics with answerable/unanswerable
// breakdowns, the answer/no-answer confusion matrix, and error
// categorization records.

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lingqa/common.hpp"
#include "lingqa/squad.hpp"
#include "lingqa/train.hpp"

namespace lingqa {

// lowercase, strip punctuation, drop standalone articles, collapse whitespace
inline std::string normalize_answer(const std::string& s) {
    Utf8Text decoded = utf8_decode(s);
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        if (!current.empty() && current != "a" && current != "an" && current != "the")
            tokens.push_back(current);
        current.clear();
    };
    for (uint32_t cp : decoded.codepoints) {
        if (is_space_cp(cp)) {
            flush();
        } else if (!is_punct_cp(cp)) {
            utf8_append(current, ascii_lower_cp(cp));
        }
    }
    flush();
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

namespace eval_detail {

inline std::vector<std::string> split_tokens(const std::string& normalized) {
    std::vector<std::string> tokens;
    std::string current;
    for (char c : normalized) {
        if (c == ' ') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

// bag-of-words F1 between two normalized strings
inline double token_f1(const std::string& norm_pred, const std::string& norm_gold) {
    if (norm_pred.empty() || norm_gold.empty())
        return norm_pred == norm_gold ? 1.0 : 0.0;
    auto pred_tokens = split_tokens(norm_pred);
    auto gold_tokens = split_tokens(norm_gold);
    std::map<std::string, int> gold_counts;
    for (const auto& t : gold_tokens) ++gold_counts[t];
    int overlap = 0;
    for (const auto& t : pred_tokens) {
        auto it = gold_counts.find(t);
        if (it != gold_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    if (overlap == 0) return 0.0;
    const double precision = static_cast<double>(overlap) / static_cast<double>(pred_tokens.size());
    const double recall = static_cast<double>(overlap) / static_cast<double>(gold_tokens.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace eval_detail

// (em, f1) for one prediction against the example's gold answers; empty
// golds means unanswerable, where the empty prediction scores 1/1
inline std::pair<double, double> em_f1(const std::string& pred,
                                       const std::vector<std::string>& golds) {
    const std::string norm_pred = normalize_answer(pred);
    if (golds.empty()) {
        const double v = norm_pred.empty() ? 1.0 : 0.0;
        return {v, v};
    }
    double best_em = 0.0, best_f1 = 0.0;
    for (const auto& gold : golds) {
        const std::string norm_gold = normalize_answer(gold);
        best_em = std::max(best_em, norm_pred == norm_gold ? 1.0 : 0.0);
        best_f1 = std::max(best_f1, eval_detail::token_f1(norm_pred, norm_gold));
    }
    return {best_em, best_f1};
}

struct Metrics {
    double exact = 0.0;
    double f1 = 0.0;
    size_t total = 0;
    size_t has_answer_total = 0;
    size_t no_answer_total = 0;
    double has_answer_exact = 0.0;
    double has_answer_f1 = 0.0;
    double no_answer_exact = 0.0;
    double no_answer_f1 = 0.0;
};

struct ConfusionMatrix {
    size_t answer_answer = 0;      // gold answer, predicted answer
    size_t answer_noanswer = 0;    // gold answer, predicted no-answer
    size_t noanswer_answer = 0;    // gold no-answer, predicted answer
    size_t noanswer_noanswer = 0;  // gold no-answer, predicted no-answer

    size_t total() const {
        return answer_answer + answer_noanswer + noanswer_answer + noanswer_noanswer;
    }
};

struct EvalResult {
    Metrics metrics;
    ConfusionMatrix confusion;
    std::vector<std::string> extra_prediction_qids;  // warning only
};

inline std::vector<std::string> gold_texts(const QaExample& ex) {
    std::vector<std::string> out;
    for (const auto& g : ex.gold_answers) out.push_back(g.text);
    return out;
}

// Every dataset qid must be present in preds; extra prediction keys are
// collected as warnings. The confusion matrix counts raw prediction
// emptiness against gold answerability.
inline EvalResult evaluate(const std::map<std::string, std::string>& preds, const Dataset& ds) {
    std::vector<std::string> missing;
    for (const auto& ex : ds.examples)
        if (!preds.count(ex.qid)) missing.push_back(ex.qid);
    if (!missing.empty()) {
        std::string list;
        for (size_t i = 0; i < missing.size() && i < 10; ++i)
            list += (i ? ", " : "") + missing[i];
        if (missing.size() > 10) list += ", ...";
        fail(ErrorKind::MissingPrediction,
             std::to_string(missing.size()) + " dataset qids have no prediction: " + list);
    }

    EvalResult result;
    double sum_em = 0, sum_f1 = 0, ans_em = 0, ans_f1 = 0, no_em = 0, no_f1 = 0;
    for (const auto& ex : ds.examples) {
        const std::string& pred = preds.at(ex.qid);
        auto [em, f1] = em_f1(pred, gold_texts(ex));
        sum_em += em;
        sum_f1 += f1;
        if (ex.is_impossible) {
            no_em += em;
            no_f1 += f1;
            ++result.metrics.no_answer_total;
            ++(pred.empty() ? result.confusion.noanswer_noanswer : result.confusion.noanswer_answer);
        } else {
            ans_em += em;
            ans_f1 += f1;
            ++result.metrics.has_answer_total;
            ++(pred.empty() ? result.confusion.answer_noanswer : result.confusion.answer_answer);
        }
    }
    const size_t n = ds.size();
    result.metrics.total = n;
    result.metrics.exact = n ? 100.0 * sum_em / static_cast<double>(n) : 0.0;
    result.metrics.f1 = n ? 100.0 * sum_f1 / static_cast<double>(n) : 0.0;
    const size_t na = result.metrics.has_answer_total;
    const size_t nn = result.metrics.no_answer_total;
    result.metrics.has_answer_exact = na ? 100.0 * ans_em / static_cast<double>(na) : 0.0;
    result.metrics.has_answer_f1 = na ? 100.0 * ans_f1 / static_cast<double>(na) : 0.0;
    result.metrics.no_answer_exact = nn ? 100.0 * no_em / static_cast<double>(nn) : 0.0;
    result.metrics.no_answer_f1 = nn ? 100.0 * no_f1 / static_cast<double>(nn) : 0.0;

    std::unordered_set<std::string> dataset_qids;
    for (const auto& ex : ds.examples) dataset_qids.insert(ex.qid);
    for (const auto& [qid, text] : preds) {
        (void)text;
        if (!dataset_qids.count(qid)) result.extra_prediction_qids.push_back(qid);
    }
    return result;
}

inline nlohmann::json metrics_to_json(const EvalResult& result) {
    return {
        {"exact", result.metrics.exact},
        {"f1", result.metrics.f1},
        {"total", result.metrics.total},
        {"has_answer_exact", result.metrics.has_answer_exact},
        {"has_answer_f1", result.metrics.has_answer_f1},
        {"has_answer_total", result.metrics.has_answer_total},
        {"no_answer_exact", result.metrics.no_answer_exact},
        {"no_answer_f1", result.metrics.no_answer_f1},
        {"no_answer_total", result.metrics.no_answer_total},
        {"confusion",
         {{"aa", result.confusion.answer_answer},
          {"an", result.confusion.answer_noanswer},
          {"na", result.confusion.noanswer_answer},
          {"nn", result.confusion.noanswer_noanswer}}},
    };
}

// ---------------------------------------------------------------------------
// error categorization
// ---------------------------------------------------------------------------

enum class ErrorCategory { missed_answer, hallucinated_answer, wrong_span };

inline const char* error_category_name(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::missed_answer: return "MISSED_ANSWER";
        case ErrorCategory::hallucinated_answer: return "HALLUCINATED_ANSWER";
        case ErrorCategory::wrong_span: return "WRONG_SPAN";
    }
    return "?";
}

struct ErrorRecord {
    std::string qid;
    ErrorCategory category = ErrorCategory::wrong_span;
    bool partial = false;  // 0 < f1 < 1
    std::vector<std::string> golds;
    std::string pred;
    double f1 = 0.0;
    std::vector<std::pair<std::string, double>> n_best;
};

struct ErrorReport {
    std::vector<ErrorRecord> records;  // sorted by qid
    size_t missed_answer = 0;
    size_t hallucinated_answer = 0;
    size_t wrong_span = 0;
    size_t partial = 0;
};

inline ErrorReport error_report(
    const std::map<std::string, std::string>& preds,
    const std::map<std::string, std::vector<std::pair<std::string, double>>>& nbest,
    const Dataset& ds) {
    ErrorReport report;
    for (const auto& ex : ds.examples) {
        auto it = preds.find(ex.qid);
        if (it == preds.end())
            fail(ErrorKind::MissingPrediction, "no prediction for qid " + ex.qid);
        const std::string& pred = it->second;
        auto [em, f1] = em_f1(pred, gold_texts(ex));

        const bool gold_has_answer = !ex.is_impossible;
        const bool pred_has_answer = !pred.empty();
        ErrorRecord rec;
        if (gold_has_answer && !pred_has_answer) {
            rec.category = ErrorCategory::missed_answer;
            ++report.missed_answer;
        } else if (!gold_has_answer && pred_has_answer) {
            rec.category = ErrorCategory::hallucinated_answer;
            ++report.hallucinated_answer;
        } else if (gold_has_answer && pred_has_answer && f1 < 1.0) {
            rec.category = ErrorCategory::wrong_span;
            ++report.wrong_span;
        } else {
            continue;  // correct (or word-order-only mismatch with f1 = 1)
        }
        (void)em;
        rec.qid = ex.qid;
        rec.partial = f1 > 0.0 && f1 < 1.0;
        report.partial += rec.partial ? 1 : 0;
        rec.golds = gold_texts(ex);
        rec.pred = pred;
        rec.f1 = f1;
        auto nb = nbest.find(ex.qid);
        if (nb != nbest.end()) rec.n_best = nb->second;
        report.records.push_back(std::move(rec));
    }
    std::sort(report.records.begin(), report.records.end(),
              [](const ErrorRecord& a, const ErrorRecord& b) { return a.qid < b.qid; });
    return report;
}

inline void write_error_report(const std::string& path, const ErrorReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write error report " + path);
    for (const auto& rec : report.records) {
        nlohmann::json j;
        j["qid"] = rec.qid;
        j["category"] = error_category_name(rec.category);
        j["partial"] = rec.partial;
        j["golds"] = rec.golds;
        j["pred"] = rec.pred;
        j["f1"] = rec.f1;
        if (!rec.n_best.empty()) {
            nlohmann::json nb = nlohmann::json::array();
            for (const auto& [text, score] : rec.n_best)
                nb.push_back({{"text", text}, {"score", score}});
            j["n_best"] = std::move(nb);
        }
        out << j.dump() << "\n";
    }
}

}  // namespace lingqa
