#pragma once

// Greedy longest-match subword tokenization with codepoint offsets, and
// packing of a (context, question) pair into the three fixed-length model
// input vectors: token ids, segment ids, attention mask.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lingqa/common.hpp"
#include "lingqa/squad.hpp"
#include "lingqa/vocab.hpp"

namespace lingqa {

struct Subword {
    int token_id = 0;
    size_t start_cp = 0;
    size_t end_cp = 0;
    size_t word_index = 0;
};

struct Word {
    std::string text;  // original casing
    size_t start_cp = 0;
    size_t end_cp = 0;
};

struct TokenizedText {
    std::vector<Subword> subwords;
    std::vector<Word> words;
};

// Lowercase before matching (uncased convention); offsets refer to the
// original text. A word with no vocab match at some position emits one
// [UNK] spanning the remainder of that word.
inline TokenizedText tokenize(const std::string& text, const SubwordVocab& vocab) {
    TokenizedText out;
    for (const auto& raw : detail::segment_words(text)) {
        size_t word_index = out.words.size();
        out.words.push_back({raw.text, raw.start_cp, raw.end_cp});

        std::string lower = ascii_lower(raw.text);
        Utf8Text decoded = utf8_decode(lower);
        size_t n = decoded.size();
        size_t pos = 0;
        while (pos < n) {
            int match_id = -1;
            size_t match_end = pos;
            for (size_t end = n; end > pos; --end) {
                std::string piece = pos == 0 ? "" : SubwordVocab::kContinuation;
                piece += utf8_slice(lower, decoded, pos, end);
                int id = vocab.lookup(piece);
                if (id >= 0) {
                    match_id = id;
                    match_end = end;
                    break;
                }
            }
            if (match_id < 0) {
                out.subwords.push_back(
                    {SubwordVocab::kUnk, raw.start_cp + pos, raw.end_cp, word_index});
                break;
            }
            out.subwords.push_back(
                {match_id, raw.start_cp + pos, raw.start_cp + match_end, word_index});
            pos = match_end;
        }
    }
    return out;
}

struct PackConfig {
    size_t max_seq_len = 384;
    size_t max_query_len = 64;
    bool question_first = false;  // flips segment order to [CLS] question [SEP] context [SEP]

    void validate() const {
        if (max_query_len + 3 >= max_seq_len)
            fail(ErrorKind::ConfigViolation, "max_query_len + 3 must be < max_seq_len (got " +
                                                 std::to_string(max_query_len) + " vs " +
                                                 std::to_string(max_seq_len) + ")");
    }
};

enum class PackedSide : uint8_t { special = 0, context = 1, question = 2 };

struct PackedOrigin {
    PackedSide side = PackedSide::special;
    int subword = -1;  // index into the side's TokenizedText.subwords
};

struct PackedInput {
    std::vector<int32_t> input_ids;
    std::vector<uint8_t> segment_ids;
    std::vector<uint8_t> mask;
    std::vector<PackedOrigin> origin;          // per packed position
    std::vector<int32_t> context_position;     // context subword index -> packed position (-1 if dropped)
    std::vector<int32_t> question_position;    // question subword index -> packed position (-1 if dropped)
    size_t cls_position = 0;
    bool truncated_context = false;

    size_t length() const { return input_ids.size(); }
    size_t live_count() const {
        size_t n = 0;
        for (uint8_t m : mask) n += m;
        return n;
    }
};

// Layout: [CLS] context ... [SEP] question ... [SEP] [PAD]*, segment 0 over
// [CLS]+first segment+first [SEP], segment 1 over the second segment and
// final [SEP]. The question is clipped to max_query_len subwords and the
// context to whatever budget remains.
inline PackedInput pack(const TokenizedText& context, const TokenizedText& question,
                        const PackConfig& cfg, const SubwordVocab& vocab) {
    cfg.validate();
    if (question.subwords.empty())
        fail(ErrorKind::ConfigViolation, "cannot pack an empty question");

    const size_t q_kept = std::min(question.subwords.size(), cfg.max_query_len);
    const size_t ctx_budget = cfg.max_seq_len - q_kept - 3;
    if (ctx_budget == 0)
        fail(ErrorKind::ConfigViolation, "no context budget left after question and specials");
    const size_t ctx_kept = std::min(context.subwords.size(), ctx_budget);

    PackedInput out;
    const size_t L = cfg.max_seq_len;
    out.input_ids.assign(L, SubwordVocab::kPad);
    out.segment_ids.assign(L, 0);
    out.mask.assign(L, 0);
    out.origin.assign(L, PackedOrigin{});
    out.context_position.assign(context.subwords.size(), -1);
    out.question_position.assign(question.subwords.size(), -1);
    out.truncated_context = context.subwords.size() > ctx_budget;

    size_t pos = 0;
    auto put = [&](int32_t id, uint8_t segment, PackedOrigin origin) {
        out.input_ids[pos] = id;
        out.segment_ids[pos] = segment;
        out.mask[pos] = 1;
        out.origin[pos] = origin;
        ++pos;
    };
    auto put_side = [&](const TokenizedText& tt, size_t kept, PackedSide side, uint8_t segment) {
        for (size_t i = 0; i < kept; ++i) {
            auto& pos_of = side == PackedSide::context ? out.context_position : out.question_position;
            pos_of[i] = static_cast<int32_t>(pos);
            put(tt.subwords[i].token_id, segment, {side, static_cast<int>(i)});
        }
    };

    out.cls_position = 0;
    put(SubwordVocab::kCls, 0, {});
    if (cfg.question_first) {
        put_side(question, q_kept, PackedSide::question, 0);
        put(SubwordVocab::kSep, 0, {});
        put_side(context, ctx_kept, PackedSide::context, 1);
    } else {
        put_side(context, ctx_kept, PackedSide::context, 0);
        put(SubwordVocab::kSep, 0, {});
        put_side(question, q_kept, PackedSide::question, 1);
    }
    put(SubwordVocab::kSep, 1, {});
    (void)vocab;
    return out;
}

struct GoldSpan {
    size_t start_pos = 0;
    size_t end_pos = 0;
    bool is_null = false;  // unanswerable or answer lost to truncation
};

// Smallest packed context-subword range whose codepoint span covers the
// first gold answer. Unanswerable examples and answers that did not survive
// truncation map to (cls_position, cls_position).
inline GoldSpan gold_token_span(const QaExample& ex, const PackedInput& packed,
                                const TokenizedText& context) {
    GoldSpan null_span{packed.cls_position, packed.cls_position, true};
    if (ex.is_impossible || ex.gold_answers.empty()) return null_span;

    const GoldAnswer& gold = ex.gold_answers.front();
    const size_t a = gold.answer_start;
    const size_t b = a + utf8_length(gold.text);
    const auto& subwords = context.subwords;

    // minimal covering range: latest subword starting at or before a,
    // earliest subword ending at or after b
    int start_sub = -1, end_sub = -1;
    for (size_t i = 0; i < subwords.size(); ++i) {
        if (subwords[i].start_cp <= a) start_sub = static_cast<int>(i);
        if (end_sub < 0 && subwords[i].end_cp >= b) end_sub = static_cast<int>(i);
    }
    if (start_sub < 0 || end_sub < 0 || end_sub < start_sub)
        return null_span;  // answer not covered by tokenized text

    int32_t p_start = packed.context_position[static_cast<size_t>(start_sub)];
    int32_t p_end = packed.context_position[static_cast<size_t>(end_sub)];
    if (p_start < 0 || p_end < 0) return null_span;  // truncated away
    return {static_cast<size_t>(p_start), static_cast<size_t>(p_end), false};
}

}  // namespace lingqa
