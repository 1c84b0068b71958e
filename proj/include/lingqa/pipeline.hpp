#pragma once

// Bridges ingestion and the model: turns a QaExample into packed inputs,
// aligned feature rows, gold span targets and the per-position character
// ranges needed to map predictions back to context text. Also the
// versioned binary cache written by `preprocess`.

#include <fstream>
#include <string>
#include <vector>

#include "lingqa/lingfeat.hpp"
#include "lingqa/squad.hpp"
#include "lingqa/tokenizer.hpp"

namespace lingqa {

struct PreparedExample {
    std::string qid;
    std::string context;
    PackedInput packed;
    FeatureMatrix features;
    GoldSpan gold;
    bool is_impossible = false;
    // per packed position: codepoint range into context, (-1,-1) elsewhere
    std::vector<std::pair<int32_t, int32_t>> position_chars;
};

// Word-level features either from a sidecar file or the rule-based tagger.
class FeatureProvider {
public:
    FeatureProvider(const SidecarData& sidecar, const FeatureVocabs& vocabs)
        : sidecar_(&sidecar), vocabs_(&vocabs), tagger_(vocabs) {}

    explicit FeatureProvider(const FeatureVocabs& vocabs)
        : sidecar_(nullptr), vocabs_(&vocabs), tagger_(vocabs) {}

    bool uses_sidecar() const { return sidecar_ != nullptr; }
    const FeatureVocabs& vocabs() const { return *vocabs_; }

    WordFeatureList context_features(const QaExample& ex, const TokenizedText& tt) const {
        if (!sidecar_) return tagger_.tag(tt.words);
        auto it = sidecar_->contexts.find(ex.context_key());
        if (it == sidecar_->contexts.end())
            fail(ErrorKind::CoverageGap,
                 "sidecar has no context record " + ex.context_key() + " (qid " + ex.qid + ")");
        return it->second;
    }

    WordFeatureList question_features(const QaExample& ex, const TokenizedText& tt) const {
        if (!sidecar_) return tagger_.tag(tt.words);
        auto it = sidecar_->questions.find(ex.qid);
        if (it == sidecar_->questions.end())
            fail(ErrorKind::CoverageGap, "sidecar has no question record for qid " + ex.qid);
        return it->second;
    }

private:
    const SidecarData* sidecar_;
    const FeatureVocabs* vocabs_;
    FallbackTagger tagger_;
};

inline PreparedExample prepare_example(const QaExample& ex, const SubwordVocab& vocab,
                                       const PackConfig& pack_cfg, const FeatureProvider& provider) {
    PreparedExample out;
    out.qid = ex.qid;
    out.context = ex.context;
    out.is_impossible = ex.is_impossible;

    TokenizedText ctx_tt = tokenize(ex.context, vocab);
    TokenizedText q_tt = tokenize(ex.question, vocab);
    out.packed = pack(ctx_tt, q_tt, pack_cfg, vocab);
    out.features = align(out.packed, ctx_tt, provider.context_features(ex, ctx_tt), q_tt,
                         provider.question_features(ex, q_tt), provider.vocabs(), ex.qid);
    out.gold = gold_token_span(ex, out.packed, ctx_tt);

    out.position_chars.assign(out.packed.length(), {-1, -1});
    for (size_t p = 0; p < out.packed.length(); ++p) {
        const PackedOrigin& origin = out.packed.origin[p];
        if (origin.side == PackedSide::context) {
            const Subword& sub = ctx_tt.subwords[static_cast<size_t>(origin.subword)];
            out.position_chars[p] = {static_cast<int32_t>(sub.start_cp),
                                     static_cast<int32_t>(sub.end_cp)};
        }
    }
    return out;
}

inline std::vector<PreparedExample> prepare_dataset(const Dataset& ds, const SubwordVocab& vocab,
                                                    const PackConfig& pack_cfg,
                                                    const FeatureProvider& provider) {
    std::vector<PreparedExample> out;
    out.reserve(ds.size());
    for (const auto& ex : ds.examples) out.push_back(prepare_example(ex, vocab, pack_cfg, provider));
    return out;
}

// ---------------------------------------------------------------------------
// preprocess cache: binary, keyed by a hash of every input that affects
// packing and feature alignment
// ---------------------------------------------------------------------------

namespace cache_detail {

constexpr const char* kMagic = "LQCACHE1";

inline void write_u64(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
inline uint64_t read_u64(std::istream& in, const std::string& path) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) fail(ErrorKind::MalformedLine, path + ": truncated cache");
    return v;
}
inline void write_string(std::ostream& out, const std::string& s) {
    write_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::istream& in, const std::string& path) {
    std::string s(read_u64(in, path), '\0');
    in.read(s.data(), static_cast<std::streamsize>(s.size()));
    if (!in) fail(ErrorKind::MalformedLine, path + ": truncated cache");
    return s;
}
template <typename V>
void write_vector(std::ostream& out, const std::vector<V>& v) {
    write_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(V)));
}
template <typename V>
std::vector<V> read_vector(std::istream& in, const std::string& path) {
    std::vector<V> v(read_u64(in, path));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(V)));
    if (!in) fail(ErrorKind::MalformedLine, path + ": truncated cache");
    return v;
}

}  // namespace cache_detail

inline void write_cache(const std::string& path, uint64_t config_hash,
                        const std::vector<PreparedExample>& examples) {
    using namespace cache_detail;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write cache " + path);
    out.write(kMagic, 8);
    write_u64(out, config_hash);
    write_u64(out, examples.size());
    for (const auto& ex : examples) {
        write_string(out, ex.qid);
        write_string(out, ex.context);
        write_vector(out, ex.packed.input_ids);
        write_vector(out, ex.packed.segment_ids);
        write_vector(out, ex.packed.mask);
        std::vector<int32_t> origin(ex.packed.length() * 2);
        for (size_t p = 0; p < ex.packed.length(); ++p) {
            origin[p * 2] = static_cast<int32_t>(ex.packed.origin[p].side);
            origin[p * 2 + 1] = ex.packed.origin[p].subword;
        }
        write_vector(out, origin);
        write_vector(out, ex.packed.context_position);
        write_vector(out, ex.packed.question_position);
        write_u64(out, ex.packed.cls_position);
        write_u64(out, ex.packed.truncated_context ? 1 : 0);
        write_u64(out, ex.features.max_seq_len);
        write_vector(out, ex.features.data);
        write_u64(out, ex.gold.start_pos);
        write_u64(out, ex.gold.end_pos);
        write_u64(out, (ex.gold.is_null ? 1u : 0u) | (ex.is_impossible ? 2u : 0u));
        std::vector<int32_t> chars(ex.position_chars.size() * 2);
        for (size_t p = 0; p < ex.position_chars.size(); ++p) {
            chars[p * 2] = ex.position_chars[p].first;
            chars[p * 2 + 1] = ex.position_chars[p].second;
        }
        write_vector(out, chars);
    }
    if (!out) fail(ErrorKind::IoError, "short write on cache " + path);
}

inline std::vector<PreparedExample> read_cache(const std::string& path, uint64_t expected_hash) {
    using namespace cache_detail;
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open cache " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string_view(magic, 8) != kMagic)
        fail(ErrorKind::MalformedLine, path + " is not a preprocess cache");
    const uint64_t stored_hash = read_u64(in, path);
    if (stored_hash != expected_hash)
        fail(ErrorKind::CheckpointMismatch,
             path + ": cache was built from different inputs/config (hash " + hex64(stored_hash) +
                 " vs expected " + hex64(expected_hash) + ")");
    std::vector<PreparedExample> out(read_u64(in, path));
    for (auto& ex : out) {
        ex.qid = read_string(in, path);
        ex.context = read_string(in, path);
        ex.packed.input_ids = read_vector<int32_t>(in, path);
        ex.packed.segment_ids = read_vector<uint8_t>(in, path);
        ex.packed.mask = read_vector<uint8_t>(in, path);
        auto origin = read_vector<int32_t>(in, path);
        ex.packed.origin.resize(origin.size() / 2);
        for (size_t p = 0; p < ex.packed.origin.size(); ++p) {
            ex.packed.origin[p].side = static_cast<PackedSide>(origin[p * 2]);
            ex.packed.origin[p].subword = origin[p * 2 + 1];
        }
        ex.packed.context_position = read_vector<int32_t>(in, path);
        ex.packed.question_position = read_vector<int32_t>(in, path);
        ex.packed.cls_position = read_u64(in, path);
        ex.packed.truncated_context = read_u64(in, path) != 0;
        ex.features.max_seq_len = read_u64(in, path);
        ex.features.data = read_vector<int32_t>(in, path);
        ex.gold.start_pos = read_u64(in, path);
        ex.gold.end_pos = read_u64(in, path);
        const uint64_t flags = read_u64(in, path);
        ex.gold.is_null = (flags & 1u) != 0;
        ex.is_impossible = (flags & 2u) != 0;
        auto chars = read_vector<int32_t>(in, path);
        ex.position_chars.resize(chars.size() / 2);
        for (size_t p = 0; p < ex.position_chars.size(); ++p)
            ex.position_chars[p] = {chars[p * 2], chars[p * 2 + 1]};
    }
    return out;
}

}  // namespace lingqa
