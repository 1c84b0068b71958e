#pragma once

// Subword vocabulary: fixed special tokens, greedy-longest-match lookup
// support, and a deterministic pair-merge builder for desk-scale corpora.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "lingqa/common.hpp"

namespace lingqa {

class SubwordVocab {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;
    static constexpr const char* kContinuation = "##";

    SubwordVocab() { for (const char* t : special_names()) append(t); }

    static const std::vector<const char*>& special_names() {
        static const std::vector<const char*> names = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
        return names;
    }

    int append(const std::string& token) {
        auto [it, inserted] = ids_.emplace(token, static_cast<int>(tokens_.size()));
        if (!inserted)
            fail(ErrorKind::DuplicateLabel, "duplicate vocab token '" + token + "'");
        tokens_.push_back(token);
        return it->second;
    }

    int lookup(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? -1 : it->second;
    }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }
    const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
    size_t size() const { return tokens_.size(); }

    // one token per line, id = line number; specials first in fixed order
    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorKind::IoError, "cannot write vocab file " + path);
        for (const auto& t : tokens_) out << t << "\n";
    }

    static SubwordVocab load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::IoError, "cannot open vocab file " + path);
        SubwordVocab v;
        v.tokens_.clear();
        v.ids_.clear();
        std::string line;
        size_t lineno = 0;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (lineno < special_names().size() && line != special_names()[lineno])
                fail(ErrorKind::SchemaViolation,
                     path + ": line " + std::to_string(lineno + 1) + " must be " +
                         special_names()[lineno]);
            v.append(line);
            ++lineno;
        }
        if (v.tokens_.size() < special_names().size())
            fail(ErrorKind::EmptyFile, path + ": vocab file missing special tokens");
        return v;
    }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

namespace detail {

// word segmentation shared by the vocab builder and tokenizer: maximal runs
// of word characters; every other non-space codepoint is its own word
struct RawWord {
    std::string text;  // original casing
    size_t start_cp = 0;
    size_t end_cp = 0;
};

inline std::vector<RawWord> segment_words(std::string_view text) {
    Utf8Text decoded = utf8_decode(text);
    std::vector<RawWord> words;
    size_t i = 0;
    const size_t n = decoded.size();
    while (i < n) {
        uint32_t cp = decoded.codepoints[i];
        if (is_space_cp(cp)) {
            ++i;
            continue;
        }
        if (is_word_cp(cp)) {
            size_t j = i;
            while (j < n && is_word_cp(decoded.codepoints[j])) ++j;
            words.push_back({utf8_slice(text, decoded, i, j), i, j});
            i = j;
        } else {
            words.push_back({utf8_slice(text, decoded, i, i + 1), i, i + 1});
            ++i;
        }
    }
    return words;
}

// symbol sequence of a lowercased word: first codepoint bare, rest ##-prefixed
inline std::vector<std::string> word_symbols(const std::string& lower_word) {
    Utf8Text decoded = utf8_decode(lower_word);
    std::vector<std::string> syms;
    syms.reserve(decoded.size());
    for (size_t i = 0; i < decoded.size(); ++i) {
        std::string s = i == 0 ? "" : SubwordVocab::kContinuation;
        utf8_append(s, decoded.codepoints[i]);
        syms.push_back(std::move(s));
    }
    return syms;
}

inline std::string strip_continuation(const std::string& s) {
    std::string_view cont = SubwordVocab::kContinuation;
    if (s.size() > cont.size() && std::string_view(s).substr(0, cont.size()) == cont)
        return s.substr(cont.size());
    return s;
}

}  // namespace detail

// Deterministic vocabulary construction: the positional single-character
// alphabet of the corpus plus greedy pair merges by descending frequency,
// ties broken by the lexicographically smaller merged token. Stops at
// target_size or when no adjacent pair repeats.
inline SubwordVocab build_vocab(const std::vector<std::string>& corpus, size_t target_size) {
    std::map<std::string, long long> word_freq;
    for (const auto& text : corpus)
        for (const auto& w : detail::segment_words(text)) ++word_freq[ascii_lower(w.text)];
    if (word_freq.empty()) fail(ErrorKind::EmptyCorpus, "vocab corpus contains no words");

    std::vector<std::vector<std::string>> sequences;
    std::vector<long long> freqs;
    std::set<std::string> alphabet;
    for (const auto& [word, freq] : word_freq) {
        auto syms = detail::word_symbols(word);
        for (const auto& s : syms) alphabet.insert(s);
        sequences.push_back(std::move(syms));
        freqs.push_back(freq);
    }

    const size_t base = SubwordVocab::special_names().size() + alphabet.size();
    if (target_size < base)
        fail(ErrorKind::ConfigViolation,
             "target_size " + std::to_string(target_size) + " below specials + alphabet size " +
                 std::to_string(base));

    SubwordVocab vocab;
    for (const auto& s : alphabet) vocab.append(s);

    while (vocab.size() < target_size) {
        std::map<std::pair<std::string, std::string>, long long> pair_count;
        for (size_t w = 0; w < sequences.size(); ++w) {
            const auto& seq = sequences[w];
            for (size_t i = 0; i + 1 < seq.size(); ++i)
                pair_count[{seq[i], seq[i + 1]}] += freqs[w];
        }
        std::pair<std::string, std::string> best;
        std::string best_merged;
        long long best_count = 1;  // merges must repeat to be worth a vocab slot
        for (const auto& [pair, count] : pair_count) {
            std::string merged = pair.first + detail::strip_continuation(pair.second);
            if (count > best_count || (count == best_count && !best_merged.empty() && merged < best_merged)) {
                best = pair;
                best_merged = merged;
                best_count = count;
            }
        }
        if (best_merged.empty() || vocab.contains(best_merged)) break;
        vocab.append(best_merged);
        for (auto& seq : sequences) {
            std::vector<std::string> next;
            next.reserve(seq.size());
            size_t i = 0;
            while (i < seq.size()) {
                if (i + 1 < seq.size() && seq[i] == best.first && seq[i + 1] == best.second) {
                    next.push_back(best_merged);
                    i += 2;
                } else {
                    next.push_back(seq[i]);
                    ++i;
                }
            }
            seq = std::move(next);
        }
    }
    return vocab;
}

}  // namespace lingqa
