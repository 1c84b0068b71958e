#pragma once

// Per-token linguistic features (NER, POS, DEP, STOP): label vocabularies,
// sidecar-file ingestion, a rule-based fallback tagger, and alignment of
// word-level features onto packed subword positions.

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "lingqa/common.hpp"
#include "lingqa/tokenizer.hpp"

namespace lingqa {

enum class LabelKind { ner, pos, dep };

inline const char* label_kind_name(LabelKind k) {
    switch (k) {
        case LabelKind::ner: return "ner";
        case LabelKind::pos: return "pos";
        case LabelKind::dep: return "dep";
    }
    return "?";
}

class LabelVocab {
public:
    LabelVocab() = default;
    LabelVocab(LabelKind kind, std::vector<std::string> labels) : kind_(kind) {
        for (auto& l : labels) add(std::move(l));
    }

    // one label per line; UNK and PAD ids follow the listed labels
    static LabelVocab load(const std::string& path, LabelKind kind) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::IoError, "cannot open label file " + path);
        LabelVocab v;
        v.kind_ = kind;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            v.add(line);
        }
        if (v.labels_.empty()) fail(ErrorKind::EmptyFile, "label file " + path + " has no labels");
        return v;
    }

    LabelKind kind() const { return kind_; }
    int unk_id() const { return static_cast<int>(labels_.size()); }
    int pad_id() const { return static_cast<int>(labels_.size()) + 1; }
    // total id count including UNK and PAD
    int size() const { return static_cast<int>(labels_.size()) + 2; }
    size_t label_count() const { return labels_.size(); }

    int id_of(const std::string& label) const {
        auto it = ids_.find(label);
        return it == ids_.end() ? unk_id() : it->second;
    }

    std::string name_of(int id) const {
        if (id >= 0 && static_cast<size_t>(id) < labels_.size())
            return labels_[static_cast<size_t>(id)];
        return id == unk_id() ? "UNK" : "PAD";
    }

private:
    void add(std::string label) {
        auto [it, inserted] = ids_.emplace(label, static_cast<int>(labels_.size()));
        if (!inserted)
            fail(ErrorKind::DuplicateLabel,
                 std::string("duplicate ") + label_kind_name(kind_) + " label '" + label + "'");
        labels_.push_back(std::move(label));
    }

    LabelKind kind_ = LabelKind::ner;
    std::vector<std::string> labels_;
    std::unordered_map<std::string, int> ids_;
};

struct WordFeatures {
    int ner = 0;
    int pos = 0;
    int dep = 0;
    uint8_t stop = 0;
};

// word-level feature records with the codepoint spans they describe
struct WordFeatureList {
    std::vector<Word> words;
    std::vector<WordFeatures> feats;
};

struct FeatureVocabs {
    LabelVocab ner;
    LabelVocab pos;
    LabelVocab dep;
    std::unordered_set<std::string> stopwords;

    static FeatureVocabs load(const std::string& assets_dir) {
        FeatureVocabs v;
        v.ner = LabelVocab::load(assets_dir + "/ner_labels.txt", LabelKind::ner);
        v.pos = LabelVocab::load(assets_dir + "/pos_labels.txt", LabelKind::pos);
        v.dep = LabelVocab::load(assets_dir + "/dep_labels.txt", LabelKind::dep);
        std::ifstream in(assets_dir + "/stopwords.txt", std::ios::binary);
        if (!in) fail(ErrorKind::IoError, "cannot open stopword file in " + assets_dir);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) v.stopwords.insert(line);
        }
        return v;
    }
};

// ---------------------------------------------------------------------------
// Feature matrix aligned to packed positions: one (ner, pos, dep, stop) row
// per position, PAD ids on specials and padding.
// ---------------------------------------------------------------------------

struct FeatureMatrix {
    size_t max_seq_len = 0;
    std::vector<int32_t> data;  // row-major (max_seq_len, 4)

    int32_t& at(size_t position, size_t column) { return data[position * 4 + column]; }
    int32_t at(size_t position, size_t column) const { return data[position * 4 + column]; }
};

// ---------------------------------------------------------------------------
// Sidecar files: JSON-Lines, one record per paragraph/question, each word
// carrying text, start offset, and the four feature labels.
// ---------------------------------------------------------------------------

struct SidecarData {
    std::map<std::string, WordFeatureList> contexts;   // keyed "title#paragraph_index"
    std::map<std::string, WordFeatureList> questions;  // keyed by qid
};

inline SidecarData read_sidecar(const std::string& path, const FeatureVocabs& vocabs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open sidecar file " + path);
    SidecarData out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::MalformedLine, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("kind") || !rec.contains("id") || !rec.contains("words"))
            fail(ErrorKind::MalformedLine,
                 path + ":" + std::to_string(lineno) + ": record needs kind/id/words");
        std::string kind = rec["kind"].get<std::string>();
        if (kind != "context" && kind != "question")
            fail(ErrorKind::UnknownKind,
                 path + ":" + std::to_string(lineno) + ": unknown kind '" + kind + "'");
        WordFeatureList list;
        for (const auto& w : rec["words"]) {
            if (!w.contains("t") || !w.contains("s"))
                fail(ErrorKind::MalformedLine,
                     path + ":" + std::to_string(lineno) + ": word needs t/s fields");
            Word word;
            word.text = w["t"].get<std::string>();
            word.start_cp = w["s"].get<size_t>();
            word.end_cp = word.start_cp + utf8_length(word.text);
            WordFeatures f;
            f.ner = vocabs.ner.id_of(w.value("ner", std::string("O")));
            f.pos = vocabs.pos.id_of(w.value("pos", std::string()));
            f.dep = vocabs.dep.id_of(w.value("dep", std::string()));
            f.stop = w.value("stop", 0) ? 1 : 0;
            list.words.push_back(std::move(word));
            list.feats.push_back(f);
        }
        auto& target = kind == "context" ? out.contexts : out.questions;
        target[rec["id"].get<std::string>()] = std::move(list);
    }
    return out;
}

// inverse of read_sidecar's label resolution, used by the fallback tagger export
inline void append_sidecar_record(std::ostream& out, const std::string& kind, const std::string& id,
                                  const WordFeatureList& list, const FeatureVocabs& vocabs) {
    nlohmann::json words = nlohmann::json::array();
    for (size_t i = 0; i < list.words.size(); ++i) {
        nlohmann::json w;
        w["t"] = list.words[i].text;
        w["s"] = list.words[i].start_cp;
        w["ner"] = vocabs.ner.name_of(list.feats[i].ner);
        w["pos"] = vocabs.pos.name_of(list.feats[i].pos);
        w["dep"] = vocabs.dep.name_of(list.feats[i].dep);
        w["stop"] = static_cast<int>(list.feats[i].stop);
        words.push_back(std::move(w));
    }
    nlohmann::json rec;
    rec["kind"] = kind;
    rec["id"] = id;
    rec["words"] = std::move(words);
    out << rec.dump() << "\n";
}

// ---------------------------------------------------------------------------
// Rule-based fallback tagger, used when no sidecar file is available.
// ---------------------------------------------------------------------------

class FallbackTagger {
public:
    explicit FallbackTagger(const FeatureVocabs& vocabs) : vocabs_(&vocabs) {
        build_closed_class_table();
    }

    WordFeatureList tag(const std::vector<Word>& words) const {
        WordFeatureList out;
        out.words = words;
        out.feats.resize(words.size());

        std::vector<bool> capitalized(words.size());
        std::vector<bool> sentence_initial(words.size());
        for (size_t i = 0; i < words.size(); ++i) {
            capitalized[i] = is_capitalized(words[i].text);
            sentence_initial[i] =
                i == 0 || words[i - 1].text == "." || words[i - 1].text == "!" || words[i - 1].text == "?";
        }

        for (size_t i = 0; i < words.size(); ++i) {
            const std::string& text = words[i].text;
            std::string lower = ascii_lower(text);
            WordFeatures& f = out.feats[i];

            f.stop = vocabs_->stopwords.count(lower) ? 1 : 0;
            f.pos = tag_pos(text, lower, capitalized[i], sentence_initial[i]);
            f.ner = tag_ner(text, capitalized[i]);
            f.dep = is_punct_word(text) ? vocabs_->dep.id_of("punct") : vocabs_->dep.unk_id();
        }
        return out;
    }

private:
    static bool is_punct_word(const std::string& text) {
        Utf8Text t = utf8_decode(text);
        return t.size() == 1 && is_punct_cp(t.codepoints[0]);
    }

    static bool is_all_digits(const std::string& text) {
        if (text.empty()) return false;
        for (char c : text)
            if (!is_ascii_digit(static_cast<uint8_t>(c))) return false;
        return true;
    }

    static bool is_capitalized(const std::string& text) {
        Utf8Text t = utf8_decode(text);
        if (t.codepoints.empty()) return false;
        uint32_t cp = t.codepoints[0];
        return cp >= 'A' && cp <= 'Z';
    }

    static bool ends_with(const std::string& s, std::string_view suffix) {
        return s.size() >= suffix.size() && std::string_view(s).substr(s.size() - suffix.size()) == suffix;
    }

    int tag_pos(const std::string& text, const std::string& lower, bool capitalized,
                bool sentence_initial) const {
        if (is_all_digits(text)) return vocabs_->pos.id_of("NUM");
        if (is_punct_word(text)) return vocabs_->pos.id_of("PUNCT");
        auto it = closed_class_.find(lower);
        if (it != closed_class_.end()) return vocabs_->pos.id_of(it->second);
        if (ends_with(lower, "ly")) return vocabs_->pos.id_of("ADV");
        if (ends_with(lower, "ing") || ends_with(lower, "ed")) return vocabs_->pos.id_of("VERB");
        if (capitalized && !sentence_initial) return vocabs_->pos.id_of("PROPN");
        return vocabs_->pos.id_of("NOUN");
    }

    int tag_ner(const std::string& text, bool capitalized) const {
        if (is_all_digits(text) && text.size() == 4) {
            int year = std::stoi(text);
            if (year >= 1000 && year <= 2100) return vocabs_->ner.id_of("DATE");
        }
        if (capitalized) return vocabs_->ner.id_of("ENT");
        return vocabs_->ner.id_of("O");
    }

    void build_closed_class_table() {
        static const std::pair<const char*, const char*> entries[] = {
            {"the", "DET"}, {"a", "DET"}, {"an", "DET"}, {"this", "DET"}, {"that", "DET"},
            {"these", "DET"}, {"those", "DET"}, {"each", "DET"}, {"every", "DET"}, {"some", "DET"},
            {"any", "DET"}, {"no", "DET"},
            {"i", "PRON"}, {"you", "PRON"}, {"he", "PRON"}, {"she", "PRON"}, {"it", "PRON"},
            {"we", "PRON"}, {"they", "PRON"}, {"me", "PRON"}, {"him", "PRON"}, {"her", "PRON"},
            {"us", "PRON"}, {"them", "PRON"}, {"who", "PRON"}, {"whom", "PRON"}, {"which", "PRON"},
            {"what", "PRON"}, {"its", "PRON"}, {"his", "PRON"}, {"their", "PRON"},
            {"in", "ADP"}, {"on", "ADP"}, {"at", "ADP"}, {"of", "ADP"}, {"for", "ADP"},
            {"with", "ADP"}, {"by", "ADP"}, {"from", "ADP"}, {"to", "ADP"}, {"into", "ADP"},
            {"over", "ADP"}, {"under", "ADP"}, {"between", "ADP"}, {"through", "ADP"},
            {"during", "ADP"}, {"about", "ADP"}, {"against", "ADP"},
            {"and", "CCONJ"}, {"or", "CCONJ"}, {"but", "CCONJ"}, {"nor", "CCONJ"}, {"yet", "CCONJ"},
            {"if", "SCONJ"}, {"because", "SCONJ"}, {"while", "SCONJ"}, {"although", "SCONJ"},
            {"though", "SCONJ"}, {"since", "SCONJ"}, {"unless", "SCONJ"}, {"when", "SCONJ"},
            {"is", "AUX"}, {"am", "AUX"}, {"are", "AUX"}, {"was", "AUX"}, {"were", "AUX"},
            {"be", "AUX"}, {"been", "AUX"}, {"being", "AUX"}, {"do", "AUX"}, {"does", "AUX"},
            {"did", "AUX"}, {"have", "AUX"}, {"has", "AUX"}, {"had", "AUX"}, {"will", "AUX"},
            {"would", "AUX"}, {"can", "AUX"}, {"could", "AUX"}, {"shall", "AUX"},
            {"should", "AUX"}, {"may", "AUX"}, {"might", "AUX"}, {"must", "AUX"},
            {"not", "PART"},
        };
        for (const auto& [word, tag] : entries) closed_class_.emplace(word, tag);
    }

    const FeatureVocabs* vocabs_;
    std::unordered_map<std::string, std::string> closed_class_;
};

// ---------------------------------------------------------------------------
// Alignment: every live subword position inherits the feature 4-tuple of the
// feature word containing its word's start offset. Specials and padding get
// PAD ids with stop = 0.
// ---------------------------------------------------------------------------

namespace detail {

inline const WordFeatures* find_word_features(const WordFeatureList& list, size_t word_start_cp) {
    // feature words are ordered by start offset; take the last one starting
    // at or before the query and check containment
    const WordFeatures* found = nullptr;
    for (size_t i = 0; i < list.words.size(); ++i) {
        if (list.words[i].start_cp <= word_start_cp && word_start_cp < list.words[i].end_cp)
            found = &list.feats[i];
        if (list.words[i].start_cp > word_start_cp) break;
    }
    return found;
}

}  // namespace detail

inline FeatureMatrix align(const PackedInput& packed, const TokenizedText& context_tt,
                           const WordFeatureList& context_feats, const TokenizedText& question_tt,
                           const WordFeatureList& question_feats, const FeatureVocabs& vocabs,
                           const std::string& qid) {
    FeatureMatrix fm;
    fm.max_seq_len = packed.length();
    fm.data.assign(fm.max_seq_len * 4, 0);

    const WordFeatures pad_row{vocabs.ner.pad_id(), vocabs.pos.pad_id(), vocabs.dep.pad_id(), 0};
    for (size_t p = 0; p < packed.length(); ++p) {
        const PackedOrigin& origin = packed.origin[p];
        WordFeatures row = pad_row;
        if (packed.mask[p] && origin.side != PackedSide::special) {
            const bool is_ctx = origin.side == PackedSide::context;
            const TokenizedText& tt = is_ctx ? context_tt : question_tt;
            const WordFeatureList& feats = is_ctx ? context_feats : question_feats;
            const Subword& sub = tt.subwords[static_cast<size_t>(origin.subword)];
            const Word& word = tt.words[sub.word_index];
            const WordFeatures* f = detail::find_word_features(feats, word.start_cp);
            if (f == nullptr)
                fail(ErrorKind::CoverageGap, "no feature record covers word '" + word.text +
                                                 "' (qid " + qid + ")");
            row = *f;
        }
        fm.at(p, 0) = row.ner;
        fm.at(p, 1) = row.pos;
        fm.at(p, 2) = row.dep;
        fm.at(p, 3) = row.stop;
    }
    return fm;
}

}  // namespace lingqa
