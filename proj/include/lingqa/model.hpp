#pragma once

// The span-prediction model: token/segment/position embedding sum, a stack
// of post-layer-norm transformer encoder blocks with masked multi-head
// self-attention, a linear+ReLU projection of per-token linguistic
// features, concatenation of both representations, and a final linear head
// producing start/end logits.

#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "lingqa/common.hpp"
#include "lingqa/lingfeat.hpp"
#include "lingqa/tensor.hpp"
#include "lingqa/tokenizer.hpp"

namespace lingqa {

enum class FeatureEncoding { onehot, index };

inline const char* feature_encoding_name(FeatureEncoding e) {
    return e == FeatureEncoding::onehot ? "onehot" : "index";
}

inline FeatureEncoding parse_feature_encoding(const std::string& s) {
    if (s == "onehot") return FeatureEncoding::onehot;
    if (s == "index") return FeatureEncoding::index;
    fail(ErrorKind::ConfigViolation, "feature encoding must be onehot or index, got '" + s + "'");
}

struct ModelConfig {
    size_t vocab_size = 0;
    size_t d_model = 64;
    size_t n_layers = 2;
    size_t n_heads = 4;
    size_t d_ff = 256;
    size_t max_seq_len = 384;
    FeatureEncoding feature_encoding = FeatureEncoding::onehot;
    size_t d_feat = 32;
    double dropout = 0.1;
    int precision = 64;  // 32 or 64 bit values

    // feature label-vocab sizes including UNK and PAD ids
    size_t ner_size = 25;
    size_t pos_size = 18;
    size_t dep_size = 46;

    size_t feature_input_dim() const {
        return feature_encoding == FeatureEncoding::onehot ? ner_size + pos_size + dep_size + 1 : 4;
    }

    void validate() const {
        if (vocab_size == 0) fail(ErrorKind::ConfigViolation, "vocab_size must be positive");
        if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
            fail(ErrorKind::ConfigViolation, "d_model must be a positive multiple of n_heads");
        if (d_feat == 0) fail(ErrorKind::ConfigViolation, "d_feat must be >= 1");
        if (precision != 32 && precision != 64)
            fail(ErrorKind::ConfigViolation, "precision must be 32 or 64");
        if (dropout < 0.0 || dropout >= 1.0)
            fail(ErrorKind::ConfigViolation, "dropout must be in [0,1)");
        if (max_seq_len == 0) fail(ErrorKind::ConfigViolation, "max_seq_len must be positive");
    }

    nlohmann::json to_json() const {
        return {
            {"vocab_size", vocab_size},
            {"d_model", d_model},
            {"n_layers", n_layers},
            {"n_heads", n_heads},
            {"d_ff", d_ff},
            {"max_seq_len", max_seq_len},
            {"feature_encoding", feature_encoding_name(feature_encoding)},
            {"d_feat", d_feat},
            {"dropout", dropout},
            {"precision", precision},
            {"ner_size", ner_size},
            {"pos_size", pos_size},
            {"dep_size", dep_size},
        };
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig cfg;
        cfg.vocab_size = j.at("vocab_size").get<size_t>();
        cfg.d_model = j.at("d_model").get<size_t>();
        cfg.n_layers = j.at("n_layers").get<size_t>();
        cfg.n_heads = j.at("n_heads").get<size_t>();
        cfg.d_ff = j.at("d_ff").get<size_t>();
        cfg.max_seq_len = j.at("max_seq_len").get<size_t>();
        cfg.feature_encoding = parse_feature_encoding(j.at("feature_encoding").get<std::string>());
        cfg.d_feat = j.at("d_feat").get<size_t>();
        cfg.dropout = j.at("dropout").get<double>();
        cfg.precision = j.at("precision").get<int>();
        cfg.ner_size = j.at("ner_size").get<size_t>();
        cfg.pos_size = j.at("pos_size").get<size_t>();
        cfg.dep_size = j.at("dep_size").get<size_t>();
        return cfg;
    }

    bool operator==(const ModelConfig& other) const { return to_json() == other.to_json(); }
};

template <typename T>
struct SpanLogits {
    Tensor<T> start;  // (L,)
    Tensor<T> end;    // (L,)
};

template <typename T>
class QaModel {
public:
    ModelConfig cfg;
    // named parameters in lexicographic order; iteration order drives the
    // optimizer and checkpoint layout, so it must be deterministic
    std::map<std::string, Tensor<T>> params;

    static QaModel init(const ModelConfig& cfg, uint64_t seed) {
        cfg.validate();
        QaModel m;
        m.cfg = cfg;
        auto weight = [&](const std::string& name, size_t rows, size_t cols) {
            m.params.emplace(name, truncated_normal(name, {rows, cols}, seed));
        };
        auto bias = [&](const std::string& name, size_t n) {
            m.params.emplace(name, Tensor<T>::zeros({n}, true));
        };
        auto norm = [&](const std::string& name, size_t n) {
            m.params.emplace(name + ".gamma", Tensor<T>::from({n}, std::vector<T>(n, T(1)), true));
            bias(name + ".beta", n);
        };

        weight("embed.token", cfg.vocab_size, cfg.d_model);
        weight("embed.segment", 2, cfg.d_model);
        weight("embed.position", cfg.max_seq_len, cfg.d_model);
        norm("embed.ln", cfg.d_model);
        for (size_t l = 0; l < cfg.n_layers; ++l) {
            const std::string p = "enc" + std::to_string(l) + ".";
            for (const char* w : {"wq", "wk", "wv", "wo"}) weight(p + "attn." + w, cfg.d_model, cfg.d_model);
            for (const char* b : {"bq", "bk", "bv", "bo"}) bias(p + "attn." + b, cfg.d_model);
            norm(p + "ln1", cfg.d_model);
            weight(p + "ffn.w1", cfg.d_model, cfg.d_ff);
            bias(p + "ffn.b1", cfg.d_ff);
            weight(p + "ffn.w2", cfg.d_ff, cfg.d_model);
            bias(p + "ffn.b2", cfg.d_model);
            norm(p + "ln2", cfg.d_model);
        }
        weight("feat.w", cfg.feature_input_dim(), cfg.d_feat);
        bias("feat.b", cfg.d_feat);
        weight("head.w", cfg.d_model + cfg.d_feat, 2);
        bias("head.b", 2);
        return m;
    }

    Tensor<T>& param(const std::string& name) {
        auto it = params.find(name);
        if (it == params.end()) fail(ErrorKind::ConfigViolation, "unknown parameter " + name);
        return it->second;
    }
    const Tensor<T>& param(const std::string& name) const {
        auto it = params.find(name);
        if (it == params.end()) fail(ErrorKind::ConfigViolation, "unknown parameter " + name);
        return it->second;
    }

    // token + segment + position embeddings, layer norm, dropout
    Tensor<T> embed(const PackedInput& packed, bool train, uint64_t dropout_key) const {
        if (packed.length() != cfg.max_seq_len)
            fail(ErrorKind::ShapeMismatch, "packed length " + std::to_string(packed.length()) +
                                               " vs model max_seq_len " +
                                               std::to_string(cfg.max_seq_len));
        std::vector<int32_t> segment_ids(packed.segment_ids.begin(), packed.segment_ids.end());
        std::vector<int32_t> positions(cfg.max_seq_len);
        std::iota(positions.begin(), positions.end(), 0);
        Tensor<T> x = add(add(embedding_lookup(param("embed.token"), packed.input_ids),
                              embedding_lookup(param("embed.segment"), segment_ids)),
                          embedding_lookup(param("embed.position"), positions));
        x = layer_norm_affine(x, "embed.ln");
        return dropout(x, cfg.dropout, train, CounterRng(dropout_key, "drop/embed"));
    }

    // n_layers post-norm blocks; attention logits at mask=0 key positions
    // receive -1e9 before softmax
    Tensor<T> encode(Tensor<T> h, const std::vector<uint8_t>& mask, bool train,
                     uint64_t dropout_key) const {
        std::vector<T> bias_values(mask.size());
        for (size_t i = 0; i < mask.size(); ++i) bias_values[i] = mask[i] ? T(0) : T(-1e9);
        Tensor<T> attn_bias = Tensor<T>::from({mask.size()}, bias_values);

        const size_t d_head = cfg.d_model / cfg.n_heads;
        const T inv_sqrt_dh = T(1) / std::sqrt(static_cast<T>(d_head));
        for (size_t l = 0; l < cfg.n_layers; ++l) {
            const std::string p = "enc" + std::to_string(l) + ".";
            Tensor<T> q = add(matmul(h, param(p + "attn.wq")), param(p + "attn.bq"));
            Tensor<T> k = add(matmul(h, param(p + "attn.wk")), param(p + "attn.bk"));
            Tensor<T> v = add(matmul(h, param(p + "attn.wv")), param(p + "attn.bv"));
            Tensor<T> heads;
            for (size_t hd = 0; hd < cfg.n_heads; ++hd) {
                Tensor<T> qh = slice_cols(q, hd * d_head, d_head);
                Tensor<T> kh = slice_cols(k, hd * d_head, d_head);
                Tensor<T> vh = slice_cols(v, hd * d_head, d_head);
                Tensor<T> scores = add(scale(matmul(qh, transpose2d(kh)), inv_sqrt_dh), attn_bias);
                Tensor<T> out_h = matmul(softmax(scores), vh);
                heads = hd == 0 ? out_h : concat(heads, out_h);
            }
            Tensor<T> attn = add(matmul(heads, param(p + "attn.wo")), param(p + "attn.bo"));
            attn = dropout(attn, cfg.dropout, train,
                           CounterRng(dropout_key, "drop/attn" + std::to_string(l)));
            h = layer_norm_affine(add(h, attn), p + "ln1");

            Tensor<T> ffn = add(matmul(gelu(add(matmul(h, param(p + "ffn.w1")), param(p + "ffn.b1"))),
                                       param(p + "ffn.w2")),
                                param(p + "ffn.b2"));
            ffn = dropout(ffn, cfg.dropout, train,
                          CounterRng(dropout_key, "drop/ffn" + std::to_string(l)));
            h = layer_norm_affine(add(h, ffn), p + "ln2");
        }
        return h;
    }

    // encode feature ids per the configured scheme, project, ReLU
    Tensor<T> feature_forward(const FeatureMatrix& fm) const {
        if (fm.max_seq_len != cfg.max_seq_len)
            fail(ErrorKind::ShapeMismatch, "feature matrix length " + std::to_string(fm.max_seq_len) +
                                               " vs model max_seq_len " +
                                               std::to_string(cfg.max_seq_len));
        const size_t L = cfg.max_seq_len;
        const size_t D = cfg.feature_input_dim();
        std::vector<T> encoded(L * D, T(0));
        const size_t sizes[3] = {cfg.ner_size, cfg.pos_size, cfg.dep_size};
        for (size_t p = 0; p < L; ++p) {
            for (size_t col = 0; col < 3; ++col) {
                const int32_t id = fm.at(p, col);
                if (id < 0 || static_cast<size_t>(id) >= sizes[col])
                    fail(ErrorKind::LabelOutOfRange,
                         "feature id " + std::to_string(id) + " outside vocab of " +
                             std::to_string(sizes[col]) + " at position " + std::to_string(p));
            }
            const int32_t stop = fm.at(p, 3);
            if (stop != 0 && stop != 1)
                fail(ErrorKind::LabelOutOfRange, "stop flag must be 0/1");
            if (cfg.feature_encoding == FeatureEncoding::onehot) {
                size_t base = p * D;
                encoded[base + static_cast<size_t>(fm.at(p, 0))] = T(1);
                encoded[base + cfg.ner_size + static_cast<size_t>(fm.at(p, 1))] = T(1);
                encoded[base + cfg.ner_size + cfg.pos_size + static_cast<size_t>(fm.at(p, 2))] = T(1);
                encoded[base + D - 1] = static_cast<T>(stop);
            } else {
                size_t base = p * D;
                for (size_t col = 0; col < 3; ++col)
                    encoded[base + col] = static_cast<T>(fm.at(p, col)) / static_cast<T>(sizes[col] - 1);
                encoded[base + 3] = static_cast<T>(stop);
            }
        }
        Tensor<T> x = Tensor<T>::from({L, D}, std::move(encoded));
        return relu(add(matmul(x, param("feat.w")), param("feat.b")));
    }

    // concat(H, F) through the final linear head; padding positions are set
    // to -1e9 in both logit vectors
    SpanLogits<T> span_logits(const Tensor<T>& h, const Tensor<T>& f,
                              const std::vector<uint8_t>& mask) const {
        if (h.shape()[0] != f.shape()[0])
            fail(ErrorKind::ShapeMismatch, "span_logits: H rows " + format_shape(h.shape()) +
                                               " vs F rows " + format_shape(f.shape()));
        Tensor<T> logits = add(matmul(concat(h, f), param("head.w")), param("head.b"));
        const size_t L = logits.shape()[0];
        SpanLogits<T> out;
        out.start = masked_fill(reshape(slice_cols(logits, 0, 1), {L}), mask, T(-1e9));
        out.end = masked_fill(reshape(slice_cols(logits, 1, 1), {L}), mask, T(-1e9));
        return out;
    }

    SpanLogits<T> forward(const PackedInput& packed, const FeatureMatrix& features, bool train,
                          uint64_t dropout_key) const {
        Tensor<T> emb = embed(packed, train, dropout_key);
        Tensor<T> h = encode(emb, packed.mask, train, dropout_key);
        Tensor<T> f = feature_forward(features);
        return span_logits(h, f, packed.mask);
    }

    // mean of start/end cross-entropies for one example
    Tensor<T> loss(const SpanLogits<T>& logits, const GoldSpan& gold,
                   const std::vector<uint8_t>& mask) const {
        if (gold.start_pos >= mask.size() || gold.end_pos >= mask.size() ||
            !mask[gold.start_pos] || !mask[gold.end_pos])
            fail(ErrorKind::DeadTarget, "gold position (" + std::to_string(gold.start_pos) + "," +
                                            std::to_string(gold.end_pos) + ") has mask 0");
        const size_t L = logits.start.numel();
        Tensor<T> ce_start = cross_entropy(reshape(logits.start, {1, L}),
                                           {static_cast<int32_t>(gold.start_pos)});
        Tensor<T> ce_end =
            cross_entropy(reshape(logits.end, {1, L}), {static_cast<int32_t>(gold.end_pos)});
        return scale(add(ce_start, ce_end), T(0.5));
    }

    // ------------------------------------------------------------------
    // checkpointing: versioned binary, bitwise round-trip
    // ------------------------------------------------------------------

    static constexpr const char* kCheckpointMagic = "LQCKPT01";

    void save_checkpoint(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) fail(ErrorKind::IoError, "cannot write checkpoint " + path);
        out.write(kCheckpointMagic, 8);
        const std::string cfg_json = cfg.to_json().dump();
        write_u64(out, cfg_json.size());
        out.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
        write_u64(out, params.size());
        for (const auto& [name, tensor] : params) {
            write_u64(out, name.size());
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u64(out, tensor.shape().size());
            for (size_t d : tensor.shape()) write_u64(out, d);
            out.write(reinterpret_cast<const char*>(tensor.values().data()),
                      static_cast<std::streamsize>(tensor.values().size() * sizeof(T)));
        }
        if (!out) fail(ErrorKind::IoError, "short write on checkpoint " + path);
    }

    static QaModel load_checkpoint(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) fail(ErrorKind::IoError, "cannot open checkpoint " + path);
        char magic[8];
        in.read(magic, 8);
        if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
            fail(ErrorKind::CheckpointMismatch, path + " is not a checkpoint file");
        std::string cfg_json(read_u64(in, path), '\0');
        in.read(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
        ModelConfig cfg;
        try {
            cfg = ModelConfig::from_json(nlohmann::json::parse(cfg_json));
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::CheckpointMismatch, path + ": bad config block: " + e.what());
        }
        if (cfg.precision != static_cast<int>(sizeof(T) * 8))
            fail(ErrorKind::CheckpointMismatch,
                 path + " stores " + std::to_string(cfg.precision) + "-bit values, expected " +
                     std::to_string(sizeof(T) * 8));
        QaModel m;
        m.cfg = cfg;
        const uint64_t n_params = read_u64(in, path);
        for (uint64_t i = 0; i < n_params; ++i) {
            std::string name(read_u64(in, path), '\0');
            in.read(name.data(), static_cast<std::streamsize>(name.size()));
            Shape shape(read_u64(in, path));
            for (auto& d : shape) d = read_u64(in, path);
            std::vector<T> values(shape_numel(shape));
            in.read(reinterpret_cast<char*>(values.data()),
                    static_cast<std::streamsize>(values.size() * sizeof(T)));
            if (!in) fail(ErrorKind::CheckpointMismatch, path + ": truncated parameter " + name);
            m.params.emplace(name, Tensor<T>::from(std::move(shape), std::move(values), true));
        }
        return m;
    }

    void zero_grads() {
        for (auto& [name, p] : params) p.zero_grad();
    }

private:
    Tensor<T> layer_norm_affine(const Tensor<T>& x, const std::string& prefix) const {
        return add(mul(layer_norm(x, T(1e-12)), param(prefix + ".gamma")), param(prefix + ".beta"));
    }

    static Tensor<T> truncated_normal(const std::string& name, Shape shape, uint64_t seed) {
        CounterRng rng(seed, "init/" + name);
        std::vector<T> values(shape_numel(shape));
        for (auto& v : values) {
            double z = rng.next_normal();
            while (std::abs(z) > 2.0) z = rng.next_normal();
            v = static_cast<T>(0.02 * z);
        }
        return Tensor<T>::from(std::move(shape), std::move(values), true);
    }

    static void write_u64(std::ostream& out, uint64_t v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    static uint64_t read_u64(std::istream& in, const std::string& path) {
        uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) fail(ErrorKind::CheckpointMismatch, path + ": truncated checkpoint");
        return v;
    }
};

}  // namespace lingqa
