#pragma once

// Training loop (Adam, linear warmup then linear decay, gradient
// accumulation, global-norm clipping, per-epoch checkpoints) and n-best
// span decoding with no-answer thresholding.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "lingqa/model.hpp"
#include "lingqa/pipeline.hpp"

namespace lingqa {

struct TrainConfig {
    double learning_rate = 3e-5;
    size_t epochs = 4;
    size_t batch_size = 16;
    size_t grad_accum_steps = 1;
    double warmup_fraction = 0.1;
    size_t max_answer_len = 30;
    uint64_t seed = 42;
    double clip_norm = 1.0;
    std::string checkpoint_dir;  // empty: keep checkpoints in memory only

    void validate() const {
        if (learning_rate <= 0 || epochs == 0 || batch_size == 0 || grad_accum_steps == 0 ||
            max_answer_len == 0 || clip_norm <= 0)
            fail(ErrorKind::ConfigViolation, "train config fields must be positive");
        if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
            fail(ErrorKind::ConfigViolation, "warmup_fraction must be in [0,1)");
    }
};

struct TrainResult {
    std::vector<std::pair<size_t, double>> loss_trace;  // (step, mean loss)
    std::string final_checkpoint;                       // empty if no checkpoint_dir
    size_t steps_run = 0;
};

struct TrainHooks {
    // called after every optimizer step; return false to stop early
    std::function<bool(size_t step, double loss)> on_step;
};

namespace train_detail {

// linear warmup (1-based step) then linear decay to zero at total_steps
inline double lr_multiplier(size_t step, size_t total_steps, double warmup_fraction) {
    const size_t warmup = static_cast<size_t>(static_cast<double>(total_steps) * warmup_fraction);
    if (warmup > 0 && step <= warmup)
        return static_cast<double>(step) / static_cast<double>(warmup);
    if (total_steps <= warmup) return 1.0;
    return static_cast<double>(total_steps - step + 1) / static_cast<double>(total_steps - warmup);
}

}  // namespace train_detail

template <typename T>
class AdamOptimizer {
public:
    AdamOptimizer(QaModel<T>& model, const TrainConfig& cfg, size_t total_steps)
        : model_(&model), cfg_(cfg), total_steps_(total_steps) {
        for (const auto& [name, p] : model.params) {
            m_[name].assign(p.numel(), T(0));
            v_[name].assign(p.numel(), T(0));
        }
    }

    size_t step_count() const { return t_; }

    void step() {
        ++t_;
        double sq_norm = 0.0;
        for (const auto& [name, p] : model_->params) {
            if (!p.has_grad()) continue;
            for (T g : p.grad()) sq_norm += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(sq_norm);
        const double clip_scale = norm > cfg_.clip_norm ? cfg_.clip_norm / norm : 1.0;

        const double lr =
            cfg_.learning_rate * train_detail::lr_multiplier(t_, total_steps_, cfg_.warmup_fraction);
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));

        for (auto& [name, p] : model_->params) {
            auto& m = m_[name];
            auto& v = v_[name];
            const std::vector<T>* grad = p.has_grad() ? &p.grad() : nullptr;
            auto& values = p.values();
            for (size_t i = 0; i < values.size(); ++i) {
                const double g = grad ? static_cast<double>((*grad)[i]) * clip_scale : 0.0;
                const double mi = kBeta1 * static_cast<double>(m[i]) + (1.0 - kBeta1) * g;
                const double vi = kBeta2 * static_cast<double>(v[i]) + (1.0 - kBeta2) * g * g;
                m[i] = static_cast<T>(mi);
                v[i] = static_cast<T>(vi);
                const double m_hat = mi / bc1;
                const double v_hat = vi / bc2;
                values[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + kEps));
            }
        }
    }

private:
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    QaModel<T>* model_;
    TrainConfig cfg_;
    size_t total_steps_;
    size_t t_ = 0;
    std::map<std::string, std::vector<T>> m_, v_;
};

// Fisher-Yates with the library RNG so permutations are identical across
// platforms for a fixed seed.
inline std::vector<size_t> shuffled_indices(size_t n, uint64_t seed, size_t epoch) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    CounterRng rng(seed, "shuffle/" + std::to_string(epoch));
    for (size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.next_below(i)]);
    return order;
}

// One optimizer step consumes grad_accum_steps micro-batches of batch_size
// examples; every example contributes with weight 1/(batch*accum) so a
// (16,1) run and an (8,2) run see identical gradient sums.
template <typename T>
TrainResult train(QaModel<T>& model, const TrainConfig& cfg,
                  const std::vector<PreparedExample>& data, const TrainHooks& hooks = {}) {
    cfg.validate();
    if (data.empty()) fail(ErrorKind::EmptyDataset, "training set is empty");

    const size_t group = cfg.batch_size * cfg.grad_accum_steps;
    const size_t steps_per_epoch = (data.size() + group - 1) / group;
    const size_t total_steps = cfg.epochs * steps_per_epoch;
    const T example_weight = static_cast<T>(1.0 / static_cast<double>(group));

    AdamOptimizer<T> optimizer(model, cfg, total_steps);
    TrainResult result;
    if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);

    bool stopped = false;
    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs && !stopped; ++epoch) {
        const std::vector<size_t> order = shuffled_indices(data.size(), cfg.seed, epoch);
        for (size_t begin = 0; begin < order.size() && !stopped; begin += group) {
            const size_t end = std::min(begin + group, order.size());
            model.zero_grads();
            double step_loss = 0.0;
            for (size_t i = begin; i < end; ++i) {
                const PreparedExample& ex = data[order[i]];
                const uint64_t dropout_key =
                    mix_key(cfg.seed, "dropout/" + std::to_string(epoch) + "/" + std::to_string(i));
                SpanLogits<T> logits = model.forward(ex.packed, ex.features, true, dropout_key);
                Tensor<T> loss = model.loss(logits, ex.gold, ex.packed.mask);
                const double loss_value = static_cast<double>(loss.item());
                if (!std::isfinite(loss_value))
                    fail(ErrorKind::NonFiniteLoss, "non-finite loss at step " +
                                                       std::to_string(step + 1) + " (qid " + ex.qid +
                                                       ")");
                scale(loss, example_weight).backward();
                step_loss += loss_value * static_cast<double>(example_weight);
            }
            optimizer.step();
            ++step;
            result.loss_trace.emplace_back(step, step_loss);
            if (hooks.on_step && !hooks.on_step(step, step_loss)) stopped = true;
        }
        if (!cfg.checkpoint_dir.empty()) {
            const std::string path =
                cfg.checkpoint_dir + "/checkpoint_epoch" + std::to_string(epoch + 1) + ".bin";
            model.save_checkpoint(path);
        }
    }
    if (!cfg.checkpoint_dir.empty()) {
        result.final_checkpoint = cfg.checkpoint_dir + "/checkpoint.bin";
        model.save_checkpoint(result.final_checkpoint);
    }
    result.steps_run = step;
    return result;
}

inline void write_loss_trace(const std::string& path,
                             const std::vector<std::pair<size_t, double>>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write loss trace " + path);
    out << "step,loss\n";
    out.precision(17);
    for (const auto& [step, loss] : trace) out << step << "," << loss << "\n";
}

// ---------------------------------------------------------------------------
// decoding
// ---------------------------------------------------------------------------

struct SpanPrediction {
    std::string qid;
    std::string text;  // empty string asserts no-answer
    int64_t start_char = -1;
    int64_t end_char = -1;
    double score = 0.0;
    double null_score = 0.0;
    std::vector<std::pair<std::string, double>> n_best;  // sorted by score desc
};

namespace decode_detail {

struct Candidate {
    double score;
    size_t start;
    size_t end;
};

}  // namespace decode_detail

// Candidates are live (s,e) pairs inside the context segment with
// s <= e and e-s+1 <= max_answer_len, scored start[s]+end[e]. The answer is
// empty when the [CLS] score beats the best candidate by more than the
// threshold, or when no candidate exists.
template <typename T>
SpanPrediction decode(const std::vector<T>& start_logits, const std::vector<T>& end_logits,
                      const PreparedExample& ex, size_t max_answer_len, double null_threshold,
                      size_t n_best_size = 20) {
    SpanPrediction pred;
    pred.qid = ex.qid;

    std::vector<size_t> ctx_positions;
    for (size_t p = 0; p < ex.packed.length(); ++p)
        if (ex.packed.origin[p].side == PackedSide::context) ctx_positions.push_back(p);

    const size_t cls = ex.packed.cls_position;
    pred.null_score =
        static_cast<double>(start_logits[cls]) + static_cast<double>(end_logits[cls]);

    std::vector<decode_detail::Candidate> candidates;
    for (size_t i = 0; i < ctx_positions.size(); ++i) {
        for (size_t j = i; j < ctx_positions.size() && j - i + 1 <= max_answer_len; ++j) {
            const size_t s = ctx_positions[i];
            const size_t e = ctx_positions[j];
            candidates.push_back({static_cast<double>(start_logits[s]) +
                                      static_cast<double>(end_logits[e]),
                                  s, e});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.start != b.start) return a.start < b.start;
        return a.end < b.end;
    });

    const Utf8Text ctx_cp = utf8_decode(ex.context);
    auto span_text = [&](const decode_detail::Candidate& c) {
        return utf8_slice(ex.context, ctx_cp, static_cast<size_t>(ex.position_chars[c.start].first),
                          static_cast<size_t>(ex.position_chars[c.end].second));
    };

    // n-best: best-scoring distinct texts with the null entry merged in at
    // its score rank
    size_t ci = 0;
    bool null_added = false;
    while (pred.n_best.size() < n_best_size && (ci < candidates.size() || !null_added)) {
        if (!null_added && (ci >= candidates.size() || pred.null_score >= candidates[ci].score)) {
            pred.n_best.emplace_back("", pred.null_score);
            null_added = true;
            continue;
        }
        const decode_detail::Candidate& c = candidates[ci++];
        std::string text = span_text(c);
        bool duplicate = false;
        for (const auto& entry : pred.n_best)
            if (entry.first == text) {
                duplicate = true;
                break;
            }
        if (!duplicate) pred.n_best.emplace_back(std::move(text), c.score);
    }

    if (candidates.empty() || pred.null_score - candidates.front().score > null_threshold) {
        pred.text.clear();
        pred.score = pred.null_score;
        return pred;
    }
    const auto& best = candidates.front();
    pred.score = best.score;
    pred.start_char = ex.position_chars[best.start].first;
    pred.end_char = ex.position_chars[best.end].second;
    pred.text = span_text(best);
    return pred;
}

template <typename T>
std::map<std::string, SpanPrediction> predict(const QaModel<T>& model,
                                              const std::vector<PreparedExample>& data,
                                              size_t max_answer_len, double null_threshold) {
    std::map<std::string, SpanPrediction> out;
    for (const auto& ex : data) {
        SpanLogits<T> logits = model.forward(ex.packed, ex.features, false, 0);
        out[ex.qid] = decode(logits.start.values(), logits.end.values(), ex, max_answer_len,
                             null_threshold);
    }
    return out;
}

inline void write_predictions(const std::string& path,
                              const std::map<std::string, SpanPrediction>& preds) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [qid, p] : preds) j[qid] = p.text;
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write predictions " + path);
    out << j.dump(2) << "\n";
}

inline void write_nbest(const std::string& path,
                        const std::map<std::string, SpanPrediction>& preds) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [qid, p] : preds) {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [text, score] : p.n_best)
            entries.push_back({{"text", text}, {"score", score}});
        j[qid] = std::move(entries);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write n-best " + path);
    out << j.dump(2) << "\n";
}

inline std::map<std::string, std::string> read_predictions(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot open predictions " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedJson, path + ": " + e.what());
    }
    if (!j.is_object()) fail(ErrorKind::SchemaViolation, path + ": predictions must be an object");
    std::map<std::string, std::string> out;
    for (const auto& [qid, text] : j.items()) {
        if (!text.is_string())
            fail(ErrorKind::SchemaViolation, path + ": prediction for " + qid + " must be a string");
        out[qid] = text.get<std::string>();
    }
    return out;
}

}  // namespace lingqa
