#pragma once

// Dense tensors with reverse-mode differentiation. Ops cover exactly what
// the span-prediction model needs: matmul, broadcast add/mul, relu, gelu,
// softmax, layer norm, embedding lookup, concat, dropout, cross entropy,
// plus slicing/reshape plumbing. A finite-difference gradient checker
// provides the independent oracle for all of them.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "lingqa/common.hpp"

namespace lingqa {

using Shape = std::vector<size_t>;

inline size_t shape_numel(const Shape& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return n;
}

template <typename T>
class Tensor {
public:
    struct Node {
        Shape shape;
        std::vector<T> value;
        std::vector<T> grad;  // allocated on first accumulation
        bool needs_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backprop;

        size_t numel() const { return value.size(); }
        bool is_leaf() const { return parents.empty(); }

        void ensure_grad() {
            if (grad.size() != value.size()) grad.assign(value.size(), T(0));
        }
    };

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return make(std::move(shape), {}, requires_grad);
    }

    static Tensor full(Shape shape, T v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.values().begin(), t.values().end(), v);
        return t;
    }

    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
        if (shape_numel(shape) != values.size())
            fail(ErrorKind::ShapeMismatch, "from: " + format_shape(shape) + " does not hold " +
                                               std::to_string(values.size()) + " values");
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->value = std::move(values);
        t.n_->needs_grad = requires_grad;
        return t;
    }

    static Tensor scalar(T v) { return from({}, {v}); }

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    size_t numel() const { return n_->value.size(); }
    size_t dim(size_t i) const { return n_->shape.at(i); }

    std::vector<T>& values() { return n_->value; }
    const std::vector<T>& values() const { return n_->value; }
    T item() const {
        if (numel() != 1) fail(ErrorKind::ShapeMismatch, "item() on non-scalar tensor");
        return n_->value[0];
    }

    bool requires_grad() const { return n_->needs_grad; }
    bool has_grad() const { return !n_->grad.empty(); }
    const std::vector<T>& grad() const { return n_->grad; }
    std::vector<T>& grad_mutable() {
        n_->ensure_grad();
        return n_->grad;
    }
    void zero_grad() {
        if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), T(0));
    }

    // Reverse-mode pass from a scalar loss. Non-leaf gradients are reset per
    // call; leaf gradients accumulate across calls until zero_grad().
    void backward() const {
        if (numel() != 1) fail(ErrorKind::NonScalarLoss, "backward() requires a scalar loss");
        if (!n_->needs_grad) return;

        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack;
        stack.push_back({n_.get(), 0});
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node* parent = node->parents[next++].get();
                if (parent->needs_grad && seen.insert(parent).second)
                    stack.push_back({parent, 0});
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        for (Node* node : order)
            if (!node->is_leaf()) node->grad.assign(node->numel(), T(0));
        n_->ensure_grad();
        n_->grad[0] += T(1);
        for (auto it = order.rbegin(); it != order.rend(); ++it)
            if ((*it)->backprop) (*it)->backprop(**it);
    }

    std::shared_ptr<Node> node() const { return n_; }

    static Tensor make(Shape shape, std::vector<std::shared_ptr<Node>> parents, bool needs_grad) {
        Tensor t;
        t.n_ = std::make_shared<Node>();
        t.n_->shape = std::move(shape);
        t.n_->value.assign(shape_numel(t.n_->shape), T(0));
        t.n_->parents = std::move(parents);
        t.n_->needs_grad = needs_grad;
        return t;
    }

private:
    std::shared_ptr<Node> n_;
};

namespace ops {

// b's shape must equal a's shape or a suffix of it; returns b's element count
template <typename T>
size_t check_suffix_broadcast(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sb.size() > sa.size())
        fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + format_shape(sb) +
                                           " does not broadcast onto " + format_shape(sa));
    for (size_t i = 0; i < sb.size(); ++i)
        if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i])
            fail(ErrorKind::ShapeMismatch, std::string(op) + ": " + format_shape(sb) +
                                               " does not broadcast onto " + format_shape(sa));
    return shape_numel(sb);
}

}  // namespace ops

// ---------------------------------------------------------------------------
// elementwise / broadcast ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const size_t bn = ops::check_suffix_broadcast("add", a, b);
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node(), b.node()},
                                    a.node()->needs_grad || b.node()->needs_grad);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i % bn];
    out.node()->backprop = [bn](typename Tensor<T>::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % bn] += self.grad[i];
        }
    };
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    const size_t bn = ops::check_suffix_broadcast("mul", a, b);
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node(), b.node()},
                                    a.node()->needs_grad || b.node()->needs_grad);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i % bn];
    out.node()->backprop = [bn](typename Tensor<T>::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i % bn];
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i % bn] += self.grad[i] * pa.value[i];
        }
    };
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    out.node()->backprop = [c](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
    };
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > T(0) ? av[i] : T(0);
    out.node()->backprop = [](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (p.value[i] > T(0)) p.grad[i] += self.grad[i];
    };
    return out;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    const T inv_sqrt2 = T(0.7071067811865475);
    for (size_t i = 0; i < ov.size(); ++i)
        ov[i] = T(0.5) * av[i] * (T(1) + std::erf(av[i] * inv_sqrt2));
    out.node()->backprop = [inv_sqrt2](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const T inv_sqrt2pi = T(0.3989422804014327);
        for (size_t i = 0; i < self.grad.size(); ++i) {
            T x = p.value[i];
            T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
            T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
            p.grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// row ops over the last axis
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& a) {
    if (a.shape().empty()) fail(ErrorKind::ShapeMismatch, "softmax: scalar input");
    const size_t cols = a.shape().back();
    const size_t rows = a.numel() / cols;
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t r = 0; r < rows; ++r) {
        const T* x = &av[r * cols];
        T* y = &ov[r * cols];
        T mx = x[0];
        for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        T sum = T(0);
        for (size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        T inv = T(1) / sum;
        for (size_t c = 0; c < cols; ++c) y[c] *= inv;
    }
    out.node()->backprop = [rows, cols](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
            const T* y = &self.value[r * cols];
            const T* dy = &self.grad[r * cols];
            T dot = T(0);
            for (size_t c = 0; c < cols; ++c) dot += dy[c] * y[c];
            T* dx = &p.grad[r * cols];
            for (size_t c = 0; c < cols; ++c) dx[c] += (dy[c] - dot) * y[c];
        }
    };
    return out;
}

// normalization over the last axis without affine parameters
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, T eps = T(1e-12)) {
    if (a.shape().empty()) fail(ErrorKind::ShapeMismatch, "layer_norm: scalar input");
    const size_t cols = a.shape().back();
    const size_t rows = a.numel() / cols;
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    std::vector<T> inv_std(rows);
    for (size_t r = 0; r < rows; ++r) {
        const T* x = &av[r * cols];
        T mean = T(0);
        for (size_t c = 0; c < cols; ++c) mean += x[c];
        mean /= T(cols);
        T var = T(0);
        for (size_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= T(cols);
        inv_std[r] = T(1) / std::sqrt(var + eps);
        T* y = &ov[r * cols];
        for (size_t c = 0; c < cols; ++c) y[c] = (x[c] - mean) * inv_std[r];
    }
    out.node()->backprop = [rows, cols, inv_std](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
            const T* xhat = &self.value[r * cols];
            const T* dy = &self.grad[r * cols];
            T mean_dy = T(0), mean_dy_xhat = T(0);
            for (size_t c = 0; c < cols; ++c) {
                mean_dy += dy[c];
                mean_dy_xhat += dy[c] * xhat[c];
            }
            mean_dy /= T(cols);
            mean_dy_xhat /= T(cols);
            T* dx = &p.grad[r * cols];
            for (size_t c = 0; c < cols; ++c)
                dx[c] += (dy[c] - mean_dy - xhat[c] * mean_dy_xhat) * inv_std[r];
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// matmul and layout ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        fail(ErrorKind::ShapeMismatch,
             "matmul: " + format_shape(a.shape()) + " x " + format_shape(b.shape()));
    const size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    Tensor<T> out = Tensor<T>::make({M, N}, {a.node(), b.node()},
                                    a.node()->needs_grad || b.node()->needs_grad);
    const T* av = a.values().data();
    const T* bv = b.values().data();
    T* ov = out.values().data();
    for (size_t m = 0; m < M; ++m) {
        T* orow = ov + m * N;
        for (size_t k = 0; k < K; ++k) {
            const T s = av[m * K + k];
            const T* brow = bv + k * N;
            for (size_t n = 0; n < N; ++n) orow[n] += s * brow[n];
        }
    }
    out.node()->backprop = [M, K, N](typename Tensor<T>::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const T* dC = self.grad.data();
        if (pa.needs_grad) {
            pa.ensure_grad();
            const T* bv = pb.value.data();
            T* dA = pa.grad.data();
            for (size_t m = 0; m < M; ++m)
                for (size_t k = 0; k < K; ++k) {
                    const T* dcrow = dC + m * N;
                    const T* brow = bv + k * N;
                    T acc = T(0);
                    for (size_t n = 0; n < N; ++n) acc += dcrow[n] * brow[n];
                    dA[m * K + k] += acc;
                }
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            const T* av = pa.value.data();
            T* dB = pb.grad.data();
            for (size_t m = 0; m < M; ++m)
                for (size_t k = 0; k < K; ++k) {
                    const T s = av[m * K + k];
                    const T* dcrow = dC + m * N;
                    T* dbrow = dB + k * N;
                    for (size_t n = 0; n < N; ++n) dbrow[n] += s * dcrow[n];
                }
        }
    };
    return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.shape().size() != 2)
        fail(ErrorKind::ShapeMismatch, "transpose2d: needs rank 2, got " + format_shape(a.shape()));
    const size_t M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out = Tensor<T>::make({N, M}, {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t m = 0; m < M; ++m)
        for (size_t n = 0; n < N; ++n) ov[n * M + m] = av[m * N + n];
    out.node()->backprop = [M, N](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t m = 0; m < M; ++m)
            for (size_t n = 0; n < N; ++n) p.grad[m * N + n] += self.grad[n * M + m];
    };
    return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, size_t offset, size_t count) {
    if (a.shape().size() != 2 || offset + count > a.shape()[1])
        fail(ErrorKind::ShapeMismatch, "slice_cols: [" + std::to_string(offset) + "," +
                                           std::to_string(offset + count) + ") of " +
                                           format_shape(a.shape()));
    const size_t M = a.shape()[0], N = a.shape()[1];
    Tensor<T> out = Tensor<T>::make({M, count}, {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t m = 0; m < M; ++m)
        for (size_t c = 0; c < count; ++c) ov[m * count + c] = av[m * N + offset + c];
    out.node()->backprop = [M, N, offset, count](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t m = 0; m < M; ++m)
            for (size_t c = 0; c < count; ++c)
                p.grad[m * N + offset + c] += self.grad[m * count + c];
    };
    return out;
}

// concatenation along the last axis of two rank-2 tensors
template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[0] != b.shape()[0])
        fail(ErrorKind::ShapeMismatch,
             "concat: " + format_shape(a.shape()) + " | " + format_shape(b.shape()));
    const size_t M = a.shape()[0], A = a.shape()[1], B = b.shape()[1];
    Tensor<T> out = Tensor<T>::make({M, A + B}, {a.node(), b.node()},
                                    a.node()->needs_grad || b.node()->needs_grad);
    const auto& av = a.values();
    const auto& bv = b.values();
    auto& ov = out.values();
    for (size_t m = 0; m < M; ++m) {
        std::copy(&av[m * A], &av[m * A] + A, &ov[m * (A + B)]);
        std::copy(&bv[m * B], &bv[m * B] + B, &ov[m * (A + B) + A]);
    }
    out.node()->backprop = [M, A, B](typename Tensor<T>::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad) {
            pa.ensure_grad();
            for (size_t m = 0; m < M; ++m)
                for (size_t c = 0; c < A; ++c) pa.grad[m * A + c] += self.grad[m * (A + B) + c];
        }
        if (pb.needs_grad) {
            pb.ensure_grad();
            for (size_t m = 0; m < M; ++m)
                for (size_t c = 0; c < B; ++c) pb.grad[m * B + c] += self.grad[m * (A + B) + A + c];
        }
    };
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        fail(ErrorKind::ShapeMismatch,
             "reshape: " + format_shape(a.shape()) + " -> " + format_shape(shape));
    Tensor<T> out = Tensor<T>::make(std::move(shape), {a.node()}, a.node()->needs_grad);
    out.values() = a.values();
    out.node()->backprop = [](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
    };
    return out;
}

// ---------------------------------------------------------------------------
// lookup, dropout, losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int32_t>& ids) {
    if (table.shape().size() != 2)
        fail(ErrorKind::ShapeMismatch, "embedding_lookup: table must be rank 2");
    const size_t V = table.shape()[0], D = table.shape()[1];
    for (int32_t id : ids)
        if (id < 0 || static_cast<size_t>(id) >= V)
            fail(ErrorKind::IndexOutOfRange, "embedding id " + std::to_string(id) +
                                                 " outside table of " + std::to_string(V));
    Tensor<T> out = Tensor<T>::make({ids.size(), D}, {table.node()}, table.node()->needs_grad);
    const auto& tv = table.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(&tv[static_cast<size_t>(ids[i]) * D], &tv[static_cast<size_t>(ids[i]) * D] + D,
                  &ov[i * D]);
    out.node()->backprop = [ids, D](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < ids.size(); ++i) {
            T* dst = &p.grad[static_cast<size_t>(ids[i]) * D];
            const T* src = &self.grad[i * D];
            for (size_t d = 0; d < D; ++d) dst[d] += src[d];
        }
    };
    return out;
}

// Inverted dropout with an explicit counter-based stream: the identity when
// train is false or rate is zero.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, bool train, CounterRng rng) {
    if (!train || rate <= 0.0) {
        Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
        out.values() = a.values();
        out.node()->backprop = [](typename Tensor<T>::Node& self) {
            auto& p = *self.parents[0];
            if (!p.needs_grad) return;
            p.ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
        };
        return out;
    }
    if (rate >= 1.0) fail(ErrorKind::ConfigViolation, "dropout rate must be < 1");
    const T keep_scale = T(1.0 / (1.0 - rate));
    std::vector<T> mask(a.numel());
    for (auto& m : mask) m = rng.next_uniform() >= rate ? keep_scale : T(0);
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * mask[i];
    out.node()->backprop = [mask](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
    };
    return out;
}

// set positions with keep == 0 (per row over the last axis) to fill_value;
// gradient does not flow through filled positions
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, const std::vector<uint8_t>& keep, T fill_value) {
    if (a.shape().empty() || a.shape().back() != keep.size())
        fail(ErrorKind::ShapeMismatch, "masked_fill: mask of " + std::to_string(keep.size()) +
                                           " against " + format_shape(a.shape()));
    const size_t cols = keep.size();
    Tensor<T> out = Tensor<T>::make(a.shape(), {a.node()}, a.node()->needs_grad);
    const auto& av = a.values();
    auto& ov = out.values();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = keep[i % cols] ? av[i] : fill_value;
    out.node()->backprop = [keep, cols](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < self.grad.size(); ++i)
            if (keep[i % cols]) p.grad[i] += self.grad[i];
    };
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::make({}, {a.node()}, a.node()->needs_grad);
    T acc = T(0);
    for (T v : a.values()) acc += v;
    out.values()[0] = acc;
    out.node()->backprop = [](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[0];
    };
    return out;
}

// mean over rows of -log softmax(row)[target]; log-sum-exp stabilized
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int32_t>& targets) {
    if (logits.shape().empty()) fail(ErrorKind::ShapeMismatch, "cross_entropy: scalar logits");
    const size_t cols = logits.shape().back();
    const size_t rows = logits.numel() / cols;
    if (targets.size() != rows)
        fail(ErrorKind::ShapeMismatch, "cross_entropy: " + std::to_string(targets.size()) +
                                           " targets for " + std::to_string(rows) + " rows");
    for (int32_t t : targets)
        if (t < 0 || static_cast<size_t>(t) >= cols)
            fail(ErrorKind::IndexOutOfRange, "cross_entropy target " + std::to_string(t) +
                                                 " outside [0," + std::to_string(cols) + ")");
    Tensor<T> out = Tensor<T>::make({}, {logits.node()}, logits.node()->needs_grad);
    const auto& lv = logits.values();
    T total = T(0);
    for (size_t r = 0; r < rows; ++r) {
        const T* x = &lv[r * cols];
        T mx = x[0];
        for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        T sum_exp = T(0);
        for (size_t c = 0; c < cols; ++c) sum_exp += std::exp(x[c] - mx);
        total += mx + std::log(sum_exp) - x[static_cast<size_t>(targets[r])];
    }
    out.values()[0] = total / T(rows);
    out.node()->backprop = [rows, cols, targets](typename Tensor<T>::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        p.ensure_grad();
        const T upstream = self.grad[0] / T(rows);
        for (size_t r = 0; r < rows; ++r) {
            const T* x = &p.value[r * cols];
            T mx = x[0];
            for (size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
            T sum_exp = T(0);
            for (size_t c = 0; c < cols; ++c) sum_exp += std::exp(x[c] - mx);
            const T inv = T(1) / sum_exp;
            T* dx = &p.grad[r * cols];
            for (size_t c = 0; c < cols; ++c) {
                T soft = std::exp(x[c] - mx) * inv;
                dx[c] += upstream * (soft - (c == static_cast<size_t>(targets[r]) ? T(1) : T(0)));
            }
        }
    };
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle: central differences against analytic gradients,
// relative error with a max(|a|,|n|,1e-8) denominator.
// ---------------------------------------------------------------------------

template <typename T>
double gradient_check(const std::function<Tensor<T>()>& f, std::vector<Tensor<T>> params,
                      double step) {
    for (auto& p : params) p.zero_grad();
    Tensor<T> loss = f();
    loss.backward();

    std::vector<std::vector<T>> analytic;
    analytic.reserve(params.size());
    for (auto& p : params)
        analytic.push_back(p.has_grad() ? p.grad() : std::vector<T>(p.numel(), T(0)));

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto& vals = params[pi].values();
        for (size_t i = 0; i < vals.size(); ++i) {
            const T keep = vals[i];
            vals[i] = keep + static_cast<T>(step);
            const double f_plus = static_cast<double>(f().item());
            vals[i] = keep - static_cast<T>(step);
            const double f_minus = static_cast<double>(f().item());
            vals[i] = keep;
            const double numeric = (f_plus - f_minus) / (2.0 * step);
            const double a = static_cast<double>(analytic[pi][i]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
        }
    }
    return max_rel;
}

}  // namespace lingqa
