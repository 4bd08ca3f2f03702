#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace eqlab::nn {

/// Trainable tensor with its gradient accumulator. Shapes are row-major.
template <class T>
struct Param {
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    explicit Param(std::vector<std::size_t> shape_);

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad();
};

template <class T>
class Tape;

/// Handle to a node on a tape. Handles die when the tape is cleared.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;
    std::uint64_t epoch = 0;
};

/// Reverse-mode tape. Batched tensors put the batch first: conv activations are
/// [B, C, L], dense activations [B, F].
///
/// ReLU uses a zero subgradient at exactly 0.
template <class T>
class Tape {
public:
    Var<T> input(std::vector<std::size_t> shape, std::vector<T> data);
    Var<T> param(Param<T>& p);
    Var<T> constant(T v);

    /// Valid cross-correlation with bias. w is [out, in, k], b is [out].
    Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride);
    Var<T> relu(Var<T> x);
    Var<T> flatten(Var<T> x);
    /// x [B, in], w [out, in], b [out].
    Var<T> dense(Var<T> x, Var<T> w, Var<T> b);
    Var<T> add(Var<T> a, Var<T> b);
    Var<T> mul(Var<T> a, Var<T> b);
    Var<T> sum(Var<T> x);
    /// Mean softmax cross-entropy. logits [B, G*classes] hold G independent
    /// decisions per row; labels has B*G entries.
    Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels, std::size_t classes);
    /// Mean squared error against a target with the same element count.
    Var<T> mse(Var<T> y, std::span<const T> target);

    const std::vector<T>& value(Var<T> v) const;
    const std::vector<std::size_t>& shape(Var<T> v) const;

    /// Accumulates d(loss)/d(param) into every Param reached from loss.
    /// Throws UsageError for non-scalar losses or handles from another tape
    /// or from before the last clear().
    void backward(Var<T> loss);
    void clear();
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<T> value;
        std::vector<T> grad;
        std::function<void()> back;
        Param<T>* param = nullptr;
    };

    Node& node(Var<T> v);
    const Node& node(Var<T> v) const;
    Var<T> push(std::vector<std::size_t> shape, std::vector<T> value);

    std::vector<Node> nodes_;
    std::uint64_t epoch_ = 1;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <class T>
class Adam {
public:
    Adam(std::vector<Param<T>*> params, AdamConfig cfg);

    void zero_grad();
    void step();
    std::size_t steps() const noexcept { return t_; }

private:
    std::vector<Param<T>*> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

/// FNV-1a over the raw bytes of the parameter values.
template <class T>
std::uint64_t checksum(std::span<const Param<T>> params);

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = 14695981039346656037ull);

extern template struct Param<float>;
extern template struct Param<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class Adam<float>;
extern template class Adam<double>;

} // namespace eqlab::nn
