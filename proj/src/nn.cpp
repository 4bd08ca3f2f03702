#include "eqlab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "eqlab/error.hpp"

namespace eqlab::nn {

namespace {

std::size_t volume(const std::vector<std::size_t>& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

} // namespace

template <class T>
Param<T>::Param(std::vector<std::size_t> shape_) : shape(std::move(shape_))
{
    value.assign(volume(shape), T{});
    grad.assign(value.size(), T{});
}

template <class T>
void Param<T>::zero_grad()
{
    grad.assign(value.size(), T{});
}

template <class T>
typename Tape<T>::Node& Tape<T>::node(Var<T> v)
{
    if (v.tape != this || v.epoch != epoch_ || v.id >= nodes_.size())
        throw UsageError("tape: variable is detached from this graph");
    return nodes_[v.id];
}

template <class T>
const typename Tape<T>::Node& Tape<T>::node(Var<T> v) const
{
    if (v.tape != this || v.epoch != epoch_ || v.id >= nodes_.size())
        throw UsageError("tape: variable is detached from this graph");
    return nodes_[v.id];
}

template <class T>
Var<T> Tape<T>::push(std::vector<std::size_t> shape, std::vector<T> value)
{
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1, epoch_};
}

template <class T>
Var<T> Tape<T>::input(std::vector<std::size_t> shape, std::vector<T> data)
{
    if (volume(shape) != data.size())
        throw ParameterError("tape: input data does not match its shape");
    return push(std::move(shape), std::move(data));
}

template <class T>
Var<T> Tape<T>::param(Param<T>& p)
{
    if (volume(p.shape) != p.value.size())
        throw ParameterError("tape: parameter value does not match its shape");
    if (p.grad.size() != p.value.size())
        p.zero_grad();
    Var<T> v = push(p.shape, p.value);
    nodes_.back().param = &p;
    return v;
}

template <class T>
Var<T> Tape<T>::constant(T v)
{
    return push({1}, {v});
}

template <class T>
Var<T> Tape<T>::conv1d(Var<T> x, Var<T> w, Var<T> b, std::size_t stride)
{
    const auto& xs = node(x).shape;
    const auto& ws = node(w).shape;
    if (xs.size() != 3 || ws.size() != 3 || node(b).value.size() != ws[0] || ws[1] != xs[1] || stride == 0)
        throw ParameterError("conv1d: shape mismatch");
    const std::size_t B = xs[0], C = xs[1], L = xs[2], O = ws[0], K = ws[2];
    if (L < K)
        throw ParameterError("conv1d: input shorter than the kernel");
    const std::size_t Lo = (L - K) / stride + 1;
    std::vector<T> out(B * O * Lo);
    {
        const auto& xv = node(x).value;
        const auto& wv = node(w).value;
        const auto& bv = node(b).value;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                T* dst = &out[(n * O + o) * Lo];
                for (std::size_t t = 0; t < Lo; ++t)
                    dst[t] = bv[o];
                for (std::size_t c = 0; c < C; ++c) {
                    const T* src = &xv[(n * C + c) * L];
                    const T* ker = &wv[(o * C + c) * K];
                    for (std::size_t t = 0; t < Lo; ++t) {
                        const T* s = src + t * stride;
                        T acc{};
                        for (std::size_t k = 0; k < K; ++k)
                            acc += ker[k] * s[k];
                        dst[t] += acc;
                    }
                }
            }
    }
    Var<T> y = push({B, O, Lo}, std::move(out));
    const std::size_t xi = x.id, wi = w.id, bi = b.id, yi = y.id;
    nodes_[yi].back = [this, xi, wi, bi, yi, B, C, L, O, K, Lo, stride] {
        const auto& gy = nodes_[yi].grad;
        const auto& xv = nodes_[xi].value;
        const auto& wv = nodes_[wi].value;
        auto& gx = nodes_[xi].grad;
        auto& gw = nodes_[wi].grad;
        auto& gb = nodes_[bi].grad;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                const T* g = &gy[(n * O + o) * Lo];
                for (std::size_t t = 0; t < Lo; ++t)
                    gb[o] += g[t];
                for (std::size_t c = 0; c < C; ++c) {
                    const T* src = &xv[(n * C + c) * L];
                    T* gsrc = &gx[(n * C + c) * L];
                    const T* ker = &wv[(o * C + c) * K];
                    T* gker = &gw[(o * C + c) * K];
                    for (std::size_t t = 0; t < Lo; ++t) {
                        const T gt = g[t];
                        if (gt == T{})
                            continue;
                        const std::size_t off = t * stride;
                        for (std::size_t k = 0; k < K; ++k) {
                            gker[k] += gt * src[off + k];
                            gsrc[off + k] += gt * ker[k];
                        }
                    }
                }
            }
    };
    return y;
}

template <class T>
Var<T> Tape<T>::relu(Var<T> x)
{
    std::vector<T> out = node(x).value;
    for (auto& v : out)
        v = v > T{} ? v : T{};
    Var<T> y = push(node(x).shape, std::move(out));
    const std::size_t xi = x.id, yi = y.id;
    nodes_[yi].back = [this, xi, yi] {
        const auto& xv = nodes_[xi].value;
        const auto& gy = nodes_[yi].grad;
        auto& gx = nodes_[xi].grad;
        for (std::size_t i = 0; i < xv.size(); ++i)
            if (xv[i] > T{})
                gx[i] += gy[i];
    };
    return y;
}

template <class T>
Var<T> Tape<T>::flatten(Var<T> x)
{
    const auto& s = node(x).shape;
    if (s.empty())
        throw ParameterError("flatten: scalar input");
    const std::size_t B = s[0];
    const std::size_t F = B == 0 ? 0 : node(x).value.size() / B;
    Var<T> y = push({B, F}, node(x).value);
    const std::size_t xi = x.id, yi = y.id;
    nodes_[yi].back = [this, xi, yi] {
        auto& gx = nodes_[xi].grad;
        const auto& gy = nodes_[yi].grad;
        for (std::size_t i = 0; i < gy.size(); ++i)
            gx[i] += gy[i];
    };
    return y;
}

template <class T>
Var<T> Tape<T>::dense(Var<T> x, Var<T> w, Var<T> b)
{
    const auto& xs = node(x).shape;
    const auto& ws = node(w).shape;
    if (xs.size() != 2 || ws.size() != 2 || ws[1] != xs[1] || node(b).value.size() != ws[0])
        throw ParameterError("dense: shape mismatch");
    const std::size_t B = xs[0], I = xs[1], O = ws[0];
    std::vector<T> out(B * O);
    {
        const auto& xv = node(x).value;
        const auto& wv = node(w).value;
        const auto& bv = node(b).value;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                T acc = bv[o];
                const T* row = &wv[o * I];
                const T* in = &xv[n * I];
                for (std::size_t i = 0; i < I; ++i)
                    acc += row[i] * in[i];
                out[n * O + o] = acc;
            }
    }
    Var<T> y = push({B, O}, std::move(out));
    const std::size_t xi = x.id, wi = w.id, bi = b.id, yi = y.id;
    nodes_[yi].back = [this, xi, wi, bi, yi, B, I, O] {
        const auto& gy = nodes_[yi].grad;
        const auto& xv = nodes_[xi].value;
        const auto& wv = nodes_[wi].value;
        auto& gx = nodes_[xi].grad;
        auto& gw = nodes_[wi].grad;
        auto& gb = nodes_[bi].grad;
        for (std::size_t n = 0; n < B; ++n)
            for (std::size_t o = 0; o < O; ++o) {
                const T g = gy[n * O + o];
                gb[o] += g;
                for (std::size_t i = 0; i < I; ++i) {
                    gw[o * I + i] += g * xv[n * I + i];
                    gx[n * I + i] += g * wv[o * I + i];
                }
            }
    };
    return y;
}

template <class T>
Var<T> Tape<T>::add(Var<T> a, Var<T> b)
{
    if (node(a).value.size() != node(b).value.size())
        throw ParameterError("add: size mismatch");
    std::vector<T> out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] += node(b).value[i];
    Var<T> y = push(node(a).shape, std::move(out));
    const std::size_t ai = a.id, bi = b.id, yi = y.id;
    nodes_[yi].back = [this, ai, bi, yi] {
        const auto& gy = nodes_[yi].grad;
        for (std::size_t i = 0; i < gy.size(); ++i) {
            nodes_[ai].grad[i] += gy[i];
            nodes_[bi].grad[i] += gy[i];
        }
    };
    return y;
}

template <class T>
Var<T> Tape<T>::mul(Var<T> a, Var<T> b)
{
    if (node(a).value.size() != node(b).value.size())
        throw ParameterError("mul: size mismatch");
    std::vector<T> out = node(a).value;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] *= node(b).value[i];
    Var<T> y = push(node(a).shape, std::move(out));
    const std::size_t ai = a.id, bi = b.id, yi = y.id;
    nodes_[yi].back = [this, ai, bi, yi] {
        const auto& gy = nodes_[yi].grad;
        for (std::size_t i = 0; i < gy.size(); ++i) {
            nodes_[ai].grad[i] += gy[i] * nodes_[bi].value[i];
            nodes_[bi].grad[i] += gy[i] * nodes_[ai].value[i];
        }
    };
    return y;
}

template <class T>
Var<T> Tape<T>::sum(Var<T> x)
{
    const auto& xv = node(x).value;
    T s{};
    for (const auto& v : xv)
        s += v;
    Var<T> y = push({1}, {s});
    const std::size_t xi = x.id, yi = y.id;
    nodes_[yi].back = [this, xi, yi] {
        const T g = nodes_[yi].grad[0];
        for (auto& v : nodes_[xi].grad)
            v += g;
    };
    return y;
}

template <class T>
Var<T> Tape<T>::softmax_cross_entropy(Var<T> logits, std::span<const int> labels, std::size_t classes)
{
    const auto& lv = node(logits).value;
    if (classes == 0 || lv.size() != labels.size() * classes)
        throw ParameterError("softmax_cross_entropy: logits do not match labels");
    const std::size_t G = labels.size();
    std::vector<T> prob(lv.size());
    double loss = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
        const T* l = &lv[g * classes];
        const T mx = *std::max_element(l, l + classes);
        double z = 0.0;
        for (std::size_t k = 0; k < classes; ++k)
            z += std::exp(static_cast<double>(l[k] - mx));
        const int y = labels[g];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw ParameterError("softmax_cross_entropy: label out of range");
        for (std::size_t k = 0; k < classes; ++k)
            prob[g * classes + k] = static_cast<T>(std::exp(static_cast<double>(l[k] - mx)) / z);
        loss += std::log(z) - static_cast<double>(l[y] - mx);
    }
    Var<T> y = push({1}, {static_cast<T>(loss / static_cast<double>(G))});
    const std::size_t li = logits.id, yi = y.id;
    std::vector<int> lab(labels.begin(), labels.end());
    nodes_[yi].back = [this, li, yi, classes, G, prob = std::move(prob), lab = std::move(lab)] {
        const T g = nodes_[yi].grad[0] / static_cast<T>(G);
        auto& gl = nodes_[li].grad;
        for (std::size_t i = 0; i < G; ++i)
            for (std::size_t k = 0; k < classes; ++k) {
                const T ind = static_cast<std::size_t>(lab[i]) == k ? T{1} : T{};
                gl[i * classes + k] += g * (prob[i * classes + k] - ind);
            }
    };
    return y;
}

template <class T>
Var<T> Tape<T>::mse(Var<T> y, std::span<const T> target)
{
    const auto& yv = node(y).value;
    if (yv.size() != target.size() || yv.empty())
        throw ParameterError("mse: target size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < yv.size(); ++i)
        s += static_cast<double>((yv[i] - target[i]) * (yv[i] - target[i]));
    Var<T> out = push({1}, {static_cast<T>(s / static_cast<double>(yv.size()))});
    const std::size_t yi = y.id, oi = out.id;
    std::vector<T> tgt(target.begin(), target.end());
    nodes_[oi].back = [this, yi, oi, tgt = std::move(tgt)] {
        const auto& yv2 = nodes_[yi].value;
        const T g = nodes_[oi].grad[0] * T{2} / static_cast<T>(yv2.size());
        auto& gy = nodes_[yi].grad;
        for (std::size_t i = 0; i < yv2.size(); ++i)
            gy[i] += g * (yv2[i] - tgt[i]);
    };
    return out;
}

template <class T>
const std::vector<T>& Tape<T>::value(Var<T> v) const
{
    return node(v).value;
}

template <class T>
const std::vector<std::size_t>& Tape<T>::shape(Var<T> v) const
{
    return node(v).shape;
}

template <class T>
void Tape<T>::backward(Var<T> loss)
{
    Node& l = node(loss);
    if (l.value.size() != 1)
        throw UsageError("backward: loss must be a scalar");
    for (auto& n : nodes_)
        n.grad.assign(n.value.size(), T{});
    nodes_[loss.id].grad[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.back)
            n.back();
        if (n.param != nullptr)
            for (std::size_t k = 0; k < n.grad.size(); ++k)
                n.param->grad[k] += n.grad[k];
    }
}

template <class T>
void Tape<T>::clear()
{
    nodes_.clear();
    ++epoch_;
}

template <class T>
Adam<T>::Adam(std::vector<Param<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg)
{
    if (!(cfg_.lr > 0.0) || cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
        throw ParameterError("Adam: invalid hyperparameters");
    for (auto* p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

template <class T>
void Adam<T>::zero_grad()
{
    for (auto* p : params_)
        p->zero_grad();
}

template <class T>
void Adam<T>::step()
{
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t j = 0; j < params_.size(); ++j) {
        Param<T>& p = *params_[j];
        auto& m = m_[j];
        auto& v = v_[j];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            p.value[i] -= static_cast<T>(cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps));
        }
    }
}

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h)
{
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

template <class T>
std::uint64_t checksum(std::span<const Param<T>> params)
{
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& p : params)
        h = fnv1a(p.value.data(), p.value.size() * sizeof(T), h);
    return h;
}

template struct Param<float>;
template struct Param<double>;
template class Tape<float>;
template class Tape<double>;
template class Adam<float>;
template class Adam<double>;
template std::uint64_t checksum<float>(std::span<const Param<float>>);
template std::uint64_t checksum<double>(std::span<const Param<double>>);

} // namespace eqlab::nn
