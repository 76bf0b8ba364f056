#pragma once

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfm/ops.hpp"

namespace lfm {

// A named learnable tensor. The tensor handle shares storage with the layer
// that owns it, so optimizer updates and checkpoint loads are visible there.
template <typename T>
struct ParamRef {
    std::string name;
    Tensor<T> tensor;
    bool learnable = true;
};

template <typename T>
using ParamList = std::vector<ParamRef<T>>;

template <typename T>
void add_param(ParamList<T>& out, const std::string& name, const Tensor<T>& t, bool learnable = true) {
    for (const auto& p : out)
        if (p.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    out.push_back({name, t, learnable});
}

template <typename T>
int64_t param_count(const ParamList<T>& params) {
    int64_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
}

template <typename T>
void zero_grads(ParamList<T>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

// Fan-in scaled uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void init_fan_in_uniform(Tensor<T>& w, int fan_in, std::mt19937_64& rng) {
    const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
    fill_uniform(w.data(), -bound, bound, rng);
}

// ---------------------------------------------------------------------------
// layers

template <typename T>
struct Linear {
    int in = 0, out = 0;
    Tensor<T> w, b;  // w:[in,out], b:[out] (b undefined when bias-free)

    Linear() = default;
    Linear(int in_, int out_, bool bias = true) : in(in_), out(out_), w(Shape{in_, out_}) {
        if (bias) b = Tensor<T>(Shape{out_});
        w.set_requires_grad(true);
        if (b.defined()) b.set_requires_grad(true);
    }

    void init(std::mt19937_64& rng) { init_fan_in_uniform(w, in, rng); }

    Tensor<T> forward(const Tensor<T>& x) const { return linear(x, w, b); }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        add_param(out, prefix + ".w", w);
        if (b.defined()) add_param(out, prefix + ".b", b);
    }
};

template <typename T>
struct Conv2d {
    int kh = 0, kw = 0, ci = 0, co = 0, stride = 1, pad = 0;
    Tensor<T> w, b;  // w:[kh,kw,ci,co]

    Conv2d() = default;
    Conv2d(int k, int ci_, int co_, int pad_, bool bias = true, int stride_ = 1)
        : kh(k), kw(k), ci(ci_), co(co_), stride(stride_), pad(pad_), w(Shape{k, k, ci_, co_}) {
        if (bias) b = Tensor<T>(Shape{co_});
        w.set_requires_grad(true);
        if (b.defined()) b.set_requires_grad(true);
    }

    void init(std::mt19937_64& rng) { init_fan_in_uniform(w, kh * kw * ci, rng); }

    Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        add_param(out, prefix + ".w", w);
        if (b.defined()) add_param(out, prefix + ".b", b);
    }
};

template <typename T>
struct DepthwiseConv2d {
    int k = 0, c = 0, pad = 0;
    Tensor<T> w, b;  // w:[k,k,c]

    DepthwiseConv2d() = default;
    DepthwiseConv2d(int k_, int c_, int pad_) : k(k_), c(c_), pad(pad_), w(Shape{k_, k_, c_}), b(Shape{c_}) {
        w.set_requires_grad(true);
        b.set_requires_grad(true);
    }

    void init(std::mt19937_64& rng) { init_fan_in_uniform(w, k * k, rng); }

    Tensor<T> forward(const Tensor<T>& x) const { return depthwise_conv2d(x, w, b, pad); }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        add_param(out, prefix + ".w", w);
        add_param(out, prefix + ".b", b);
    }
};

template <typename T>
struct LayerNorm {
    int c = 0;
    T eps = T(1e-6);
    Tensor<T> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(int c_, T eps_ = T(1e-6)) : c(c_), eps(eps_), gamma(Shape{c_}), beta(Shape{c_}) {
        std::fill(gamma.data().begin(), gamma.data().end(), T(1));
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        add_param(out, prefix + ".gamma", gamma);
        add_param(out, prefix + ".beta", beta);
    }
};

// Squeeze-excite style gate: pool -> C/r -> SiLU -> C -> sigmoid -> scale.
template <typename T>
struct ChannelAttention {
    int c = 0, r = 16;
    Linear<T> down, up;

    ChannelAttention() = default;
    ChannelAttention(int c_, int r_ = 16) : c(c_), r(r_) {
        if (c_ % r_ != 0)
            throw std::invalid_argument("channel_attention: channels " + std::to_string(c_) +
                                        " not divisible by reduction " + std::to_string(r_));
        down = Linear<T>(c_, c_ / r_);
        up = Linear<T>(c_ / r_, c_);
    }

    void init(std::mt19937_64& rng) {
        down.init(rng);
        up.init(rng);
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        auto gate = sigmoid(up.forward(silu(down.forward(global_avg_pool(x)))));
        return broadcast_mul_channels(x, gate);
    }

    void collect(const std::string& prefix, ParamList<T>& out) const {
        down.collect(prefix + ".down", out);
        up.collect(prefix + ".up", out);
    }
};

// ---------------------------------------------------------------------------
// Adam with bias correction

template <typename T>
struct Adam {
    T lr = T(2e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    int64_t t = 0;
    std::unordered_map<std::string, std::pair<std::vector<T>, std::vector<T>>> state;  // m, v

    void step(ParamList<T>& params) {
        ++t;
        const T bc1 = T(1) - std::pow(beta1, static_cast<T>(t));
        const T bc2 = T(1) - std::pow(beta2, static_cast<T>(t));
        for (auto& p : params) {
            if (!p.learnable) continue;
            auto& [m, v] = state[p.name];
            auto& val = p.tensor.data();
            auto& g = p.tensor.grad();
            if (m.size() != val.size()) {
                m.assign(val.size(), T(0));
                v.assign(val.size(), T(0));
            }
            for (size_t i = 0; i < val.size(); ++i) {
                m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
                v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
                const T mhat = m[i] / bc1;
                const T vhat = v[i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

}  // namespace lfm
