#pragma once

#include <algorithm>
#include <cmath>

#include "lfm/tensor.hpp"

#if defined(LFM_OPENMP)
#define LFM_OMP(directive) _Pragma(#directive)
#else
#define LFM_OMP(directive)
#endif

namespace lfm {

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& t, Shape new_shape) {
    if (shape_numel(new_shape) != t.size())
        throw std::invalid_argument("reshape: " + shape_str(t.shape()) + " -> " + shape_str(new_shape) +
                                    " changes element count");
    auto in = t;
    return make_result<T>(std::move(new_shape), t.data(), {t}, [in](TensorNode<T>& out) mutable {
        if (!in.requires_grad()) return;
        auto& g = in.grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
    });
}

namespace detail {

// Gather src permuted by axis order into a fresh row-major buffer.
template <typename T>
std::vector<T> permute_raw(const std::vector<T>& src, const Shape& in_shape, const std::vector<int>& order) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<int64_t> in_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    Shape out_shape(r);
    std::vector<int64_t> gather_stride(r);
    for (int i = 0; i < r; ++i) {
        out_shape[i] = in_shape[order[i]];
        gather_stride[i] = in_strides[order[i]];
    }
    std::vector<T> dst(src.size());
    std::vector<int> coord(r, 0);
    int64_t src_off = 0;
    const int64_t n = static_cast<int64_t>(src.size());
    for (int64_t o = 0; o < n; ++o) {
        dst[o] = src[src_off];
        for (int ax = r - 1; ax >= 0; --ax) {
            src_off += gather_stride[ax];
            if (++coord[ax] < out_shape[ax]) break;
            coord[ax] = 0;
            src_off -= gather_stride[ax] * out_shape[ax];
        }
    }
    return dst;
}

inline std::vector<int> inverse_order(const std::vector<int>& order) {
    std::vector<int> inv(order.size());
    for (size_t i = 0; i < order.size(); ++i) inv[order[i]] = static_cast<int>(i);
    return inv;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& t, const std::vector<int>& order) {
    const int r = t.rank();
    if (static_cast<int>(order.size()) != r) throw std::invalid_argument("permute: order rank mismatch");
    std::vector<char> used(r, 0);
    for (int a : order) {
        if (a < 0 || a >= r || used[a]) throw std::invalid_argument("permute: order is not a permutation");
        used[a] = 1;
    }
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = t.dim(order[i]);
    auto value = detail::permute_raw(t.data(), t.shape(), order);
    auto in = t;
    auto inv = detail::inverse_order(order);
    Shape saved_out = out_shape;
    return make_result<T>(std::move(out_shape), std::move(value), {t},
                          [in, inv, saved_out](TensorNode<T>& out) mutable {
                              if (!in.requires_grad()) return;
                              auto gi = detail::permute_raw(out.grad, saved_out, inv);
                              auto& g = in.grad();
                              for (size_t i = 0; i < g.size(); ++i) g[i] += gi[i];
                          });
}

// ---------------------------------------------------------------------------
// elementwise ops

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* who) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    std::vector<T> v(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] += bd[i];
    auto ca = a, cb = b;
    return make_result<T>(a.shape(), std::move(v), {a, b}, [ca, cb](TensorNode<T>& out) mutable {
        if (ca.requires_grad()) {
            auto& g = ca.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
        if (cb.requires_grad()) {
            auto& g = cb.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "sub");
    std::vector<T> v(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] -= bd[i];
    auto ca = a, cb = b;
    return make_result<T>(a.shape(), std::move(v), {a, b}, [ca, cb](TensorNode<T>& out) mutable {
        if (ca.requires_grad()) {
            auto& g = ca.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i];
        }
        if (cb.requires_grad()) {
            auto& g = cb.grad();
            for (size_t i = 0; i < g.size(); ++i) g[i] -= out.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    std::vector<T> v(a.data());
    const auto& bd = b.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] *= bd[i];
    auto ca = a, cb = b;
    return make_result<T>(a.shape(), std::move(v), {a, b}, [ca, cb](TensorNode<T>& out) mutable {
        if (ca.requires_grad()) {
            auto& g = ca.grad();
            const auto& bv = cb.data();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * bv[i];
        }
        if (cb.requires_grad()) {
            auto& g = cb.grad();
            const auto& av = ca.data();
            for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * av[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> v(a.data());
    for (auto& x : v) x *= s;
    auto ca = a;
    return make_result<T>(a.shape(), std::move(v), {a}, [ca, s](TensorNode<T>& out) mutable {
        if (!ca.requires_grad()) return;
        auto& g = ca.grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * s;
    });
}

// x[..., C] * s[C], s broadcast over all leading axes.
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
    const int c = x.dim(x.rank() - 1);
    if (s.rank() != 1 || s.dim(0) != c) throw std::invalid_argument("channel_scale: scale must be [C]");
    std::vector<T> v(x.data());
    const auto& sv = s.data();
    const int64_t rows = x.size() / c;
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) v[r * c + j] *= sv[j];
    auto cx = x, cs = s;
    return make_result<T>(x.shape(), std::move(v), {x, s}, [cx, cs, rows, c](TensorNode<T>& out) mutable {
        if (cx.requires_grad()) {
            auto& g = cx.grad();
            const auto& sv = cs.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) g[r * c + j] += out.grad[r * c + j] * sv[j];
        }
        if (cs.requires_grad()) {
            auto& g = cs.grad();
            const auto& xv = cx.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) g[j] += out.grad[r * c + j] * xv[r * c + j];
        }
    });
}

namespace detail {

template <typename T>
Tensor<T> unary_op(const Tensor<T>& x, std::vector<T> value, std::vector<T> dydx) {
    auto cx = x;
    auto deriv = std::make_shared<std::vector<T>>(std::move(dydx));
    return make_result<T>(x.shape(), std::move(value), {x}, [cx, deriv](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        auto& g = cx.grad();
        for (size_t i = 0; i < g.size(); ++i) g[i] += out.grad[i] * (*deriv)[i];
    });
}

}  // namespace detail

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> v(x.size()), d(x.size());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv[i]));
        v[i] = s;
        d[i] = s * (T(1) - s);
    }
    return detail::unary_op(x, std::move(v), std::move(d));
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    std::vector<T> v(x.size()), d(x.size());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-xv[i]));
        v[i] = xv[i] * s;
        d[i] = s * (T(1) + xv[i] * (T(1) - s));
    }
    return detail::unary_op(x, std::move(v), std::move(d));
}

template <typename T>
T softplus_scalar(T x) {
    // max(x,0) + log1p(exp(-|x|)) is overflow-safe on both tails
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
    std::vector<T> v(x.size()), d(x.size());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) {
        v[i] = softplus_scalar(xv[i]);
        d[i] = T(1) / (T(1) + std::exp(-xv[i]));
    }
    return detail::unary_op(x, std::move(v), std::move(d));
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    std::vector<T> v(x.size()), d(x.size());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) {
        const bool pos = xv[i] >= T(0);
        v[i] = pos ? xv[i] : slope * xv[i];
        d[i] = pos ? T(1) : slope;
    }
    return detail::unary_op(x, std::move(v), std::move(d));
}

// exp(-exp(x)) style helpers are composed from these two.
template <typename T>
Tensor<T> exp_op(const Tensor<T>& x) {
    std::vector<T> v(x.size());
    const auto& xv = x.data();
    for (size_t i = 0; i < v.size(); ++i) v[i] = std::exp(xv[i]);
    std::vector<T> d(v);
    return detail::unary_op(x, std::move(v), std::move(d));
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
    return scale(x, T(-1));
}

// ---------------------------------------------------------------------------
// reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    auto cx = x;
    return make_result<T>({1}, {s}, {x}, [cx](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        auto& g = cx.grad();
        for (auto& gi : g) gi += out.grad[0];
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.data()) s += v;
    const T inv = T(1) / static_cast<T>(x.size());
    auto cx = x;
    return make_result<T>({1}, {s * inv}, {x}, [cx, inv](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        auto& g = cx.grad();
        for (auto& gi : g) gi += out.grad[0] * inv;
    });
}

// Mean absolute error; the subgradient at exact ties is 0.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
    check_same_shape(pred, target, "l1_loss");
    const auto& pv = pred.data();
    const auto& tv = target.data();
    T s = 0;
    for (size_t i = 0; i < pv.size(); ++i) s += std::abs(pv[i] - tv[i]);
    const T inv = T(1) / static_cast<T>(pred.size());
    auto cp = pred, ct = target;
    return make_result<T>({1}, {s * inv}, {pred, target}, [cp, ct, inv](TensorNode<T>& out) mutable {
        const auto& pv = cp.data();
        const auto& tv = ct.data();
        const T g0 = out.grad[0] * inv;
        if (cp.requires_grad()) {
            auto& g = cp.grad();
            for (size_t i = 0; i < g.size(); ++i) {
                const T d = pv[i] - tv[i];
                g[i] += d > 0 ? g0 : (d < 0 ? -g0 : T(0));
            }
        }
        if (ct.requires_grad()) {
            auto& g = ct.grad();
            for (size_t i = 0; i < g.size(); ++i) {
                const T d = pv[i] - tv[i];
                g[i] -= d > 0 ? g0 : (d < 0 ? -g0 : T(0));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// linear: affine map on the last axis, leading axes broadcast

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = Tensor<T>()) {
    if (w.rank() != 2) throw std::invalid_argument("linear: weight must be [Cin,Cout]");
    const int cin = w.dim(0), cout = w.dim(1);
    if (x.dim(x.rank() - 1) != cin)
        throw std::invalid_argument("linear: inner dimension mismatch, input " + shape_str(x.shape()) +
                                    " weight " + shape_str(w.shape()));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != cout))
        throw std::invalid_argument("linear: bias must be [Cout]");

    const int64_t rows = x.size() / cin;
    Shape out_shape(x.shape());
    out_shape.back() = cout;
    std::vector<T> v(rows * cout);
    {
        const T* xp = x.ptr();
        const T* wp = w.ptr();
        const T* bp = b.defined() ? b.ptr() : nullptr;
        LFM_OMP(omp parallel for schedule(static))
        for (int64_t r = 0; r < rows; ++r) {
            T* o = v.data() + r * cout;
            if (bp)
                std::copy(bp, bp + cout, o);
            else
                std::fill(o, o + cout, T(0));
            const T* xr = xp + r * cin;
            for (int ci = 0; ci < cin; ++ci) {
                const T xv = xr[ci];
                if (xv == T(0)) continue;
                const T* wr = wp + static_cast<int64_t>(ci) * cout;
                for (int co = 0; co < cout; ++co) o[co] += xv * wr[co];
            }
        }
    }

    auto cx = x, cw = w, cb = b;
    return make_result<T>(std::move(out_shape), std::move(v), {x, w, b},
                          [cx, cw, cb, rows, cin, cout](TensorNode<T>& out) mutable {
                              const T* gp = out.grad.data();
                              if (cx.requires_grad()) {
                                  auto& gx = cx.grad();
                                  const T* wp = cw.ptr();
                                  LFM_OMP(omp parallel for schedule(static))
                                  for (int64_t r = 0; r < rows; ++r) {
                                      const T* gr = gp + r * cout;
                                      T* gxr = gx.data() + r * cin;
                                      for (int ci = 0; ci < cin; ++ci) {
                                          const T* wr = wp + static_cast<int64_t>(ci) * cout;
                                          T acc = 0;
                                          for (int co = 0; co < cout; ++co) acc += gr[co] * wr[co];
                                          gxr[ci] += acc;
                                      }
                                  }
                              }
                              if (cw.requires_grad()) {
                                  auto& gw = cw.grad();
                                  const T* xp = cx.ptr();
                                  LFM_OMP(omp parallel for schedule(static))
                                  for (int ci = 0; ci < cin; ++ci) {
                                      T* gwr = gw.data() + static_cast<int64_t>(ci) * cout;
                                      for (int64_t r = 0; r < rows; ++r) {
                                          const T xv = xp[r * cin + ci];
                                          if (xv == T(0)) continue;
                                          const T* gr = gp + r * cout;
                                          for (int co = 0; co < cout; ++co) gwr[co] += xv * gr[co];
                                      }
                                  }
                              }
                              if (cb.defined() && cb.requires_grad()) {
                                  auto& gb = cb.grad();
                                  for (int64_t r = 0; r < rows; ++r) {
                                      const T* gr = gp + r * cout;
                                      for (int co = 0; co < cout; ++co) gb[co] += gr[co];
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// convolutions (channel-last, cross-correlation)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = Tensor<T>(), int stride = 1,
                 int pad = 0) {
    if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be [B,H,W,Cin]");
    if (w.rank() != 4) throw std::invalid_argument("conv2d: weight must be [kh,kw,Cin,Cout]");
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), Ci = x.dim(3);
    const int kh = w.dim(0), kw = w.dim(1), Co = w.dim(3);
    if (w.dim(2) != Ci)
        throw std::invalid_argument("conv2d: channel mismatch, input Cin=" + std::to_string(Ci) +
                                    " weight Cin=" + std::to_string(w.dim(2)));
    if (b.defined() && (b.rank() != 1 || b.dim(0) != Co)) throw std::invalid_argument("conv2d: bias must be [Cout]");
    if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/padding");
    if (H + 2 * pad < kh || W + 2 * pad < kw)
        throw std::invalid_argument("conv2d: kernel does not fit padded input");
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;

    std::vector<T> v(static_cast<int64_t>(B) * Ho * Wo * Co);
    {
        const T* xp = x.ptr();
        const T* wp = w.ptr();
        const T* bp = b.defined() ? b.ptr() : nullptr;
        LFM_OMP(omp parallel for schedule(static) collapse(2))
        for (int bb = 0; bb < B; ++bb)
            for (int oh = 0; oh < Ho; ++oh) {
                T* orow = v.data() + ((static_cast<int64_t>(bb) * Ho + oh) * Wo) * Co;
                for (int ow = 0; ow < Wo; ++ow) {
                    T* o = orow + static_cast<int64_t>(ow) * Co;
                    if (bp)
                        std::copy(bp, bp + Co, o);
                    else
                        std::fill(o, o + Co, T(0));
                    for (int dy = 0; dy < kh; ++dy) {
                        const int ih = oh * stride + dy - pad;
                        if (ih < 0 || ih >= H) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int iw = ow * stride + dx - pad;
                            if (iw < 0 || iw >= W) continue;
                            const T* xr = xp + ((static_cast<int64_t>(bb) * H + ih) * W + iw) * Ci;
                            const T* wr = wp + (static_cast<int64_t>(dy) * kw + dx) * Ci * Co;
                            for (int ci = 0; ci < Ci; ++ci) {
                                const T xv = xr[ci];
                                if (xv == T(0)) continue;
                                const T* wc = wr + static_cast<int64_t>(ci) * Co;
                                for (int co = 0; co < Co; ++co) o[co] += xv * wc[co];
                            }
                        }
                    }
                }
            }
    }

    auto cx = x, cw = w, cb = b;
    return make_result<T>({B, Ho, Wo, Co}, std::move(v), {x, w, b},
                          [cx, cw, cb, B, H, W, Ci, kh, kw, Co, Ho, Wo, stride, pad](TensorNode<T>& out) mutable {
                              const T* gp = out.grad.data();
                              if (cx.requires_grad()) {
                                  auto& gx = cx.grad();
                                  const T* wp = cw.ptr();
                                  LFM_OMP(omp parallel for schedule(static))
                                  for (int bb = 0; bb < B; ++bb)
                                      for (int oh = 0; oh < Ho; ++oh)
                                          for (int ow = 0; ow < Wo; ++ow) {
                                              const T* gr =
                                                  gp + ((static_cast<int64_t>(bb) * Ho + oh) * Wo + ow) * Co;
                                              for (int dy = 0; dy < kh; ++dy) {
                                                  const int ih = oh * stride + dy - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  for (int dx = 0; dx < kw; ++dx) {
                                                      const int iw = ow * stride + dx - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      T* gxr =
                                                          gx.data() +
                                                          ((static_cast<int64_t>(bb) * H + ih) * W + iw) * Ci;
                                                      const T* wr =
                                                          wp + (static_cast<int64_t>(dy) * kw + dx) * Ci * Co;
                                                      for (int ci = 0; ci < Ci; ++ci) {
                                                          const T* wc = wr + static_cast<int64_t>(ci) * Co;
                                                          T acc = 0;
                                                          for (int co = 0; co < Co; ++co) acc += gr[co] * wc[co];
                                                          gxr[ci] += acc;
                                                      }
                                                  }
                                              }
                                          }
                              }
                              if (cw.requires_grad()) {
                                  auto& gw = cw.grad();
                                  const T* xp = cx.ptr();
                                  LFM_OMP(omp parallel for schedule(static) collapse(2))
                                  for (int dy = 0; dy < kh; ++dy)
                                      for (int dx = 0; dx < kw; ++dx)
                                          for (int bb = 0; bb < B; ++bb)
                                              for (int oh = 0; oh < Ho; ++oh) {
                                                  const int ih = oh * stride + dy - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  for (int ow = 0; ow < Wo; ++ow) {
                                                      const int iw = ow * stride + dx - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      const T* xr =
                                                          xp + ((static_cast<int64_t>(bb) * H + ih) * W + iw) * Ci;
                                                      const T* gr =
                                                          gp +
                                                          ((static_cast<int64_t>(bb) * Ho + oh) * Wo + ow) * Co;
                                                      T* gwr = gw.data() +
                                                               (static_cast<int64_t>(dy) * kw + dx) * Ci * Co;
                                                      for (int ci = 0; ci < Ci; ++ci) {
                                                          const T xv = xr[ci];
                                                          if (xv == T(0)) continue;
                                                          T* gwc = gwr + static_cast<int64_t>(ci) * Co;
                                                          for (int co = 0; co < Co; ++co) gwc[co] += xv * gr[co];
                                                      }
                                                  }
                                              }
                              }
                              if (cb.defined() && cb.requires_grad()) {
                                  auto& gb = cb.grad();
                                  const int64_t n = static_cast<int64_t>(B) * Ho * Wo;
                                  for (int64_t r = 0; r < n; ++r)
                                      for (int co = 0; co < Co; ++co) gb[co] += gp[r * Co + co];
                              }
                          });
}

// One kernel per channel; channel c of the output depends only on channel c
// of the input.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = Tensor<T>(),
                           int pad = -1) {
    if (x.rank() != 4) throw std::invalid_argument("depthwise_conv2d: input must be [B,H,W,C]");
    if (w.rank() != 3) throw std::invalid_argument("depthwise_conv2d: weight must be [kh,kw,C]");
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const int kh = w.dim(0), kw = w.dim(1);
    if (w.dim(2) != C) throw std::invalid_argument("depthwise_conv2d: channel mismatch");
    if (b.defined() && (b.rank() != 1 || b.dim(0) != C))
        throw std::invalid_argument("depthwise_conv2d: bias must be [C]");
    if (pad < 0) pad = kh / 2;
    if (H + 2 * pad < kh || W + 2 * pad < kw)
        throw std::invalid_argument("depthwise_conv2d: kernel does not fit padded input");
    const int Ho = H + 2 * pad - kh + 1;
    const int Wo = W + 2 * pad - kw + 1;

    std::vector<T> v(static_cast<int64_t>(B) * Ho * Wo * C);
    {
        const T* xp = x.ptr();
        const T* wp = w.ptr();
        const T* bp = b.defined() ? b.ptr() : nullptr;
        LFM_OMP(omp parallel for schedule(static) collapse(2))
        for (int bb = 0; bb < B; ++bb)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T* o = v.data() + ((static_cast<int64_t>(bb) * Ho + oh) * Wo + ow) * C;
                    if (bp)
                        std::copy(bp, bp + C, o);
                    else
                        std::fill(o, o + C, T(0));
                    for (int dy = 0; dy < kh; ++dy) {
                        const int ih = oh + dy - pad;
                        if (ih < 0 || ih >= H) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int iw = ow + dx - pad;
                            if (iw < 0 || iw >= W) continue;
                            const T* xr = xp + ((static_cast<int64_t>(bb) * H + ih) * W + iw) * C;
                            const T* wr = wp + (static_cast<int64_t>(dy) * kw + dx) * C;
                            for (int c = 0; c < C; ++c) o[c] += xr[c] * wr[c];
                        }
                    }
                }
    }

    auto cx = x, cw = w, cb = b;
    return make_result<T>({B, Ho, Wo, C}, std::move(v), {x, w, b},
                          [cx, cw, cb, B, H, W, C, kh, kw, Ho, Wo, pad](TensorNode<T>& out) mutable {
                              const T* gp = out.grad.data();
                              if (cx.requires_grad()) {
                                  auto& gx = cx.grad();
                                  const T* wp = cw.ptr();
                                  LFM_OMP(omp parallel for schedule(static))
                                  for (int bb = 0; bb < B; ++bb)
                                      for (int oh = 0; oh < Ho; ++oh)
                                          for (int ow = 0; ow < Wo; ++ow) {
                                              const T* gr =
                                                  gp + ((static_cast<int64_t>(bb) * Ho + oh) * Wo + ow) * C;
                                              for (int dy = 0; dy < kh; ++dy) {
                                                  const int ih = oh + dy - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  for (int dx = 0; dx < kw; ++dx) {
                                                      const int iw = ow + dx - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      T* gxr = gx.data() +
                                                               ((static_cast<int64_t>(bb) * H + ih) * W + iw) * C;
                                                      const T* wr =
                                                          wp + (static_cast<int64_t>(dy) * kw + dx) * C;
                                                      for (int c = 0; c < C; ++c) gxr[c] += gr[c] * wr[c];
                                                  }
                                              }
                                          }
                              }
                              if (cw.requires_grad()) {
                                  auto& gw = cw.grad();
                                  const T* xp = cx.ptr();
                                  for (int dy = 0; dy < kh; ++dy)
                                      for (int dx = 0; dx < kw; ++dx) {
                                          T* gwr = gw.data() + (static_cast<int64_t>(dy) * kw + dx) * C;
                                          for (int bb = 0; bb < B; ++bb)
                                              for (int oh = 0; oh < Ho; ++oh) {
                                                  const int ih = oh + dy - pad;
                                                  if (ih < 0 || ih >= H) continue;
                                                  for (int ow = 0; ow < Wo; ++ow) {
                                                      const int iw = ow + dx - pad;
                                                      if (iw < 0 || iw >= W) continue;
                                                      const T* xr =
                                                          xp + ((static_cast<int64_t>(bb) * H + ih) * W + iw) * C;
                                                      const T* gr =
                                                          gp + ((static_cast<int64_t>(bb) * Ho + oh) * Wo + ow) * C;
                                                      for (int c = 0; c < C; ++c) gwr[c] += xr[c] * gr[c];
                                                  }
                                              }
                                      }
                              }
                              if (cb.defined() && cb.requires_grad()) {
                                  auto& gb = cb.grad();
                                  const int64_t n = static_cast<int64_t>(B) * Ho * Wo;
                                  for (int64_t r = 0; r < n; ++r)
                                      for (int c = 0; c < C; ++c) gb[c] += gp[r * C + c];
                              }
                          });
}

// ---------------------------------------------------------------------------
// layer norm over the channel (last) axis

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-6)) {
    const int c = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw std::invalid_argument("layer_norm: gamma/beta must be [C]");
    const int64_t rows = x.size() / c;

    std::vector<T> v(x.size());
    auto stats = std::make_shared<std::vector<T>>(rows * 2);  // (mean, inv_std) per row
    {
        const T* xp = x.ptr();
        const T* gp = gamma.ptr();
        const T* bp = beta.ptr();
        LFM_OMP(omp parallel for schedule(static))
        for (int64_t r = 0; r < rows; ++r) {
            const T* xr = xp + r * c;
            T mean = 0;
            for (int j = 0; j < c; ++j) mean += xr[j];
            mean /= static_cast<T>(c);
            T var = 0;
            for (int j = 0; j < c; ++j) {
                const T d = xr[j] - mean;
                var += d * d;
            }
            var /= static_cast<T>(c);
            const T inv = T(1) / std::sqrt(var + eps);
            (*stats)[2 * r] = mean;
            (*stats)[2 * r + 1] = inv;
            T* o = v.data() + r * c;
            for (int j = 0; j < c; ++j) o[j] = gp[j] * ((xr[j] - mean) * inv) + bp[j];
        }
    }

    auto cx = x, cg = gamma, cb = beta;
    return make_result<T>(x.shape(), std::move(v), {x, gamma, beta},
                          [cx, cg, cb, stats, rows, c](TensorNode<T>& out) mutable {
                              const T* gp = out.grad.data();
                              const T* xp = cx.ptr();
                              const T* gam = cg.ptr();
                              const bool need_x = cx.requires_grad();
                              if (need_x) {
                                  auto& gx = cx.grad();
                                  LFM_OMP(omp parallel for schedule(static))
                                  for (int64_t r = 0; r < rows; ++r) {
                                      const T mean = (*stats)[2 * r];
                                      const T inv = (*stats)[2 * r + 1];
                                      const T* xr = xp + r * c;
                                      const T* gr = gp + r * c;
                                      T sum_dxhat = 0, sum_dxhat_xhat = 0;
                                      for (int j = 0; j < c; ++j) {
                                          const T xhat = (xr[j] - mean) * inv;
                                          const T dxhat = gr[j] * gam[j];
                                          sum_dxhat += dxhat;
                                          sum_dxhat_xhat += dxhat * xhat;
                                      }
                                      T* gxr = gx.data() + r * c;
                                      const T invc = T(1) / static_cast<T>(c);
                                      for (int j = 0; j < c; ++j) {
                                          const T xhat = (xr[j] - mean) * inv;
                                          const T dxhat = gr[j] * gam[j];
                                          gxr[j] += inv * (dxhat - invc * sum_dxhat - xhat * invc * sum_dxhat_xhat);
                                      }
                                  }
                              }
                              if (cg.requires_grad() || cb.requires_grad()) {
                                  auto& gg = cg.grad();
                                  auto& gb = cb.grad();
                                  for (int64_t r = 0; r < rows; ++r) {
                                      const T mean = (*stats)[2 * r];
                                      const T inv = (*stats)[2 * r + 1];
                                      const T* xr = xp + r * c;
                                      const T* gr = gp + r * c;
                                      for (int j = 0; j < c; ++j) {
                                          if (cg.requires_grad()) gg[j] += gr[j] * ((xr[j] - mean) * inv);
                                          if (cb.requires_grad()) gb[j] += gr[j];
                                      }
                                  }
                              }
                          });
}

// ---------------------------------------------------------------------------
// pixel shuffle (depth to space) and its inverse

namespace detail {

// out[b, h*r+i, w*r+j, c] = in[b, h, w, c*r*r + i*r + j]
template <typename T>
void pixel_shuffle_map(const T* in, T* out, int B, int H, int W, int Cout, int r, bool forward) {
    const int Cin = Cout * r * r;
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                const int64_t in_base = ((static_cast<int64_t>(b) * H + h) * W + w) * Cin;
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j) {
                        const int64_t out_base =
                            ((static_cast<int64_t>(b) * (H * r) + (h * r + i)) * (W * r) + (w * r + j)) * Cout;
                        for (int c = 0; c < Cout; ++c) {
                            const int64_t src = in_base + static_cast<int64_t>(c) * r * r + i * r + j;
                            const int64_t dst = out_base + c;
                            // accumulating keeps the same routine usable as the adjoint
                            if (forward)
                                out[dst] += in[src];
                            else
                                out[src] += in[dst];
                        }
                    }
            }
}

}  // namespace detail

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
    if (x.rank() != 4) throw std::invalid_argument("pixel_shuffle: input must be [B,H,W,C]");
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (r < 1 || C % (r * r) != 0)
        throw std::invalid_argument("pixel_shuffle: channels " + std::to_string(C) + " not divisible by r^2");
    const int Cout = C / (r * r);
    std::vector<T> v(x.size());
    detail::pixel_shuffle_map(x.ptr(), v.data(), B, H, W, Cout, r, true);
    auto cx = x;
    return make_result<T>({B, H * r, W * r, Cout}, std::move(v), {x},
                          [cx, B, H, W, Cout, r](TensorNode<T>& out) mutable {
                              if (!cx.requires_grad()) return;
                              detail::pixel_shuffle_map(out.grad.data(), cx.grad().data(), B, H, W, Cout, r, false);
                          });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
    if (x.rank() != 4) throw std::invalid_argument("pixel_unshuffle: input must be [B,H,W,C]");
    const int B = x.dim(0), Hr = x.dim(1), Wr = x.dim(2), C = x.dim(3);
    if (r < 1 || Hr % r != 0 || Wr % r != 0)
        throw std::invalid_argument("pixel_unshuffle: spatial extents not divisible by r");
    const int H = Hr / r, W = Wr / r;
    std::vector<T> v(x.size(), T(0));
    // inverse of the forward map: scatter formulation with roles swapped
    {
        const T* in = x.ptr();
        T* out = v.data();
        const int Cout = C;
        const int Cin = C * r * r;
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    const int64_t out_base = ((static_cast<int64_t>(b) * H + h) * W + w) * Cin;
                    for (int i = 0; i < r; ++i)
                        for (int j = 0; j < r; ++j) {
                            const int64_t in_base =
                                ((static_cast<int64_t>(b) * Hr + (h * r + i)) * Wr + (w * r + j)) * Cout;
                            for (int c = 0; c < Cout; ++c)
                                out[out_base + static_cast<int64_t>(c) * r * r + i * r + j] = in[in_base + c];
                        }
                }
    }
    auto cx = x;
    const int Cout2 = C * r * r;
    return make_result<T>({B, H, W, Cout2}, std::move(v), {x}, [cx, B, H, W, C, r](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        // adjoint of unshuffle is shuffle applied to the gradient
        detail::pixel_shuffle_map(out.grad.data(), cx.grad().data(), B, H, W, C, r, true);
    });
}

// ---------------------------------------------------------------------------
// pooling / channel gating used by channel attention

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    if (x.rank() != 4) throw std::invalid_argument("global_avg_pool: input must be [B,H,W,C]");
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    const T inv = T(1) / static_cast<T>(H * W);
    std::vector<T> v(static_cast<int64_t>(B) * C, T(0));
    const T* xp = x.ptr();
    for (int b = 0; b < B; ++b) {
        T* o = v.data() + static_cast<int64_t>(b) * C;
        const T* xr = xp + static_cast<int64_t>(b) * H * W * C;
        for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p)
            for (int c = 0; c < C; ++c) o[c] += xr[p * C + c];
        for (int c = 0; c < C; ++c) o[c] *= inv;
    }
    auto cx = x;
    return make_result<T>({B, C}, std::move(v), {x}, [cx, B, H, W, C, inv](TensorNode<T>& out) mutable {
        if (!cx.requires_grad()) return;
        auto& gx = cx.grad();
        for (int b = 0; b < B; ++b) {
            const T* gr = out.grad.data() + static_cast<int64_t>(b) * C;
            T* gxr = gx.data() + static_cast<int64_t>(b) * H * W * C;
            for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p)
                for (int c = 0; c < C; ++c) gxr[p * C + c] += gr[c] * inv;
        }
    });
}

// x[B,H,W,C] * gate[B,C] with the gate broadcast over H,W.
template <typename T>
Tensor<T> broadcast_mul_channels(const Tensor<T>& x, const Tensor<T>& gate) {
    if (x.rank() != 4 || gate.rank() != 2) throw std::invalid_argument("broadcast_mul_channels: bad ranks");
    const int B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
    if (gate.dim(0) != B || gate.dim(1) != C)
        throw std::invalid_argument("broadcast_mul_channels: gate must be [B,C]");
    std::vector<T> v(x.data());
    const T* gp = gate.ptr();
    for (int b = 0; b < B; ++b) {
        const T* gr = gp + static_cast<int64_t>(b) * C;
        T* o = v.data() + static_cast<int64_t>(b) * H * W * C;
        for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p)
            for (int c = 0; c < C; ++c) o[p * C + c] *= gr[c];
    }
    auto cx = x, cg = gate;
    return make_result<T>(x.shape(), std::move(v), {x, gate}, [cx, cg, B, H, W, C](TensorNode<T>& out) mutable {
        const int64_t hw = static_cast<int64_t>(H) * W;
        if (cx.requires_grad()) {
            auto& gx = cx.grad();
            for (int b = 0; b < B; ++b) {
                const T* gr = cg.ptr() + static_cast<int64_t>(b) * C;
                const T* go = out.grad.data() + static_cast<int64_t>(b) * hw * C;
                T* gxr = gx.data() + static_cast<int64_t>(b) * hw * C;
                for (int64_t p = 0; p < hw; ++p)
                    for (int c = 0; c < C; ++c) gxr[p * C + c] += go[p * C + c] * gr[c];
            }
        }
        if (cg.requires_grad()) {
            auto& gg = cg.grad();
            for (int b = 0; b < B; ++b) {
                const T* xr = cx.ptr() + static_cast<int64_t>(b) * hw * C;
                const T* go = out.grad.data() + static_cast<int64_t>(b) * hw * C;
                T* ggr = gg.data() + static_cast<int64_t>(b) * C;
                for (int64_t p = 0; p < hw; ++p)
                    for (int c = 0; c < C; ++c) ggr[c] += go[p * C + c] * xr[p * C + c];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// channel concat / slice on the last axis

template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last: no inputs");
    Shape lead = parts[0].shape();
    lead.pop_back();
    int ctot = 0;
    std::vector<int> widths;
    for (const auto& p : parts) {
        Shape pl = p.shape();
        const int pc = pl.back();
        pl.pop_back();
        if (pl != lead) throw std::invalid_argument("concat_last: leading shape mismatch");
        widths.push_back(pc);
        ctot += pc;
    }
    const int64_t rows = shape_numel(lead);
    std::vector<T> v(rows * ctot);
    {
        int off = 0;
        for (size_t i = 0; i < parts.size(); ++i) {
            const T* sp = parts[i].ptr();
            const int wdt = widths[i];
            for (int64_t r = 0; r < rows; ++r)
                std::copy(sp + r * wdt, sp + (r + 1) * wdt, v.data() + r * ctot + off);
            off += wdt;
        }
    }
    Shape out_shape = lead;
    out_shape.push_back(ctot);
    auto cparts = parts;
    return make_result<T>(std::move(out_shape), std::move(v), parts,
                          [cparts, widths, rows, ctot](TensorNode<T>& out) mutable {
                              int off = 0;
                              for (size_t i = 0; i < cparts.size(); ++i) {
                                  const int wdt = widths[i];
                                  if (cparts[i].requires_grad()) {
                                      auto& g = cparts[i].grad();
                                      for (int64_t r = 0; r < rows; ++r)
                                          for (int j = 0; j < wdt; ++j) g[r * wdt + j] += out.grad[r * ctot + off + j];
                                  }
                                  off += wdt;
                              }
                          });
}

template <typename T>
Tensor<T> slice_last(const Tensor<T>& t, int from, int to) {
    const int c = t.dim(t.rank() - 1);
    if (from < 0 || to > c || from >= to) throw std::invalid_argument("slice_last: bad range");
    const int wdt = to - from;
    const int64_t rows = t.size() / c;
    std::vector<T> v(rows * wdt);
    const T* sp = t.ptr();
    for (int64_t r = 0; r < rows; ++r) std::copy(sp + r * c + from, sp + r * c + to, v.data() + r * wdt);
    Shape out_shape = t.shape();
    out_shape.back() = wdt;
    auto ct = t;
    return make_result<T>(std::move(out_shape), std::move(v), {t},
                          [ct, from, wdt, rows, c](TensorNode<T>& out) mutable {
                              if (!ct.requires_grad()) return;
                              auto& g = ct.grad();
                              for (int64_t r = 0; r < rows; ++r)
                                  for (int j = 0; j < wdt; ++j) g[r * c + from + j] += out.grad[r * wdt + j];
                          });
}

}  // namespace lfm
