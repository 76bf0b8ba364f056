#pragma once

#include <functional>

#include "lfm/ops.hpp"

namespace lfm {

// 4D light field L(u,v,h,w) with a trailing channel axis; images use C=1
// (luma) or C=3, network features use C=feature width. Storage is always the
// 5D row-major tensor [U,V,H,W,C].
template <typename T>
struct LightField {
    Tensor<T> data;

    LightField() = default;
    explicit LightField(Tensor<T> t) : data(std::move(t)) {
        if (data.rank() != 5) throw std::invalid_argument("LightField: tensor must be [U,V,H,W,C]");
    }
    LightField(int u, int v, int h, int w, int c = 1) : data(Shape{u, v, h, w, c}) {}

    int u() const { return data.dim(0); }
    int v() const { return data.dim(1); }
    int h() const { return data.dim(2); }
    int w() const { return data.dim(3); }
    int c() const { return data.dim(4); }

    T& at(int uu, int vv, int hh, int ww, int cc = 0) { return data.at({uu, vv, hh, ww, cc}); }
    T at(int uu, int vv, int hh, int ww, int cc = 0) const { return data.at({uu, vv, hh, ww, cc}); }
};

// ---------------------------------------------------------------------------
// slice forms; each is a value-preserving bijection implemented with
// reshape/permute so the network can differentiate through it

// [U,V,H,W,C] -> [U*V, H, W, C]
template <typename T>
Tensor<T> to_sai(const Tensor<T>& lf) {
    return reshape(lf, {lf.dim(0) * lf.dim(1), lf.dim(2), lf.dim(3), lf.dim(4)});
}

template <typename T>
Tensor<T> from_sai(const Tensor<T>& t, int u, int v) {
    if (t.dim(0) != u * v)
        throw std::invalid_argument("from_sai: batch " + std::to_string(t.dim(0)) + " != U*V");
    return reshape(t, {u, v, t.dim(1), t.dim(2), t.dim(3)});
}

// [U,V,H,W,C] -> [H*W, U, V, C]
template <typename T>
Tensor<T> to_macpi(const Tensor<T>& lf) {
    auto p = permute(lf, {2, 3, 0, 1, 4});
    return reshape(p, {lf.dim(2) * lf.dim(3), lf.dim(0), lf.dim(1), lf.dim(4)});
}

template <typename T>
Tensor<T> from_macpi(const Tensor<T>& t, int h, int w) {
    if (t.dim(0) != h * w)
        throw std::invalid_argument("from_macpi: batch " + std::to_string(t.dim(0)) + " != H*W");
    auto r = reshape(t, {h, w, t.dim(1), t.dim(2), t.dim(3)});
    return permute(r, {2, 3, 0, 1, 4});
}

// [U,V,H,W,C] -> [V*W, U, H, C], batch index v*W + w
template <typename T>
Tensor<T> to_epi_h(const Tensor<T>& lf) {
    auto p = permute(lf, {1, 3, 0, 2, 4});
    return reshape(p, {lf.dim(1) * lf.dim(3), lf.dim(0), lf.dim(2), lf.dim(4)});
}

template <typename T>
Tensor<T> from_epi_h(const Tensor<T>& t, int v, int w) {
    if (t.dim(0) != v * w)
        throw std::invalid_argument("from_epi_h: batch " + std::to_string(t.dim(0)) + " != V*W");
    auto r = reshape(t, {v, w, t.dim(1), t.dim(2), t.dim(3)});
    return permute(r, {2, 0, 3, 1, 4});
}

// [U,V,H,W,C] -> [U*H, V, W, C], batch index u*H + h
template <typename T>
Tensor<T> to_epi_v(const Tensor<T>& lf) {
    auto p = permute(lf, {0, 2, 1, 3, 4});
    return reshape(p, {lf.dim(0) * lf.dim(2), lf.dim(1), lf.dim(3), lf.dim(4)});
}

template <typename T>
Tensor<T> from_epi_v(const Tensor<T>& t, int u, int h) {
    if (t.dim(0) != u * h)
        throw std::invalid_argument("from_epi_v: batch " + std::to_string(t.dim(0)) + " != U*H");
    auto r = reshape(t, {u, h, t.dim(1), t.dim(2), t.dim(3)});
    return permute(r, {0, 2, 1, 3, 4});
}

enum class SliceKind { Sai, MacPi, EpiH, EpiV };

inline const char* slice_kind_name(SliceKind k) {
    switch (k) {
        case SliceKind::Sai: return "sai";
        case SliceKind::MacPi: return "macpi";
        case SliceKind::EpiH: return "epih";
        case SliceKind::EpiV: return "epiv";
    }
    return "?";
}

// Reshaped batch form plus the provenance needed to invert it.
template <typename T>
struct SliceView {
    SliceKind kind;
    Tensor<T> tensor;
    int u = 0, v = 0, h = 0, w = 0, c = 0;
};

template <typename T>
SliceView<T> make_slice(SliceKind kind, const LightField<T>& lf) {
    SliceView<T> s;
    s.kind = kind;
    s.u = lf.u();
    s.v = lf.v();
    s.h = lf.h();
    s.w = lf.w();
    s.c = lf.c();
    switch (kind) {
        case SliceKind::Sai: s.tensor = to_sai(lf.data); break;
        case SliceKind::MacPi: s.tensor = to_macpi(lf.data); break;
        case SliceKind::EpiH: s.tensor = to_epi_h(lf.data); break;
        case SliceKind::EpiV: s.tensor = to_epi_v(lf.data); break;
    }
    return s;
}

template <typename T>
LightField<T> invert_slice(const SliceView<T>& s) {
    const Shape& ts = s.tensor.shape();
    auto expect = [&](int b, int d1, int d2) {
        if (ts.size() != 4 || ts[0] != b || ts[1] != d1 || ts[2] != d2 || ts[3] != s.c)
            throw std::invalid_argument("invert_slice: tensor shape " + shape_str(ts) +
                                        " inconsistent with recorded provenance");
    };
    switch (s.kind) {
        case SliceKind::Sai:
            expect(s.u * s.v, s.h, s.w);
            return LightField<T>(from_sai(s.tensor, s.u, s.v));
        case SliceKind::MacPi:
            expect(s.h * s.w, s.u, s.v);
            return LightField<T>(from_macpi(s.tensor, s.h, s.w));
        case SliceKind::EpiH:
            expect(s.v * s.w, s.u, s.h);
            return LightField<T>(from_epi_h(s.tensor, s.v, s.w));
        case SliceKind::EpiV:
            expect(s.u * s.h, s.v, s.w);
            return LightField<T>(from_epi_v(s.tensor, s.u, s.h));
    }
    throw std::logic_error("invert_slice: bad kind");
}

// Interleaved display form: pixel (h*U+u, w*V+v) = lf(u,v,h,w). Single
// channel only.
template <typename T>
Tensor<T> macpi_image(const LightField<T>& lf) {
    if (lf.c() != 1) throw std::invalid_argument("macpi_image: single-channel light field required");
    auto p = permute(reshape(lf.data, {lf.u(), lf.v(), lf.h(), lf.w()}), {2, 0, 3, 1});
    return reshape(p, {lf.h() * lf.u(), lf.w() * lf.v()});
}

template <typename T>
LightField<T> macpi_image_inverse(const Tensor<T>& img, int u, int v) {
    if (img.rank() != 2 || img.dim(0) % u != 0 || img.dim(1) % v != 0)
        throw std::invalid_argument("macpi_image_inverse: image extents not divisible by angular extents");
    const int h = img.dim(0) / u, w = img.dim(1) / v;
    auto p = permute(reshape(img, {h, u, w, v}), {1, 3, 0, 2});
    return LightField<T>(reshape(p, {u, v, h, w, 1}));
}

// ---------------------------------------------------------------------------
// color (ITU-R BT.601 full range, values in [0,1], offset-0.5 chroma)

template <typename T>
Tensor<T> rgb_to_ycbcr(const Tensor<T>& img) {
    if (img.dim(img.rank() - 1) != 3) throw std::invalid_argument("rgb_to_ycbcr: last axis must be RGB");
    std::vector<T> v(img.data());
    for (size_t i = 0; i < v.size(); i += 3) {
        const T r = v[i], g = v[i + 1], b = v[i + 2];
        const T y = T(0.299) * r + T(0.587) * g + T(0.114) * b;
        const T cb = T(0.5) + T(0.564) * (b - y);
        const T cr = T(0.5) + T(0.713) * (r - y);
        v[i] = std::clamp(y, T(0), T(1));
        v[i + 1] = std::clamp(cb, T(0), T(1));
        v[i + 2] = std::clamp(cr, T(0), T(1));
    }
    return Tensor<T>(img.shape(), std::move(v));
}

template <typename T>
Tensor<T> ycbcr_to_rgb(const Tensor<T>& img) {
    if (img.dim(img.rank() - 1) != 3) throw std::invalid_argument("ycbcr_to_rgb: last axis must be YCbCr");
    std::vector<T> v(img.data());
    for (size_t i = 0; i < v.size(); i += 3) {
        const T y = v[i], cb = v[i + 1] - T(0.5), cr = v[i + 2] - T(0.5);
        const T r = y + cr / T(0.713);
        const T b = y + cb / T(0.564);
        const T g = (y - T(0.299) * r - T(0.114) * b) / T(0.587);
        v[i] = std::clamp(r, T(0), T(1));
        v[i + 1] = std::clamp(g, T(0), T(1));
        v[i + 2] = std::clamp(b, T(0), T(1));
    }
    return Tensor<T>(img.shape(), std::move(v));
}

// ---------------------------------------------------------------------------
// bicubic resampling (Keys kernel a = -0.5, pixel-center mapping, edge clamp)
//
// The 16 tap products of every output pixel are summed in canonical (sorted)
// order, which makes the resampler commute bit-exactly with the dihedral
// transforms used by the geometry ensemble.

namespace detail {

template <typename T>
inline T cubic_kernel(T d) {
    d = std::abs(d);
    if (d <= T(1)) return (T(1.5) * d - T(2.5)) * d * d + T(1);
    if (d < T(2)) return ((T(-0.5) * d + T(2.5)) * d - T(4)) * d + T(2);
    return T(0);
}

template <typename T>
struct CubicTaps {
    int idx[4];
    T w[4];
};

template <typename T>
inline CubicTaps<T> cubic_taps(int out_pos, int in_size, int out_size) {
    const T src = (static_cast<T>(out_pos) + T(0.5)) * (static_cast<T>(in_size) / static_cast<T>(out_size)) -
                  T(0.5);
    const int i0 = static_cast<int>(std::floor(src));
    const T t = src - static_cast<T>(i0);
    CubicTaps<T> taps;
    for (int j = 0; j < 4; ++j) {
        taps.idx[j] = std::clamp(i0 - 1 + j, 0, in_size - 1);
        taps.w[j] = cubic_kernel(t + T(1) - static_cast<T>(j));
    }
    return taps;
}

}  // namespace detail

// img: [H,W] or [H,W,C]
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, double alpha) {
    if (img.rank() != 2 && img.rank() != 3) throw std::invalid_argument("bicubic_resize: image must be [H,W(,C)]");
    const int h = img.dim(0), w = img.dim(1);
    const int c = img.rank() == 3 ? img.dim(2) : 1;
    const int oh = static_cast<int>(std::lround(h * alpha));
    const int ow = static_cast<int>(std::lround(w * alpha));
    if (oh < 1 || ow < 1) throw std::domain_error("bicubic_resize: output extent < 1");

    std::vector<detail::CubicTaps<T>> ty(oh), tx(ow);
    for (int y = 0; y < oh; ++y) ty[y] = detail::cubic_taps<T>(y, h, oh);
    for (int x = 0; x < ow; ++x) tx[x] = detail::cubic_taps<T>(x, w, ow);

    std::vector<T> out(static_cast<int64_t>(oh) * ow * c);
    const T* sp = img.ptr();
    LFM_OMP(omp parallel for schedule(static))
    for (int y = 0; y < oh; ++y) {
        T prod[16];
        for (int x = 0; x < ow; ++x)
            for (int ch = 0; ch < c; ++ch) {
                int m = 0;
                for (int j = 0; j < 4; ++j)
                    for (int i = 0; i < 4; ++i)
                        prod[m++] = ty[y].w[j] * tx[x].w[i] *
                                    sp[(static_cast<int64_t>(ty[y].idx[j]) * w + tx[x].idx[i]) * c + ch];
                std::sort(prod, prod + 16);
                T acc = 0;
                for (int i = 0; i < 16; ++i) acc += prod[i];
                out[(static_cast<int64_t>(y) * ow + x) * c + ch] = acc;
            }
    }
    Shape os = img.rank() == 3 ? Shape{oh, ow, c} : Shape{oh, ow};
    return Tensor<T>(std::move(os), std::move(out));
}

// Per-view spatial resize of all U*V sub-aperture images.
template <typename T>
LightField<T> bicubic_resize(const LightField<T>& lf, double alpha) {
    const int oh = static_cast<int>(std::lround(lf.h() * alpha));
    const int ow = static_cast<int>(std::lround(lf.w() * alpha));
    if (oh < 1 || ow < 1) throw std::domain_error("bicubic_resize: output extent < 1");
    LightField<T> out(lf.u(), lf.v(), oh, ow, lf.c());
    const int64_t view_in = static_cast<int64_t>(lf.h()) * lf.w() * lf.c();
    const int64_t view_out = static_cast<int64_t>(oh) * ow * lf.c();
    for (int uu = 0; uu < lf.u(); ++uu)
        for (int vv = 0; vv < lf.v(); ++vv) {
            const int64_t vi = (static_cast<int64_t>(uu) * lf.v() + vv);
            Tensor<T> view(Shape{lf.h(), lf.w(), lf.c()},
                           std::vector<T>(lf.data.ptr() + vi * view_in, lf.data.ptr() + (vi + 1) * view_in));
            auto r = bicubic_resize(view, alpha);
            std::copy(r.ptr(), r.ptr() + view_out, out.data.ptr() + vi * view_out);
        }
    return out;
}

// ---------------------------------------------------------------------------
// patching

// Crops every view at identical spatial windows; stride tiles the plane.
template <typename T>
std::vector<LightField<T>> extract_patches(const LightField<T>& lf, int spatial_size, int stride) {
    if (spatial_size < 1 || stride < 1) throw std::invalid_argument("extract_patches: bad size/stride");
    if (spatial_size > lf.h() || spatial_size > lf.w())
        throw std::invalid_argument("extract_patches: patch size exceeds spatial extents");
    std::vector<LightField<T>> out;
    for (int y = 0; y + spatial_size <= lf.h(); y += stride)
        for (int x = 0; x + spatial_size <= lf.w(); x += stride) {
            LightField<T> p(lf.u(), lf.v(), spatial_size, spatial_size, lf.c());
            for (int uu = 0; uu < lf.u(); ++uu)
                for (int vv = 0; vv < lf.v(); ++vv)
                    for (int hh = 0; hh < spatial_size; ++hh)
                        for (int ww = 0; ww < spatial_size; ++ww)
                            for (int cc = 0; cc < lf.c(); ++cc)
                                p.at(uu, vv, hh, ww, cc) = lf.at(uu, vv, y + hh, x + ww, cc);
            out.push_back(std::move(p));
        }
    return out;
}

// ---------------------------------------------------------------------------
// joint spatial-angular augmentation; transforms act on both planes so the
// epipolar line structure stays valid

enum class Augment { FlipH, FlipV, Rot90 };

namespace detail {

template <typename T, typename Fn>
LightField<T> remap_lf(const LightField<T>& in, int u2, int v2, int h2, int w2, Fn&& map) {
    LightField<T> out(u2, v2, h2, w2, in.c());
    for (int uu = 0; uu < u2; ++uu)
        for (int vv = 0; vv < v2; ++vv)
            for (int hh = 0; hh < h2; ++hh)
                for (int ww = 0; ww < w2; ++ww) {
                    auto [su, sv, sh, sw] = map(uu, vv, hh, ww);
                    for (int cc = 0; cc < in.c(); ++cc) out.at(uu, vv, hh, ww, cc) = in.at(su, sv, sh, sw, cc);
                }
    return out;
}

}  // namespace detail

template <typename T>
LightField<T> augment(const LightField<T>& lf, Augment op) {
    const int U = lf.u(), V = lf.v(), H = lf.h(), W = lf.w();
    switch (op) {
        case Augment::FlipH:  // reverse w and v
            return detail::remap_lf(lf, U, V, H, W, [&](int u, int v, int h, int w) {
                return std::tuple<int, int, int, int>{u, V - 1 - v, h, W - 1 - w};
            });
        case Augment::FlipV:  // reverse h and u
            return detail::remap_lf(lf, U, V, H, W, [&](int u, int v, int h, int w) {
                return std::tuple<int, int, int, int>{U - 1 - u, v, H - 1 - h, w};
            });
        case Augment::Rot90:  // counterclockwise quarter turn of both planes
            if (U != V) throw std::domain_error("augment: rot90 requires square angular extents");
            return detail::remap_lf(lf, V, U, W, H, [&](int u, int v, int h, int w) {
                return std::tuple<int, int, int, int>{v, V - 1 - u, w, W - 1 - h};
            });
    }
    throw std::logic_error("augment: bad op");
}

// ---------------------------------------------------------------------------
// 8-fold dihedral self-ensemble: transform, run, invert, average

template <typename T>
LightField<T> geometry_ensemble(const std::function<LightField<T>(const LightField<T>&)>& model,
                                const LightField<T>& lf) {
    if (lf.u() != lf.v()) throw std::domain_error("geometry_ensemble: square angular extents required");
    std::vector<Tensor<T>> outs;
    outs.reserve(8);
    for (int flip = 0; flip < 2; ++flip)
        for (int rot = 0; rot < 4; ++rot) {
            LightField<T> t = lf;
            if (flip) t = augment(t, Augment::FlipH);
            for (int r = 0; r < rot; ++r) t = augment(t, Augment::Rot90);
            LightField<T> y = model(t);
            for (int r = 0; r < (4 - rot) % 4; ++r) y = augment(y, Augment::Rot90);
            if (flip) y = augment(y, Augment::FlipH);
            outs.push_back(y.data);
        }
    // pairwise tree keeps the average exact when all members are identical
    for (size_t stride = 1; stride < 8; stride *= 2)
        for (size_t i = 0; i + stride < 8; i += 2 * stride) {
            auto& a = outs[i].data();
            const auto& b = outs[i + stride].data();
            if (a.size() != b.size())
                throw std::invalid_argument("geometry_ensemble: model output extents differ across transforms");
            for (size_t j = 0; j < a.size(); ++j) a[j] += b[j];
        }
    auto& acc = outs[0].data();
    for (auto& v : acc) v *= T(1) / T(8);
    return LightField<T>(outs[0]);
}

}  // namespace lfm
