#pragma once

#include <limits>

#include "lfm/lightfield.hpp"

namespace lfm {

// 10*log10(peak^2 / MSE); identical inputs report the +inf sentinel.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape()) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0;
    const auto& av = a.data();
    const auto& bv = b.data();
    for (size_t i = 0; i < av.size(); ++i) {
        const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(av.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// Single-scale SSIM, 11x11 Gaussian window sigma 1.5, K1=0.01, K2=0.03,
// averaged over valid window positions (no padding). Grayscale input.
inline constexpr int kSsimWindow = 11;

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    if (a.shape() != b.shape()) throw std::invalid_argument("ssim: shape mismatch");
    if (a.rank() == 3 && a.dim(2) != 1) throw std::invalid_argument("ssim: grayscale input required");
    if (a.rank() != 2 && a.rank() != 3) throw std::invalid_argument("ssim: image must be [H,W(,1)]");
    const int h = a.dim(0), w = a.dim(1);
    if (h < kSsimWindow || w < kSsimWindow)
        throw std::domain_error("ssim: image smaller than the 11x11 window");

    double win[kSsimWindow][kSsimWindow];
    {
        const double sigma = 1.5;
        double norm = 0;
        for (int i = 0; i < kSsimWindow; ++i)
            for (int j = 0; j < kSsimWindow; ++j) {
                const double dy = i - kSsimWindow / 2, dx = j - kSsimWindow / 2;
                win[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
                norm += win[i][j];
            }
        for (auto& row : win)
            for (auto& v : row) v /= norm;
    }

    const double c1 = 0.01 * 0.01 * peak * peak;
    const double c2 = 0.03 * 0.03 * peak * peak;
    const T* ap = a.ptr();
    const T* bp = b.ptr();
    double total = 0;
    int64_t count = 0;
    LFM_OMP(omp parallel for schedule(static) reduction(+ : total, count))
    for (int y = 0; y <= h - kSsimWindow; ++y)
        for (int x = 0; x <= w - kSsimWindow; ++x) {
            double mx = 0, my = 0;
            for (int i = 0; i < kSsimWindow; ++i)
                for (int j = 0; j < kSsimWindow; ++j) {
                    mx += win[i][j] * static_cast<double>(ap[(y + i) * static_cast<int64_t>(w) + x + j]);
                    my += win[i][j] * static_cast<double>(bp[(y + i) * static_cast<int64_t>(w) + x + j]);
                }
            double vx = 0, vy = 0, cov = 0;
            for (int i = 0; i < kSsimWindow; ++i)
                for (int j = 0; j < kSsimWindow; ++j) {
                    const double dxv = static_cast<double>(ap[(y + i) * static_cast<int64_t>(w) + x + j]) - mx;
                    const double dyv = static_cast<double>(bp[(y + i) * static_cast<int64_t>(w) + x + j]) - my;
                    vx += win[i][j] * dxv * dxv;
                    vy += win[i][j] * dyv * dyv;
                    cov += win[i][j] * dxv * dyv;
                }
            total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

// Per-scene metric: average over the U*V sub-aperture images.
struct SceneMetrics {
    double psnr = 0;
    double ssim = 0;
    int views = 0;
};

template <typename T>
SceneMetrics scene_metrics(const LightField<T>& a, const LightField<T>& b, bool with_ssim = true) {
    if (a.data.shape() != b.data.shape()) throw std::invalid_argument("scene_metrics: extents differ");
    if (a.c() != 1) throw std::invalid_argument("scene_metrics: luma light fields required");
    SceneMetrics m;
    const int64_t view_len = static_cast<int64_t>(a.h()) * a.w();
    for (int uu = 0; uu < a.u(); ++uu)
        for (int vv = 0; vv < a.v(); ++vv) {
            const int64_t off = (static_cast<int64_t>(uu) * a.v() + vv) * view_len;
            Tensor<T> va(Shape{a.h(), a.w()}, std::vector<T>(a.data.ptr() + off, a.data.ptr() + off + view_len));
            Tensor<T> vb(Shape{a.h(), a.w()}, std::vector<T>(b.data.ptr() + off, b.data.ptr() + off + view_len));
            m.psnr += psnr(va, vb);
            if (with_ssim) m.ssim += ssim(va, vb);
            ++m.views;
        }
    m.psnr /= m.views;
    if (with_ssim) m.ssim /= m.views;
    return m;
}

// Dataset metric: scenes are averaged after their view averages (the
// aggregation order is part of the contract).
struct MetricReport {
    double psnr = 0;
    double ssim = 0;
    int scenes = 0;
};

inline MetricReport aggregate_scenes(const std::vector<SceneMetrics>& scenes) {
    MetricReport r;
    for (const auto& s : scenes) {
        r.psnr += s.psnr;
        r.ssim += s.ssim;
        ++r.scenes;
    }
    if (r.scenes) {
        r.psnr /= r.scenes;
        r.ssim /= r.scenes;
    }
    return r;
}

}  // namespace lfm
