// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "winrest/error.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.same_shape(b), ErrorKind::shape, "metric needs matching shapes");
    double acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        acc += d * d;
    }
    return acc / double(a.numel());
}

/// Peak signal-to-noise ratio in dB for [0,1] images, averaged over all
/// pixels and channels. Identical inputs give +infinity.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

namespace metric_detail {

/// 11-tap Gaussian window, sigma 1.5, normalized to sum 1.
inline const std::array<double, 11>& ssim_window() {
    static const std::array<double, 11> w = [] {
        std::array<double, 11> k{};
        double sum = 0;
        for (int i = 0; i < 11; ++i) {
            const double d = double(i - 5);
            k[std::size_t(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[std::size_t(i)];
        }
        for (auto& v : k) v /= sum;
        return k;
    }();
    return w;
}

/// Separable valid-mode 11x11 Gaussian filter of one channel plane.
inline std::vector<double> gaussian_valid(const std::vector<double>& plane, std::size_t h,
                                          std::size_t w) {
    const auto& g = ssim_window();
    const std::size_t wv = w - 10, hv = h - 10;
    std::vector<double> tmp(h * wv), out(hv * wv);
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < wv; ++c) {
            double acc = 0;
            for (std::size_t k = 0; k < 11; ++k) acc += g[k] * plane[r * w + c + k];
            tmp[r * wv + c] = acc;
        }
    for (std::size_t r = 0; r < hv; ++r)
        for (std::size_t c = 0; c < wv; ++c) {
            double acc = 0;
            for (std::size_t k = 0; k < 11; ++k) acc += g[k] * tmp[(r + k) * wv + c];
            out[r * wv + c] = acc;
        }
    return out;
}

}  // namespace metric_detail

/// Structural similarity with the canonical parameters: 11x11 Gaussian
/// window (sigma 1.5), K1=0.01, K2=0.03, dynamic range 1. Windowed means
/// and covariances are evaluated where the window fully fits, then averaged
/// over positions and channels.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.same_shape(b), ErrorKind::shape, "metric needs matching shapes");
    require(a.rank() == 3, ErrorKind::shape, "ssim expects HxWxC");
    const std::size_t h = a.height(), w = a.width(), c = a.channels();
    require(h >= 11 && w >= 11, ErrorKind::shape, "ssim needs at least 11x11 images");

    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const std::size_t hv = h - 10, wv = w - 10;

    double total = 0;
    std::vector<double> pa(h * w), pb(h * w), paa(h * w), pbb(h * w), pab(h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t p = 0; p < h * w; ++p) {
            const double va = double(a[p * c + ch]), vb = double(b[p * c + ch]);
            pa[p] = va;
            pb[p] = vb;
            paa[p] = va * va;
            pbb[p] = vb * vb;
            pab[p] = va * vb;
        }
        const auto ua = metric_detail::gaussian_valid(pa, h, w);
        const auto ub = metric_detail::gaussian_valid(pb, h, w);
        const auto uaa = metric_detail::gaussian_valid(paa, h, w);
        const auto ubb = metric_detail::gaussian_valid(pbb, h, w);
        const auto uab = metric_detail::gaussian_valid(pab, h, w);

        double acc = 0;
        for (std::size_t p = 0; p < hv * wv; ++p) {
            const double ma = ua[p], mb = ub[p];
            const double va = uaa[p] - ma * ma;
            const double vb = ubb[p] - mb * mb;
            const double cov = uab[p] - ma * mb;
            acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                   ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += acc / double(hv * wv);
    }
    return total / double(c);
}

}  // namespace winrest
