// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "winrest/error.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

/// A named learnable tensor plus its gradient accumulator.
template <typename T>
struct ParamTensor {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    void allocate(std::vector<std::size_t> dims) {
        value = Tensor<T>(dims);
        grad = Tensor<T>(std::move(dims));
    }

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamList = std::vector<ParamTensor<T>*>;

template <typename T>
std::size_t param_scalar_count(const ParamList<T>& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += p->value.numel();
    return n;
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
    for (auto* p : params) p->zero_grad();
}

template <typename T>
void init_trunc_normal(Tensor<T>& t, Rng& rng, double stddev = 0.02) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.truncated_normal(stddev));
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

template <typename T>
T gelu(T x) {
    // Exact erf form.
    const double xd = static_cast<double>(x);
    return static_cast<T>(0.5 * xd * (1.0 + std::erf(xd * 0.7071067811865475244)));
}

template <typename T>
T gelu_grad(T x) {
    const double xd = static_cast<double>(x);
    const double inv_sqrt2 = 0.7071067811865475244;
    const double inv_sqrt2pi = 0.3989422804014326779;
    const double cdf = 0.5 * (1.0 + std::erf(xd * inv_sqrt2));
    const double pdf = inv_sqrt2pi * std::exp(-0.5 * xd * xd);
    return static_cast<T>(cdf + xd * pdf);
}

template <typename T>
void gelu_inplace(Tensor<T>& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = gelu(t[i]);
}

template <typename T>
T leaky_relu(T x, T slope) {
    return x >= T(0) ? x : slope * x;
}

template <typename T>
T leaky_relu_grad(T x, T slope) {
    return x >= T(0) ? T(1) : slope;
}

// ---------------------------------------------------------------------------
// Padding helpers
// ---------------------------------------------------------------------------

enum class PadMode { zero, reflect };

/// Maps a possibly-out-of-range coordinate into [0, n) by mirror reflection
/// without edge repetition: -1 -> 1, n -> n-2.
inline std::ptrdiff_t reflect_index(std::ptrdiff_t q, std::ptrdiff_t n) {
    if (n == 1) return 0;
    while (q < 0 || q >= n) {
        if (q < 0) q = -q;
        if (q >= n) q = 2 * n - 2 - q;
    }
    return q;
}

// ---------------------------------------------------------------------------
// Conv2d: dense 2-D convolution over H x W x C feature maps.
// Weight layout: (kh*kw*cin) x cout, row index (ky*kw + kx)*cin + ci.
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
public:
    Conv2d() = default;

    Conv2d(std::size_t kernel, std::size_t cin, std::size_t cout, std::size_t stride = 1,
           PadMode pad_mode = PadMode::reflect)
        : kh_(kernel), kw_(kernel), cin_(cin), cout_(cout), stride_(stride), pad_mode_(pad_mode) {
        // Padding keeps spatial size for stride 1 and halves it for the
        // 4x4 stride-2 downsampling convolution.
        pad_ = (kernel - 1) / 2;
        if (kernel == 4 && stride == 2) pad_ = 1;
        weight_.allocate({kh_ * kw_ * cin_, cout_});
        bias_.allocate({cout_});
    }

    void init(Rng& rng, double stddev = 0.02) {
        init_trunc_normal(weight_.value, rng, stddev);
        bias_.value.fill(T(0));
    }

    void zero_init() {
        weight_.value.fill(T(0));
        bias_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        require(x.rank() == 3 && x.channels() == cin_, ErrorKind::shape,
                "conv2d expects HxWx", cin_, " input");
        const std::size_t h = x.height(), w = x.width();
        const std::size_t hp = h + 2 * pad_, wp = w + 2 * pad_;
        require(hp >= kh_ && wp >= kw_, ErrorKind::shape, "conv2d: input ", h, "x", w,
                " smaller than kernel ", kh_);
        // Floor division: a trailing partial stride step is dropped.
        const std::size_t ho = (hp - kh_) / stride_ + 1;
        const std::size_t wo = (wp - kw_) / stride_ + 1;

        Tensor<T> cols({ho * wo, kh_ * kw_ * cin_});
        im2col(x, cols, ho, wo);

        Tensor<T> out({ho, wo, cout_});
        as_matrix(out, ho * wo, cout_).noalias() =
            as_matrix(cols, ho * wo, kh_ * kw_ * cin_) * as_matrix(weight_.value, kh_ * kw_ * cin_, cout_);
        T* o = out.data();
        for (std::size_t p = 0; p < ho * wo; ++p) {
            for (std::size_t c = 0; c < cout_; ++c) o[p * cout_ + c] += bias_.value[c];
        }

        if (want_cache) {
            cache_cols_ = std::move(cols);
            cache_h_ = h;
            cache_w_ = w;
        }
        return out;
    }

    /// Accumulates parameter gradients (unless disabled) and returns the
    /// gradient with respect to the layer input. Must follow a cached forward.
    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        const std::size_t h = cache_h_, w = cache_w_;
        const std::size_t ho = grad_out.height(), wo = grad_out.width();
        const std::size_t kcols = kh_ * kw_ * cin_;

        if (accumulate_param_grads) {
            as_matrix(weight_.grad, kcols, cout_).noalias() +=
                as_matrix(cache_cols_, ho * wo, kcols).transpose() * as_matrix(grad_out, ho * wo, cout_);
            const T* g = grad_out.data();
            for (std::size_t p = 0; p < ho * wo; ++p) {
                for (std::size_t c = 0; c < cout_; ++c) bias_.grad[c] += g[p * cout_ + c];
            }
        }

        Tensor<T> dcols({ho * wo, kcols});
        as_matrix(dcols, ho * wo, kcols).noalias() =
            as_matrix(grad_out, ho * wo, cout_) * as_matrix(weight_.value, kcols, cout_).transpose();

        Tensor<T> dx({h, w, cin_});
        col2im_accumulate(dcols, dx, ho, wo);
        return dx;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        weight_.name = prefix + ".weight";
        bias_.name = prefix + ".bias";
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    ParamTensor<T>& weight() { return weight_; }
    ParamTensor<T>& bias() { return bias_; }
    const ParamTensor<T>& weight() const { return weight_; }
    const ParamTensor<T>& bias() const { return bias_; }
    std::size_t kernel() const { return kh_; }
    std::size_t stride() const { return stride_; }
    std::size_t pad() const { return pad_; }
    std::size_t in_channels() const { return cin_; }
    std::size_t out_channels() const { return cout_; }

private:
    void im2col(const Tensor<T>& x, Tensor<T>& cols, std::size_t ho, std::size_t wo) const {
        const std::size_t h = x.height(), w = x.width();
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(pad_);
        T* col = cols.data();
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                for (std::size_t ky = 0; ky < kh_; ++ky) {
                    const std::ptrdiff_t py = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - p;
                    for (std::size_t kx = 0; kx < kw_; ++kx) {
                        const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - p;
                        const bool inside = py >= 0 && py < std::ptrdiff_t(h) && px >= 0 && px < std::ptrdiff_t(w);
                        if (inside) {
                            const T* src = &x(std::size_t(py), std::size_t(px), 0);
                            for (std::size_t ci = 0; ci < cin_; ++ci) *col++ = src[ci];
                        } else if (pad_mode_ == PadMode::reflect) {
                            const std::size_t sy = std::size_t(reflect_index(py, std::ptrdiff_t(h)));
                            const std::size_t sx = std::size_t(reflect_index(px, std::ptrdiff_t(w)));
                            const T* src = &x(sy, sx, 0);
                            for (std::size_t ci = 0; ci < cin_; ++ci) *col++ = src[ci];
                        } else {
                            for (std::size_t ci = 0; ci < cin_; ++ci) *col++ = T(0);
                        }
                    }
                }
            }
        }
    }

    void col2im_accumulate(const Tensor<T>& dcols, Tensor<T>& dx, std::size_t ho, std::size_t wo) const {
        const std::size_t h = dx.height(), w = dx.width();
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(pad_);
        const T* col = dcols.data();
        for (std::size_t oy = 0; oy < ho; ++oy) {
            for (std::size_t ox = 0; ox < wo; ++ox) {
                for (std::size_t ky = 0; ky < kh_; ++ky) {
                    const std::ptrdiff_t py = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - p;
                    for (std::size_t kx = 0; kx < kw_; ++kx) {
                        const std::ptrdiff_t px = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - p;
                        const bool inside = py >= 0 && py < std::ptrdiff_t(h) && px >= 0 && px < std::ptrdiff_t(w);
                        if (inside) {
                            T* dst = &dx(std::size_t(py), std::size_t(px), 0);
                            for (std::size_t ci = 0; ci < cin_; ++ci) dst[ci] += col[ci];
                        } else if (pad_mode_ == PadMode::reflect) {
                            const std::size_t sy = std::size_t(reflect_index(py, std::ptrdiff_t(h)));
                            const std::size_t sx = std::size_t(reflect_index(px, std::ptrdiff_t(w)));
                            T* dst = &dx(sy, sx, 0);
                            for (std::size_t ci = 0; ci < cin_; ++ci) dst[ci] += col[ci];
                        }
                        col += cin_;
                    }
                }
            }
        }
    }

    std::size_t kh_ = 0, kw_ = 0, cin_ = 0, cout_ = 0, stride_ = 1, pad_ = 0;
    PadMode pad_mode_ = PadMode::reflect;
    ParamTensor<T> weight_;
    ParamTensor<T> bias_;

    mutable Tensor<T> cache_cols_;
    mutable std::size_t cache_h_ = 0, cache_w_ = 0;
};

// ---------------------------------------------------------------------------
// DepthwiseConv2d: k x k convolution applied per channel (no channel mixing).
// ---------------------------------------------------------------------------

template <typename T>
class DepthwiseConv2d {
public:
    DepthwiseConv2d() = default;

    DepthwiseConv2d(std::size_t kernel, std::size_t channels, PadMode pad_mode = PadMode::reflect)
        : k_(kernel), c_(channels), pad_((kernel - 1) / 2), pad_mode_(pad_mode) {
        weight_.allocate({k_, k_, c_});
        bias_.allocate({c_});
    }

    void init(Rng& rng, double stddev = 0.02) {
        init_trunc_normal(weight_.value, rng, stddev);
        bias_.value.fill(T(0));
    }

    /// Installs a fixed kernel replicated across channels (used for the
    /// Laplacian stencil in the edge loss).
    void set_fixed_kernel(const std::vector<T>& k2d) {
        require(k2d.size() == k_ * k_, ErrorKind::shape, "fixed kernel size mismatch");
        for (std::size_t ky = 0; ky < k_; ++ky)
            for (std::size_t kx = 0; kx < k_; ++kx)
                for (std::size_t c = 0; c < c_; ++c) weight_.value(ky, kx, c) = k2d[ky * k_ + kx];
        bias_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        require(x.rank() == 3 && x.channels() == c_, ErrorKind::shape,
                "depthwise conv expects HxWx", c_, " input");
        const std::size_t h = x.height(), w = x.width();
        Tensor<T> out({h, w, c_});
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(pad_);
        for (std::size_t oy = 0; oy < h; ++oy) {
            for (std::size_t ox = 0; ox < w; ++ox) {
                T* dst = &out(oy, ox, 0);
                for (std::size_t c = 0; c < c_; ++c) dst[c] = bias_.value[c];
                for (std::size_t ky = 0; ky < k_; ++ky) {
                    const std::ptrdiff_t py = std::ptrdiff_t(oy + ky) - p;
                    for (std::size_t kx = 0; kx < k_; ++kx) {
                        const std::ptrdiff_t px = std::ptrdiff_t(ox + kx) - p;
                        const T* src = source_ptr(x, py, px);
                        if (!src) continue;
                        const T* wk = &weight_.value(ky, kx, 0);
                        for (std::size_t c = 0; c < c_; ++c) dst[c] += wk[c] * src[c];
                    }
                }
            }
        }
        if (want_cache) cache_x_ = x;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        const Tensor<T>& x = cache_x_;
        const std::size_t h = x.height(), w = x.width();
        Tensor<T> dx({h, w, c_});
        const std::ptrdiff_t p = static_cast<std::ptrdiff_t>(pad_);
        for (std::size_t oy = 0; oy < h; ++oy) {
            for (std::size_t ox = 0; ox < w; ++ox) {
                const T* g = &grad_out(oy, ox, 0);
                if (accumulate_param_grads) {
                    for (std::size_t c = 0; c < c_; ++c) bias_.grad[c] += g[c];
                }
                for (std::size_t ky = 0; ky < k_; ++ky) {
                    const std::ptrdiff_t py = std::ptrdiff_t(oy + ky) - p;
                    for (std::size_t kx = 0; kx < k_; ++kx) {
                        const std::ptrdiff_t px = std::ptrdiff_t(ox + kx) - p;
                        const T* src = source_ptr(x, py, px);
                        if (!src) continue;
                        const std::size_t sy = std::size_t(pad_mode_ == PadMode::reflect
                                                               ? reflect_index(py, std::ptrdiff_t(h))
                                                               : py);
                        const std::size_t sx = std::size_t(pad_mode_ == PadMode::reflect
                                                               ? reflect_index(px, std::ptrdiff_t(w))
                                                               : px);
                        T* dxp = &dx(sy, sx, 0);
                        const T* wk = &weight_.value(ky, kx, 0);
                        T* wg = &weight_.grad(ky, kx, 0);
                        for (std::size_t c = 0; c < c_; ++c) {
                            if (accumulate_param_grads) wg[c] += g[c] * src[c];
                            dxp[c] += g[c] * wk[c];
                        }
                    }
                }
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        weight_.name = prefix + ".weight";
        bias_.name = prefix + ".bias";
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    std::size_t kernel() const { return k_; }
    std::size_t channels() const { return c_; }

private:
    const T* source_ptr(const Tensor<T>& x, std::ptrdiff_t py, std::ptrdiff_t px) const {
        const std::ptrdiff_t h = std::ptrdiff_t(x.height()), w = std::ptrdiff_t(x.width());
        if (py >= 0 && py < h && px >= 0 && px < w) return &x(std::size_t(py), std::size_t(px), 0);
        if (pad_mode_ == PadMode::zero) return nullptr;
        return &x(std::size_t(reflect_index(py, h)), std::size_t(reflect_index(px, w)), 0);
    }

    std::size_t k_ = 0, c_ = 0, pad_ = 0;
    PadMode pad_mode_ = PadMode::reflect;
    ParamTensor<T> weight_;
    ParamTensor<T> bias_;
    mutable Tensor<T> cache_x_;
};

// ---------------------------------------------------------------------------
// LayerNorm over the channel axis, per spatial location, learnable affine.
// ---------------------------------------------------------------------------

template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;

    explicit LayerNorm(std::size_t channels, double eps = 1e-5) : c_(channels), eps_(eps) {
        gamma_.allocate({c_});
        beta_.allocate({c_});
        gamma_.value.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        require(x.rank() == 3 && x.channels() == c_, ErrorKind::shape,
                "layernorm expects HxWx", c_, " input");
        const std::size_t n = x.height() * x.width();
        Tensor<T> out(x.dims());
        Tensor<T> xhat(x.dims());
        Tensor<T> inv_std({n});
        const T* in = x.data();
        T* o = out.data();
        T* xh = xhat.data();
        for (std::size_t p = 0; p < n; ++p) {
            const T* row = in + p * c_;
            double mean = 0;
            for (std::size_t c = 0; c < c_; ++c) mean += double(row[c]);
            mean /= double(c_);
            double var = 0;
            for (std::size_t c = 0; c < c_; ++c) {
                const double d = double(row[c]) - mean;
                var += d * d;
            }
            var /= double(c_);
            const double istd = 1.0 / std::sqrt(var + eps_);
            inv_std[p] = static_cast<T>(istd);
            for (std::size_t c = 0; c < c_; ++c) {
                const T norm = static_cast<T>((double(row[c]) - mean) * istd);
                xh[p * c_ + c] = norm;
                o[p * c_ + c] = norm * gamma_.value[c] + beta_.value[c];
            }
        }
        if (want_cache) {
            cache_xhat_ = std::move(xhat);
            cache_inv_std_ = std::move(inv_std);
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        const std::size_t n = cache_inv_std_.numel();
        Tensor<T> dx(grad_out.dims());
        const T* g = grad_out.data();
        const T* xh = cache_xhat_.data();
        T* dxp = dx.data();
        for (std::size_t p = 0; p < n; ++p) {
            double sum_gg = 0, sum_ggx = 0;
            for (std::size_t c = 0; c < c_; ++c) {
                const double gg = double(g[p * c_ + c]) * double(gamma_.value[c]);
                sum_gg += gg;
                sum_ggx += gg * double(xh[p * c_ + c]);
            }
            const double mean_gg = sum_gg / double(c_);
            const double mean_ggx = sum_ggx / double(c_);
            const double istd = double(cache_inv_std_[p]);
            for (std::size_t c = 0; c < c_; ++c) {
                const double gg = double(g[p * c_ + c]) * double(gamma_.value[c]);
                dxp[p * c_ + c] =
                    static_cast<T>(istd * (gg - mean_gg - double(xh[p * c_ + c]) * mean_ggx));
                if (accumulate_param_grads) {
                    gamma_.grad[c] += g[p * c_ + c] * xh[p * c_ + c];
                    beta_.grad[c] += g[p * c_ + c];
                }
            }
        }
        return dx;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        gamma_.name = prefix + ".gamma";
        beta_.name = prefix + ".beta";
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

    ParamTensor<T>& gamma() { return gamma_; }
    ParamTensor<T>& beta() { return beta_; }

private:
    std::size_t c_ = 0;
    double eps_ = 1e-5;
    ParamTensor<T> gamma_;
    ParamTensor<T> beta_;
    mutable Tensor<T> cache_xhat_;
    mutable Tensor<T> cache_inv_std_;
};

// ---------------------------------------------------------------------------
// Bilinear x2 upsampling (align_corners = false convention).
// ---------------------------------------------------------------------------

struct BilinearTap {
    std::size_t i0, i1;
    double w0, w1;
};

inline BilinearTap bilinear_tap(std::size_t out_index, std::size_t in_size) {
    const double src = (double(out_index) + 0.5) / 2.0 - 0.5;
    double floor_src = std::floor(src);
    double frac = src - floor_src;
    std::ptrdiff_t i0 = static_cast<std::ptrdiff_t>(floor_src);
    std::ptrdiff_t i1 = i0 + 1;
    if (i0 < 0) { i0 = 0; i1 = 0; frac = 0.0; }
    if (i1 >= std::ptrdiff_t(in_size)) { i1 = std::ptrdiff_t(in_size) - 1; i0 = i1; frac = 0.0; }
    return {std::size_t(i0), std::size_t(i1), 1.0 - frac, frac};
}

template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    Tensor<T> out({2 * h, 2 * w, c});
    for (std::size_t oy = 0; oy < 2 * h; ++oy) {
        const BilinearTap ty = bilinear_tap(oy, h);
        for (std::size_t ox = 0; ox < 2 * w; ++ox) {
            const BilinearTap tx = bilinear_tap(ox, w);
            T* dst = &out(oy, ox, 0);
            const T* s00 = &x(ty.i0, tx.i0, 0);
            const T* s01 = &x(ty.i0, tx.i1, 0);
            const T* s10 = &x(ty.i1, tx.i0, 0);
            const T* s11 = &x(ty.i1, tx.i1, 0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                dst[ch] = static_cast<T>(ty.w0 * (tx.w0 * double(s00[ch]) + tx.w1 * double(s01[ch])) +
                                         ty.w1 * (tx.w0 * double(s10[ch]) + tx.w1 * double(s11[ch])));
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> bilinear_upsample2x_backward(const Tensor<T>& grad_out, std::size_t h, std::size_t w) {
    const std::size_t c = grad_out.channels();
    Tensor<T> dx({h, w, c});
    for (std::size_t oy = 0; oy < 2 * h; ++oy) {
        const BilinearTap ty = bilinear_tap(oy, h);
        for (std::size_t ox = 0; ox < 2 * w; ++ox) {
            const BilinearTap tx = bilinear_tap(ox, w);
            const T* g = &grad_out(oy, ox, 0);
            T* d00 = &dx(ty.i0, tx.i0, 0);
            T* d01 = &dx(ty.i0, tx.i1, 0);
            T* d10 = &dx(ty.i1, tx.i0, 0);
            T* d11 = &dx(ty.i1, tx.i1, 0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double gv = double(g[ch]);
                d00[ch] += static_cast<T>(ty.w0 * tx.w0 * gv);
                d01[ch] += static_cast<T>(ty.w0 * tx.w1 * gv);
                d10[ch] += static_cast<T>(ty.w1 * tx.w0 * gv);
                d11[ch] += static_cast<T>(ty.w1 * tx.w1 * gv);
            }
        }
    }
    return dx;
}

}  // namespace winrest
