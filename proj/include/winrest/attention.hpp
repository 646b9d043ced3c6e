// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "winrest/nn.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Window bookkeeping
// ---------------------------------------------------------------------------

/// (H, W, C) -> (N, L*L, C). Window wi = by*(W/L)+bx, token ti = iy*L+ix.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t l) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    require(l > 0 && h % l == 0 && w % l == 0, ErrorKind::shape,
            "window size ", l, " must divide ", h, "x", w);
    const std::size_t by_n = h / l, bx_n = w / l;
    Tensor<T> out({by_n * bx_n, l * l, c});
    for (std::size_t by = 0; by < by_n; ++by) {
        for (std::size_t bx = 0; bx < bx_n; ++bx) {
            const std::size_t wi = by * bx_n + bx;
            for (std::size_t iy = 0; iy < l; ++iy) {
                for (std::size_t ix = 0; ix < l; ++ix) {
                    const T* src = &x(by * l + iy, bx * l + ix, 0);
                    T* dst = &out(wi, iy * l + ix, 0);
                    for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
                }
            }
        }
    }
    return out;
}

/// Inverse of window_partition.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& wins, std::size_t h, std::size_t w) {
    const std::size_t c = wins.dim(2);
    const std::size_t l2 = wins.dim(1);
    const std::size_t l = static_cast<std::size_t>(std::llround(std::sqrt(double(l2))));
    require(l * l == l2 && h % l == 0 && w % l == 0, ErrorKind::shape, "window merge shape mismatch");
    require(wins.dim(0) == (h / l) * (w / l), ErrorKind::shape, "window count mismatch");
    const std::size_t bx_n = w / l;
    Tensor<T> out({h, w, c});
    for (std::size_t wi = 0; wi < wins.dim(0); ++wi) {
        const std::size_t by = wi / bx_n, bx = wi % bx_n;
        for (std::size_t iy = 0; iy < l; ++iy) {
            for (std::size_t ix = 0; ix < l; ++ix) {
                const T* src = &wins(wi, iy * l + ix, 0);
                T* dst = &out(by * l + iy, bx * l + ix, 0);
                for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
            }
        }
    }
    return out;
}

/// Torus roll: out(r, c) = x((r+shift) mod H, (c+shift) mod W).
/// Positive shift moves content toward the origin; negative undoes it.
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, std::ptrdiff_t shift) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    const std::size_t sy = std::size_t(((shift % std::ptrdiff_t(h)) + std::ptrdiff_t(h)) % std::ptrdiff_t(h));
    const std::size_t sx = std::size_t(((shift % std::ptrdiff_t(w)) + std::ptrdiff_t(w)) % std::ptrdiff_t(w));
    Tensor<T> out({h, w, c});
    for (std::size_t r = 0; r < h; ++r) {
        const std::size_t src_r = (r + sy) % h;
        for (std::size_t col = 0; col < w; ++col) {
            const std::size_t src_c = (col + sx) % w;
            const T* src = &x(src_r, src_c, 0);
            T* dst = &out(r, col, 0);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Operation cost accounting (multiply-accumulate counts)
// ---------------------------------------------------------------------------

/// Cost of one windowed multi-head self-attention pass:
/// N windows, each 4*L^2*C^2 for the Q/K/V/output projections plus
/// 2*L^4*C for the two attention matrix products. Head count cancels.
inline std::uint64_t wmsa_flops(std::size_t h, std::size_t w, std::size_t c, std::size_t l) {
    const std::uint64_t n = std::uint64_t(h / l) * std::uint64_t(w / l);
    const std::uint64_t l2 = std::uint64_t(l) * std::uint64_t(l);
    const std::uint64_t c64 = c;
    return n * (4 * l2 * c64 * c64 + 2 * l2 * l2 * c64);
}

/// Quadratic interaction term of dense whole-image self-attention at the same
/// resolution: 2*(HW)^2*C. The projection term is excluded so the count
/// scales exactly with the token count squared.
inline std::uint64_t dense_msa_flops_quadratic(std::size_t h, std::size_t w, std::size_t c) {
    const std::uint64_t hw = std::uint64_t(h) * std::uint64_t(w);
    return 2 * hw * hw * std::uint64_t(c);
}

// ---------------------------------------------------------------------------
// Windowed multi-head self-attention layer.
//
// Per window X (L^2 x C): Q = X Wq, K = X Wk, V = X Wv (no biases).
// Heads are contiguous column blocks of width C/k. Per head:
//   A = softmax(Q K^T / sqrt(C/k)), O = A V.
// Heads concatenate back to L^2 x C, then Y = O Wo + B where B (L^2 x C)
// is a learned per-token bias shared across windows, applied after the
// output projection.
// ---------------------------------------------------------------------------

template <typename T>
class WMsa {
public:
    WMsa() = default;

    WMsa(std::size_t channels, std::size_t heads, std::size_t window, std::size_t shift = 0,
         bool masked = false)
        : c_(channels), heads_(heads), l_(window), shift_(shift % window), masked_(masked) {
        require(heads_ > 0 && c_ % heads_ == 0, ErrorKind::config,
                "attention heads (", heads_, ") must divide channels (", c_, ")");
        wq_.allocate({c_, c_});
        wk_.allocate({c_, c_});
        wv_.allocate({c_, c_});
        wo_.allocate({c_, c_});
        b_.allocate({l_ * l_, c_});
    }

    void init(Rng& rng, double stddev = 0.02) {
        init_trunc_normal(wq_.value, rng, stddev);
        init_trunc_normal(wk_.value, rng, stddev);
        init_trunc_normal(wv_.value, rng, stddev);
        init_trunc_normal(wo_.value, rng, stddev);
        b_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        require(x.rank() == 3 && x.channels() == c_, ErrorKind::shape, "w-msa channel mismatch");
        const std::size_t h = x.height(), w = x.width();
        const std::size_t l2 = l_ * l_;
        const std::size_t d = c_ / heads_;
        const T scale = static_cast<T>(1.0 / std::sqrt(double(d)));

        Tensor<T> xw = shift_ ? window_partition(cyclic_shift(x, std::ptrdiff_t(shift_)), l_)
                              : window_partition(x, l_);
        const std::size_t n = xw.dim(0);

        Tensor<T> q({n, l2, c_}), k({n, l2, c_}), v({n, l2, c_}), o({n, l2, c_});
        Tensor<T> a({n * heads_, l2, l2});
        Tensor<T> yw({n, l2, c_});

        ConstMatMap<T> wqm(wq_.value.data(), c_, c_);
        ConstMatMap<T> wkm(wk_.value.data(), c_, c_);
        ConstMatMap<T> wvm(wv_.value.data(), c_, c_);
        ConstMatMap<T> wom(wo_.value.data(), c_, c_);

        std::vector<int> region(l2, 0);
        const std::size_t bx_n = w / l_;

        for (std::size_t wi = 0; wi < n; ++wi) {
            ConstMatMap<T> xm(&xw(wi, 0, 0), l2, c_);
            MatMap<T> qm(&q(wi, 0, 0), l2, c_);
            MatMap<T> km(&k(wi, 0, 0), l2, c_);
            MatMap<T> vm(&v(wi, 0, 0), l2, c_);
            MatMap<T> om(&o(wi, 0, 0), l2, c_);
            qm.noalias() = xm * wqm;
            km.noalias() = xm * wkm;
            vm.noalias() = xm * wvm;

            const bool use_mask = masked_ && shift_ > 0;
            if (use_mask) fill_region_ids(region, wi, bx_n, h, w);

            for (std::size_t hh = 0; hh < heads_; ++hh) {
                MatMap<T> am(&a(wi * heads_ + hh, 0, 0), l2, l2);
                am.noalias() = qm.middleCols(hh * d, d) * km.middleCols(hh * d, d).transpose();
                am *= scale;
                softmax_rows(am, use_mask ? &region : nullptr);
                om.middleCols(hh * d, d).noalias() = am * vm.middleCols(hh * d, d);
            }

            MatMap<T> ym(&yw(wi, 0, 0), l2, c_);
            ym.noalias() = om * wom;
            ym += ConstMatMap<T>(b_.value.data(), l2, c_);
        }

        Tensor<T> merged = window_merge(yw, h, w);
        Tensor<T> out = shift_ ? cyclic_shift(merged, -std::ptrdiff_t(shift_)) : std::move(merged);

        if (want_cache) {
            cache_xw_ = std::move(xw);
            cache_q_ = std::move(q);
            cache_k_ = std::move(k);
            cache_v_ = std::move(v);
            cache_o_ = std::move(o);
            cache_a_ = std::move(a);
            cache_h_ = h;
            cache_w_ = w;
        }
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        const std::size_t h = cache_h_, w = cache_w_;
        const std::size_t l2 = l_ * l_;
        const std::size_t d = c_ / heads_;
        const T scale = static_cast<T>(1.0 / std::sqrt(double(d)));

        Tensor<T> gw = shift_ ? window_partition(cyclic_shift(grad_out, std::ptrdiff_t(shift_)), l_)
                              : window_partition(grad_out, l_);
        const std::size_t n = gw.dim(0);

        Tensor<T> dxw({n, l2, c_});
        Tensor<T> dq({l2, c_}), dk({l2, c_}), dv({l2, c_}), dof({l2, c_});
        Tensor<T> da({l2, l2}), ds({l2, l2});

        ConstMatMap<T> wqm(wq_.value.data(), c_, c_);
        ConstMatMap<T> wkm(wk_.value.data(), c_, c_);
        ConstMatMap<T> wvm(wv_.value.data(), c_, c_);
        ConstMatMap<T> wom(wo_.value.data(), c_, c_);

        for (std::size_t wi = 0; wi < n; ++wi) {
            ConstMatMap<T> gy(&gw(wi, 0, 0), l2, c_);
            ConstMatMap<T> xm(&cache_xw_(wi, 0, 0), l2, c_);
            ConstMatMap<T> qm(&cache_q_(wi, 0, 0), l2, c_);
            ConstMatMap<T> km(&cache_k_(wi, 0, 0), l2, c_);
            ConstMatMap<T> vm(&cache_v_(wi, 0, 0), l2, c_);
            ConstMatMap<T> om(&cache_o_(wi, 0, 0), l2, c_);

            if (accumulate_param_grads) {
                MatMap<T>(b_.grad.data(), l2, c_) += gy;
                MatMap<T>(wo_.grad.data(), c_, c_).noalias() += om.transpose() * gy;
            }

            MatMap<T> dom(dof.data(), l2, c_);
            dom.noalias() = gy * wom.transpose();

            MatMap<T> dqm(dq.data(), l2, c_);
            MatMap<T> dkm(dk.data(), l2, c_);
            MatMap<T> dvm(dv.data(), l2, c_);

            for (std::size_t hh = 0; hh < heads_; ++hh) {
                ConstMatMap<T> am(&cache_a_(wi * heads_ + hh, 0, 0), l2, l2);
                MatMap<T> dam(da.data(), l2, l2);
                MatMap<T> dsm(ds.data(), l2, l2);

                dam.noalias() = dom.middleCols(hh * d, d) * vm.middleCols(hh * d, d).transpose();
                dvm.middleCols(hh * d, d).noalias() = am.transpose() * dom.middleCols(hh * d, d);

                // Row-wise softmax Jacobian: dS = A .* (dA - rowsum(dA .* A)).
                for (std::size_t r = 0; r < l2; ++r) {
                    double dot = 0;
                    for (std::size_t j = 0; j < l2; ++j) dot += double(dam(r, j)) * double(am(r, j));
                    for (std::size_t j = 0; j < l2; ++j)
                        dsm(r, j) = static_cast<T>(double(am(r, j)) * (double(dam(r, j)) - dot));
                }

                dqm.middleCols(hh * d, d).noalias() = dsm * km.middleCols(hh * d, d) * scale;
                dkm.middleCols(hh * d, d).noalias() = dsm.transpose() * qm.middleCols(hh * d, d) * scale;
            }

            if (accumulate_param_grads) {
                MatMap<T>(wq_.grad.data(), c_, c_).noalias() += xm.transpose() * dqm;
                MatMap<T>(wk_.grad.data(), c_, c_).noalias() += xm.transpose() * dkm;
                MatMap<T>(wv_.grad.data(), c_, c_).noalias() += xm.transpose() * dvm;
            }

            MatMap<T> dxm(&dxw(wi, 0, 0), l2, c_);
            dxm.noalias() = dqm * wqm.transpose();
            dxm.noalias() += dkm * wkm.transpose();
            dxm.noalias() += dvm * wvm.transpose();
        }

        Tensor<T> dmerged = window_merge(dxw, h, w);
        return shift_ ? cyclic_shift(dmerged, -std::ptrdiff_t(shift_)) : std::move(dmerged);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        wq_.name = prefix + ".wq";
        wk_.name = prefix + ".wk";
        wv_.name = prefix + ".wv";
        wo_.name = prefix + ".wo";
        b_.name = prefix + ".pos_bias";
        out.push_back(&wq_);
        out.push_back(&wk_);
        out.push_back(&wv_);
        out.push_back(&wo_);
        out.push_back(&b_);
    }

    std::size_t channels() const { return c_; }
    std::size_t heads() const { return heads_; }
    std::size_t window() const { return l_; }
    std::size_t shift() const { return shift_; }
    /// (N*heads, L^2, L^2) attention probabilities from the last cached forward.
    const Tensor<T>& attention_probs() const { return cache_a_; }
    ParamTensor<T>& wq() { return wq_; }
    ParamTensor<T>& wk() { return wk_; }
    ParamTensor<T>& wv() { return wv_; }
    ParamTensor<T>& wo() { return wo_; }
    ParamTensor<T>& pos_bias() { return b_; }

private:
    /// Region ids distinguish content that wrapped around during the cyclic
    /// shift: tokens may attend only within the same pre-shift region.
    void fill_region_ids(std::vector<int>& region, std::size_t wi, std::size_t bx_n, std::size_t h,
                         std::size_t w) const {
        const std::size_t by = wi / bx_n, bx = wi % bx_n;
        for (std::size_t iy = 0; iy < l_; ++iy) {
            for (std::size_t ix = 0; ix < l_; ++ix) {
                const std::size_t orig_r = (by * l_ + iy + shift_) % h;
                const std::size_t orig_c = (bx * l_ + ix + shift_) % w;
                region[iy * l_ + ix] = (orig_r >= h - shift_ ? 2 : 0) + (orig_c >= w - shift_ ? 1 : 0);
            }
        }
    }

    void softmax_rows(MatMap<T>& m, const std::vector<int>* region) const {
        const std::size_t l2 = l_ * l_;
        for (std::size_t r = 0; r < l2; ++r) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < l2; ++j) {
                if (region && (*region)[r] != (*region)[j]) continue;
                mx = std::max(mx, double(m(r, j)));
            }
            double sum = 0;
            for (std::size_t j = 0; j < l2; ++j) {
                if (region && (*region)[r] != (*region)[j]) {
                    m(r, j) = T(0);
                    continue;
                }
                const double e = std::exp(double(m(r, j)) - mx);
                m(r, j) = static_cast<T>(e);
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::size_t j = 0; j < l2; ++j) m(r, j) = static_cast<T>(double(m(r, j)) * inv);
        }
    }

    std::size_t c_ = 0, heads_ = 0, l_ = 0, shift_ = 0;
    bool masked_ = false;
    ParamTensor<T> wq_, wk_, wv_, wo_, b_;

    mutable Tensor<T> cache_xw_, cache_q_, cache_k_, cache_v_, cache_o_, cache_a_;
    mutable std::size_t cache_h_ = 0, cache_w_ = 0;
};

// ---------------------------------------------------------------------------
// Feed-forward: 1x1 conv expand, GELU, 3x3 depthwise, GELU, 1x1 conv project.
// ---------------------------------------------------------------------------

template <typename T>
class Ffn {
public:
    Ffn() = default;

    Ffn(std::size_t channels, std::size_t expansion = 2)
        : expand_(1, channels, channels * expansion, 1, PadMode::zero),
          depthwise_(3, channels * expansion, PadMode::reflect),
          project_(1, channels * expansion, channels, 1, PadMode::zero) {}

    void init(Rng& rng, double stddev = 0.02) {
        expand_.init(rng, stddev);
        depthwise_.init(rng, stddev);
        project_.init(rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        Tensor<T> y1 = expand_.forward(x, want_cache);
        if (want_cache) cache_pre1_ = y1;
        gelu_inplace(y1);
        Tensor<T> y2 = depthwise_.forward(y1, want_cache);
        if (want_cache) cache_pre2_ = y2;
        gelu_inplace(y2);
        return project_.forward(y2, want_cache);
    }

    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        Tensor<T> g2 = project_.backward(grad_out, accumulate_param_grads);
        for (std::size_t i = 0; i < g2.numel(); ++i) g2[i] *= gelu_grad(cache_pre2_[i]);
        Tensor<T> g1 = depthwise_.backward(g2, accumulate_param_grads);
        for (std::size_t i = 0; i < g1.numel(); ++i) g1[i] *= gelu_grad(cache_pre1_[i]);
        return expand_.backward(g1, accumulate_param_grads);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        expand_.collect(prefix + ".expand", out);
        depthwise_.collect(prefix + ".depthwise", out);
        project_.collect(prefix + ".project", out);
    }

private:
    Conv2d<T> expand_;
    DepthwiseConv2d<T> depthwise_;
    Conv2d<T> project_;
    mutable Tensor<T> cache_pre1_, cache_pre2_;
};

// ---------------------------------------------------------------------------
// Window self-attention block: pre-norm attention and FFN, both residual.
//   F' = W-MSA(LN(F)) + F
//   out = FFN(LN(F')) + F'
// ---------------------------------------------------------------------------

template <typename T>
class Wsab {
public:
    Wsab() = default;

    Wsab(std::size_t channels, std::size_t heads, std::size_t window, bool shifted,
         bool masked = false, std::size_t ffn_expansion = 2)
        : ln1_(channels),
          attn_(channels, heads, window, shifted ? window / 2 : 0, masked),
          ln2_(channels),
          ffn_(channels, ffn_expansion) {}

    void init(Rng& rng, double stddev = 0.02) {
        attn_.init(rng, stddev);
        ffn_.init(rng, stddev);
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        Tensor<T> f1 = attn_.forward(ln1_.forward(x, want_cache), want_cache);
        f1 += x;
        Tensor<T> out = ffn_.forward(ln2_.forward(f1, want_cache), want_cache);
        out += f1;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out, bool accumulate_param_grads = true) {
        Tensor<T> df1 = ln2_.backward(ffn_.backward(grad_out, accumulate_param_grads),
                                      accumulate_param_grads);
        df1 += grad_out;
        Tensor<T> dx = ln1_.backward(attn_.backward(df1, accumulate_param_grads),
                                     accumulate_param_grads);
        dx += df1;
        return dx;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        ln1_.collect(prefix + ".norm1", out);
        attn_.collect(prefix + ".attn", out);
        ln2_.collect(prefix + ".norm2", out);
        ffn_.collect(prefix + ".ffn", out);
    }

    WMsa<T>& attention() { return attn_; }
    const WMsa<T>& attention() const { return attn_; }

private:
    LayerNorm<T> ln1_;
    WMsa<T> attn_;
    LayerNorm<T> ln2_;
    Ffn<T> ffn_;
};

}  // namespace winrest
