// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "winrest/attention.hpp"
#include "winrest/nn.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Channel concat / split
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.height() == b.height() && a.width() == b.width(), ErrorKind::shape,
            "channel concat needs matching spatial dims");
    const std::size_t h = a.height(), w = a.width(), ca = a.channels(), cb = b.channels();
    Tensor<T> out({h, w, ca + cb});
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            T* dst = &out(r, c, 0);
            const T* pa = &a(r, c, 0);
            const T* pb = &b(r, c, 0);
            for (std::size_t i = 0; i < ca; ++i) dst[i] = pa[i];
            for (std::size_t i = 0; i < cb; ++i) dst[ca + i] = pb[i];
        }
    }
    return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t c_first) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    require(c_first < c, ErrorKind::shape, "split point outside channel range");
    Tensor<T> a({h, w, c_first}), b({h, w, c - c_first});
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            const T* src = &x(r, col, 0);
            T* pa = &a(r, col, 0);
            T* pb = &b(r, col, 0);
            for (std::size_t i = 0; i < c_first; ++i) pa[i] = src[i];
            for (std::size_t i = 0; i < c - c_first; ++i) pb[i] = src[c_first + i];
        }
    }
    return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Spatial pad / crop
// ---------------------------------------------------------------------------

/// Reflect-pads on the bottom and right edges up to the target size.
/// Reflection bounces, so any target is reachable from any source size > 1.
template <typename T>
Tensor<T> reflect_pad_to(const Tensor<T>& x, std::size_t th, std::size_t tw) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    require(th >= h && tw >= w, ErrorKind::shape, "pad target smaller than input");
    if (th == h && tw == w) return x;
    Tensor<T> out({th, tw, c});
    for (std::size_t r = 0; r < th; ++r) {
        const std::size_t sr = std::size_t(reflect_index(std::ptrdiff_t(r), std::ptrdiff_t(h)));
        for (std::size_t col = 0; col < tw; ++col) {
            const std::size_t sc = std::size_t(reflect_index(std::ptrdiff_t(col), std::ptrdiff_t(w)));
            const T* src = &x(sr, sc, 0);
            T* dst = &out(r, col, 0);
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = src[ch];
        }
    }
    return out;
}

template <typename T>
Tensor<T> crop_top_left(const Tensor<T>& x, std::size_t h, std::size_t w) {
    require(h <= x.height() && w <= x.width(), ErrorKind::shape, "crop larger than input");
    if (h == x.height() && w == x.width()) return x;
    Tensor<T> out({h, w, x.channels()});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t col = 0; col < w; ++col)
            for (std::size_t ch = 0; ch < x.channels(); ++ch) out(r, col, ch) = x(r, col, ch);
    return out;
}

inline std::size_t round_up_multiple(std::size_t v, std::size_t m) {
    return ((v + m - 1) / m) * m;
}

// ---------------------------------------------------------------------------
// Restoration generator: U-shaped encoder/decoder built from window
// self-attention blocks. Predicts a residual added to the degraded input.
//
// Widths: encoder stage i runs at 2^i * C; the bottleneck keeps the deepest
// width; decoder stage i runs at 2^(i+1) * C after fusing the upsampled
// path with the stage-i skip, both of width 2^i * C.
// ---------------------------------------------------------------------------

struct GeneratorConfig {
    std::size_t in_channels = 3;
    std::size_t out_channels = 3;
    std::size_t base_channels = 16;   // C
    std::size_t stages = 4;           // encoder stage count
    std::size_t blocks_per_stage = 2; // attention blocks per stage
    std::size_t window = 8;           // L
    std::size_t base_heads = 2;       // doubles with width
    std::size_t ffn_expansion = 2;
    bool masked_shift = false;        // mask wrapped pairs in shifted blocks
    bool zero_init_output = true;     // identity restoration at initialization
    double leaky_slope = 0.2;

    /// Input dims must be a multiple of this before entering the core.
    std::size_t alignment() const { return window << (stages - 1); }

    std::size_t stage_channels(std::size_t i) const { return base_channels << i; }
    std::size_t stage_heads(std::size_t i) const { return base_heads << i; }

    void validate() const {
        require(stages >= 2, ErrorKind::config, "need at least two stages");
        require(blocks_per_stage >= 1, ErrorKind::config, "need at least one block per stage");
        require(base_channels % base_heads == 0, ErrorKind::config,
                "base heads must divide base channels");
        require(window >= 2, ErrorKind::config, "window must be at least 2");
    }
};

template <typename T>
class Generator {
public:
    Generator() = default;

    explicit Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        const std::size_t s = cfg.stages;
        proj_ = Conv2d<T>(3, cfg.in_channels, cfg.base_channels, 1, PadMode::reflect);

        enc_.resize(s);
        for (std::size_t i = 0; i < s; ++i) enc_[i] = make_stage(cfg.stage_channels(i), cfg.stage_heads(i));

        down_.resize(s - 1);
        for (std::size_t i = 0; i + 1 < s; ++i)
            down_[i] = Conv2d<T>(4, cfg.stage_channels(i), cfg.stage_channels(i + 1), 2, PadMode::reflect);

        bottleneck_ = make_stage(cfg.stage_channels(s - 1), cfg.stage_heads(s - 1));

        up_.resize(s - 1);
        dec_.resize(s - 1);
        for (std::size_t i = 0; i + 1 < s; ++i) {
            const std::size_t cin = (i == s - 2) ? cfg.stage_channels(s - 1) : 2 * cfg.stage_channels(i + 1);
            up_[i] = Conv2d<T>(3, cin, cfg.stage_channels(i), 1, PadMode::reflect);
            dec_[i] = make_stage(2 * cfg.stage_channels(i), 2 * cfg.stage_heads(i));
        }

        final_ = Conv2d<T>(3, 2 * cfg.base_channels, cfg.out_channels, 1, PadMode::reflect);
    }

    const GeneratorConfig& config() const { return cfg_; }

    void init(Rng& rng, double stddev = 0.02) {
        proj_.init(rng, stddev);
        for (auto& stage : enc_)
            for (auto& b : stage) b.init(rng, stddev);
        for (auto& d : down_) d.init(rng, stddev);
        for (auto& b : bottleneck_) b.init(rng, stddev);
        for (std::size_t i = 0; i < up_.size(); ++i) up_[i].init(rng, stddev);
        for (auto& stage : dec_)
            for (auto& b : stage) b.init(rng, stddev);
        if (cfg_.zero_init_output) {
            final_.zero_init();
        } else {
            final_.init(rng, stddev);
        }
    }

    /// Residual prediction on an alignment-sized input. Differentiable path.
    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        const std::size_t a = cfg_.alignment();
        require(x.height() % a == 0 && x.width() % a == 0, ErrorKind::shape,
                "core input dims must be multiples of ", a);
        require(x.channels() == cfg_.in_channels, ErrorKind::shape, "input channel mismatch");
        const std::size_t s = cfg_.stages;

        Tensor<T> f = proj_.forward(x, want_cache);
        if (want_cache) cache_proj_pre_ = f;
        const T slope = static_cast<T>(cfg_.leaky_slope);
        for (std::size_t i = 0; i < f.numel(); ++i) f[i] = leaky_relu(f[i], slope);

        std::vector<Tensor<T>> skips(s - 1);
        for (std::size_t i = 0; i < s; ++i) {
            for (auto& b : enc_[i]) f = b.forward(f, want_cache);
            if (i + 1 < s) {
                skips[i] = f;
                f = down_[i].forward(f, want_cache);
            }
        }
        for (auto& b : bottleneck_) f = b.forward(f, want_cache);

        for (std::size_t k = s - 1; k-- > 0;) {
            if (want_cache) cache_pre_up_dims_[k] = {f.height(), f.width()};
            f = bilinear_upsample2x(f);
            f = up_[k].forward(f, want_cache);
            f = concat_channels(f, skips[k]);
            for (auto& b : dec_[k]) f = b.forward(f, want_cache);
        }
        return final_.forward(f, want_cache);
    }

    /// Gradient of a cached forward. Returns the gradient w.r.t. the input.
    Tensor<T> backward(const Tensor<T>& grad_res, bool accumulate_param_grads = true) {
        const std::size_t s = cfg_.stages;
        Tensor<T> g = final_.backward(grad_res, accumulate_param_grads);

        std::vector<Tensor<T>> dskips(s - 1);
        for (std::size_t k = 0; k + 1 < s; ++k) {
            for (std::size_t j = dec_[k].size(); j-- > 0;)
                g = dec_[k][j].backward(g, accumulate_param_grads);
            auto [du, dskip] = split_channels(g, cfg_.stage_channels(k));
            dskips[k] = std::move(dskip);
            du = up_[k].backward(du, accumulate_param_grads);
            g = bilinear_upsample2x_backward(du, cache_pre_up_dims_[k].first,
                                             cache_pre_up_dims_[k].second);
        }

        for (std::size_t j = bottleneck_.size(); j-- > 0;)
            g = bottleneck_[j].backward(g, accumulate_param_grads);

        for (std::size_t i = s; i-- > 0;) {
            if (i + 1 < s) {
                g = down_[i].backward(g, accumulate_param_grads);
                g += dskips[i];
            }
            for (std::size_t j = enc_[i].size(); j-- > 0;)
                g = enc_[i][j].backward(g, accumulate_param_grads);
        }

        const T slope = static_cast<T>(cfg_.leaky_slope);
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] *= leaky_relu_grad(cache_proj_pre_[i], slope);
        return proj_.backward(g, accumulate_param_grads);
    }

    /// Full restoration: pad to alignment, predict the residual, crop, add,
    /// clamp to the displayable range. Inference path.
    Tensor<T> restore(const Tensor<T>& x) const {
        const std::size_t a = cfg_.alignment();
        const std::size_t th = round_up_multiple(std::max<std::size_t>(x.height(), a), a);
        const std::size_t tw = round_up_multiple(std::max<std::size_t>(x.width(), a), a);
        Tensor<T> padded = reflect_pad_to(x, th, tw);
        Tensor<T> res = crop_top_left(forward(padded), x.height(), x.width());
        res += x;
        clamp01(res);
        return res;
    }

    const std::vector<std::vector<Wsab<T>>>& encoder_stages() const { return enc_; }
    const std::vector<std::vector<Wsab<T>>>& decoder_stages() const { return dec_; }
    const std::vector<Wsab<T>>& bottleneck_blocks() const { return bottleneck_; }
    const std::vector<Conv2d<T>>& downsamples() const { return down_; }
    const std::vector<Conv2d<T>>& upsample_convs() const { return up_; }
    const Conv2d<T>& output_head() const { return final_; }
    Conv2d<T>& output_head() { return final_; }

    void collect(const std::string& prefix, ParamList<T>& out) {
        proj_.collect(prefix + ".proj", out);
        for (std::size_t i = 0; i < enc_.size(); ++i)
            for (std::size_t j = 0; j < enc_[i].size(); ++j)
                enc_[i][j].collect(prefix + ".enc" + std::to_string(i) + ".b" + std::to_string(j), out);
        for (std::size_t i = 0; i < down_.size(); ++i)
            down_[i].collect(prefix + ".down" + std::to_string(i), out);
        for (std::size_t j = 0; j < bottleneck_.size(); ++j)
            bottleneck_[j].collect(prefix + ".mid.b" + std::to_string(j), out);
        for (std::size_t i = 0; i < up_.size(); ++i)
            up_[i].collect(prefix + ".up" + std::to_string(i), out);
        for (std::size_t i = 0; i < dec_.size(); ++i)
            for (std::size_t j = 0; j < dec_[i].size(); ++j)
                dec_[i][j].collect(prefix + ".dec" + std::to_string(i) + ".b" + std::to_string(j), out);
        final_.collect(prefix + ".final", out);
    }

private:
    std::vector<Wsab<T>> make_stage(std::size_t channels, std::size_t heads) const {
        std::vector<Wsab<T>> stage;
        stage.reserve(cfg_.blocks_per_stage);
        for (std::size_t j = 0; j < cfg_.blocks_per_stage; ++j) {
            stage.emplace_back(channels, heads, cfg_.window, /*shifted=*/(j % 2) == 1,
                               cfg_.masked_shift, cfg_.ffn_expansion);
        }
        return stage;
    }

    GeneratorConfig cfg_;
    Conv2d<T> proj_;
    std::vector<std::vector<Wsab<T>>> enc_;
    std::vector<Conv2d<T>> down_;
    std::vector<Wsab<T>> bottleneck_;
    std::vector<Conv2d<T>> up_;
    std::vector<std::vector<Wsab<T>>> dec_;
    Conv2d<T> final_;

    mutable Tensor<T> cache_proj_pre_;
    mutable std::vector<std::pair<std::size_t, std::size_t>> cache_pre_up_dims_ =
        std::vector<std::pair<std::size_t, std::size_t>>(16);
};

// ---------------------------------------------------------------------------
// Cost accounting (multiply-accumulate counts) mirroring the wiring above.
// ---------------------------------------------------------------------------

inline std::uint64_t conv_flops(std::size_t k, std::size_t cin, std::size_t cout, std::size_t ho,
                                std::size_t wo) {
    return std::uint64_t(k) * k * cin * cout * ho * wo;
}

inline std::uint64_t wsab_flops(std::size_t h, std::size_t w, std::size_t c, std::size_t l,
                                std::size_t expansion) {
    const std::uint64_t hw = std::uint64_t(h) * w;
    const std::uint64_t ce = std::uint64_t(c) * expansion;
    std::uint64_t f = wmsa_flops(h, w, c, l);
    f += hw * c * ce;        // 1x1 expand
    f += 9 * ce * hw;        // 3x3 depthwise
    f += hw * ce * c;        // 1x1 project
    return f;
}

inline std::uint64_t generator_flops(const GeneratorConfig& cfg, std::size_t h, std::size_t w) {
    const std::size_t a = cfg.alignment();
    h = round_up_multiple(std::max(h, a), a);
    w = round_up_multiple(std::max(w, a), a);
    const std::size_t s = cfg.stages;
    std::uint64_t f = conv_flops(3, cfg.in_channels, cfg.base_channels, h, w);
    std::size_t ch = h, cw = w;
    for (std::size_t i = 0; i < s; ++i) {
        f += cfg.blocks_per_stage * wsab_flops(ch, cw, cfg.stage_channels(i), cfg.window, cfg.ffn_expansion);
        if (i + 1 < s) {
            f += conv_flops(4, cfg.stage_channels(i), cfg.stage_channels(i + 1), ch / 2, cw / 2);
            ch /= 2;
            cw /= 2;
        }
    }
    f += cfg.blocks_per_stage * wsab_flops(ch, cw, cfg.stage_channels(s - 1), cfg.window, cfg.ffn_expansion);
    for (std::size_t k = s - 1; k-- > 0;) {
        const std::size_t cin = (k == s - 2) ? cfg.stage_channels(s - 1) : 2 * cfg.stage_channels(k + 1);
        ch *= 2;
        cw *= 2;
        f += conv_flops(3, cin, cfg.stage_channels(k), ch, cw);
        f += cfg.blocks_per_stage *
             wsab_flops(ch, cw, 2 * cfg.stage_channels(k), cfg.window, cfg.ffn_expansion);
    }
    f += conv_flops(3, 2 * cfg.base_channels, cfg.out_channels, h, w);
    return f;
}

}  // namespace winrest
