// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "winrest/attention.hpp"
#include "winrest/generator.hpp"
#include "winrest/nn.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Patch discriminator: attention stages with stride-2 downsampling, ending
// in a 1-channel map of raw realness scores. Each score judges one receptive
// patch of the input rather than the whole image.
// ---------------------------------------------------------------------------

struct DiscriminatorConfig {
    std::size_t in_channels = 3;      // 6 when judging (candidate, reference) pairs
    bool paired = false;
    std::size_t base_channels = 16;
    std::size_t depth = 3;            // downsampling stage count
    std::size_t blocks_per_stage = 2;
    std::size_t window = 8;
    std::size_t base_heads = 2;
    std::size_t ffn_expansion = 2;
    bool masked_shift = false;
    double leaky_slope = 0.2;

    std::size_t stage_channels(std::size_t i) const { return base_channels << i; }
    std::size_t stage_heads(std::size_t i) const { return base_heads << i; }
    std::size_t alignment() const { return window << (depth - 1) > (std::size_t(1) << depth)
                                              ? window << (depth - 1)
                                              : std::size_t(1) << depth; }

    void validate() const {
        require(depth >= 1, ErrorKind::config, "need at least one downsampling stage");
        require(base_channels % base_heads == 0, ErrorKind::config,
                "base heads must divide base channels");
        require(!paired || in_channels % 2 == 0, ErrorKind::config,
                "paired scoring needs an even channel count");
    }
};

/// Nominal patch size: the receptive-field recurrence over the convolution
/// stack alone (projection, stride-2 downsamples, final conv). Attention
/// mixing is window-local and excluded from this label by convention.
inline std::size_t discriminator_nominal_patch(const DiscriminatorConfig& cfg) {
    std::size_t rf = 1, jump = 1;
    rf += 2 * jump;  // 3x3 projection
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        rf += 3 * jump;  // 4x4 stride-2
        jump *= 2;
    }
    rf += 2 * jump;  // 3x3 head
    return rf;
}

template <typename T>
class Discriminator {
public:
    Discriminator() = default;

    explicit Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        proj_ = Conv2d<T>(3, cfg.in_channels, cfg.base_channels, 1, PadMode::reflect);
        stages_.resize(cfg.depth);
        down_.resize(cfg.depth);
        for (std::size_t i = 0; i < cfg.depth; ++i) {
            stages_[i].reserve(cfg.blocks_per_stage);
            for (std::size_t j = 0; j < cfg.blocks_per_stage; ++j) {
                stages_[i].emplace_back(cfg.stage_channels(i), cfg.stage_heads(i), cfg.window,
                                        (j % 2) == 1, cfg.masked_shift, cfg.ffn_expansion);
            }
            down_[i] = Conv2d<T>(4, cfg.stage_channels(i), cfg.stage_channels(i + 1), 2,
                                 PadMode::reflect);
        }
        head_ = Conv2d<T>(3, cfg.stage_channels(cfg.depth), 1, 1, PadMode::reflect);
    }

    const DiscriminatorConfig& config() const { return cfg_; }

    void init(Rng& rng, double stddev = 0.02) {
        proj_.init(rng, stddev);
        for (auto& stage : stages_)
            for (auto& b : stage) b.init(rng, stddev);
        for (auto& d : down_) d.init(rng, stddev);
        head_.init(rng, stddev);
    }

    /// Raw score map on an alignment-sized input. Differentiable path.
    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        const std::size_t a = cfg_.alignment();
        require(x.height() % a == 0 && x.width() % a == 0, ErrorKind::shape,
                "score input dims must be multiples of ", a);
        require(x.channels() == cfg_.in_channels, ErrorKind::shape, "input channel mismatch");

        Tensor<T> f = proj_.forward(x, want_cache);
        if (want_cache) cache_proj_pre_ = f;
        const T slope = static_cast<T>(cfg_.leaky_slope);
        for (std::size_t i = 0; i < f.numel(); ++i) f[i] = leaky_relu(f[i], slope);

        for (std::size_t i = 0; i < cfg_.depth; ++i) {
            for (auto& b : stages_[i]) f = b.forward(f, want_cache);
            f = down_[i].forward(f, want_cache);
        }
        return head_.forward(f, want_cache);
    }

    /// Gradient of a cached forward w.r.t. the input. Parameter gradients
    /// accumulate only when requested, so the generator can differentiate
    /// through a frozen critic.
    Tensor<T> backward(const Tensor<T>& grad_scores, bool accumulate_param_grads = true) {
        Tensor<T> g = head_.backward(grad_scores, accumulate_param_grads);
        for (std::size_t i = cfg_.depth; i-- > 0;) {
            g = down_[i].backward(g, accumulate_param_grads);
            for (std::size_t j = stages_[i].size(); j-- > 0;)
                g = stages_[i][j].backward(g, accumulate_param_grads);
        }
        const T slope = static_cast<T>(cfg_.leaky_slope);
        for (std::size_t i = 0; i < g.numel(); ++i)
            g[i] *= leaky_relu_grad(cache_proj_pre_[i], slope);
        return proj_.backward(g, accumulate_param_grads);
    }

    /// Score map for arbitrary input sizes: reflect-pad to alignment, then
    /// crop the map to ceil(H / 2^depth) x ceil(W / 2^depth).
    Tensor<T> score(const Tensor<T>& x) const {
        const std::size_t a = cfg_.alignment();
        const std::size_t th = round_up_multiple(std::max<std::size_t>(x.height(), a), a);
        const std::size_t tw = round_up_multiple(std::max<std::size_t>(x.width(), a), a);
        Tensor<T> s = forward(reflect_pad_to(x, th, tw));
        const std::size_t step = std::size_t(1) << cfg_.depth;
        return crop_top_left(s, (x.height() + step - 1) / step, (x.width() + step - 1) / step);
    }

    const std::vector<std::vector<Wsab<T>>>& stage_blocks() const { return stages_; }
    const std::vector<Conv2d<T>>& downsamples() const { return down_; }

    void collect(const std::string& prefix, ParamList<T>& out) {
        proj_.collect(prefix + ".proj", out);
        for (std::size_t i = 0; i < stages_.size(); ++i) {
            for (std::size_t j = 0; j < stages_[i].size(); ++j)
                stages_[i][j].collect(prefix + ".s" + std::to_string(i) + ".b" + std::to_string(j),
                                      out);
            down_[i].collect(prefix + ".down" + std::to_string(i), out);
        }
        head_.collect(prefix + ".head", out);
    }

private:
    DiscriminatorConfig cfg_;
    Conv2d<T> proj_;
    std::vector<std::vector<Wsab<T>>> stages_;
    std::vector<Conv2d<T>> down_;
    Conv2d<T> head_;
    mutable Tensor<T> cache_proj_pre_;
};

inline std::uint64_t discriminator_flops(const DiscriminatorConfig& cfg, std::size_t h,
                                         std::size_t w) {
    const std::size_t a = cfg.alignment();
    h = round_up_multiple(std::max(h, a), a);
    w = round_up_multiple(std::max(w, a), a);
    std::uint64_t f = conv_flops(3, cfg.in_channels, cfg.base_channels, h, w);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        f += cfg.blocks_per_stage * wsab_flops(h, w, cfg.stage_channels(i), cfg.window, cfg.ffn_expansion);
        f += conv_flops(4, cfg.stage_channels(i), cfg.stage_channels(i + 1), h / 2, w / 2);
        h /= 2;
        w /= 2;
    }
    f += conv_flops(3, cfg.stage_channels(cfg.depth), 1, h, w);
    return f;
}

}  // namespace winrest
