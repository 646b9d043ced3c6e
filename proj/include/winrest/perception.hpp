// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "winrest/nn.hpp"
#include "winrest/optim.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Frozen feature extractor for the feature-space quality loss. Two flavors:
//   identity  - features are the pixels themselves
//   tiny      - two stride-2 convolutions with GELU, 3 -> c1 -> c2
// "tiny" weights come either from a seeded random draw or from quality-grade
// classifier training (see QualityClassifier below). Either way the extractor
// is frozen during restoration training: only its input gradient flows.
// ---------------------------------------------------------------------------

enum class PerceptionKind { identity, tiny };

template <typename T>
class Perception {
public:
    Perception() = default;

    static Perception identity() {
        Perception p;
        p.kind_ = PerceptionKind::identity;
        return p;
    }

    static Perception tiny(std::uint64_t seed, std::size_t c1 = 8, std::size_t c2 = 16) {
        Perception p;
        p.kind_ = PerceptionKind::tiny;
        p.conv1_ = Conv2d<T>(3, 3, c1, 2, PadMode::reflect);
        p.conv2_ = Conv2d<T>(3, c1, c2, 2, PadMode::reflect);
        Rng rng = Rng::derive(seed, 0x70657263u);  // distinct stream per role
        p.conv1_.init(rng, 0.3);
        p.conv2_.init(rng, 0.3);
        return p;
    }

    PerceptionKind kind() const { return kind_; }
    std::size_t feature_channels() const {
        return kind_ == PerceptionKind::identity ? 3 : conv2_.out_channels();
    }

    Tensor<T> forward(const Tensor<T>& x, bool want_cache = false) const {
        if (kind_ == PerceptionKind::identity) return x;
        Tensor<T> y1 = conv1_.forward(x, want_cache);
        if (want_cache) cache_pre1_ = y1;
        gelu_inplace(y1);
        Tensor<T> y2 = conv2_.forward(y1, want_cache);
        if (want_cache) cache_pre2_ = y2;
        gelu_inplace(y2);
        return y2;
    }

    /// Gradient w.r.t. the input of a cached forward. accumulate_param_grads
    /// stays available for classifier training; the quality loss never sets it.
    Tensor<T> input_vjp(const Tensor<T>& grad_features, bool accumulate_param_grads = false) {
        if (kind_ == PerceptionKind::identity) return grad_features;
        Tensor<T> g = grad_features;
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= gelu_grad(cache_pre2_[i]);
        g = conv2_.backward(g, accumulate_param_grads);
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= gelu_grad(cache_pre1_[i]);
        return conv1_.backward(g, accumulate_param_grads);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        if (kind_ == PerceptionKind::identity) return;
        conv1_.collect(prefix + ".conv1", out);
        conv2_.collect(prefix + ".conv2", out);
    }

private:
    PerceptionKind kind_ = PerceptionKind::identity;
    Conv2d<T> conv1_, conv2_;
    mutable Tensor<T> cache_pre1_, cache_pre2_;
};

// ---------------------------------------------------------------------------
// Quality-grade classifier: the tiny extractor, global average pooling, and
// a linear head over grade logits. Training it gives the extractor weights
// that respond to degradation level.
// ---------------------------------------------------------------------------

template <typename T>
class QualityClassifier {
public:
    explicit QualityClassifier(std::uint64_t seed, std::size_t grades = 3, std::size_t c1 = 8,
                               std::size_t c2 = 16)
        : features_(Perception<T>::tiny(seed, c1, c2)), grades_(grades) {
        fc_w_.allocate({c2, grades});
        fc_b_.allocate({grades});
        Rng rng = Rng::derive(seed, 0x68656164u);
        init_trunc_normal(fc_w_.value, rng, 0.3);
    }

    std::vector<double> logits(const Tensor<T>& x, bool want_cache = false) {
        Tensor<T> f = features_.forward(x, want_cache);
        if (want_cache) cache_fdims_ = f.dims();
        const std::size_t hw = f.height() * f.width(), c = f.channels();
        std::vector<double> pooled(c, 0.0);
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t ch = 0; ch < c; ++ch) pooled[ch] += double(f[p * c + ch]);
        for (auto& v : pooled) v /= double(hw);
        if (want_cache) cache_pooled_ = pooled;

        std::vector<double> out(grades_, 0.0);
        for (std::size_t g = 0; g < grades_; ++g) {
            double acc = double(fc_b_.value[g]);
            for (std::size_t ch = 0; ch < c; ++ch) acc += pooled[ch] * double(fc_w_.value(ch, g));
            out[g] = acc;
        }
        return out;
    }

    std::size_t predict(const Tensor<T>& x) {
        const std::vector<double> l = logits(x);
        std::size_t best = 0;
        for (std::size_t g = 1; g < grades_; ++g)
            if (l[g] > l[best]) best = g;
        return best;
    }

    /// Cross-entropy on one example; accumulates gradients on all parameters.
    double train_loss_and_grad(const Tensor<T>& x, std::size_t label) {
        const std::vector<double> l = logits(x, true);
        double mx = l[0];
        for (double v : l) mx = std::max(mx, v);
        double z = 0;
        for (double v : l) z += std::exp(v - mx);
        const double loss = -(l[label] - mx - std::log(z));

        const std::size_t c = cache_pooled_.size();
        std::vector<double> dpool(c, 0.0);
        for (std::size_t g = 0; g < grades_; ++g) {
            const double p = std::exp(l[g] - mx) / z;
            const double dl = p - (g == label ? 1.0 : 0.0);
            fc_b_.grad[g] += static_cast<T>(dl);
            for (std::size_t ch = 0; ch < c; ++ch) {
                fc_w_.grad(ch, g) += static_cast<T>(dl * cache_pooled_[ch]);
                dpool[ch] += dl * double(fc_w_.value(ch, g));
            }
        }

        Tensor<T> df(cache_fdims_);
        const std::size_t hw = df.height() * df.width();
        for (std::size_t p = 0; p < hw; ++p)
            for (std::size_t ch = 0; ch < c; ++ch)
                df[p * c + ch] = static_cast<T>(dpool[ch] / double(hw));
        features_.input_vjp(df, /*accumulate_param_grads=*/true);
        return loss;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        features_.collect(prefix + ".features", out);
        fc_w_.name = prefix + ".fc.weight";
        fc_b_.name = prefix + ".fc.bias";
        out.push_back(&fc_w_);
        out.push_back(&fc_b_);
    }

    Perception<T>& features() { return features_; }
    const Perception<T>& features() const { return features_; }

private:
    Perception<T> features_;
    std::size_t grades_;
    ParamTensor<T> fc_w_, fc_b_;
    std::vector<double> cache_pooled_;
    std::vector<std::size_t> cache_fdims_;
};

/// Trains the classifier on (image, grade) pairs. Returns final training
/// accuracy in [0, 1].
template <typename T>
double train_quality_classifier(QualityClassifier<T>& clf,
                                const std::vector<Tensor<T>>& images,
                                const std::vector<std::size_t>& labels, std::size_t epochs,
                                double lr, std::uint64_t seed) {
    require(images.size() == labels.size() && !images.empty(), ErrorKind::data,
            "classifier needs matching images and labels");
    ParamList<T> params;
    clf.collect("clf", params);
    Adam<T> opt(params);

    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t e = 0; e < epochs; ++e) {
        Rng shuffle_rng = Rng::derive(seed, 0x73687566u, e);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        for (std::size_t i : order) {
            zero_grads(params);
            clf.train_loss_and_grad(images[i], labels[i]);
            opt.step(lr);
        }
    }

    std::size_t hits = 0;
    for (std::size_t i = 0; i < images.size(); ++i)
        if (clf.predict(images[i]) == labels[i]) ++hits;
    return double(hits) / double(images.size());
}

}  // namespace winrest
