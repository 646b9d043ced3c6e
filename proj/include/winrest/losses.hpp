// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <vector>

#include "winrest/nn.hpp"
#include "winrest/perception.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

template <typename T>
struct ScalarLoss {
    double value = 0;
    Tensor<T> grad;  // w.r.t. the prediction
};

// ---------------------------------------------------------------------------
// Charbonnier fidelity: smooth L1 with knee eps.
// Mean form (default):    L = mean_i sqrt(d_i^2 + eps^2)
// Global form (optional): L = sqrt(sum_i d_i^2 + eps^2)
// Both reduce to eps at d = 0.
// ---------------------------------------------------------------------------

template <typename T>
ScalarLoss<T> charbonnier_loss(const Tensor<T>& pred, const Tensor<T>& target, double eps = 1e-3,
                               bool global_form = false) {
    require(pred.same_shape(target), ErrorKind::shape, "fidelity loss needs matching shapes");
    const std::size_t n = pred.numel();
    ScalarLoss<T> out;
    out.grad = Tensor<T>(pred.dims());
    if (global_form) {
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(pred[i]) - double(target[i]);
            ss += d * d;
        }
        out.value = std::sqrt(ss + eps * eps);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(pred[i]) - double(target[i]);
            out.grad[i] = static_cast<T>(d / out.value);
        }
    } else {
        double sum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(pred[i]) - double(target[i]);
            const double root = std::sqrt(d * d + eps * eps);
            sum += root;
            out.grad[i] = static_cast<T>(d / (root * double(n)));
        }
        out.value = sum / double(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Edge-consistency loss: Charbonnier distance between Laplacian maps.
// ---------------------------------------------------------------------------

template <typename T>
class EdgeLoss {
public:
    explicit EdgeLoss(std::size_t channels = 3, bool eight_neighbor = false, double eps = 1e-3)
        : lap_(3, channels, PadMode::reflect), eps_(eps) {
        const T c = eight_neighbor ? T(-8) : T(-4);
        const T d = eight_neighbor ? T(1) : T(0);
        lap_.set_fixed_kernel({d, T(1), d,  //
                               T(1), c, T(1),  //
                               d, T(1), d});
    }

    ScalarLoss<T> operator()(const Tensor<T>& pred, const Tensor<T>& target) {
        Tensor<T> lap_target = lap_.forward(target);
        Tensor<T> lap_pred = lap_.forward(pred, /*want_cache=*/true);
        ScalarLoss<T> charb = charbonnier_loss(lap_pred, lap_target, eps_);
        ScalarLoss<T> out;
        out.value = charb.value;
        out.grad = lap_.backward(charb.grad, /*accumulate_param_grads=*/false);
        return out;
    }

private:
    DepthwiseConv2d<T> lap_;
    double eps_;
};

// ---------------------------------------------------------------------------
// Feature-space quality loss: mean squared distance between frozen features
// of the prediction and the reference, averaged over positions and channels.
// ---------------------------------------------------------------------------

template <typename T>
ScalarLoss<T> feature_quality_loss(Perception<T>& phi, const Tensor<T>& pred,
                                   const Tensor<T>& target) {
    Tensor<T> f_target = phi.forward(target);
    Tensor<T> f_pred = phi.forward(pred, /*want_cache=*/true);
    const std::size_t m = f_pred.numel();

    double sum = 0;
    Tensor<T> dfeat(f_pred.dims());
    for (std::size_t i = 0; i < m; ++i) {
        const double d = double(f_pred[i]) - double(f_target[i]);
        sum += d * d;
        dfeat[i] = static_cast<T>(2.0 * d / double(m));
    }
    ScalarLoss<T> out;
    out.value = sum / double(m);
    out.grad = phi.input_vjp(dfeat);
    return out;
}

// ---------------------------------------------------------------------------
// Least-squares adversarial objectives over patch score maps.
// Critic:    mean(fake^2) + mean((real - 1)^2)
// Generator: mean((fake - 1)^2)
// ---------------------------------------------------------------------------

template <typename T>
struct CriticLoss {
    double value = 0;
    Tensor<T> grad_fake;
    Tensor<T> grad_real;
};

template <typename T>
CriticLoss<T> adversarial_critic_loss(const Tensor<T>& fake_scores, const Tensor<T>& real_scores) {
    CriticLoss<T> out;
    out.grad_fake = Tensor<T>(fake_scores.dims());
    out.grad_real = Tensor<T>(real_scores.dims());
    const std::size_t nf = fake_scores.numel(), nr = real_scores.numel();
    double sf = 0, sr = 0;
    for (std::size_t i = 0; i < nf; ++i) {
        const double s = double(fake_scores[i]);
        sf += s * s;
        out.grad_fake[i] = static_cast<T>(2.0 * s / double(nf));
    }
    for (std::size_t i = 0; i < nr; ++i) {
        const double d = double(real_scores[i]) - 1.0;
        sr += d * d;
        out.grad_real[i] = static_cast<T>(2.0 * d / double(nr));
    }
    out.value = sf / double(nf) + sr / double(nr);
    return out;
}

template <typename T>
ScalarLoss<T> adversarial_generator_loss(const Tensor<T>& fake_scores) {
    ScalarLoss<T> out;
    out.grad = Tensor<T>(fake_scores.dims());
    const std::size_t n = fake_scores.numel();
    double sum = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(fake_scores[i]) - 1.0;
        sum += d * d;
        out.grad[i] = static_cast<T>(2.0 * d / double(n));
    }
    out.value = sum / double(n);
    return out;
}

// ---------------------------------------------------------------------------
// Weighted four-term restoration objective.
//   total = fidelity + w_quality * quality + w_edge * edge + w_adv * adversarial
// ---------------------------------------------------------------------------

struct LossWeights {
    double quality = 0.1;
    double edge = 1.0;
    double adversarial = 0.01;
};

}  // namespace winrest
