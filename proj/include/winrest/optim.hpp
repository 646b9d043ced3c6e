// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "winrest/nn.hpp"

namespace winrest {

/// Per-step cosine decay from eta_max at step 0 to eta_min at step total.
inline double cosine_lr(std::uint64_t step, std::uint64_t total, double eta_max, double eta_min) {
    if (total == 0) return eta_min;
    const double ratio = double(std::min(step, total)) / double(total);
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * ratio));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;  // added outside the square root
};

template <typename T>
class Adam {
public:
    Adam() = default;

    explicit Adam(ParamList<T> params, AdamConfig cfg = {}) : cfg_(cfg), params_(std::move(params)) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const auto* p : params_) {
            m_.emplace_back(p->value.dims());
            v_.emplace_back(p->value.dims());
        }
    }

    /// One update from the gradients currently stored on the parameters.
    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            ParamTensor<T>& p = *params_[i];
            for (std::size_t j = 0; j < p.value.numel(); ++j) {
                const double g = double(p.grad[j]);
                const double m = cfg_.beta1 * double(m_[i][j]) + (1.0 - cfg_.beta1) * g;
                const double v = cfg_.beta2 * double(v_[i][j]) + (1.0 - cfg_.beta2) * g * g;
                m_[i][j] = static_cast<T>(m);
                v_[i][j] = static_cast<T>(v);
                const double update = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
                p.value[j] = static_cast<T>(double(p.value[j]) - lr * update);
            }
        }
    }

    std::uint64_t steps_taken() const { return t_; }
    void set_steps_taken(std::uint64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }
    const ParamList<T>& params() const { return params_; }
    std::vector<Tensor<T>>& first_moments() { return m_; }
    std::vector<Tensor<T>>& second_moments() { return v_; }
    const std::vector<Tensor<T>>& first_moments() const { return m_; }
    const std::vector<Tensor<T>>& second_moments() const { return v_; }

private:
    AdamConfig cfg_;
    ParamList<T> params_;
    std::vector<Tensor<T>> m_, v_;
    std::uint64_t t_ = 0;
};

}  // namespace winrest
