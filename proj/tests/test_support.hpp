// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "winrest/nn.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace testutil {

template <typename T>
winrest::Tensor<T> rand_tensor(std::vector<std::size_t> dims, winrest::Rng& rng, double lo = -1.0,
                               double hi = 1.0) {
    winrest::Tensor<T> t(std::move(dims));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Largest elementwise |got - want| / (1 + |want|).
template <typename T, typename U>
double elementwise_error(const winrest::Tensor<T>& got, const winrest::Tensor<U>& want) {
    double worst = 0;
    for (std::size_t i = 0; i < got.numel(); ++i) {
        const double g = double(got[i]), w = double(want[i]);
        worst = std::max(worst, std::abs(g - w) / (1.0 + std::abs(w)));
    }
    return worst;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

/// Symmetric relative error for gradient comparison; pairs that are both
/// negligible count as exact.
inline double grad_rel_err(double fd, double an) {
    const double m = std::max(std::abs(fd), std::abs(an));
    if (m < 1e-7) return 0.0;
    return std::abs(fd - an) / m;
}

/// Fixed random weights turn a tensor-valued map into a scalar loss whose
/// output-gradient is the weight tensor itself.
template <typename T>
double weighted_sum(const winrest::Tensor<T>& y, const winrest::Tensor<T>& r) {
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += double(y[i]) * double(r[i]);
    return s;
}

/// Central finite difference of loss() with respect to one scalar slot.
template <typename F>
double fd_central(F&& loss, double& slot, double h) {
    const double w0 = slot;
    slot = w0 + h;
    const double fp = loss();
    slot = w0 - h;
    const double fm = loss();
    slot = w0;
    return (fp - fm) / (2.0 * h);
}

template <typename F>
float fd_central(F&& loss, float& slot, double h) {
    const float w0 = slot;
    slot = static_cast<float>(w0 + h);
    const double fp = loss();
    slot = static_cast<float>(w0 - h);
    const double fm = loss();
    slot = w0;
    return static_cast<float>((fp - fm) / (2.0 * h));
}

struct GradCheckResult {
    double max_rel_err = 0;
    std::size_t checked = 0;
};

/// Verifies already-accumulated parameter gradients against central finite
/// differences on a sampled subset of each tensor's entries. loss must
/// recompute the full forward pass from current parameter values.
template <typename T, typename LossFn>
GradCheckResult check_param_gradients(const winrest::ParamList<T>& params, LossFn&& loss,
                                      winrest::Rng& rng, std::size_t samples_per_tensor = 6,
                                      double h = 5e-6) {
    GradCheckResult res;
    for (auto* p : params) {
        const std::size_t n = p->value.numel();
        for (std::size_t s = 0; s < std::min(samples_per_tensor, n); ++s) {
            const std::size_t idx = n <= samples_per_tensor ? s : rng.uniform_index(n);
            const double step = h * std::max(1.0, std::abs(double(p->value[idx])));
            const double fd = fd_central(loss, p->value[idx], step);
            const double an = double(p->grad[idx]);
            res.max_rel_err = std::max(res.max_rel_err, grad_rel_err(fd, an));
            ++res.checked;
        }
    }
    return res;
}

/// Same, for the gradient with respect to an input tensor.
template <typename T, typename LossFn>
GradCheckResult check_input_gradient(winrest::Tensor<T>& x, const winrest::Tensor<T>& dx,
                                     LossFn&& loss, winrest::Rng& rng,
                                     std::size_t samples = 24, double h = 5e-6) {
    GradCheckResult res;
    const std::size_t n = x.numel();
    for (std::size_t s = 0; s < std::min(samples, n); ++s) {
        const std::size_t idx = n <= samples ? s : rng.uniform_index(n);
        const double step = h * std::max(1.0, std::abs(double(x[idx])));
        const double fd = fd_central(loss, x[idx], step);
        res.max_rel_err = std::max(res.max_rel_err, grad_rel_err(fd, double(dx[idx])));
        ++res.checked;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Independent dense reference for windowed multi-head self-attention.
// Plain scalar loops, double precision, no shared code with the library
// beyond the tensor container.
// ---------------------------------------------------------------------------

inline winrest::Tensor<double> wmsa_reference(const winrest::Tensor<double>& x,
                                              const winrest::Tensor<double>& wq,
                                              const winrest::Tensor<double>& wk,
                                              const winrest::Tensor<double>& wv,
                                              const winrest::Tensor<double>& wo,
                                              const winrest::Tensor<double>& b, std::size_t l,
                                              std::size_t heads, std::size_t shift, bool masked) {
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    const std::size_t l2 = l * l, d = c / heads;
    const std::size_t s = shift % l;
    const double scale = 1.0 / std::sqrt(double(d));

    winrest::Tensor<double> xs({h, w, c});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) xs(r, cc, ch) = x((r + s) % h, (cc + s) % w, ch);

    winrest::Tensor<double> ys({h, w, c});
    std::vector<double> q(l2 * c), k(l2 * c), v(l2 * c), o(l2 * c, 0.0);
    std::vector<double> logits(l2 * l2), probs(l2 * l2);
    std::vector<int> region(l2);

    for (std::size_t by = 0; by < h / l; ++by) {
        for (std::size_t bx = 0; bx < w / l; ++bx) {
            for (std::size_t t = 0; t < l2; ++t) {
                const std::size_t ry = by * l + t / l, cx = bx * l + t % l;
                for (std::size_t co = 0; co < c; ++co) {
                    double aq = 0, ak = 0, av = 0;
                    for (std::size_t ci = 0; ci < c; ++ci) {
                        const double xv = xs(ry, cx, ci);
                        aq += xv * wq(ci, co);
                        ak += xv * wk(ci, co);
                        av += xv * wv(ci, co);
                    }
                    q[t * c + co] = aq;
                    k[t * c + co] = ak;
                    v[t * c + co] = av;
                }
                if (masked && s > 0) {
                    const std::size_t orig_r = (ry + s) % h, orig_c = (cx + s) % w;
                    region[t] = (orig_r >= h - s ? 2 : 0) + (orig_c >= w - s ? 1 : 0);
                } else {
                    region[t] = 0;
                }
            }
            std::fill(o.begin(), o.end(), 0.0);
            for (std::size_t hh = 0; hh < heads; ++hh) {
                for (std::size_t i = 0; i < l2; ++i) {
                    for (std::size_t j = 0; j < l2; ++j) {
                        double dot = 0;
                        for (std::size_t dd = 0; dd < d; ++dd)
                            dot += q[i * c + hh * d + dd] * k[j * c + hh * d + dd];
                        logits[i * l2 + j] = dot * scale;
                    }
                }
                for (std::size_t i = 0; i < l2; ++i) {
                    double mx = -1e300;
                    for (std::size_t j = 0; j < l2; ++j)
                        if (region[i] == region[j]) mx = std::max(mx, logits[i * l2 + j]);
                    double sum = 0;
                    for (std::size_t j = 0; j < l2; ++j) {
                        if (region[i] != region[j]) {
                            probs[i * l2 + j] = 0;
                        } else {
                            probs[i * l2 + j] = std::exp(logits[i * l2 + j] - mx);
                            sum += probs[i * l2 + j];
                        }
                    }
                    for (std::size_t j = 0; j < l2; ++j) probs[i * l2 + j] /= sum;
                }
                for (std::size_t i = 0; i < l2; ++i) {
                    for (std::size_t dd = 0; dd < d; ++dd) {
                        double acc = 0;
                        for (std::size_t j = 0; j < l2; ++j)
                            acc += probs[i * l2 + j] * v[j * c + hh * d + dd];
                        o[i * c + hh * d + dd] = acc;
                    }
                }
            }
            for (std::size_t t = 0; t < l2; ++t) {
                const std::size_t ry = by * l + t / l, cx = bx * l + t % l;
                for (std::size_t co = 0; co < c; ++co) {
                    double acc = b(t, co);
                    for (std::size_t ci = 0; ci < c; ++ci) acc += o[t * c + ci] * wo(ci, co);
                    ys(ry, cx, co) = acc;
                }
            }
        }
    }

    winrest::Tensor<double> out({h, w, c});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch)
                out(r, cc, ch) = ys((r + h - s) % h, (cc + w - s) % w, ch);
    return out;
}

}  // namespace testutil
