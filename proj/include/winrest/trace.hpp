// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "winrest/discriminator.hpp"
#include "winrest/generator.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Exact dependency tracing. Walks the network graph output-to-input with
// interval arithmetic, answering: which input pixels can influence a given
// output region? Spatial ops are separable, so each axis traces alone.
// ---------------------------------------------------------------------------

struct Interval {
    std::ptrdiff_t lo = 0;
    std::ptrdiff_t hi = 0;  // inclusive
    bool whole = false;     // dependency wrapped around the axis: everything

    static Interval all(std::ptrdiff_t n) { return {0, n - 1, true}; }
};

inline Interval interval_union(Interval a, Interval b) {
    return {std::min(a.lo, b.lo), std::max(a.hi, b.hi), a.whole || b.whole};
}

namespace trace_detail {

/// Input span needed by conv output [lo, hi]: stride/kernel expansion, then
/// folding for reflect padding (reflected taps land just inside the edge).
inline Interval expand_conv(Interval v, std::ptrdiff_t k, std::ptrdiff_t pad, std::ptrdiff_t stride,
                            std::ptrdiff_t n_in) {
    if (v.whole) return Interval::all(n_in);
    Interval r;
    r.lo = v.lo * stride - pad;
    r.hi = v.hi * stride + (k - 1) - pad;
    if (r.lo < 0) {
        r.hi = std::max(r.hi, -r.lo);
        r.lo = 0;
    }
    if (r.hi > n_in - 1) {
        r.lo = std::min(r.lo, 2 * (n_in - 1) - r.hi);
        r.hi = n_in - 1;
    }
    r.lo = std::max<std::ptrdiff_t>(r.lo, 0);
    r.hi = std::min(r.hi, n_in - 1);
    return r;
}

/// Window attention snaps the span outward to window boundaries (in shifted
/// coordinates). A span reaching a wrapped boundary window depends on the
/// opposite edge unless cross-region masking is on.
inline Interval expand_window(Interval v, std::ptrdiff_t l, std::ptrdiff_t shift, std::ptrdiff_t n,
                              bool masked) {
    if (v.whole) return Interval::all(n);
    Interval r;
    const std::ptrdiff_t s = shift % l;
    r.lo = ((v.lo + s) / l) * l - s;
    r.hi = ((v.hi + s) / l) * l + (l - 1) - s;
    if (r.lo < 0 || r.hi > n - 1) {
        if (!masked || s == 0) return Interval::all(n);
        r.lo = std::max<std::ptrdiff_t>(r.lo, 0);
        r.hi = std::min(r.hi, n - 1);
    }
    return r;
}

/// Source span of bilinear x2 output [lo, hi]: even outputs read taps
/// {m-1, m}, odd outputs {m, m+1}, clamped at the borders.
inline Interval expand_bilinear(Interval v, std::ptrdiff_t n_in) {
    if (v.whole) return Interval::all(n_in);
    Interval r;
    r.lo = (v.lo % 2 == 0) ? v.lo / 2 - 1 : v.lo / 2;
    r.hi = (v.hi % 2 == 1) ? v.hi / 2 + 1 : v.hi / 2;
    r.lo = std::max<std::ptrdiff_t>(r.lo, 0);
    r.hi = std::min(r.hi, n_in - 1);
    return r;
}

/// One attention block: the FFN's 3x3 depthwise tap, then the window snap.
/// Residual paths are subsets of both and need no extra union.
inline Interval expand_wsab(Interval v, std::ptrdiff_t l, std::ptrdiff_t shift, std::ptrdiff_t n,
                            bool masked) {
    return expand_window(expand_conv(v, 3, 1, 1, n), l, shift, n, masked);
}

/// A stage of blocks, walked in reverse (block j odd = shifted).
inline Interval expand_stage(Interval v, std::size_t blocks, std::ptrdiff_t l, std::ptrdiff_t n,
                             bool masked) {
    for (std::size_t j = blocks; j-- > 0;) {
        const std::ptrdiff_t shift = (j % 2 == 1) ? l / 2 : 0;
        v = expand_wsab(v, l, shift, n, masked);
    }
    return v;
}

inline Interval generator_axis_need(const GeneratorConfig& cfg, Interval out, std::ptrdiff_t n) {
    const std::ptrdiff_t l = std::ptrdiff_t(cfg.window);
    const std::size_t s = cfg.stages;
    const bool masked = cfg.masked_shift;

    Interval cur = expand_conv(out, 3, 1, 1, n);  // output head
    std::vector<Interval> skip_need(s - 1);
    std::ptrdiff_t nd = n;
    for (std::size_t k = 0; k + 1 < s; ++k) {  // decoder, top to bottom
        cur = expand_stage(cur, cfg.blocks_per_stage, l, nd, masked);
        skip_need[k] = cur;
        cur = expand_conv(cur, 3, 1, 1, nd);
        cur = expand_bilinear(cur, nd / 2);
        nd /= 2;
    }
    cur = expand_stage(cur, cfg.blocks_per_stage, l, nd, masked);  // bottleneck
    for (std::size_t i = s; i-- > 0;) {  // encoder, bottom to top
        if (i + 1 < s) {
            cur = expand_conv(cur, 4, 1, 2, nd * 2);
            nd *= 2;
            cur = interval_union(cur, skip_need[i]);
        }
        cur = expand_stage(cur, cfg.blocks_per_stage, l, nd, masked);
    }
    return expand_conv(cur, 3, 1, 1, n);  // input projection
}

inline Interval discriminator_axis_need(const DiscriminatorConfig& cfg, Interval out,
                                        std::ptrdiff_t n) {
    const std::ptrdiff_t l = std::ptrdiff_t(cfg.window);
    const bool masked = cfg.masked_shift;
    std::ptrdiff_t nd = n >> cfg.depth;
    Interval cur = expand_conv(out, 3, 1, 1, nd);  // score head
    for (std::size_t i = cfg.depth; i-- > 0;) {
        cur = expand_conv(cur, 4, 1, 2, nd * 2);
        nd *= 2;
        cur = expand_stage(cur, cfg.blocks_per_stage, l, nd, masked);
    }
    return expand_conv(cur, 3, 1, 1, n);  // input projection
}

}  // namespace trace_detail

struct FootprintBox {
    Interval y, x;
};

/// Input pixels able to influence generator output rows [oy0, oy1] and
/// columns [ox0, ox1] on an aligned H x W canvas.
inline FootprintBox generator_footprint(const GeneratorConfig& cfg, std::size_t oy0, std::size_t oy1,
                                        std::size_t ox0, std::size_t ox1, std::size_t h,
                                        std::size_t w) {
    FootprintBox b;
    b.y = trace_detail::generator_axis_need(cfg, {std::ptrdiff_t(oy0), std::ptrdiff_t(oy1), false},
                                            std::ptrdiff_t(h));
    b.x = trace_detail::generator_axis_need(cfg, {std::ptrdiff_t(ox0), std::ptrdiff_t(ox1), false},
                                            std::ptrdiff_t(w));
    return b;
}

/// Input pixels able to influence score-map cells [u0, u1] x [v0, v1] on an
/// aligned H x W canvas.
inline FootprintBox discriminator_footprint(const DiscriminatorConfig& cfg, std::size_t u0,
                                            std::size_t u1, std::size_t v0, std::size_t v1,
                                            std::size_t h, std::size_t w) {
    FootprintBox b;
    b.y = trace_detail::discriminator_axis_need(
        cfg, {std::ptrdiff_t(u0), std::ptrdiff_t(u1), false}, std::ptrdiff_t(h));
    b.x = trace_detail::discriminator_axis_need(
        cfg, {std::ptrdiff_t(v0), std::ptrdiff_t(v1), false}, std::ptrdiff_t(w));
    return b;
}

/// Largest one-sided dependency reach of a single interior output pixel,
/// maximized over one alignment period. An output pixel at least this far
/// from every canvas edge has a dependency cone that never touches an edge,
/// so cropping computes it exactly.
inline std::size_t generator_tile_margin(const GeneratorConfig& cfg) {
    const std::ptrdiff_t a = std::ptrdiff_t(cfg.alignment());
    std::ptrdiff_t n = a * 64;
    for (;;) {
        std::ptrdiff_t reach = 0;
        bool clean = true;
        const std::ptrdiff_t q0 = (n / 2 / a) * a;
        for (std::ptrdiff_t q = q0; q < q0 + a; ++q) {
            Interval need =
                trace_detail::generator_axis_need(cfg, {q, q, false}, n);
            if (need.whole || need.lo == 0 || need.hi == n - 1) {
                clean = false;
                break;
            }
            reach = std::max({reach, q - need.lo, need.hi - q});
        }
        if (clean) return std::size_t(reach);
        n *= 2;
        require(n <= a * 4096, ErrorKind::numeric, "dependency reach exceeds traceable extent");
    }
}

}  // namespace winrest
