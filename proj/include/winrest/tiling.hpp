// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "winrest/error.hpp"
#include "winrest/generator.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Tiled full-image inference: restore overlapping tiles and reassemble, so
// arbitrarily large inputs run at bounded memory. With crop-center blending,
// every pixel comes from exactly one tile; pixels away from tile seams are
// bit-identical to whole-image inference when tile offsets preserve the
// model's window phase (offsets divisible by the model alignment).
// ---------------------------------------------------------------------------

struct TilePlan {
    std::size_t tile = 256;
    std::size_t overlap = 32;
    enum class Blend { crop_center, feathered } blend = Blend::crop_center;

    void validate() const {
        require(tile >= 1 && overlap < tile, ErrorKind::config,
                "tile plan needs overlap < tile, got tile ", tile, " overlap ", overlap);
    }
};

/// Tile start offsets along one axis of length n. Interior strides snap down
/// to the alignment grid; the final tile is pinned to the axis end so the
/// plan always covers [0, n).
inline std::vector<std::size_t> plan_axis_offsets(std::size_t n, std::size_t tile,
                                                  std::size_t overlap, std::size_t alignment) {
    require(alignment >= 1, ErrorKind::config, "alignment must be positive");
    if (tile >= n) return {0};
    std::size_t stride = tile - overlap;
    if (stride >= alignment) stride -= stride % alignment;
    std::vector<std::size_t> offsets;
    for (std::size_t o = 0;; o += stride) {
        if (o + tile >= n) {
            std::size_t last = n - tile;
            last -= last % alignment;
            if (last + tile < n) last = n - tile;  // alignment-incompatible axis
            if (offsets.empty() || offsets.back() < last) offsets.push_back(last);
            break;
        }
        offsets.push_back(o);
    }
    return offsets;
}

/// True when every tile offset lies on the model's alignment grid, which is
/// what the bit-exact interior guarantee requires.
inline bool plan_is_phase_aligned(std::size_t n, std::size_t tile, std::size_t overlap,
                                  std::size_t alignment) {
    for (const std::size_t o : plan_axis_offsets(n, tile, overlap, alignment))
        if (o % alignment != 0) return false;
    return true;
}

/// Crop-center ownership boundaries between consecutive tiles (midpoints of
/// their overlaps). Tile i owns [bounds[i], bounds[i+1]).
inline std::vector<std::size_t> axis_kept_bounds(const std::vector<std::size_t>& offsets,
                                                 std::size_t tile, std::size_t n) {
    std::vector<std::size_t> bounds;
    bounds.push_back(0);
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
        bounds.push_back((offsets[i + 1] + offsets[i] + tile) / 2);
    bounds.push_back(n);
    return bounds;
}

template <typename T>
Tensor<T> tiled_restore(const Generator<T>& model, const Tensor<T>& x, const TilePlan& plan) {
    plan.validate();
    require(x.rank() == 3, ErrorKind::shape, "tiled restore expects HxWxC");
    const std::size_t h = x.height(), w = x.width(), c = x.channels();
    const std::size_t align = model.config().alignment();

    const auto oys = plan_axis_offsets(h, plan.tile, plan.overlap, align);
    const auto oxs = plan_axis_offsets(w, plan.tile, plan.overlap, align);
    const std::size_t th = std::min(plan.tile, h), tw = std::min(plan.tile, w);
    const auto by = axis_kept_bounds(oys, th, h);
    const auto bx = axis_kept_bounds(oxs, tw, w);

    Tensor<T> out({h, w, c});
    std::vector<double> num, den;
    if (plan.blend == TilePlan::Blend::feathered) {
        num.assign(h * w * c, 0.0);
        den.assign(h * w * c, 0.0);
    }

    Tensor<T> tile_in({th, tw, c});
    for (std::size_t ti = 0; ti < oys.size(); ++ti) {
        for (std::size_t tj = 0; tj < oxs.size(); ++tj) {
            const std::size_t oy = oys[ti], ox = oxs[tj];
            for (std::size_t r = 0; r < th; ++r)
                for (std::size_t cc = 0; cc < tw; ++cc)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        tile_in(r, cc, ch) = x(oy + r, ox + cc, ch);
            const Tensor<T> restored = model.restore(tile_in);

            if (plan.blend == TilePlan::Blend::crop_center) {
                for (std::size_t r = by[ti]; r < by[ti + 1]; ++r)
                    for (std::size_t cc = bx[tj]; cc < bx[tj + 1]; ++cc)
                        for (std::size_t ch = 0; ch < c; ++ch)
                            out(r, cc, ch) = restored(r - oy, cc - ox, ch);
            } else {
                // Weight 1 outside overlap zones; linear ramp toward interior
                // tile edges, strictly positive everywhere inside the tile.
                const double ramp = double(plan.overlap + 1);
                for (std::size_t r = 0; r < th; ++r) {
                    double wy = 1.0;
                    if (ti > 0) wy = std::min(wy, double(r + 1) / ramp);
                    if (ti + 1 < oys.size()) wy = std::min(wy, double(th - r) / ramp);
                    for (std::size_t cc = 0; cc < tw; ++cc) {
                        double wx = 1.0;
                        if (tj > 0) wx = std::min(wx, double(cc + 1) / ramp);
                        if (tj + 1 < oxs.size()) wx = std::min(wx, double(tw - cc) / ramp);
                        const double wgt = std::min(1.0, wy) * std::min(1.0, wx);
                        for (std::size_t ch = 0; ch < c; ++ch) {
                            const std::size_t at = ((oy + r) * w + (ox + cc)) * c + ch;
                            num[at] += wgt * double(restored(r, cc, ch));
                            den[at] += wgt;
                        }
                    }
                }
            }
        }
    }

    if (plan.blend == TilePlan::Blend::feathered) {
        for (std::size_t i = 0; i < h * w * c; ++i) {
            require(den[i] > 0.0, ErrorKind::numeric, "tile plan left a pixel uncovered");
            out[i] = T(num[i] / den[i]);
        }
    }
    return out;
}

}  // namespace winrest
