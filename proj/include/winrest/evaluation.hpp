// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "winrest/data.hpp"
#include "winrest/error.hpp"
#include "winrest/generator.hpp"
#include "winrest/image_io.hpp"
#include "winrest/metrics.hpp"
#include "winrest/tensor.hpp"
#include "winrest/tiling.hpp"

namespace winrest {

template <typename T>
Tensor<T> convert(const Tensor<float>& x) {
    Tensor<T> y(x.dims());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = T(x[i]);
    return y;
}

struct MetricsRow {
    std::string id;
    double psnr = 0;
    double ssim = 0;
};

/// Per-image metrics plus aggregates and enough metadata to tie the report
/// back to the run that produced it.
struct MetricsReport {
    std::vector<MetricsRow> rows;  // sorted by id
    double mean_psnr = 0;
    double mean_ssim = 0;
    std::uint64_t config_hash = 0;
    std::string checkpoint_id;
    std::string timestamp;
};

/// Restores every pair in the split and scores the result against HQ.
/// Rows come out sorted by id; aggregates are plain arithmetic means, so an
/// infinite per-image PSNR propagates to the aggregate.
template <typename T>
MetricsReport evaluate(const std::vector<ImagePair>& split, Generator<T>& model,
                       const TilePlan& plan, std::uint64_t config_hash = 0,
                       std::string checkpoint_id = "", std::string timestamp = "") {
    require(!split.empty(), ErrorKind::data, "evaluate: empty split");
    MetricsReport report;
    report.config_hash = config_hash;
    report.checkpoint_id = std::move(checkpoint_id);
    report.timestamp = std::move(timestamp);
    for (const ImagePair& pair : split) {
        const Tensor<T> lq = convert<T>(read_image_png(pair.lq_path));
        const Tensor<T> hq = convert<T>(read_image_png(pair.hq_path));
        const Tensor<T> out = tiled_restore(model, lq, plan);
        report.rows.push_back({pair.id, psnr(out, hq), ssim(out, hq)});
    }
    std::sort(report.rows.begin(), report.rows.end(),
              [](const MetricsRow& a, const MetricsRow& b) { return a.id < b.id; });
    double psum = 0, ssum = 0;
    for (const MetricsRow& r : report.rows) {
        psum += r.psnr;
        ssum += r.ssim;
    }
    report.mean_psnr = psum / double(report.rows.size());
    report.mean_ssim = ssum / double(report.rows.size());
    return report;
}

namespace eval_detail {

/// Infinite PSNR is a sentinel, not a number: JSON carries null plus a flag.
inline void put_psnr(nlohmann::json& j, const char* key, double v) {
    const std::string flag = std::string(key) + "_infinite";
    if (std::isinf(v)) {
        j[key] = nullptr;
        j[flag] = true;
    } else {
        j[key] = v;
        j[flag] = false;
    }
}

}  // namespace eval_detail

inline nlohmann::json report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    char hash[19];
    std::snprintf(hash, sizeof hash, "0x%016llx",
                  static_cast<unsigned long long>(report.config_hash));
    j["config_hash"] = hash;
    j["checkpoint"] = report.checkpoint_id;
    j["timestamp"] = report.timestamp;
    eval_detail::put_psnr(j, "mean_psnr", report.mean_psnr);
    j["mean_ssim"] = report.mean_ssim;
    j["images"] = nlohmann::json::array();
    for (const MetricsRow& r : report.rows) {
        nlohmann::json row;
        row["id"] = r.id;
        eval_detail::put_psnr(row, "psnr", r.psnr);
        row["ssim"] = r.ssim;
        j["images"].push_back(std::move(row));
    }
    return j;
}

inline void write_report_json(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "report: cannot open ", path, " for writing");
    out << report_to_json(report).dump(2) << "\n";
    require(out.good(), ErrorKind::io, "report: write failed for ", path);
}

inline void write_report_csv(const MetricsReport& report, const std::string& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "report: cannot open ", path, " for writing");
    out << "id,psnr,ssim\n";
    char line[160];
    for (const MetricsRow& r : report.rows) {
        if (std::isinf(r.psnr)) {
            std::snprintf(line, sizeof line, "%s,inf,%.9f\n", r.id.c_str(), r.ssim);
        } else {
            std::snprintf(line, sizeof line, "%s,%.9f,%.9f\n", r.id.c_str(), r.psnr, r.ssim);
        }
        out << line;
    }
    require(out.good(), ErrorKind::io, "report: write failed for ", path);
}

// ---------------------------------------------------------------------------
// Minimal chart rasterization. Bars and curves drawn into an RGB canvas, so
// reports can ship next to static images without a plotting dependency.
// ---------------------------------------------------------------------------

namespace eval_detail {

inline Tensor<float> chart_canvas(std::size_t h, std::size_t w) {
    Tensor<float> img({h, w, 3});
    img.fill(1.0f);
    return img;
}

inline void fill_rect(Tensor<float>& img, std::size_t r0, std::size_t r1, std::size_t c0,
                      std::size_t c1, float red, float green, float blue) {
    r1 = std::min(r1, img.dim(0));
    c1 = std::min(c1, img.dim(1));
    for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) {
            img(r, c, 0) = red;
            img(r, c, 1) = green;
            img(r, c, 2) = blue;
        }
    }
}

}  // namespace eval_detail

/// One bar per image, height proportional to PSNR (infinite bars drawn full
/// scale in a distinct color).
inline void write_psnr_bar_chart(const MetricsReport& report, const std::string& path) {
    const std::size_t h = 240, w = std::max<std::size_t>(120, report.rows.size() * 24 + 40);
    Tensor<float> img = eval_detail::chart_canvas(h, w);
    double peak = 1.0;
    for (const MetricsRow& r : report.rows) {
        if (!std::isinf(r.psnr)) peak = std::max(peak, r.psnr);
    }
    const std::size_t base = h - 20;
    eval_detail::fill_rect(img, base, base + 2, 20, w - 20, 0.2f, 0.2f, 0.2f);
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const double v = report.rows[i].psnr;
        const bool inf = std::isinf(v);
        const double frac = inf ? 1.0 : std::max(0.0, v) / (1.25 * peak);
        const auto bar = std::size_t(std::lround(frac * double(base - 20)));
        const std::size_t c0 = 22 + i * 24;
        if (inf) {
            eval_detail::fill_rect(img, base - bar, base, c0, c0 + 18, 0.85f, 0.45f, 0.1f);
        } else {
            eval_detail::fill_rect(img, base - bar, base, c0, c0 + 18, 0.15f, 0.35f, 0.7f);
        }
    }
    write_image_png(path, img);
}

/// Polyline of a scalar series (loss or metric history) over steps.
inline void write_curve_chart(const std::vector<double>& values, const std::string& path) {
    require(!values.empty(), ErrorKind::config, "curve chart: empty series");
    const std::size_t h = 240, w = 640;
    Tensor<float> img = eval_detail::chart_canvas(h, w);
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const std::size_t base = h - 20, top = 20, left = 20, right = w - 20;
    eval_detail::fill_rect(img, base, base + 2, left, right, 0.2f, 0.2f, 0.2f);
    const std::size_t span = right - left - 1;
    for (std::size_t i = 0; i + 1 < values.size(); ++i) {
        // Straight segment drawn with dense parameter sampling.
        const double x0 = double(left) + double(span) * double(i) / double(values.size() - 1);
        const double x1 = double(left) + double(span) * double(i + 1) / double(values.size() - 1);
        const double y0 = double(base) - (values[i] - lo) / (hi - lo) * double(base - top);
        const double y1 = double(base) - (values[i + 1] - lo) / (hi - lo) * double(base - top);
        const int steps = std::max(2, int(std::abs(x1 - x0) + std::abs(y1 - y0)) + 1);
        for (int s = 0; s <= steps; ++s) {
            const double t = double(s) / double(steps);
            const auto r = std::size_t(std::lround(y0 + t * (y1 - y0)));
            const auto c = std::size_t(std::lround(x0 + t * (x1 - x0)));
            eval_detail::fill_rect(img, r, r + 2, c, c + 2, 0.75f, 0.2f, 0.2f);
        }
    }
    write_image_png(path, img);
}

}  // namespace winrest
