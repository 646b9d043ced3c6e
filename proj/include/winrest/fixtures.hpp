// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "winrest/data.hpp"
#include "winrest/error.hpp"
#include "winrest/image_io.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

namespace fixture_detail {

inline double smooth01(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

struct Walker {
    double y, x, dir, thickness;
};

}  // namespace fixture_detail

/// Procedural retina-like test image: a dark circular field with a radial
/// color gradient, a bright disc, and meandering dark vessel curves, fully
/// determined by the seed. Synthetic stand-in only; generated content has
/// none of the statistics of clinical photographs.
inline Tensor<float> make_retina_image(std::size_t size, std::uint64_t seed) {
    require(size >= 32 && size <= 1024, ErrorKind::config, "fixture size out of range");
    Rng rng = Rng::derive(seed, 0x72657469u);
    const double s = double(size);
    const double cy = s / 2 + rng.uniform(-s / 32, s / 32);
    const double cx = s / 2 + rng.uniform(-s / 32, s / 32);
    const double ra = 0.47 * s;

    std::vector<double> canvas(size * size * 3);
    const double inner[3] = {0.58, 0.24, 0.13}, outer[3] = {0.33, 0.11, 0.06};
    const double fy = rng.uniform(0.04, 0.12), fx = rng.uniform(0.04, 0.12);
    const double py = rng.uniform(0.0, 6.28), px = rng.uniform(0.0, 6.28);
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double dy = double(r) - cy, dx = double(c) - cx;
            const double t = std::clamp(std::sqrt(dy * dy + dx * dx) / ra, 0.0, 1.0);
            const double mottle =
                0.03 * std::sin(fy * double(r) + py) * std::sin(fx * double(c) + px);
            for (std::size_t ch = 0; ch < 3; ++ch)
                canvas[(r * size + c) * 3 + ch] =
                    inner[ch] * (1.0 - t) + outer[ch] * t + mottle;
        }

    // Bright disc offset from center.
    const double da = rng.uniform(-0.5, 0.5);
    const double dd = rng.uniform(0.40, 0.55) * ra;
    const double disc_y = cy + dd * std::sin(da), disc_x = cx + dd * std::cos(da);
    const double disc_r = rng.uniform(0.11, 0.14) * ra;
    const double disc_col[3] = {0.93, 0.80, 0.55};
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double dy = double(r) - disc_y, dx = double(c) - disc_x;
            const double dist = std::sqrt(dy * dy + dx * dx);
            const double a =
                0.95 * fixture_detail::smooth01((disc_r + 1.5 - dist) / 3.0);
            if (a <= 0) continue;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                double& v = canvas[(r * size + c) * 3 + ch];
                v = v * (1.0 - a) + disc_col[ch] * a;
            }
        }

    // Vessels: seeded random walks out of the disc, stamped as soft circles.
    const double vessel_col[3] = {0.35, 0.08, 0.06};
    std::vector<fixture_detail::Walker> walkers;
    const std::size_t n0 = 7 + rng.uniform_index(4);
    for (std::size_t i = 0; i < n0; ++i)
        walkers.push_back({disc_y, disc_x, 6.28 * double(i) / double(n0) + rng.uniform(-0.3, 0.3),
                           1.8 + rng.uniform(0.0, 1.2) * s / 256.0});
    const std::size_t max_steps = 3 * size, max_walkers = 24;
    for (std::size_t wi = 0; wi < walkers.size(); ++wi) {
        fixture_detail::Walker wk = walkers[wi];
        for (std::size_t st = 0; st < max_steps; ++st) {
            wk.y += std::sin(wk.dir);
            wk.x += std::cos(wk.dir);
            wk.dir += rng.uniform(-0.16, 0.16);
            wk.thickness *= 0.9995;
            const double ry = wk.y - cy, rx = wk.x - cx;
            if (std::sqrt(ry * ry + rx * rx) > 0.96 * ra || wk.thickness < 0.5) break;
            if (walkers.size() < max_walkers && rng.uniform() < 0.004)
                walkers.push_back({wk.y, wk.x, wk.dir + (rng.uniform() < 0.5 ? 0.6 : -0.6),
                                   wk.thickness * 0.72});
            const std::ptrdiff_t rad = std::ptrdiff_t(std::ceil(wk.thickness + 1.0));
            for (std::ptrdiff_t oy = -rad; oy <= rad; ++oy)
                for (std::ptrdiff_t ox = -rad; ox <= rad; ++ox) {
                    const std::ptrdiff_t pr = std::ptrdiff_t(std::lround(wk.y)) + oy;
                    const std::ptrdiff_t pc = std::ptrdiff_t(std::lround(wk.x)) + ox;
                    if (pr < 0 || pc < 0 || pr >= std::ptrdiff_t(size) ||
                        pc >= std::ptrdiff_t(size))
                        continue;
                    const double d = std::sqrt(double(oy * oy + ox * ox));
                    const double a =
                        0.85 * fixture_detail::smooth01((wk.thickness - d) / 1.2 + 0.5);
                    if (a <= 0) continue;
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        double& v = canvas[(std::size_t(pr) * size + std::size_t(pc)) * 3 + ch];
                        v = v * (1.0 - a) + vessel_col[ch] * a;
                    }
                }
        }
    }

    // Circular aperture vignette and sensor noise.
    Tensor<float> out({size, size, 3});
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t c = 0; c < size; ++c) {
            const double dy = double(r) - cy, dx = double(c) - cx;
            const double dist = std::sqrt(dy * dy + dx * dx);
            const double vig = fixture_detail::smooth01((ra - dist) / (0.12 * ra));
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double v =
                    canvas[(r * size + c) * 3 + ch] * vig + rng.uniform(-0.012, 0.012) * vig;
                out(r, c, ch) = float(std::clamp(v, 0.0, 1.0));
            }
        }
    return out;
}

/// Per-index degradation used by the fixture tree; cycles through blur kinds.
inline DegradationSpec fixture_degradation(std::size_t index, std::uint64_t seed,
                                           std::size_t size) {
    DegradationSpec spec;
    const double scale = double(size) / 256.0;
    switch (index % 3) {
        case 0:
            spec.blur = DegradationSpec::Blur::gaussian;
            spec.strength = (1.2 + 0.3 * double(index % 4)) * scale;
            break;
        case 1:
            spec.blur = DegradationSpec::Blur::motion;
            spec.strength = std::max(3.0, 5.0 * scale);
            break;
        default:
            spec.blur = DegradationSpec::Blur::defocus;
            spec.strength = std::max(1.5, 2.2 * scale);
            break;
    }
    spec.gain = 0.86 + 0.04 * double(index % 3);
    spec.bias = -0.02;
    spec.noise_sigma = 0.008 + 0.004 * double(index % 2);
    spec.seed = seed ^ (0x9e3779b97f4a7c15ull * (index + 1));
    return spec;
}

inline std::pair<std::size_t, std::size_t> fixture_split_counts(std::size_t n) {
    const std::size_t test = n >= 4 ? n / 4 : (n >= 2 ? 1 : 0);
    return {n - test, test};
}

/// Writes a complete paired-dataset tree (train/test splits in a 3:1
/// proportion, manifest, and a three-grade quality set) of procedurally
/// generated pairs. Deterministic per (n, seed, size).
inline PairedDataset make_fixture_tree(const std::filesystem::path& root, std::size_t n,
                                       std::uint64_t seed, std::size_t size = 128) {
    require(n >= 1 && n <= 64, ErrorKind::config, "fixture count out of range");
    namespace fs = std::filesystem;
    for (const char* split : {"train", "test"}) {
        fs::create_directories(root / split / "lq");
        fs::create_directories(root / split / "hq");
    }
    for (const char* grade : {"grade_0", "grade_1", "grade_2"})
        fs::create_directories(root / "quality" / grade);

    const auto [n_train, n_test] = fixture_split_counts(n);
    (void)n_train;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor<float> hq = make_retina_image(size, seed + i);
        const Tensor<float> lq = synth_degrade(hq, fixture_degradation(i, seed, size));
        char name[32];
        std::snprintf(name, sizeof(name), "pair_%02zu.png", i);
        const char* split = (i < n - n_test) ? "train" : "test";
        write_image_png(root / split / "hq" / name, hq);
        write_image_png(root / split / "lq" / name, lq);

        std::snprintf(name, sizeof(name), "img_%02zu.png", i);
        DegradationSpec mild;
        mild.strength = std::max(0.8, 1.2 * double(size) / 256.0);
        mild.noise_sigma = 0.004;
        mild.seed = seed ^ (0xd1b54a32d192ed03ull * (i + 1));
        DegradationSpec heavy = mild;
        heavy.strength = std::max(2.0, 3.2 * double(size) / 256.0);
        heavy.gain = 0.9;
        heavy.noise_sigma = 0.008;
        write_image_png(root / "quality" / "grade_0" / name, hq);
        write_image_png(root / "quality" / "grade_1" / name, synth_degrade(hq, mild));
        write_image_png(root / "quality" / "grade_2" / name, synth_degrade(hq, heavy));
    }

    PairedDataset ds = load_dataset(root);
    write_manifest(ds, root / "manifest.jsonl");
    return ds;
}

/// Loads the quality-grade tree written by make_fixture_tree.
inline void load_quality_tree(const std::filesystem::path& root,
                              std::vector<Tensor<float>>& images,
                              std::vector<std::size_t>& labels) {
    namespace fs = std::filesystem;
    for (std::size_t g = 0; g < 3; ++g) {
        const fs::path dir = root / ("grade_" + std::to_string(g));
        require(fs::is_directory(dir), ErrorKind::data, "missing quality grade directory ",
                dir.string());
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            images.push_back(read_image_png(f));
            labels.push_back(g);
        }
    }
    require(!images.empty(), ErrorKind::data, "quality tree is empty at ", root.string());
}

}  // namespace winrest
