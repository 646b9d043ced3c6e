// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "winrest/error.hpp"
#include "winrest/image_io.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

// ---------------------------------------------------------------------------
// Paired dataset: root/{train,test}/{lq,hq} with matching PNG filenames.
// ---------------------------------------------------------------------------

struct ImagePair {
    std::string id;
    std::filesystem::path lq_path;
    std::filesystem::path hq_path;
    std::size_t height = 0;
    std::size_t width = 0;
};

struct PairedDataset {
    std::filesystem::path root;
    std::vector<ImagePair> train;
    std::vector<ImagePair> test;
};

namespace data_detail {

inline std::vector<std::string> png_stems(const std::filesystem::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png")
            out.push_back(e.path().stem().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<ImagePair> load_split(const std::filesystem::path& split_dir,
                                         const std::string& split_name) {
    const auto lq_dir = split_dir / "lq", hq_dir = split_dir / "hq";
    require(std::filesystem::is_directory(lq_dir) && std::filesystem::is_directory(hq_dir),
            ErrorKind::data, "dataset split ", split_name, " needs lq/ and hq/ directories");

    const auto lq_ids = png_stems(lq_dir);
    const auto hq_ids = png_stems(hq_dir);
    const std::set<std::string> lq_set(lq_ids.begin(), lq_ids.end());
    for (const auto& id : hq_ids)
        require(lq_set.count(id) > 0, ErrorKind::data, "missing counterpart: ", split_name, "/",
                id, " has hq but no lq file");

    std::vector<ImagePair> out;
    const std::set<std::string> hq_set(hq_ids.begin(), hq_ids.end());
    for (const auto& id : lq_ids) {
        require(hq_set.count(id) > 0, ErrorKind::data, "missing counterpart: ", split_name, "/",
                id, " has lq but no hq file");
        ImagePair p;
        p.id = id;
        p.lq_path = lq_dir / (id + ".png");
        p.hq_path = hq_dir / (id + ".png");
        std::pair<std::size_t, std::size_t> ld, hd;
        try {
            ld = read_image_dims(p.lq_path);
            hd = read_image_dims(p.hq_path);
        } catch (const Error& e) {
            fail(ErrorKind::data, "unreadable file for pair ", split_name, "/", id, ": ",
                 e.what());
        }
        require(ld == hd, ErrorKind::data, "dimension mismatch for pair ", split_name, "/", id,
                ": lq ", ld.first, "x", ld.second, " vs hq ", hd.first, "x", hd.second);
        p.height = ld.first;
        p.width = ld.second;
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace data_detail

inline PairedDataset load_dataset(const std::filesystem::path& root) {
    require(std::filesystem::is_directory(root), ErrorKind::data, "dataset root not found: ",
            root.string());
    PairedDataset ds;
    ds.root = root;
    ds.train = data_detail::load_split(root / "train", "train");
    ds.test = data_detail::load_split(root / "test", "test");
    return ds;
}

inline std::uint32_t file_crc32(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(bool(in), ErrorKind::io, "cannot open ", path.string());
    std::vector<char> buf(std::size_t(1) << 16);
    uLong crc = crc32(0L, Z_NULL, 0);
    while (in) {
        in.read(buf.data(), std::streamsize(buf.size()));
        const std::streamsize got = in.gcount();
        if (got > 0) crc = crc32(crc, reinterpret_cast<const Bytef*>(buf.data()), uInt(got));
    }
    return std::uint32_t(crc);
}

/// Line-delimited manifest: one JSON object per pair with id, split, paths,
/// dims, and per-file checksums.
inline void write_manifest(const PairedDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(bool(out), ErrorKind::io, "cannot write manifest ", path.string());
    auto emit = [&](const std::vector<ImagePair>& pairs, const char* split) {
        for (const auto& p : pairs) {
            nlohmann::json row{{"id", p.id},
                               {"split", split},
                               {"lq", p.lq_path.lexically_relative(ds.root).generic_string()},
                               {"hq", p.hq_path.lexically_relative(ds.root).generic_string()},
                               {"height", p.height},
                               {"width", p.width},
                               {"lq_crc32", file_crc32(p.lq_path)},
                               {"hq_crc32", file_crc32(p.hq_path)}};
            out << row.dump() << "\n";
        }
    };
    emit(ds.train, "train");
    emit(ds.test, "test");
}

// ---------------------------------------------------------------------------
// Patch cropping and the 12-element flip/rotation augmentation group.
// ---------------------------------------------------------------------------

template <typename T>
struct PatchPair {
    Tensor<T> lq, hq;
};

template <typename T>
Tensor<T> crop(const Tensor<T>& img, std::size_t oy, std::size_t ox, std::size_t size) {
    Tensor<T> out({size, size, img.channels()});
    const std::size_t c = img.channels();
    for (std::size_t r = 0; r < size; ++r)
        for (std::size_t cc = 0; cc < size; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) out(r, cc, ch) = img(oy + r, ox + cc, ch);
    return out;
}

/// Applies one crop window to both images of a registered pair.
template <typename T>
PatchPair<T> crop_patch_pair(const Tensor<T>& lq, const Tensor<T>& hq, std::size_t size,
                             Rng& rng) {
    require(lq.same_shape(hq), ErrorKind::shape, "pair images must share dimensions");
    require(size >= 1 && size <= lq.height() && size <= lq.width(), ErrorKind::data,
            "patch size ", size, " exceeds image ", lq.height(), "x", lq.width());
    const std::size_t oy = rng.uniform_index(lq.height() - size + 1);
    const std::size_t ox = rng.uniform_index(lq.width() - size + 1);
    return {crop(lq, oy, ox, size), crop(hq, oy, ox, size)};
}

enum class FlipKind : std::size_t { none = 0, horizontal = 1, vertical = 2 };

template <typename T>
Tensor<T> flip_image(const Tensor<T>& img, FlipKind kind) {
    if (kind == FlipKind::none) return img;
    const std::size_t h = img.height(), w = img.width(), c = img.channels();
    Tensor<T> out({h, w, c});
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch)
                out(r, cc, ch) = kind == FlipKind::horizontal ? img(r, w - 1 - cc, ch)
                                                              : img(h - 1 - r, cc, ch);
    return out;
}

/// Quarter-turn counterclockwise; output dimensions are transposed.
template <typename T>
Tensor<T> rotate90_ccw(const Tensor<T>& img) {
    const std::size_t h = img.height(), w = img.width(), c = img.channels();
    Tensor<T> out({w, h, c});
    for (std::size_t r = 0; r < w; ++r)
        for (std::size_t cc = 0; cc < h; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) out(r, cc, ch) = img(cc, w - 1 - r, ch);
    return out;
}

/// Flip first, then rotate counterclockwise by quarter turns.
template <typename T>
Tensor<T> apply_dihedral(const Tensor<T>& img, FlipKind flip, std::size_t quarter_turns) {
    Tensor<T> out = flip_image(img, flip);
    for (std::size_t i = 0; i < quarter_turns % 4; ++i) out = rotate90_ccw(out);
    return out;
}

/// Draws one of the 12 flip x rotation combinations uniformly and applies the
/// same transform to both images.
template <typename T>
PatchPair<T> augment_pair(const Tensor<T>& lq, const Tensor<T>& hq, Rng& rng) {
    const std::size_t draw = rng.uniform_index(12);
    const FlipKind flip = FlipKind(draw / 4);
    const std::size_t turns = draw % 4;
    return {apply_dihedral(lq, flip, turns), apply_dihedral(hq, flip, turns)};
}

// ---------------------------------------------------------------------------
// Seeded k-fold split over pair indices.
// ---------------------------------------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> valid_indices;
};

inline std::vector<FoldSplit> kfold_split(std::size_t count, std::size_t k, std::uint64_t seed) {
    require(k >= 2 && k <= count, ErrorKind::config, "k-fold needs 2 <= k <= ", count, ", got ",
            k);
    std::vector<std::size_t> perm(count);
    for (std::size_t i = 0; i < count; ++i) perm[i] = i;
    Rng rng = Rng::derive(seed, 0x6b666f6cu);
    for (std::size_t i = count; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_index(i)]);

    const std::size_t base = count / k, rem = count % k;
    std::vector<FoldSplit> folds(k);
    std::size_t at = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t take = base + (f < rem ? 1 : 0);
        folds[f].valid_indices.assign(perm.begin() + std::ptrdiff_t(at),
                                      perm.begin() + std::ptrdiff_t(at + take));
        at += take;
    }
    for (std::size_t f = 0; f < k; ++f) {
        std::sort(folds[f].valid_indices.begin(), folds[f].valid_indices.end());
        for (std::size_t g = 0; g < k; ++g) {
            if (g == f) continue;
            folds[f].train_indices.insert(folds[f].train_indices.end(),
                                          folds[g].valid_indices.begin(),
                                          folds[g].valid_indices.end());
        }
        std::sort(folds[f].train_indices.begin(), folds[f].train_indices.end());
    }
    return folds;
}

// ---------------------------------------------------------------------------
// Synthetic degradation: blur, illumination change, and additive noise,
// fully determined by the DegradationSpec (including its seed). Fixture
// machinery only; synthetic degradations do not match real clinical
// artifacts.
// ---------------------------------------------------------------------------

struct DegradationSpec {
    enum class Blur { gaussian, motion, defocus } blur = Blur::gaussian;
    double strength = 0.0;   // gaussian sigma / motion length / disk radius, in pixels
    double gain = 1.0;       // illumination multiplier
    double bias = 0.0;       // illumination offset
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(strength >= 0.0 && strength <= 64.0, ErrorKind::config,
                "degradation strength out of range");
        require(gain > 0.0 && gain <= 4.0, ErrorKind::config, "degradation gain out of range");
        require(bias >= -1.0 && bias <= 1.0, ErrorKind::config, "degradation bias out of range");
        require(noise_sigma >= 0.0 && noise_sigma <= 1.0, ErrorKind::config,
                "degradation noise out of range");
    }
};

namespace data_detail {

inline std::size_t mirror(std::ptrdiff_t q, std::ptrdiff_t n) {
    while (q < 0 || q > n - 1) {
        if (q < 0) q = -q;
        if (q > n - 1) q = 2 * (n - 1) - q;
    }
    return std::size_t(q);
}

template <typename T>
Tensor<T> separable_blur(const Tensor<T>& img, const std::vector<double>& taps) {
    const std::ptrdiff_t h = std::ptrdiff_t(img.height()), w = std::ptrdiff_t(img.width());
    const std::size_t c = img.channels();
    const std::ptrdiff_t rad = std::ptrdiff_t(taps.size() / 2);
    Tensor<T> tmp(img.dims()), out(img.dims());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (std::ptrdiff_t k = -rad; k <= rad; ++k)
                    acc += taps[std::size_t(k + rad)] *
                           double(img(std::size_t(r), mirror(cc + k, w), ch));
                tmp(std::size_t(r), std::size_t(cc), ch) = T(acc);
            }
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (std::ptrdiff_t k = -rad; k <= rad; ++k)
                    acc += taps[std::size_t(k + rad)] *
                           double(tmp(mirror(r + k, h), std::size_t(cc), ch));
                out(std::size_t(r), std::size_t(cc), ch) = T(acc);
            }
    return out;
}

template <typename T>
Tensor<T> kernel_blur(const Tensor<T>& img, const std::vector<double>& taps, std::ptrdiff_t kh,
                      std::ptrdiff_t kw) {
    const std::ptrdiff_t h = std::ptrdiff_t(img.height()), w = std::ptrdiff_t(img.width());
    const std::size_t c = img.channels();
    const std::ptrdiff_t ry = kh / 2, rx = kw / 2;
    Tensor<T> out(img.dims());
    for (std::ptrdiff_t r = 0; r < h; ++r)
        for (std::ptrdiff_t cc = 0; cc < w; ++cc)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (std::ptrdiff_t ky = 0; ky < kh; ++ky)
                    for (std::ptrdiff_t kx = 0; kx < kw; ++kx)
                        acc += taps[std::size_t(ky * kw + kx)] *
                               double(img(mirror(r + ky - ry, h), mirror(cc + kx - rx, w), ch));
                out(std::size_t(r), std::size_t(cc), ch) = T(acc);
            }
    return out;
}

}  // namespace data_detail

template <typename T>
Tensor<T> synth_degrade(const Tensor<T>& hq, const DegradationSpec& spec) {
    spec.validate();
    Tensor<T> out = hq;

    if (spec.blur == DegradationSpec::Blur::gaussian && spec.strength > 0.0) {
        const std::ptrdiff_t rad = std::ptrdiff_t(std::ceil(3.0 * spec.strength));
        std::vector<double> taps(std::size_t(2 * rad + 1));
        double sum = 0;
        for (std::ptrdiff_t k = -rad; k <= rad; ++k) {
            const double v = std::exp(-double(k * k) / (2.0 * spec.strength * spec.strength));
            taps[std::size_t(k + rad)] = v;
            sum += v;
        }
        for (auto& v : taps) v /= sum;
        out = data_detail::separable_blur(out, taps);
    } else if (spec.blur == DegradationSpec::Blur::motion && spec.strength > 1.0) {
        // Horizontal streak of uniform taps.
        const std::size_t len = std::size_t(std::lround(spec.strength)) | 1u;
        std::vector<double> taps(len, 1.0 / double(len));
        out = data_detail::kernel_blur(out, taps, 1, std::ptrdiff_t(len));
    } else if (spec.blur == DegradationSpec::Blur::defocus && spec.strength > 0.5) {
        const std::ptrdiff_t rad = std::ptrdiff_t(std::ceil(spec.strength));
        const std::ptrdiff_t k = 2 * rad + 1;
        std::vector<double> taps(std::size_t(k * k), 0.0);
        double sum = 0;
        for (std::ptrdiff_t dy = -rad; dy <= rad; ++dy)
            for (std::ptrdiff_t dx = -rad; dx <= rad; ++dx)
                if (double(dy * dy + dx * dx) <= spec.strength * spec.strength + 0.25) {
                    taps[std::size_t((dy + rad) * k + (dx + rad))] = 1.0;
                    sum += 1.0;
                }
        for (auto& v : taps) v /= sum;
        out = data_detail::kernel_blur(out, taps, k, k);
    }

    const bool relight = spec.gain != 1.0 || spec.bias != 0.0;
    if (relight)
        for (std::size_t i = 0; i < out.numel(); ++i)
            out[i] = T(spec.gain * double(out[i]) + spec.bias);

    if (spec.noise_sigma > 0.0) {
        Rng rng = Rng::derive(spec.seed, 0x64656772u);
        for (std::size_t i = 0; i < out.numel(); ++i)
            out[i] = T(double(out[i]) + spec.noise_sigma * rng.normal());
    }

    clamp01(out);
    return out;
}

}  // namespace winrest
