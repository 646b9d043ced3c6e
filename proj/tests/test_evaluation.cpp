// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "test_support.hpp"
#include "winrest/checkpoint.hpp"
#include "winrest/evaluation.hpp"
#include "winrest/fixtures.hpp"
#include "winrest/generator.hpp"
#include "winrest/image_io.hpp"
#include "winrest/metrics.hpp"
#include "winrest/optim.hpp"
#include "winrest/tiling.hpp"
#include "winrest/trace.hpp"

using namespace winrest;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / "winrest_tests" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
    REQUIRE(out.good());
}

/// Rewrites the trailing crc so a deliberate payload edit is not caught by
/// the checksum, exposing the field-level guards behind it.
void fix_crc(std::vector<unsigned char>& b) {
    const std::size_t body = b.size() - 4;
    const auto crc = static_cast<std::uint32_t>(::crc32(0, b.data(), uInt(body)));
    for (int i = 0; i < 4; ++i) b[body + i] = static_cast<unsigned char>(crc >> (8 * i));
}

GeneratorConfig tiny_tiling_config() {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.base_heads = 1;
    cfg.stages = 2;
    cfg.window = 2;
    cfg.zero_init_output = false;
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// PSNR
// ---------------------------------------------------------------------------

TEST_CASE("psnr matches an independent loop oracle") {
    Rng rng(4001);
    for (int rep = 0; rep < 20; ++rep) {
        Tensor<float> a = testutil::rand_tensor<float>({9, 7, 3}, rng, 0.0, 1.0);
        Tensor<float> b = testutil::rand_tensor<float>({9, 7, 3}, rng, 0.0, 1.0);
        double acc = 0;
        for (std::size_t i = 0; i < a.numel(); ++i) {
            const double d = double(a[i]) - double(b[i]);
            acc += d * d;
        }
        const double mse = acc / double(a.numel());
        const double oracle = 10.0 * std::log10(1.0 / mse);
        REQUIRE(std::abs(psnr(a, b) - oracle) < 1e-9);
        REQUIRE(std::abs(mean_squared_error(a, b) - mse) < 1e-15);
    }
}

TEST_CASE("psnr closed forms and sentinel") {
    Rng rng(4002);
    Tensor<float> a = testutil::rand_tensor<float>({12, 10, 3}, rng, 0.0, 254.0 / 255.0);
    Tensor<float> b = a;
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] += 1.0f / 255.0f;

    // Uniform error of one 8-bit step: 20 log10(255) dB.
    REQUIRE(std::abs(psnr(a, b) - 20.0 * std::log10(255.0)) < 1e-6);
    REQUIRE(std::isinf(psnr(a, a)));
    REQUIRE(psnr(a, a) > 0);

    Tensor<float> c({12, 10, 2});
    CHECK_THROWS_WITH(psnr(a, c), ContainsSubstring("shape"));
}

// ---------------------------------------------------------------------------
// SSIM
// ---------------------------------------------------------------------------

TEST_CASE("ssim identity, symmetry, and range") {
    Tensor<float> a = make_retina_image(32, 7);
    REQUIRE(ssim(a, a) == 1.0);

    Tensor<float> inv = a;
    for (std::size_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0f - inv[i];
    const double s = ssim(a, inv);
    REQUIRE(s < 1.0);
    REQUIRE(ssim(a, inv) == ssim(inv, a));

    Rng rng(4003);
    for (int rep = 0; rep < 5; ++rep) {
        Tensor<float> u = testutil::rand_tensor<float>({16, 13, 3}, rng, 0.0, 1.0);
        Tensor<float> v = testutil::rand_tensor<float>({16, 13, 3}, rng, 0.0, 1.0);
        const double sv = ssim(u, v);
        REQUIRE(sv <= 1.0);
        REQUIRE(sv >= -1.0);
    }

    Tensor<float> tiny({10, 12, 3});
    CHECK_THROWS_WITH(ssim(tiny, tiny), ContainsSubstring("11x11"));
}

TEST_CASE("metrics match the frozen reference values") {
    // Reference computed once with scikit-image 0.25.2 on the checked-in
    // pair: structural_similarity(gaussian_weights=True, sigma=1.5,
    // use_sample_covariance=False, data_range=1.0, channel_axis=2) and
    // peak_signal_noise_ratio(data_range=1.0), inputs uint8/255 in float64.
    const fs::path dir = WINREST_TEST_DATA_DIR;
    const Tensor<float> a = read_image_png(dir / "ssim_ref_a.png");
    const Tensor<float> b = read_image_png(dir / "ssim_ref_b.png");
    REQUIRE(a.height() == 64);
    REQUIRE(b.width() == 64);
    REQUIRE(std::abs(ssim(a, b) - 0.826435766835) < 1e-6);
    REQUIRE(std::abs(psnr(a, b) - 33.583334802) < 1e-5);
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint round trip is bit exact") {
    const fs::path dir = fresh_dir("ckpt_roundtrip");
    Rng rng(4010);

    Checkpoint c;
    c.role = "generator";
    c.config_text = "{\"stages\":2}";
    Tensor<float> tf = testutil::rand_tensor<float>({3, 4, 2}, rng, -1.0, 1.0);
    Tensor<double> td = testutil::rand_tensor<double>({5}, rng, -1.0, 1.0);
    c.add_tensor("w.f32", tf);
    c.add_tensor("w.f64", td);
    c.add_u64("steps", 12345);
    Rng stream(991);
    stream.next_u64();
    c.add_rng("data_rng", stream);

    const fs::path path = dir / "state.ckpt";
    c.save(path.string());
    Checkpoint r = Checkpoint::load(path.string());

    REQUIRE(r.role == "generator");
    REQUIRE(r.config_text == c.config_text);
    REQUIRE(r.config_hash() == c.config_hash());
    REQUIRE(bit_equal(r.get_tensor<float>("w.f32"), tf));
    REQUIRE(bit_equal(r.get_tensor<double>("w.f64"), td));
    REQUIRE(r.get_u64("steps") == 12345);

    // The restored stream continues exactly where the saved one stood.
    Rng restored = r.get_rng("data_rng");
    for (int i = 0; i < 5; ++i) REQUIRE(restored.next_u64() == stream.next_u64());

    REQUIRE(r.has_tensor("w.f32"));
    REQUIRE_FALSE(r.has_tensor("w.f16"));
    CHECK_THROWS_WITH(r.get_tensor<double>("w.f32"), ContainsSubstring("4-byte"));
    CHECK_THROWS_WITH(r.get_tensor<float>("nope"), ContainsSubstring("missing tensor"));
}

TEST_CASE("checkpoint corruption is rejected before any field is used") {
    const fs::path dir = fresh_dir("ckpt_corrupt");
    Checkpoint c;
    c.role = "generator";
    c.config_text = "{\"window\":8,\"stages\":4}";
    Tensor<float> w({16});
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = float(i);
    c.add_tensor("w", w);
    const fs::path path = dir / "state.ckpt";
    c.save(path.string());
    const std::vector<unsigned char> good = read_bytes(path);

    // A flipped payload byte breaks the checksum.
    auto bad = good;
    bad[bad.size() / 2] ^= 0x5a;
    write_bytes(path, bad);
    CHECK_THROWS_WITH(Checkpoint::load(path.string()), ContainsSubstring("checksum"));

    // Truncation is detected too.
    bad = good;
    bad.resize(bad.size() - 7);
    write_bytes(path, bad);
    CHECK_THROWS_AS(Checkpoint::load(path.string()), Error);

    // With the checksum patched up, the magic guard still fires.
    bad = good;
    bad[0] ^= 0xff;
    fix_crc(bad);
    write_bytes(path, bad);
    CHECK_THROWS_WITH(Checkpoint::load(path.string()), ContainsSubstring("magic"));

    // Unknown future format versions are refused.
    bad = good;
    bad[8] += 1;
    fix_crc(bad);
    write_bytes(path, bad);
    CHECK_THROWS_WITH(Checkpoint::load(path.string()), ContainsSubstring("version"));

    // A silently edited config no longer matches its stored fingerprint.
    bad = good;
    const std::size_t config_at = 8 + 4 + 4 + c.role.size() + 8 + 4;
    bad[config_at] ^= 0x01;
    fix_crc(bad);
    write_bytes(path, bad);
    CHECK_THROWS_WITH(Checkpoint::load(path.string()), ContainsSubstring("fingerprint"));

    write_bytes(path, good);
    REQUIRE(bit_equal(Checkpoint::load(path.string()).get_tensor<float>("w"), w));
}

TEST_CASE("parameter and optimizer state survive a save/load round trip") {
    const fs::path dir = fresh_dir("ckpt_optim");
    Rng rng(4011);

    auto build = [&](std::uint64_t seed) {
        auto params = std::make_shared<std::vector<ParamTensor<double>>>(2);
        (*params)[0].name = "layer.w";
        (*params)[0].allocate({3, 2});
        (*params)[1].name = "layer.b";
        (*params)[1].allocate({4});
        Rng r(seed);
        for (auto& p : *params)
            for (std::size_t i = 0; i < p.value.numel(); ++i) p.value[i] = r.normal();
        return params;
    };
    auto fill_grads = [](std::vector<ParamTensor<double>>& ps, int step) {
        for (auto& p : ps)
            for (std::size_t i = 0; i < p.value.numel(); ++i)
                p.grad[i] = 2.0 * p.value[i] + 0.1 * double(step);
    };

    auto a = build(1);
    ParamList<double> alist{&(*a)[0], &(*a)[1]};
    Adam<double> opt_a(alist);
    for (int s = 0; s < 3; ++s) {
        fill_grads(*a, s);
        opt_a.step(0.01);
    }

    Checkpoint c;
    c.role = "trainer";
    c.config_text = "{}";
    save_params(c, alist);
    save_optimizer(c, opt_a);
    const fs::path path = dir / "state.ckpt";
    c.save(path.string());

    auto b = build(2);  // different start, fully overwritten by the load
    ParamList<double> blist{&(*b)[0], &(*b)[1]};
    Adam<double> opt_b(blist);
    Checkpoint r = Checkpoint::load(path.string());
    load_params(r, blist);
    load_optimizer(r, opt_b);

    REQUIRE(opt_b.steps_taken() == 3);
    for (int s = 3; s < 5; ++s) {
        fill_grads(*a, s);
        opt_a.step(0.01);
        fill_grads(*b, s);
        opt_b.step(0.01);
    }
    REQUIRE(bit_equal((*a)[0].value, (*b)[0].value));
    REQUIRE(bit_equal((*a)[1].value, (*b)[1].value));

    // Loading into a model with a different shape is refused.
    auto wrong = std::make_shared<std::vector<ParamTensor<double>>>(1);
    (*wrong)[0].name = "layer.w";
    (*wrong)[0].allocate({2, 2});
    ParamList<double> wlist{&(*wrong)[0]};
    CHECK_THROWS_WITH(load_params(r, wlist), ContainsSubstring("mismatched shape"));
}

// ---------------------------------------------------------------------------
// Tile planning
// ---------------------------------------------------------------------------

TEST_CASE("axis offsets cover the image for arbitrary sizes") {
    for (std::size_t align : {std::size_t(1), std::size_t(8), std::size_t(16)}) {
        for (std::size_t n = 20; n <= 300; n += 7) {
            const auto offs = plan_axis_offsets(n, 64, 16, align);
            REQUIRE(offs.front() == 0);
            if (64 >= n) {
                REQUIRE(offs.size() == 1);
                continue;
            }
            for (std::size_t i = 0; i < offs.size(); ++i) {
                REQUIRE(offs[i] + 64 <= n);
                if (i > 0) {
                    REQUIRE(offs[i] > offs[i - 1]);
                    REQUIRE(offs[i] <= offs[i - 1] + 64);  // no hole
                }
            }
            REQUIRE(offs.back() + 64 == n);

            const auto bounds = axis_kept_bounds(offs, 64, n);
            REQUIRE(bounds.front() == 0);
            REQUIRE(bounds.back() == n);
            for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
                REQUIRE(bounds[i] < bounds[i + 1]);
                // Each kept range lies inside its own tile.
                REQUIRE(bounds[i] >= offs[i]);
                REQUIRE(bounds[i + 1] <= offs[i] + 64);
            }
        }
    }
}

TEST_CASE("alignment-incompatible axis ends fall back to exact coverage") {
    // 100 is not reachable from 64-tiles on a 16 grid; the last offset must
    // abandon the grid to keep coverage.
    const auto offs = plan_axis_offsets(100, 48, 16, 16);
    REQUIRE(offs.back() + 48 == 100);
    REQUIRE_FALSE(plan_is_phase_aligned(100, 48, 16, 16));
    REQUIRE(plan_is_phase_aligned(96, 48, 16, 16));

    TilePlan bad;
    bad.tile = 32;
    bad.overlap = 32;
    CHECK_THROWS_WITH(bad.validate(), ContainsSubstring("overlap"));
}

TEST_CASE("one covering tile reproduces direct inference bit for bit") {
    GeneratorConfig cfg = tiny_tiling_config();
    Generator<float> g(cfg);
    Rng rng(4020);
    g.init(rng, 0.1);

    Tensor<float> x = testutil::rand_tensor<float>({40, 56, 3}, rng, 0.0, 1.0);
    TilePlan plan;
    plan.tile = 64;
    plan.overlap = 8;
    const Tensor<float> direct = g.restore(x);
    const Tensor<float> tiled = tiled_restore(g, x, plan);
    REQUIRE(bit_equal(direct, tiled));
}

TEST_CASE("tiled inference matches direct inference away from tile edges") {
    GeneratorConfig cfg = tiny_tiling_config();
    Generator<float> g(cfg);
    Rng rng(4021);
    g.init(rng, 0.1);

    const std::size_t n = 96, tile = 48, overlap = 16;
    const std::size_t margin = generator_tile_margin(cfg);
    REQUIRE(margin < tile / 2);  // the clean interior set is nonempty

    Tensor<float> x = make_retina_image(n, 11);
    TilePlan plan;
    plan.tile = tile;
    plan.overlap = overlap;
    const Tensor<float> direct = g.restore(x);
    const Tensor<float> tiled = tiled_restore(g, x, plan);

    const auto offs = plan_axis_offsets(n, tile, overlap, cfg.alignment());
    const auto bounds = axis_kept_bounds(offs, tile, n);
    REQUIRE(plan_is_phase_aligned(n, tile, overlap, cfg.alignment()));

    auto owner = [&](std::size_t p) {
        std::size_t i = 0;
        while (bounds[i + 1] <= p) ++i;
        return i;
    };
    // A pixel whose dependency cone stays inside its tile must be identical;
    // the cone clears the tile edges when the local coordinate keeps at
    // least `margin` to both sides.
    std::size_t clean = 0, dirty_mismatch = 0, clean_total = 0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t lr = r - offs[owner(r)], lc = c - offs[owner(c)];
            const bool interior = lr >= margin && lr + margin < tile && lc >= margin &&
                                  lc + margin < tile;
            bool same = true;
            for (std::size_t ch = 0; ch < 3; ++ch)
                same = same && direct(r, c, ch) == tiled(r, c, ch);
            if (interior) {
                ++clean_total;
                if (same) ++clean;
            } else if (!same) {
                ++dirty_mismatch;
            }
        }
    }
    REQUIRE(clean_total >= 100);
    REQUIRE(clean == clean_total);  // every interior pixel is bit-exact
    CHECK(dirty_mismatch > 0);      // the margin is load-bearing, not vacuous
}

TEST_CASE("feathered blending is exact where a single tile holds full weight") {
    GeneratorConfig cfg = tiny_tiling_config();
    Generator<float> g(cfg);
    Rng rng(4022);
    g.init(rng, 0.1);

    const std::size_t n = 96, tile = 48, overlap = 16;
    const std::size_t margin = generator_tile_margin(cfg);
    Tensor<float> x = make_retina_image(n, 12);

    TilePlan plan;
    plan.tile = tile;
    plan.overlap = overlap;
    plan.blend = TilePlan::Blend::feathered;
    const Tensor<float> direct = g.restore(x);
    const Tensor<float> blended = tiled_restore(g, x, plan);

    REQUIRE(all_finite(blended));
    for (std::size_t i = 0; i < blended.numel(); ++i) {
        REQUIRE(blended[i] >= 0.0f);
        REQUIRE(blended[i] <= 1.0f);
    }

    const auto offs = plan_axis_offsets(n, tile, overlap, cfg.alignment());
    auto covering = [&](std::size_t p) {
        std::size_t count = 0, local = 0, index = 0;
        for (std::size_t i = 0; i < offs.size(); ++i) {
            if (p >= offs[i] && p < offs[i] + tile) {
                ++count;
                local = p - offs[i];
                index = i;
            }
        }
        return std::tuple{count, local, index};
    };
    std::size_t exact = 0;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            const auto [ry, lr, iy] = covering(r);
            const auto [rx, lc, ix] = covering(c);
            if (ry != 1 || rx != 1) continue;  // blended between tiles
            // Full weight needs `overlap` clearance from interior tile edges.
            const bool wy = (iy == 0 || lr >= overlap) &&
                            (iy + 1 == offs.size() || tile - lr > overlap);
            const bool wx = (ix == 0 || lc >= overlap) &&
                            (ix + 1 == offs.size() || tile - lc > overlap);
            const bool interior = lr >= margin && lr + margin < tile && lc >= margin &&
                                  lc + margin < tile;
            if (wy && wx && interior) {
                for (std::size_t ch = 0; ch < 3; ++ch)
                    REQUIRE(direct(r, c, ch) == blended(r, c, ch));
                ++exact;
            }
        }
    }
    REQUIRE(exact > 0);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

TEST_CASE("identity model evaluation equals the raw degraded baseline") {
    const fs::path root = fresh_dir("eval_identity");
    PairedDataset ds = make_fixture_tree(root, 16, 303, 48);
    REQUIRE(ds.test.size() == 4);

    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.base_heads = 1;
    cfg.stages = 2;
    cfg.window = 4;
    Generator<float> g(cfg);
    Rng rng(4030);
    g.init(rng);  // zero-initialized head: the identity restoration

    TilePlan plan;
    MetricsReport rep = evaluate(ds.test, g, plan, 0xabcdull, "ckpt-test", "2026-01-01T00:00:00Z");

    REQUIRE(rep.rows.size() == 4);
    std::set<std::string> ids;
    double psum = 0, ssum = 0;
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        const MetricsRow& row = rep.rows[i];
        if (i > 0) REQUIRE(rep.rows[i - 1].id < row.id);
        ids.insert(row.id);

        const ImagePair* pair = nullptr;
        for (const auto& p : ds.test)
            if (p.id == row.id) pair = &p;
        REQUIRE(pair != nullptr);
        const Tensor<float> lq = read_image_png(pair->lq_path);
        const Tensor<float> hq = read_image_png(pair->hq_path);
        REQUIRE(row.psnr == psnr(lq, hq));  // identity model: exactly the baseline
        REQUIRE(row.ssim == ssim(lq, hq));
        psum += row.psnr;
        ssum += row.ssim;
    }
    REQUIRE(ids.size() == 4);
    REQUIRE(std::abs(rep.mean_psnr - psum / 4.0) < 1e-9);
    REQUIRE(std::abs(rep.mean_ssim - ssum / 4.0) < 1e-9);

    std::vector<ImagePair> empty;
    CHECK_THROWS_WITH(evaluate(empty, g, plan), ContainsSubstring("empty split"));
}

TEST_CASE("reports carry the infinite-psnr sentinel as null with a flag") {
    const fs::path root = fresh_dir("eval_sentinel");
    PairedDataset ds = make_fixture_tree(root, 4, 311, 48);

    // Score HQ against itself: perfect restoration.
    std::vector<ImagePair> self;
    for (const auto& p : ds.test) self.push_back({p.id, p.hq_path, p.hq_path, p.height, p.width});

    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.base_heads = 1;
    cfg.stages = 2;
    cfg.window = 4;
    Generator<float> g(cfg);
    Rng rng(4031);
    g.init(rng);

    TilePlan plan;
    MetricsReport rep = evaluate(self, g, plan, 7, "self", "2026-01-01T00:00:00Z");
    REQUIRE(std::isinf(rep.mean_psnr));
    for (const auto& row : rep.rows) {
        REQUIRE(std::isinf(row.psnr));
        REQUIRE(row.ssim == 1.0);
    }

    const fs::path jpath = root / "report.json";
    const fs::path cpath = root / "report.csv";
    write_report_json(rep, jpath.string());
    write_report_csv(rep, cpath.string());

    std::ifstream jin(jpath);
    nlohmann::json j = nlohmann::json::parse(jin);
    REQUIRE(j["mean_psnr"].is_null());
    REQUIRE(j["mean_psnr_infinite"] == true);
    REQUIRE(j["mean_ssim"] == 1.0);
    REQUIRE(j["config_hash"] == "0x0000000000000007");
    REQUIRE(j["checkpoint"] == "self");
    REQUIRE(j["images"].size() == rep.rows.size());
    REQUIRE(j["images"][0]["psnr"].is_null());
    REQUIRE(j["images"][0]["psnr_infinite"] == true);

    std::ifstream cin_(cpath);
    std::string line;
    std::getline(cin_, line);
    REQUIRE(line == "id,psnr,ssim");
    std::size_t rows = 0;
    while (std::getline(cin_, line)) {
        if (line.empty()) continue;
        REQUIRE_THAT(line, ContainsSubstring(",inf,"));
        ++rows;
    }
    REQUIRE(rows == rep.rows.size());
}

TEST_CASE("finite reports serialize numbers on both formats") {
    MetricsReport rep;
    rep.rows = {{"a", 31.25, 0.91}, {"b", 28.5, 0.87}};
    rep.mean_psnr = (31.25 + 28.5) / 2.0;
    rep.mean_ssim = (0.91 + 0.87) / 2.0;
    rep.config_hash = 0;
    rep.checkpoint_id = "final";
    rep.timestamp = "2026-01-02T03:04:05Z";

    const fs::path dir = fresh_dir("eval_reports");
    write_report_json(rep, (dir / "r.json").string());
    write_report_csv(rep, (dir / "r.csv").string());

    std::ifstream jin(dir / "r.json");
    nlohmann::json j = nlohmann::json::parse(jin);
    REQUIRE(j["mean_psnr"].get<double>() == rep.mean_psnr);
    REQUIRE(j["mean_psnr_infinite"] == false);
    REQUIRE(j["images"][0]["id"] == "a");
    REQUIRE(j["images"][1]["psnr"].get<double>() == 28.5);
    REQUIRE(j["timestamp"] == "2026-01-02T03:04:05Z");

    const auto csv = read_bytes(dir / "r.csv");
    const std::string text(csv.begin(), csv.end());
    REQUIRE_THAT(text, ContainsSubstring("a,31.250000000,0.910000000"));
    REQUIRE_THAT(text, ContainsSubstring("b,28.500000000,0.870000000"));
}

TEST_CASE("charts rasterize deterministically") {
    const fs::path dir = fresh_dir("eval_charts");
    MetricsReport rep;
    rep.rows = {{"a", 30.0, 0.9},
                {"b", std::numeric_limits<double>::infinity(), 1.0},
                {"c", 24.5, 0.8}};

    const fs::path bar = dir / "psnr.png";
    write_psnr_bar_chart(rep, bar.string());
    Tensor<float> img = read_image_png(bar);
    REQUIRE(img.height() == 240);
    REQUIRE(img.channels() == 3);
    write_psnr_bar_chart(rep, (dir / "psnr2.png").string());
    REQUIRE(read_bytes(bar) == read_bytes(dir / "psnr2.png"));

    std::vector<double> series;
    for (int i = 0; i < 50; ++i) series.push_back(1.0 / (1.0 + i) + 0.02 * ((i % 5) == 0));
    write_curve_chart(series, (dir / "curve.png").string());
    Tensor<float> curve = read_image_png(dir / "curve.png");
    REQUIRE(curve.width() == 640);

    write_curve_chart({1.0, 1.0, 1.0}, (dir / "flat.png").string());  // flat series is fine
    CHECK_THROWS_WITH(write_curve_chart({}, (dir / "x.png").string()),
                      ContainsSubstring("empty"));
}
