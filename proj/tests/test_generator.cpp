// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include "winrest/discriminator.hpp"
#include "winrest/generator.hpp"
#include "winrest/trace.hpp"

#include "test_support.hpp"

using winrest::DiscriminatorConfig;
using winrest::Generator;
using winrest::GeneratorConfig;
using winrest::Rng;
using winrest::Tensor;

namespace {

GeneratorConfig tiny_gen_config() {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.stages = 2;
    cfg.window = 2;
    cfg.base_heads = 2;
    return cfg;
}

}  // namespace

TEST_CASE("channel concat and split are inverse") {
    Rng rng(50);
    Tensor<float> a = testutil::rand_tensor<float>({5, 7, 3}, rng);
    Tensor<float> b = testutil::rand_tensor<float>({5, 7, 4}, rng);
    Tensor<float> cat = winrest::concat_channels(a, b);
    REQUIRE(cat.channels() == 7);
    auto [a2, b2] = winrest::split_channels(cat, 3);
    REQUIRE(winrest::bit_equal(a, a2));
    REQUIRE(winrest::bit_equal(b, b2));
}

TEST_CASE("reflect padding mirrors without repeating the edge") {
    Tensor<float> x({2, 3, 1});
    // rows: [1 2 3; 4 5 6]
    x(0, 0, 0) = 1; x(0, 1, 0) = 2; x(0, 2, 0) = 3;
    x(1, 0, 0) = 4; x(1, 1, 0) = 5; x(1, 2, 0) = 6;
    Tensor<float> p = winrest::reflect_pad_to(x, 3, 5);
    REQUIRE(p(2, 0, 0) == 1.0f);  // row 2 reflects to row 0
    REQUIRE(p(0, 3, 0) == 2.0f);  // col 3 reflects to col 1
    REQUIRE(p(0, 4, 0) == 1.0f);  // col 4 reflects to col 0
    REQUIRE(p(2, 4, 0) == 1.0f);

    Tensor<float> back = winrest::crop_top_left(p, 2, 3);
    REQUIRE(winrest::bit_equal(x, back));
}

TEST_CASE("padding targets round up to the processing alignment") {
    GeneratorConfig cfg;  // defaults: window 8, 4 stages -> alignment 64
    REQUIRE(cfg.alignment() == 64);
    REQUIRE(winrest::round_up_multiple(130, cfg.alignment()) == 192);
    REQUIRE(winrest::round_up_multiple(200, cfg.alignment()) == 256);
    REQUIRE(winrest::round_up_multiple(128, cfg.alignment()) == 128);
}

TEST_CASE("freshly initialized generator is the identity restoration") {
    GeneratorConfig cfg = tiny_gen_config();
    Generator<float> g(cfg);
    Rng rng(51);
    g.init(rng);

    // Unaligned size exercises the pad/crop path too.
    Tensor<float> x = testutil::rand_tensor<float>({13, 9, 3}, rng, 0.0, 1.0);
    Tensor<float> y = g.restore(x);
    REQUIRE(y.height() == 13);
    REQUIRE(y.width() == 9);
    REQUIRE(winrest::bit_equal(x, y));
}

TEST_CASE("restoration output stays in the displayable range") {
    GeneratorConfig cfg = tiny_gen_config();
    cfg.zero_init_output = false;
    Generator<float> g(cfg);
    Rng rng(52);
    g.init(rng, 0.1);
    Tensor<float> x = testutil::rand_tensor<float>({16, 16, 3}, rng, 0.0, 1.0);
    Tensor<float> y = g.restore(x);
    for (std::size_t i = 0; i < y.numel(); ++i) {
        REQUIRE(y[i] >= 0.0f);
        REQUIRE(y[i] <= 1.0f);
    }
}

TEST_CASE("encoder and decoder widths follow the doubling ladder") {
    GeneratorConfig cfg;
    cfg.base_channels = 8;
    Generator<float> g(cfg);
    const std::size_t c = cfg.base_channels;

    REQUIRE(g.encoder_stages().size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        REQUIRE(g.encoder_stages()[i].size() == 2);
        for (const auto& b : g.encoder_stages()[i])
            REQUIRE(b.attention().channels() == (c << i));
        // Second block of each pair runs shifted by half a window.
        REQUIRE(g.encoder_stages()[i][0].attention().shift() == 0);
        REQUIRE(g.encoder_stages()[i][1].attention().shift() == cfg.window / 2);
    }
    for (const auto& b : g.bottleneck_blocks()) REQUIRE(b.attention().channels() == 8 * c);

    REQUIRE(g.decoder_stages().size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        for (const auto& b : g.decoder_stages()[i])
            REQUIRE(b.attention().channels() == (c << (i + 1)));

    // Downsamples double width; upsample convs land on the skip width.
    for (std::size_t i = 0; i < 3; ++i) {
        REQUIRE(g.downsamples()[i].in_channels() == (c << i));
        REQUIRE(g.downsamples()[i].out_channels() == (c << (i + 1)));
        REQUIRE(g.downsamples()[i].stride() == 2);
        REQUIRE(g.downsamples()[i].kernel() == 4);
        REQUIRE(g.upsample_convs()[i].out_channels() == (c << i));
    }
    REQUIRE(g.upsample_convs()[2].in_channels() == 8 * c);   // bottleneck width
    REQUIRE(g.upsample_convs()[1].in_channels() == 8 * c);   // decoder stage 2 width
    REQUIRE(g.upsample_convs()[0].in_channels() == 4 * c);   // decoder stage 1 width
    REQUIRE(g.output_head().in_channels() == 2 * c);
    REQUIRE(g.output_head().out_channels() == 3);
}

TEST_CASE("generator parameter count matches the closed form") {
    auto wsab_params = [](std::size_t c, std::size_t l, std::size_t gamma) {
        const std::size_t ce = c * gamma;
        std::size_t n = 2 * c;                    // norm 1
        n += 4 * c * c + l * l * c;               // attention projections + bias table
        n += 2 * c;                               // norm 2
        n += c * ce + ce;                         // expand
        n += 9 * ce + ce;                         // depthwise
        n += ce * c + c;                          // project
        return n;
    };

    for (std::size_t c : {8u, 16u}) {
        GeneratorConfig cfg;
        cfg.base_channels = c;
        const std::size_t l = cfg.window, gamma = cfg.ffn_expansion;

        std::size_t want = 9 * 3 * c + c;  // projection conv
        for (std::size_t i = 0; i < 4; ++i) want += 2 * wsab_params(c << i, l, gamma);
        for (std::size_t i = 0; i < 3; ++i) want += 16 * (c << i) * (c << (i + 1)) + (c << (i + 1));
        want += 2 * wsab_params(8 * c, l, gamma);
        for (std::size_t i = 0; i < 3; ++i) want += 2 * wsab_params(2 * (c << i), l, gamma);
        want += 9 * (8 * c) * (4 * c) + 4 * c;   // up transitions
        want += 9 * (8 * c) * (2 * c) + 2 * c;
        want += 9 * (4 * c) * c + c;
        want += 9 * (2 * c) * 3 + 3;             // output head

        Generator<float> g(cfg);
        winrest::ParamList<float> params;
        g.collect("g", params);
        REQUIRE(winrest::param_scalar_count(params) == want);
    }
}

TEST_CASE("generator gradients match finite differences") {
    GeneratorConfig cfg = tiny_gen_config();
    Generator<double> g(cfg);
    Rng rng(53);
    g.init(rng, 0.1);
    // Zero output head blocks all gradients; nudge it off zero.
    winrest::init_trunc_normal(g.output_head().weight().value, rng, 0.1);

    Tensor<double> x = testutil::rand_tensor<double>({8, 8, 3}, rng, 0.0, 1.0);
    Tensor<double> r = testutil::rand_tensor<double>({8, 8, 3}, rng);

    winrest::ParamList<double> params;
    g.collect("g", params);
    winrest::zero_grads(params);

    auto loss = [&] { return testutil::weighted_sum(g.forward(x), r); };
    g.forward(x, true);
    Tensor<double> dx = g.backward(r);

    auto pres = testutil::check_param_gradients(params, loss, rng, 3, 5e-5);
    auto xres = testutil::check_input_gradient(x, dx, loss, rng, 16);
    INFO("param_err=" << pres.max_rel_err << " input_err=" << xres.max_rel_err
                      << " checked=" << pres.checked);
    REQUIRE(pres.max_rel_err < 5e-6);
    REQUIRE(xres.max_rel_err < 1e-6);
}

TEST_CASE("generator dependency cone matches a gradient probe") {
    GeneratorConfig cfg;
    cfg.base_channels = 4;
    cfg.stages = 2;
    cfg.window = 4;
    cfg.base_heads = 2;

    const std::size_t margin = winrest::generator_tile_margin(cfg);
    const std::size_t a = cfg.alignment();
    const std::size_t n = winrest::round_up_multiple(2 * margin + 3 * a, a);

    Generator<double> g(cfg);
    Rng rng(54);
    g.init(rng, 0.15);
    winrest::init_trunc_normal(g.output_head().weight().value, rng, 0.15);

    Tensor<double> x = testutil::rand_tensor<double>({n, n, 3}, rng, 0.0, 1.0);
    g.forward(x, true);

    const std::size_t q = n / 2 + 1;
    Tensor<double> delta({n, n, 3});
    delta(q, q, 0) = 1.0;
    Tensor<double> dx = g.backward(delta, /*accumulate_param_grads=*/false);

    std::ptrdiff_t lo_y = std::ptrdiff_t(n), hi_y = -1, lo_x = std::ptrdiff_t(n), hi_x = -1;
    for (std::size_t ry = 0; ry < n; ++ry) {
        for (std::size_t cx = 0; cx < n; ++cx) {
            bool nz = false;
            for (std::size_t ch = 0; ch < 3; ++ch) nz = nz || dx(ry, cx, ch) != 0.0;
            if (nz) {
                lo_y = std::min(lo_y, std::ptrdiff_t(ry));
                hi_y = std::max(hi_y, std::ptrdiff_t(ry));
                lo_x = std::min(lo_x, std::ptrdiff_t(cx));
                hi_x = std::max(hi_x, std::ptrdiff_t(cx));
            }
        }
    }

    winrest::FootprintBox box = winrest::generator_footprint(cfg, q, q, q, q, n, n);
    REQUIRE_FALSE(box.y.whole);
    // Probe support must lie inside the traced cone and fill it to +-1 px.
    REQUIRE(lo_y >= box.y.lo);
    REQUIRE(hi_y <= box.y.hi);
    REQUIRE(lo_x >= box.x.lo);
    REQUIRE(hi_x <= box.x.hi);
    REQUIRE(std::abs(lo_y - box.y.lo) <= 1);
    REQUIRE(std::abs(hi_y - box.y.hi) <= 1);
    REQUIRE(std::abs(lo_x - box.x.lo) <= 1);
    REQUIRE(std::abs(hi_x - box.x.hi) <= 1);
    // The cone is real: strictly inside the canvas, wider than one window.
    REQUIRE(box.y.lo > 0);
    REQUIRE(box.y.hi < std::ptrdiff_t(n) - 1);
    REQUIRE(hi_y - lo_y + 1 > std::ptrdiff_t(cfg.window));
}

TEST_CASE("score map downsamples by two per stage") {
    DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 4;
    cfg.window = 8;
    REQUIRE(cfg.alignment() == 64);
    winrest::Discriminator<float> d(cfg);
    Rng rng(55);
    d.init(rng, 0.05);

    Tensor<float> x = testutil::rand_tensor<float>({128, 128, 3}, rng, 0.0, 1.0);
    Tensor<float> s = d.forward(x);
    REQUIRE(s.height() == 8);
    REQUIRE(s.width() == 8);
    REQUIRE(s.channels() == 1);

    DiscriminatorConfig c3 = cfg;
    c3.depth = 3;
    winrest::Discriminator<float> d3(c3);
    d3.init(rng, 0.05);
    Tensor<float> s3 = d3.forward(x);
    REQUIRE(s3.height() == 16);

    // Arbitrary sizes pad then crop to the ceiling.
    Tensor<float> odd = testutil::rand_tensor<float>({130, 70, 3}, rng, 0.0, 1.0);
    Tensor<float> so = d3.score(odd);
    REQUIRE(so.height() == 17);
    REQUIRE(so.width() == 9);
}

TEST_CASE("nominal patch size follows the convolution recurrence") {
    DiscriminatorConfig cfg;
    cfg.depth = 3;
    REQUIRE(winrest::discriminator_nominal_patch(cfg) == 40);
    cfg.depth = 2;
    REQUIRE(winrest::discriminator_nominal_patch(cfg) == 20);
    cfg.depth = 4;
    REQUIRE(winrest::discriminator_nominal_patch(cfg) == 80);
}

TEST_CASE("paired scoring consumes a six-channel stack") {
    DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.window = 4;
    cfg.paired = true;
    cfg.in_channels = 6;
    winrest::Discriminator<float> d(cfg);
    Rng rng(56);
    d.init(rng, 0.05);

    Tensor<float> cand = testutil::rand_tensor<float>({16, 16, 3}, rng, 0.0, 1.0);
    Tensor<float> cond = testutil::rand_tensor<float>({16, 16, 3}, rng, 0.0, 1.0);
    Tensor<float> s = d.forward(winrest::concat_channels(cand, cond));
    REQUIRE(s.height() == 4);
    REQUIRE(s.channels() == 1);
}

TEST_CASE("discriminator gradients match finite differences") {
    DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.window = 2;
    cfg.base_heads = 2;
    winrest::Discriminator<double> d(cfg);
    Rng rng(57);
    d.init(rng, 0.1);

    Tensor<double> x = testutil::rand_tensor<double>({8, 8, 3}, rng, 0.0, 1.0);
    Tensor<double> r = testutil::rand_tensor<double>({2, 2, 1}, rng);

    winrest::ParamList<double> params;
    d.collect("d", params);
    winrest::zero_grads(params);

    auto loss = [&] { return testutil::weighted_sum(d.forward(x), r); };
    d.forward(x, true);
    Tensor<double> dx = d.backward(r);

    auto pres = testutil::check_param_gradients(params, loss, rng, 3, 5e-5);
    auto xres = testutil::check_input_gradient(x, dx, loss, rng, 16);
    INFO("param_err=" << pres.max_rel_err << " input_err=" << xres.max_rel_err);
    REQUIRE(pres.max_rel_err < 5e-6);
    REQUIRE(xres.max_rel_err < 1e-6);
}

TEST_CASE("frozen-critic backward leaves critic gradients untouched") {
    DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.window = 2;
    cfg.base_heads = 2;
    winrest::Discriminator<double> d(cfg);
    Rng rng(58);
    d.init(rng, 0.1);

    winrest::ParamList<double> params;
    d.collect("d", params);
    winrest::zero_grads(params);

    Tensor<double> x = testutil::rand_tensor<double>({8, 8, 3}, rng, 0.0, 1.0);
    Tensor<double> r = testutil::rand_tensor<double>({2, 2, 1}, rng);
    d.forward(x, true);
    Tensor<double> dx = d.backward(r, /*accumulate_param_grads=*/false);

    for (auto* p : params)
        for (std::size_t i = 0; i < p->grad.numel(); ++i) REQUIRE(p->grad[i] == 0.0);

    // The input gradient itself is still live.
    double nz = 0;
    for (std::size_t i = 0; i < dx.numel(); ++i) nz += std::abs(dx[i]);
    REQUIRE(nz > 0.0);
}

TEST_CASE("discriminator dependency cone matches a gradient probe") {
    DiscriminatorConfig cfg;
    cfg.base_channels = 4;
    cfg.depth = 2;
    cfg.window = 4;
    cfg.base_heads = 2;

    const std::size_t n = 64;
    winrest::Discriminator<double> d(cfg);
    Rng rng(59);
    d.init(rng, 0.15);

    Tensor<double> x = testutil::rand_tensor<double>({n, n, 3}, rng, 0.0, 1.0);
    Tensor<double> s = d.forward(x, true);

    const std::size_t u = s.height() / 2, v = s.width() / 2;
    Tensor<double> delta(s.dims());
    delta(u, v, 0) = 1.0;
    Tensor<double> dx = d.backward(delta, false);

    std::ptrdiff_t lo_y = std::ptrdiff_t(n), hi_y = -1, lo_x = std::ptrdiff_t(n), hi_x = -1;
    for (std::size_t ry = 0; ry < n; ++ry) {
        for (std::size_t cx = 0; cx < n; ++cx) {
            bool nz = false;
            for (std::size_t ch = 0; ch < 3; ++ch) nz = nz || dx(ry, cx, ch) != 0.0;
            if (nz) {
                lo_y = std::min(lo_y, std::ptrdiff_t(ry));
                hi_y = std::max(hi_y, std::ptrdiff_t(ry));
                lo_x = std::min(lo_x, std::ptrdiff_t(cx));
                hi_x = std::max(hi_x, std::ptrdiff_t(cx));
            }
        }
    }

    winrest::FootprintBox box = winrest::discriminator_footprint(cfg, u, u, v, v, n, n);
    REQUIRE(lo_y >= box.y.lo);
    REQUIRE(hi_y <= box.y.hi);
    REQUIRE(std::abs(lo_y - box.y.lo) <= 1);
    REQUIRE(std::abs(hi_y - box.y.hi) <= 1);
    REQUIRE(std::abs(lo_x - box.x.lo) <= 1);
    REQUIRE(std::abs(hi_x - box.x.hi) <= 1);
    // One score judges a patch, not the whole image.
    REQUIRE(hi_y - lo_y + 1 < std::ptrdiff_t(n));
    // The exact cone is wider than the nominal convolutional patch label.
    REQUIRE(hi_y - lo_y + 1 >=
            std::ptrdiff_t(winrest::discriminator_nominal_patch(cfg)));
}
