// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "winrest/checkpoint.hpp"
#include "winrest/config.hpp"
#include "winrest/data.hpp"
#include "winrest/discriminator.hpp"
#include "winrest/evaluation.hpp"
#include "winrest/fixtures.hpp"
#include "winrest/generator.hpp"
#include "winrest/tiling.hpp"
#include "winrest/training.hpp"
#include "winrest/version.hpp"

namespace winrest {

/// Exit codes: 0 success, 2 configuration, 3 data or filesystem, 4 runtime.
inline int exit_code_for(ErrorKind k) {
    switch (k) {
        case ErrorKind::config: return 2;
        case ErrorKind::data:
        case ErrorKind::io: return 3;
        default: return 4;
    }
}

/// Everything needed to rerun a command: written before any long work starts.
struct RunManifest {
    std::string command;
    std::string config_path;
    nlohmann::json resolved_config;
    std::string output_dir;
    std::uint64_t seed = 0;
    bool deterministic = false;
    std::string tool_version = kVersion;
};

inline void write_run_manifest(const RunManifest& m) {
    namespace fs = std::filesystem;
    fs::create_directories(m.output_dir);
    nlohmann::json j = {{"command", m.command},
                        {"config_path", m.config_path},
                        {"resolved_config", m.resolved_config},
                        {"output_dir", m.output_dir},
                        {"seed", m.seed},
                        {"deterministic", m.deterministic},
                        {"tool_version", m.tool_version}};
    const fs::path path = fs::path(m.output_dir) / "manifest.json";
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot write run manifest ", path.string());
    out << j.dump(2) << "\n";
}

/// Rebuilds a generator from either a full trainer checkpoint (parameters are
/// prefixed "g") or a standalone generator checkpoint.
inline Generator<float> generator_from_checkpoint(const std::filesystem::path& path) {
    Checkpoint c = Checkpoint::load(path.string());
    require(c.role == "trainer" || c.role == "generator", ErrorKind::checkpoint,
            "checkpoint role ", c.role, " does not hold a generator");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(c.config_text);
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::checkpoint, "checkpoint carries unreadable configuration text");
    }
    const nlohmann::json& g = c.role == "trainer" ? j.at("generator") : j;
    Generator<float> gen(generator_config_from_json(g));
    ParamList<float> params;
    gen.collect("g", params);
    load_params(c, params);
    return gen;
}

inline void save_generator_checkpoint(Generator<float>& gen, const std::filesystem::path& path) {
    Checkpoint c;
    c.role = "generator";
    c.config_text = generator_config_json(gen.config()).dump();
    ParamList<float> params;
    gen.collect("g", params);
    save_params(c, params);
    c.save(path.string());
}

struct TileFlags {
    std::size_t tile = 0;  // 0 = whole-image inference
    std::size_t overlap = 32;
    bool feathered = false;
};

inline TilePlan tile_plan_from_flags(const TileFlags& f) {
    TilePlan plan;
    plan.tile = f.tile == 0 ? std::numeric_limits<std::size_t>::max() : f.tile;
    plan.overlap = f.tile == 0 ? 0 : f.overlap;
    plan.blend = f.feathered ? TilePlan::Blend::feathered : TilePlan::Blend::crop_center;
    plan.validate();
    return plan;
}

namespace cli_detail {

inline std::string resolve_out_dir(const std::string& flag, const std::string& command) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("WINREST_OUT"))
        return (std::filesystem::path(env) / command).string();
    fail(ErrorKind::config, "no output directory: pass --out or set WINREST_OUT");
}

inline std::string wall_clock_stamp(bool deterministic) {
    if (deterministic) return {};  // keep report bytes reproducible
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

inline std::vector<std::filesystem::path> collect_inputs(const std::filesystem::path& in) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(in)) {
        for (const auto& e : fs::directory_iterator(in))
            if (e.path().extension() == ".png") files.push_back(e.path());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(in)) {
        files.push_back(in);
    }
    require(!files.empty(), ErrorKind::data, "no input images at ", in.string());
    return files;
}

inline double mega(std::uint64_t n) { return double(n) / 1e6; }
inline double giga(std::uint64_t n) { return double(n) / 1e9; }

}  // namespace cli_detail

inline int cmd_make_fixtures(const std::string& out_flag, std::size_t n, std::uint64_t seed,
                             std::size_t size, bool deterministic) {
    const std::string out = cli_detail::resolve_out_dir(out_flag, "make-fixtures");
    RunManifest m;
    m.command = "make-fixtures";
    m.resolved_config = {{"n", n}, {"seed", seed}, {"size", size}};
    m.output_dir = out;
    m.seed = seed;
    m.deterministic = deterministic;
    write_run_manifest(m);

    const PairedDataset ds = make_fixture_tree(out, n, seed, size);
    std::printf("wrote %zu train and %zu test pairs under %s\n", ds.train.size(), ds.test.size(),
                out.c_str());
    return 0;
}

inline int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
                     const std::string& data_root, const std::string& out_flag,
                     std::optional<std::uint64_t> seed, const std::string& resume,
                     bool deterministic) {
    nlohmann::json doc = read_config_file(config_path);
    for (const std::string& s : sets) apply_override(doc, s);
    if (seed) doc["seed"] = *seed;
    const TrainConfig cfg = train_config_from_json(doc);

    const PairedDataset ds = load_dataset(data_root);
    require(!ds.train.empty(), ErrorKind::data, "dataset has no training pairs");

    const std::string out = cli_detail::resolve_out_dir(out_flag, "train");
    RunManifest m;
    m.command = "train";
    m.config_path = config_path;
    m.resolved_config = {{"train", train_config_json(cfg)},
                         {"data_root", data_root},
                         {"resume", resume}};
    m.output_dir = out;
    m.seed = cfg.seed;
    m.deterministic = deterministic;
    write_run_manifest(m);

    Trainer<float> trainer(cfg);
    const FitResult r = trainer.fit(ds.train, out, resume);
    std::printf("trained %llu steps; best loss %.6f at step %llu; final checkpoint %s\n",
                static_cast<unsigned long long>(trainer.step()), r.best_loss,
                static_cast<unsigned long long>(r.best_step), r.final_checkpoint.c_str());
    return 0;
}

inline int cmd_restore(const std::string& ckpt, const std::string& in_path,
                       const std::string& out_flag, const TileFlags& tf, bool deterministic) {
    namespace fs = std::filesystem;
    Generator<float> gen = generator_from_checkpoint(ckpt);
    const TilePlan plan = tile_plan_from_flags(tf);
    const auto inputs = cli_detail::collect_inputs(in_path);

    const std::string out = cli_detail::resolve_out_dir(out_flag, "restore");
    RunManifest m;
    m.command = "restore";
    m.resolved_config = {{"checkpoint", ckpt},
                         {"input", in_path},
                         {"tile", tf.tile},
                         {"overlap", tf.overlap},
                         {"feathered", tf.feathered}};
    m.output_dir = out;
    m.deterministic = deterministic;
    write_run_manifest(m);

    const fs::path restored = fs::path(out) / "restored";
    fs::create_directories(restored);
    for (const fs::path& file : inputs) {
        const Tensor<float> img = read_image_png(file);
        const Tensor<float> res =
            tf.tile > 0 ? tiled_restore(gen, img, plan) : gen.restore(img);
        write_image_png(restored / file.filename(), res);
    }
    std::printf("restored %zu images into %s\n", inputs.size(), restored.c_str());
    return 0;
}

inline int cmd_evaluate(const std::string& ckpt, const std::string& data_root,
                        const std::string& split, const std::string& out_flag,
                        const TileFlags& tf, bool against_identity, bool deterministic) {
    namespace fs = std::filesystem;
    require(split == "test" || split == "train", ErrorKind::config, "unknown split ", split);
    const PairedDataset ds = load_dataset(data_root);
    const std::vector<ImagePair>& rows = split == "train" ? ds.train : ds.test;

    Checkpoint c = Checkpoint::load(ckpt);
    Generator<float> gen = generator_from_checkpoint(ckpt);
    const TilePlan plan = tile_plan_from_flags(tf);

    const std::string out = cli_detail::resolve_out_dir(out_flag, "evaluate");
    RunManifest m;
    m.command = "evaluate";
    m.resolved_config = {{"checkpoint", ckpt},
                         {"data_root", data_root},
                         {"split", split},
                         {"tile", tf.tile},
                         {"overlap", tf.overlap},
                         {"feathered", tf.feathered},
                         {"against_identity", against_identity}};
    m.output_dir = out;
    m.deterministic = deterministic;
    write_run_manifest(m);

    const std::string stamp = cli_detail::wall_clock_stamp(deterministic);
    const fs::path reports = fs::path(out) / "reports";
    fs::create_directories(reports);

    const MetricsReport report = evaluate(rows, gen, plan, c.config_hash(),
                                          fs::path(ckpt).filename().string(), stamp);
    write_report_json(report, reports / "metrics.json");
    write_report_csv(report, reports / "metrics.csv");
    write_psnr_bar_chart(report, reports / "psnr.png");
    std::printf("%s split: mean psnr %.4f, mean ssim %.6f over %zu pairs\n", split.c_str(),
                report.mean_psnr, report.mean_ssim, report.rows.size());

    if (against_identity) {
        // An untrained generator carries all-zero weights, so its restoration
        // is exactly the input: the raw degraded baseline.
        Generator<float> ident(gen.config());
        const MetricsReport base = evaluate(rows, ident, plan, 0, "identity", stamp);
        write_report_json(base, reports / "baseline.json");
        write_report_csv(base, reports / "baseline.csv");
        std::printf("identity baseline: mean psnr %.4f, mean ssim %.6f\n", base.mean_psnr,
                    base.mean_ssim);
    }
    return 0;
}

inline int cmd_bench(const std::string& config_path, const std::vector<std::string>& sets,
                     const std::string& out_flag, bool deterministic) {
    nlohmann::json doc =
        config_path.empty() ? nlohmann::json::object() : read_config_file(config_path);
    for (const std::string& s : sets) apply_override(doc, s);
    const TrainConfig cfg = train_config_from_json(doc);

    Generator<float> gen(cfg.generator);
    Discriminator<float> disc(cfg.discriminator);
    ParamList<float> gp, dp;
    gen.collect("g", gp);
    disc.collect("d", dp);

    std::printf("winrest %s model accounting\n", kVersion);
    std::printf("generator parameters: %zu (%.2f M)\n", param_scalar_count(gp),
                cli_detail::mega(param_scalar_count(gp)));
    std::printf("critic parameters: %zu (%.2f M)\n", param_scalar_count(dp),
                cli_detail::mega(param_scalar_count(dp)));
    std::printf("critic nominal patch: %zu px\n", discriminator_nominal_patch(cfg.discriminator));

    std::printf("\nflops by input resolution (multiply-accumulates, forward pass)\n");
    std::printf("%10s %16s %16s\n", "size", "generator", "critic");
    for (std::size_t s : {std::size_t(128), std::size_t(256), std::size_t(512)}) {
        const std::size_t a = std::max(cfg.generator.alignment(), cfg.discriminator.alignment());
        const std::size_t n = (s + a - 1) / a * a;
        std::printf("%7zu px %15.3fG %15.3fG\n", n,
                    cli_detail::giga(generator_flops(cfg.generator, n, n)),
                    cli_detail::giga(discriminator_flops(cfg.discriminator, n, n)));
    }

    std::printf("\nwindow attention vs dense attention, one layer at %zu channels\n",
                cfg.generator.base_channels);
    std::printf("%10s %16s %16s %10s\n", "size", "windowed", "dense", "ratio");
    for (std::size_t s : {std::size_t(64), std::size_t(128), std::size_t(256)}) {
        const std::uint64_t wf =
            wmsa_flops(s, s, cfg.generator.base_channels, cfg.generator.window);
        const std::uint64_t df = dense_msa_flops_quadratic(s, s, cfg.generator.base_channels);
        std::printf("%7zu px %15.3fG %15.3fG %9.1fx\n", s, cli_detail::giga(wf),
                    cli_detail::giga(df), double(df) / double(wf));
    }
    std::printf(
        "\npublished-reference statistics for the full-scale model, shown for side-by-side\n"
        "comparison: 21.11 M parameters, 11.36 G flops. The defaults above are the desk-scale\n"
        "configuration; widen base_channels/stages to approach the reference scale.\n");

    if (!out_flag.empty() || std::getenv("WINREST_OUT")) {
        const std::string out = cli_detail::resolve_out_dir(out_flag, "bench");
        RunManifest m;
        m.command = "bench";
        m.config_path = config_path;
        m.resolved_config = train_config_json(cfg);
        m.output_dir = out;
        m.deterministic = deterministic;
        write_run_manifest(m);
    }
    return 0;
}

/// Builds the argument parser and dispatches. Returns the process exit code.
inline int run_cli(int argc, char** argv) {
    CLI::App app{"window-attention restoration for fundus images"};
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    app.add_option("--seed", seed, "global RNG seed override");
    app.add_flag("--deterministic", deterministic,
                 "record strict single-threaded mode in the manifest (execution is always "
                 "deterministic) and omit wall-clock stamps from reports");
    // Let the global flags appear after the subcommand name as well.
    app.fallthrough();

    auto* fx = app.add_subcommand("make-fixtures", "write a synthetic paired dataset tree");
    std::string fx_out;
    std::size_t fx_n = 6, fx_size = 128;
    std::uint64_t fx_seed = 1;
    fx->add_option("--out", fx_out, "output directory (default: $WINREST_OUT/make-fixtures)");
    fx->add_option("--n", fx_n, "number of image pairs")->check(CLI::Range(1, 64));
    fx->add_option("--size", fx_size, "square image edge in pixels");
    fx->add_option("--fixture-seed", fx_seed, "generation seed (overridden by --seed)");

    auto* tr = app.add_subcommand("train", "run the adversarial training loop");
    std::string tr_config, tr_data, tr_out, tr_resume;
    std::vector<std::string> tr_sets;
    tr->add_option("--config", tr_config, "JSON training configuration")->required();
    tr->add_option("--data", tr_data, "dataset root with train/ and test/")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--resume", tr_resume, "trainer checkpoint to continue from");
    tr->add_option("--set", tr_sets, "override a config key, e.g. --set epochs=2");

    auto* rs = app.add_subcommand("restore", "restore one image or a directory of images");
    std::string rs_ckpt, rs_in, rs_out;
    TileFlags rs_tiles;
    rs->add_option("--checkpoint", rs_ckpt, "trainer or generator checkpoint")->required();
    rs->add_option("--in", rs_in, "input PNG file or directory")->required();
    rs->add_option("--out", rs_out, "output directory");
    rs->add_option("--tile", rs_tiles.tile, "tile edge for tiled inference (0 = whole image)");
    rs->add_option("--overlap", rs_tiles.overlap, "tile overlap in pixels");
    rs->add_flag("--feathered", rs_tiles.feathered, "blend tile overlaps instead of cropping");

    auto* ev = app.add_subcommand("evaluate", "score a checkpoint against a dataset split");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    TileFlags ev_tiles;
    bool ev_identity = false;
    ev->add_option("--checkpoint", ev_ckpt, "trainer or generator checkpoint")->required();
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--split", ev_split, "which split to score: test or train");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_option("--tile", ev_tiles.tile, "tile edge for tiled inference (0 = whole image)");
    ev->add_option("--overlap", ev_tiles.overlap, "tile overlap in pixels");
    ev->add_flag("--feathered", ev_tiles.feathered, "blend tile overlaps instead of cropping");
    ev->add_flag("--against-identity", ev_identity,
                 "also score the raw degraded inputs as a baseline");

    auto* bn = app.add_subcommand("bench", "print parameter and flops accounting");
    std::string bn_config, bn_out;
    std::vector<std::string> bn_sets;
    bn->add_option("--config", bn_config, "JSON training configuration (defaults when omitted)");
    bn->add_option("--set", bn_sets, "override a config key");
    bn->add_option("--out", bn_out, "optional directory for the run manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // flag and option errors are configuration errors
    }

    try {
        if (app.got_subcommand(fx))
            return cmd_make_fixtures(fx_out, fx_n, seed.value_or(fx_seed), fx_size, deterministic);
        if (app.got_subcommand(tr))
            return cmd_train(tr_config, tr_sets, tr_data, tr_out, seed, tr_resume, deterministic);
        if (app.got_subcommand(rs))
            return cmd_restore(rs_ckpt, rs_in, rs_out, rs_tiles, deterministic);
        if (app.got_subcommand(ev))
            return cmd_evaluate(ev_ckpt, ev_data, ev_split, ev_out, ev_tiles, ev_identity,
                                deterministic);
        if (app.got_subcommand(bn)) return cmd_bench(bn_config, bn_sets, bn_out, deterministic);
    } catch (const Error& e) {
        std::fprintf(stderr, "winrest: %s\n", e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "winrest: %s\n", e.what());
        return 4;
    }
    return 2;  // unreachable with require_subcommand(1)
}

}  // namespace winrest
