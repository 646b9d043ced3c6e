// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "winrest/checkpoint.hpp"
#include "winrest/data.hpp"
#include "winrest/discriminator.hpp"
#include "winrest/error.hpp"
#include "winrest/evaluation.hpp"
#include "winrest/generator.hpp"
#include "winrest/losses.hpp"
#include "winrest/optim.hpp"
#include "winrest/perception.hpp"
#include "winrest/rng.hpp"
#include "winrest/tensor.hpp"

namespace winrest {

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch = 4;
    double lr_init = 1e-4;
    double lr_final = 1e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // steps between snapshots; 0 = final only
    std::size_t patch = 64;            // training crop edge, must fit model alignment
    LossWeights weights;
    bool charbonnier_global = false;
    bool edge_eight_neighbor = false;
    double grad_clip = 0.0;  // global-norm ceiling per network; 0 disables
    std::string perception = "tiny";
    std::uint64_t perception_seed = 7;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;

    void validate() const {
        require(epochs >= 1, ErrorKind::config, "epochs must be at least 1");
        require(batch >= 1, ErrorKind::config, "batch size must be at least 1");
        require(lr_final <= lr_init, ErrorKind::config, "final learning rate ", lr_final,
                " exceeds initial ", lr_init);
        require(patch >= 1 && patch % generator.alignment() == 0, ErrorKind::config,
                "patch ", patch, " must be a multiple of the generator alignment ",
                generator.alignment());
        require(patch % discriminator.alignment() == 0, ErrorKind::config, "patch ", patch,
                " must be a multiple of the critic alignment ", discriminator.alignment());
        require(grad_clip >= 0.0, ErrorKind::config, "gradient clip threshold must be >= 0");
        require(perception == "tiny" || perception == "identity", ErrorKind::config,
                "unknown perception kind ", perception);
        generator.validate();
        discriminator.validate();
    }
};

inline nlohmann::json generator_config_json(const GeneratorConfig& g) {
    return {{"in_channels", g.in_channels},
            {"out_channels", g.out_channels},
            {"base_channels", g.base_channels},
            {"stages", g.stages},
            {"blocks_per_stage", g.blocks_per_stage},
            {"window", g.window},
            {"base_heads", g.base_heads},
            {"ffn_expansion", g.ffn_expansion},
            {"masked_shift", g.masked_shift},
            {"zero_init_output", g.zero_init_output},
            {"leaky_slope", g.leaky_slope}};
}

inline nlohmann::json discriminator_config_json(const DiscriminatorConfig& d) {
    return {{"in_channels", d.in_channels},
            {"paired", d.paired},
            {"base_channels", d.base_channels},
            {"depth", d.depth},
            {"blocks_per_stage", d.blocks_per_stage},
            {"window", d.window},
            {"base_heads", d.base_heads},
            {"ffn_expansion", d.ffn_expansion},
            {"masked_shift", d.masked_shift},
            {"leaky_slope", d.leaky_slope}};
}

inline nlohmann::json train_config_json(const TrainConfig& c) {
    nlohmann::json j;
    j["epochs"] = c.epochs;
    j["batch"] = c.batch;
    j["lr_init"] = c.lr_init;
    j["lr_final"] = c.lr_final;
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["seed"] = c.seed;
    j["checkpoint_every"] = c.checkpoint_every;
    j["patch"] = c.patch;
    j["weights"] = {{"quality", c.weights.quality},
                    {"edge", c.weights.edge},
                    {"adversarial", c.weights.adversarial}};
    j["charbonnier_global"] = c.charbonnier_global;
    j["edge_eight_neighbor"] = c.edge_eight_neighbor;
    j["grad_clip"] = c.grad_clip;
    j["perception"] = c.perception;
    j["perception_seed"] = c.perception_seed;
    j["generator"] = generator_config_json(c.generator);
    j["discriminator"] = discriminator_config_json(c.discriminator);
    return j;
}

/// Canonical serialization of every training-relevant knob. Its fingerprint
/// ties checkpoints to the exact setup that produced them.
inline std::string train_config_text(const TrainConfig& c) { return train_config_json(c).dump(); }

/// Per-step cosine decay between the configured endpoints.
inline double lr_schedule(std::uint64_t step, std::uint64_t total_steps, const TrainConfig& cfg) {
    require(step <= total_steps, ErrorKind::config, "schedule step ", step,
            " is past the total budget ", total_steps);
    return cosine_lr(step, total_steps, cfg.lr_init, cfg.lr_final);
}

/// Every scalar the optimization touches in one step, for logs and tests.
struct StepLog {
    std::uint64_t step = 0;
    double lr = 0;
    double fidelity = 0;       // Charbonnier on pixels
    double quality = 0;        // frozen-perception feature distance
    double edge = 0;           // Charbonnier on Laplacian maps
    double adversarial_g = 0;  // generator side of the least-squares game
    double total_g = 0;        // weighted generator objective
    double adversarial_d = 0;  // critic side of the least-squares game
};

inline nlohmann::json step_log_json(const StepLog& s) {
    return {{"step", s.step},
            {"lr", s.lr},
            {"fidelity", s.fidelity},
            {"quality", s.quality},
            {"edge", s.edge},
            {"adversarial_g", s.adversarial_g},
            {"total_g", s.total_g},
            {"adversarial_d", s.adversarial_d}};
}

struct FitResult {
    std::vector<StepLog> history;
    std::filesystem::path final_checkpoint;
    double best_loss = 0;
    std::uint64_t best_step = 0;
};

namespace train_detail {

template <typename T>
std::uint64_t hash_params(const ParamList<T>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto* p : params) {
        h ^= fnv1a64(p->value.data(), p->value.numel() * sizeof(T));
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
void clip_global_norm(const ParamList<T>& params, double max_norm) {
    double sq = 0;
    for (const auto* p : params)
        for (std::size_t i = 0; i < p->grad.numel(); ++i) sq += double(p->grad[i]) * double(p->grad[i]);
    const double norm = std::sqrt(sq);
    if (norm <= max_norm) return;
    const double scale = max_norm / norm;
    for (auto* p : params)
        for (std::size_t i = 0; i < p->grad.numel(); ++i)
            p->grad[i] = static_cast<T>(double(p->grad[i]) * scale);
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    Rng rng = Rng::derive(seed, 0x73687566ull, epoch);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    return order;
}

}  // namespace train_detail

/// Two-phase adversarial trainer: each step first updates the generator
/// against the frozen critic, then the critic against the (pre-update)
/// generator outputs. Single-threaded and fully deterministic per seed; all
/// data randomness comes from per-(seed, item, epoch) derived streams, so a
/// resumed run replays the exact step sequence.
template <typename T = float>
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg) : cfg_(cfg) {
        cfg.validate();
        gen_ = Generator<T>(cfg.generator);
        disc_ = Discriminator<T>(cfg.discriminator);
        Rng grng = Rng::derive(cfg.seed, 0x67656e65ull, 0);
        gen_.init(grng);
        Rng drng = Rng::derive(cfg.seed, 0x64697363ull, 0);
        disc_.init(drng);
        phi_ = cfg.perception == "identity" ? Perception<T>::identity()
                                            : Perception<T>::tiny(cfg.perception_seed);

        gen_.collect("g", params_g_);
        disc_.collect("d", params_d_);
        phi_.collect("phi", params_phi_);
        phi_hash_ = train_detail::hash_params(params_phi_);

        AdamConfig ac;
        ac.beta1 = cfg.beta1;
        ac.beta2 = cfg.beta2;
        adam_g_ = Adam<T>(params_g_, ac);
        adam_d_ = Adam<T>(params_d_, ac);
        edge_ = EdgeLoss<T>(cfg.generator.out_channels, cfg.edge_eight_neighbor);
    }

    // Parameter lists hold pointers into the networks; moving the trainer
    // would strand them.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const TrainConfig& config() const { return cfg_; }
    Generator<T>& generator() { return gen_; }
    Discriminator<T>& discriminator() { return disc_; }
    Perception<T>& perception() { return phi_; }
    std::uint64_t step() const { return step_; }
    std::uint64_t total_steps() const { return total_steps_; }
    void set_total_steps(std::uint64_t t) { total_steps_ = t; }
    const ParamList<T>& generator_params() const { return params_g_; }
    const ParamList<T>& critic_params() const { return params_d_; }

    /// One optimization step over a batch of registered LQ/HQ patches.
    StepLog train_step(const std::vector<PatchPair<T>>& batch) {
        require(!batch.empty(), ErrorKind::config, "train step needs a non-empty batch");
        require(total_steps_ > 0, ErrorKind::config, "total step budget is unset");
        require(train_detail::hash_params(params_phi_) == phi_hash_, ErrorKind::numeric,
                "perception network changed; it must stay frozen");

        const double lr = lr_schedule(step_, total_steps_, cfg_);
        const double inv_b = 1.0 / double(batch.size());
        const LossWeights& lw = cfg_.weights;
        StepLog log;
        log.step = step_;
        log.lr = lr;

        // Phase 1: the critic is fixed (its gradients are skipped entirely);
        // only generator parameters accumulate and update.
        zero_grads(params_g_);
        std::vector<Tensor<T>> preds;
        preds.reserve(batch.size());
        for (const PatchPair<T>& item : batch) {
            const Tensor<T> y = gen_.forward(item.lq, true);
            Tensor<T> pred = y;
            for (std::size_t i = 0; i < pred.numel(); ++i) pred[i] += item.lq[i];

            const ScalarLoss<T> fid =
                charbonnier_loss(pred, item.hq, 1e-3, cfg_.charbonnier_global);
            check_finite(fid.value, "fidelity loss");
            const ScalarLoss<T> fqp = feature_quality_loss(phi_, pred, item.hq);
            check_finite(fqp.value, "quality loss");
            const ScalarLoss<T> edge = edge_(pred, item.hq);
            check_finite(edge.value, "edge loss");
            const Tensor<T> fake_scores = disc_.forward(pred, true);
            const ScalarLoss<T> advg = adversarial_generator_loss(fake_scores);
            check_finite(advg.value, "generator adversarial loss");

            Tensor<T> dpred = fid.grad;
            const Tensor<T> dadv = disc_.backward(advg.grad, /*accumulate_param_grads=*/false);
            for (std::size_t i = 0; i < dpred.numel(); ++i) {
                const double g = double(dpred[i]) + lw.quality * double(fqp.grad[i]) +
                                 lw.edge * double(edge.grad[i]) +
                                 lw.adversarial * double(dadv[i]);
                dpred[i] = static_cast<T>(g * inv_b);
            }
            require(all_finite(dpred), ErrorKind::numeric,
                    "non-finite generator gradient at step ", step_);
            gen_.backward(dpred, true);

            log.fidelity += fid.value * inv_b;
            log.quality += fqp.value * inv_b;
            log.edge += edge.value * inv_b;
            log.adversarial_g += advg.value * inv_b;
            preds.push_back(std::move(pred));
        }
        log.total_g = log.fidelity + lw.quality * log.quality + lw.edge * log.edge +
                      lw.adversarial * log.adversarial_g;
        if (cfg_.grad_clip > 0) train_detail::clip_global_norm(params_g_, cfg_.grad_clip);
        adam_g_.step(lr);

        // Phase 2: the generator is fixed; the critic learns to separate the
        // detached pre-update predictions from the references.
        zero_grads(params_d_);
        for (std::size_t b = 0; b < batch.size(); ++b) {
            const Tensor<T> real_scores = disc_.forward(batch[b].hq, false);
            const Tensor<T> fake_scores = disc_.forward(preds[b], true);
            const CriticLoss<T> critic = adversarial_critic_loss(fake_scores, real_scores);
            check_finite(critic.value, "critic loss");

            const double scale = lw.adversarial * inv_b;
            Tensor<T> gf = critic.grad_fake;
            for (std::size_t i = 0; i < gf.numel(); ++i)
                gf[i] = static_cast<T>(double(gf[i]) * scale);
            disc_.backward(gf, true);

            disc_.forward(batch[b].hq, true);
            Tensor<T> gr = critic.grad_real;
            for (std::size_t i = 0; i < gr.numel(); ++i)
                gr[i] = static_cast<T>(double(gr[i]) * scale);
            disc_.backward(gr, true);

            log.adversarial_d += critic.value * inv_b;
        }
        if (cfg_.grad_clip > 0) train_detail::clip_global_norm(params_d_, cfg_.grad_clip);
        adam_d_.step(lr);

        ++step_;
        if (log.total_g < best_loss_) {
            best_loss_ = log.total_g;
            best_step_ = log.step;
        }
        return log;
    }

    void save_checkpoint(const std::filesystem::path& path) const {
        Checkpoint c;
        c.role = "trainer";
        c.config_text = train_config_text(cfg_);
        save_params(c, params_g_);
        save_params(c, params_d_);
        save_optimizer(c, adam_g_, "g");
        save_optimizer(c, adam_d_, "d");
        c.add_u64("step", step_);
        c.add_u64("best_step", best_step_);
        c.add_f64("best_loss", best_loss_);
        c.save(path.string());
    }

    void load_checkpoint(const std::filesystem::path& path) {
        Checkpoint c = Checkpoint::load(path.string());
        require(c.role == "trainer", ErrorKind::checkpoint, "checkpoint role ", c.role,
                " cannot drive a trainer");
        require(c.config_text == train_config_text(cfg_), ErrorKind::checkpoint,
                "checkpoint belongs to a different training configuration");
        load_params(c, params_g_);
        load_params(c, params_d_);
        load_optimizer(c, adam_g_, "g");
        load_optimizer(c, adam_d_, "d");
        step_ = c.get_u64("step");
        best_step_ = c.get_u64("best_step");
        best_loss_ = c.get_f64("best_loss");
    }

    /// Full training run over the given pairs. Epochs shuffle deterministically
    /// per (seed, epoch); each pair contributes one crop per epoch; an epoch is
    /// ceil(pairs/batch) steps. Pass `resume` to continue a checkpointed run;
    /// the remaining steps replay exactly what the uninterrupted run would do.
    FitResult fit(const std::vector<ImagePair>& pairs, const std::filesystem::path& out_dir,
                  const std::filesystem::path& resume = {}) {
        require(!pairs.empty(), ErrorKind::data, "fit: empty dataset");
        std::vector<PatchPair<T>> items;
        items.reserve(pairs.size());
        for (const ImagePair& p : pairs)
            items.push_back(
                {convert<T>(read_image_png(p.lq_path)), convert<T>(read_image_png(p.hq_path))});
        return fit_loaded(items, out_dir, resume);
    }

    /// Same loop on pairs already in memory (fixtures, tests).
    FitResult fit_loaded(const std::vector<PatchPair<T>>& items,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path& resume = {}) {
        require(!items.empty(), ErrorKind::data, "fit: empty dataset");
        const std::size_t n = items.size();
        const std::size_t steps_per_epoch = (n + cfg_.batch - 1) / cfg_.batch;
        total_steps_ = std::uint64_t(cfg_.epochs) * steps_per_epoch;
        if (!resume.empty()) load_checkpoint(resume);
        require(step_ <= total_steps_, ErrorKind::checkpoint, "checkpoint step ", step_,
                " is past this run's budget ", total_steps_);

        const std::filesystem::path ckpt_dir = out_dir / "checkpoints";
        const std::filesystem::path log_dir = out_dir / "logs";
        std::filesystem::create_directories(ckpt_dir);
        std::filesystem::create_directories(log_dir);
        std::ofstream log_out(log_dir / "train_log.jsonl", std::ios::app);
        require(log_out.good(), ErrorKind::io, "fit: cannot open training log");

        FitResult result;
        while (step_ < total_steps_) {
            const std::size_t epoch = std::size_t(step_ / steps_per_epoch);
            const std::size_t slot = std::size_t(step_ % steps_per_epoch);
            const auto order = train_detail::epoch_order(n, cfg_.seed, epoch);

            std::vector<PatchPair<T>> batch;
            const std::size_t lo = slot * cfg_.batch;
            const std::size_t hi = std::min(n, lo + cfg_.batch);
            for (std::size_t i = lo; i < hi; ++i) {
                const std::size_t idx = order[i];
                Rng rng = Rng::derive(cfg_.seed, idx, epoch);
                PatchPair<T> crop =
                    crop_patch_pair(items[idx].lq, items[idx].hq, cfg_.patch, rng);
                batch.push_back(augment_pair(crop.lq, crop.hq, rng));
            }

            const StepLog log = train_step(batch);
            result.history.push_back(log);
            log_out << step_log_json(log).dump() << "\n";

            if (cfg_.checkpoint_every > 0 && step_ % cfg_.checkpoint_every == 0 &&
                step_ < total_steps_) {
                char name[32];
                std::snprintf(name, sizeof name, "step_%06llu.ckpt",
                              static_cast<unsigned long long>(step_));
                save_checkpoint(ckpt_dir / name);
            }
        }
        result.final_checkpoint = ckpt_dir / "final.ckpt";
        save_checkpoint(result.final_checkpoint);
        result.best_loss = best_loss_;
        result.best_step = best_step_;
        return result;
    }

private:
    static void check_finite(double v, const char* what) {
        require(std::isfinite(v), ErrorKind::numeric, "non-finite ", what);
    }

    TrainConfig cfg_;
    Generator<T> gen_;
    Discriminator<T> disc_;
    Perception<T> phi_;
    ParamList<T> params_g_, params_d_, params_phi_;
    Adam<T> adam_g_, adam_d_;
    EdgeLoss<T> edge_{3, false};
    std::uint64_t phi_hash_ = 0;
    std::uint64_t step_ = 0;
    std::uint64_t total_steps_ = 0;
    std::uint64_t best_step_ = 0;
    double best_loss_ = std::numeric_limits<double>::infinity();
};

}  // namespace winrest
