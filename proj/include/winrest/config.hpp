// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "winrest/error.hpp"
#include "winrest/training.hpp"

namespace winrest {

namespace config_detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const char* scope) {
    require(j.is_object(), ErrorKind::config, "config section ", scope, " must be an object");
    for (const auto& item : j.items()) {
        bool known = false;
        for (const char* k : allowed)
            if (item.key() == k) {
                known = true;
                break;
            }
        require(known, ErrorKind::config, "unknown config key ", scope, item.key());
    }
}

template <typename V>
void take(const nlohmann::json& j, const char* key, V& out, const char* scope) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::config, "config key ", scope, key, " has the wrong type");
    }
}

}  // namespace config_detail

/// Missing keys keep their defaults; unknown keys are rejected by name.
inline GeneratorConfig generator_config_from_json(const nlohmann::json& j,
                                                  const char* scope = "generator.") {
    using config_detail::check_keys;
    using config_detail::take;
    check_keys(j,
               {"in_channels", "out_channels", "base_channels", "stages", "blocks_per_stage",
                "window", "base_heads", "ffn_expansion", "masked_shift", "zero_init_output",
                "leaky_slope"},
               scope);
    GeneratorConfig g;
    take(j, "in_channels", g.in_channels, scope);
    take(j, "out_channels", g.out_channels, scope);
    take(j, "base_channels", g.base_channels, scope);
    take(j, "stages", g.stages, scope);
    take(j, "blocks_per_stage", g.blocks_per_stage, scope);
    take(j, "window", g.window, scope);
    take(j, "base_heads", g.base_heads, scope);
    take(j, "ffn_expansion", g.ffn_expansion, scope);
    take(j, "masked_shift", g.masked_shift, scope);
    take(j, "zero_init_output", g.zero_init_output, scope);
    take(j, "leaky_slope", g.leaky_slope, scope);
    return g;
}

inline DiscriminatorConfig discriminator_config_from_json(const nlohmann::json& j,
                                                          const char* scope = "discriminator.") {
    using config_detail::check_keys;
    using config_detail::take;
    check_keys(j,
               {"in_channels", "paired", "base_channels", "depth", "blocks_per_stage", "window",
                "base_heads", "ffn_expansion", "masked_shift", "leaky_slope"},
               scope);
    DiscriminatorConfig d;
    take(j, "in_channels", d.in_channels, scope);
    take(j, "paired", d.paired, scope);
    take(j, "base_channels", d.base_channels, scope);
    take(j, "depth", d.depth, scope);
    take(j, "blocks_per_stage", d.blocks_per_stage, scope);
    take(j, "window", d.window, scope);
    take(j, "base_heads", d.base_heads, scope);
    take(j, "ffn_expansion", d.ffn_expansion, scope);
    take(j, "masked_shift", d.masked_shift, scope);
    take(j, "leaky_slope", d.leaky_slope, scope);
    return d;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    using config_detail::check_keys;
    using config_detail::take;
    check_keys(j,
               {"epochs", "batch", "lr_init", "lr_final", "beta1", "beta2", "seed",
                "checkpoint_every", "patch", "weights", "charbonnier_global",
                "edge_eight_neighbor", "grad_clip", "perception", "perception_seed", "generator",
                "discriminator"},
               "");
    TrainConfig c;
    take(j, "epochs", c.epochs, "");
    take(j, "batch", c.batch, "");
    take(j, "lr_init", c.lr_init, "");
    take(j, "lr_final", c.lr_final, "");
    take(j, "beta1", c.beta1, "");
    take(j, "beta2", c.beta2, "");
    take(j, "seed", c.seed, "");
    take(j, "checkpoint_every", c.checkpoint_every, "");
    take(j, "patch", c.patch, "");
    if (j.contains("weights")) {
        const nlohmann::json& w = j.at("weights");
        check_keys(w, {"quality", "edge", "adversarial"}, "weights.");
        take(w, "quality", c.weights.quality, "weights.");
        take(w, "edge", c.weights.edge, "weights.");
        take(w, "adversarial", c.weights.adversarial, "weights.");
    }
    take(j, "charbonnier_global", c.charbonnier_global, "");
    take(j, "edge_eight_neighbor", c.edge_eight_neighbor, "");
    take(j, "grad_clip", c.grad_clip, "");
    take(j, "perception", c.perception, "");
    take(j, "perception_seed", c.perception_seed, "");
    if (j.contains("generator")) c.generator = generator_config_from_json(j.at("generator"));
    if (j.contains("discriminator"))
        c.discriminator = discriminator_config_from_json(j.at("discriminator"));
    c.validate();
    return c;
}

inline nlohmann::json read_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::config, "cannot open config file ", path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::config, "config file ", path.string(), " is not valid JSON: ", e.what());
    }
    return j;
}

inline TrainConfig load_train_config(const std::filesystem::path& path) {
    return train_config_from_json(read_config_file(path));
}

/// Applies one `--set key.path=value` override onto a config document. The
/// value parses as JSON when it can (numbers, booleans) and falls back to a
/// plain string otherwise.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::config,
            "override must look like key=value, got ", spec);
    const std::string key = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }

    nlohmann::json* node = &j;
    std::stringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    require(!path.empty(), ErrorKind::config, "override key is empty in ", spec);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
    (*node)[path.back()] = value;
}

}  // namespace winrest
