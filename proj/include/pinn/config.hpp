#pragma once

#include <json.hpp>

#include <cstdint>
#include <initializer_list>
#include <string>

#include "pinn/common.hpp"
#include "pinn/model.hpp"
#include "pinn/spectral.hpp"
#include "pinn/training.hpp"

// JSON forms of every runtime configuration struct. Unknown keys are
// rejected rather than ignored: a typoed setting must not silently fall
// back to a default. Missing keys do take the struct's default, so files
// only state what they change.

namespace pinn {

using Json = nlohmann::json;

namespace detail {

inline void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                       const char* what) {
    if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key '" + it.key() + "' in " + what);
    }
}

template <typename T>
T get_or(const Json& j, const char* key, T def) {
    if (!j.contains(key)) return def;
    try {
        return j.at(key).get<T>();
    } catch (const Json::exception&) {
        throw ConfigError(std::string("bad value for '") + key + "'");
    }
}

}  // namespace detail

inline const char* arch_name(Arch a) { return a == Arch::XLstm ? "xlstm" : "baseline"; }
inline const char* gate_name(GateMode g) { return g == GateMode::Exp ? "exp" : "sigmoid"; }

inline Arch arch_from_name(const std::string& s) {
    if (s == "xlstm") return Arch::XLstm;
    if (s == "baseline") return Arch::Baseline;
    throw ConfigError("unknown architecture '" + s + "'");
}

inline GateMode gate_from_name(const std::string& s) {
    if (s == "exp") return GateMode::Exp;
    if (s == "sigmoid") return GateMode::Sigmoid;
    throw ConfigError("unknown gate mode '" + s + "'");
}

inline Json to_json(const ModelConfig& c) {
    return Json{{"arch", arch_name(c.arch)},
                {"input_dim", c.input_dim},
                {"width", c.width},
                {"depth", c.depth},
                {"micro_steps", c.micro_steps},
                {"input_gate", gate_name(c.input_gate)},
                {"forget_gate", gate_name(c.forget_gate)},
                {"layer_norm", c.layer_norm},
                {"eps", c.eps},
                {"clip_lo", c.clip_lo},
                {"clip_hi", c.clip_hi}};
}

inline ModelConfig model_from_json(const Json& j) {
    detail::check_keys(j,
                       {"arch", "input_dim", "width", "depth", "micro_steps", "input_gate",
                        "forget_gate", "layer_norm", "eps", "clip_lo", "clip_hi"},
                       "model config");
    ModelConfig c;
    c.arch = arch_from_name(detail::get_or<std::string>(j, "arch", arch_name(c.arch)));
    c.input_dim = detail::get_or(j, "input_dim", c.input_dim);
    c.width = detail::get_or(j, "width", c.width);
    c.depth = detail::get_or(j, "depth", c.depth);
    c.micro_steps = detail::get_or(j, "micro_steps", c.micro_steps);
    c.input_gate =
        gate_from_name(detail::get_or<std::string>(j, "input_gate", gate_name(c.input_gate)));
    c.forget_gate =
        gate_from_name(detail::get_or<std::string>(j, "forget_gate", gate_name(c.forget_gate)));
    c.layer_norm = detail::get_or(j, "layer_norm", c.layer_norm);
    c.eps = detail::get_or(j, "eps", c.eps);
    c.clip_lo = detail::get_or(j, "clip_lo", c.clip_lo);
    c.clip_hi = detail::get_or(j, "clip_hi", c.clip_hi);
    c.validate();
    return c;
}

inline Json to_json(const AdamConfig& c) {
    return Json{{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

inline AdamConfig adam_from_json(const Json& j) {
    detail::check_keys(j, {"lr", "beta1", "beta2", "eps"}, "adam config");
    AdamConfig c;
    c.lr = detail::get_or(j, "lr", c.lr);
    c.beta1 = detail::get_or(j, "beta1", c.beta1);
    c.beta2 = detail::get_or(j, "beta2", c.beta2);
    c.eps = detail::get_or(j, "eps", c.eps);
    if (!(c.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(c.beta1 >= 0.0 && c.beta1 < 1.0) || !(c.beta2 >= 0.0 && c.beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(c.eps > 0.0)) throw ConfigError("adam eps must be positive");
    return c;
}

inline Json to_json(const TrainConfig& c) {
    return Json{{"model", to_json(c.model)},
                {"adam", to_json(c.adam)},
                {"weights", c.weights.values},
                {"budget", c.budget},
                {"seed", c.seed}};
}

inline TrainConfig train_from_json(const Json& j) {
    detail::check_keys(j, {"model", "adam", "weights", "budget", "seed"}, "train config");
    TrainConfig c;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("adam")) c.adam = adam_from_json(j.at("adam"));
    c.weights.values = detail::get_or(j, "weights", c.weights.values);
    c.budget = detail::get_or(j, "budget", c.budget);
    c.seed = detail::get_or(j, "seed", c.seed);
    return c;
}

inline Json to_json(const ProbeConfig& c) {
    return Json{{"model", to_json(c.model)},
                {"adam", to_json(c.adam)},
                {"budget", c.budget},
                {"train_points", c.train_points},
                {"dense_points", c.dense_points},
                {"k_min", c.k_min},
                {"k_max", c.k_max},
                {"seeds", c.seeds},
                {"seed0", c.seed0},
                {"eps", c.eps},
                {"phase", c.phase},
                {"feature_points", c.feature_points},
                {"feature_layer", c.feature_layer},
                {"probe_block", c.probe_block}};
}

inline ProbeConfig probe_from_json(const Json& j) {
    detail::check_keys(j,
                       {"model", "adam", "budget", "train_points", "dense_points", "k_min",
                        "k_max", "seeds", "seed0", "eps", "phase", "feature_points",
                        "feature_layer", "probe_block"},
                       "probe config");
    ProbeConfig c;
    if (j.contains("model")) c.model = model_from_json(j.at("model"));
    if (j.contains("adam")) c.adam = adam_from_json(j.at("adam"));
    c.budget = detail::get_or(j, "budget", c.budget);
    c.train_points = detail::get_or(j, "train_points", c.train_points);
    c.dense_points = detail::get_or(j, "dense_points", c.dense_points);
    c.k_min = detail::get_or(j, "k_min", c.k_min);
    c.k_max = detail::get_or(j, "k_max", c.k_max);
    c.seeds = detail::get_or(j, "seeds", c.seeds);
    c.seed0 = detail::get_or(j, "seed0", c.seed0);
    c.eps = detail::get_or(j, "eps", c.eps);
    c.phase = detail::get_or(j, "phase", c.phase);
    c.feature_points = detail::get_or(j, "feature_points", c.feature_points);
    c.feature_layer = detail::get_or(j, "feature_layer", c.feature_layer);
    c.probe_block = detail::get_or(j, "probe_block", c.probe_block);
    return c;
}

// Top-level tool configuration; one file drives any subcommand, and command
// line flags override individual fields after the file is read.
struct RunConfig {
    std::string problem = "advection1d";
    bool paired = true;
    TrainConfig train;
    ProbeConfig probe;
    std::string out_root = "runs";
};

inline Json to_json(const RunConfig& c) {
    return Json{{"problem", c.problem},
                {"paired", c.paired},
                {"train", to_json(c.train)},
                {"probe", to_json(c.probe)},
                {"out_root", c.out_root}};
}

inline RunConfig run_config_from_json(const Json& j) {
    detail::check_keys(j, {"problem", "paired", "train", "probe", "out_root"}, "run config");
    RunConfig c;
    c.problem = detail::get_or(j, "problem", c.problem);
    c.paired = detail::get_or(j, "paired", c.paired);
    if (j.contains("train")) c.train = train_from_json(j.at("train"));
    if (j.contains("probe")) c.probe = probe_from_json(j.at("probe"));
    c.out_root = detail::get_or(j, "out_root", c.out_root);
    return c;
}

inline RunConfig parse_run_config(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace pinn
