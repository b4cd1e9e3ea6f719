#pragma once

// Run configuration shared by the command-line tools, with a JSON form that
// rejects unknown keys.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <type_traits>

#include <fmt/format.h>
#include <json.hpp>

#include "fsdr/error.hpp"
#include "fsdr/pipeline.hpp"
#include "fsdr/sdr.hpp"
#include "fsdr/simlab.hpp"

namespace fsdr {

struct RunConfig {
    // simulation
    int model = 1;
    long n = 100;
    std::string design = "dense";
    int replicates = 100;
    int grid_points = 100;
    // estimation
    std::optional<int> k;  ///< 0 selects K by the bootstrap; unset means the command default
    double fve = 0.99;
    int max_components = 0;
    std::optional<double> h_mu;
    std::optional<double> h_sigma;
    bool cv_bandwidths = false;
    int bootstrap = 50;
    int max_k = 0;
    int restarts = 10;
    int max_iterations = 500;
    double ftol = 1e-8;
    std::optional<int> k_nn;  ///< unset means the value stored with the model, or 5
    std::uint64_t seed = 1;
    unsigned threads = 0;  ///< 0 uses every available core
    // files
    std::string format = "dense";  ///< dense | sparse
    std::string input;
    std::string responses;
    std::string model_file;
    std::string test;
    std::string test_responses;
    std::string output;
    bool runtime_column = false;
    int train_size = 150;

    bool operator==(const RunConfig&) const = default;

    unsigned worker_count() const { return threads == 0 ? default_thread_count() : threads; }

    ComponentOptions component_options() const {
        ComponentOptions c;
        c.fve = fve;
        c.max_components = max_components;
        c.cv_bandwidths = cv_bandwidths;
        c.seed = derive_seed(seed, {0xcf});
        if (h_mu || h_sigma) {
            if (!(h_mu && h_sigma)) throw ConfigError("set both h_mu and h_sigma, or neither");
            c.bandwidths = Bandwidths{*h_mu, *h_sigma};
        }
        return c;
    }

    SolverConfig solver_config() const {
        SolverConfig s;
        s.restarts = restarts;
        s.nelder_mead.max_iterations = max_iterations;
        s.nelder_mead.ftol = ftol;
        s.threads = worker_count();
        return s;
    }

    MonteCarloConfig monte_carlo_config() const {
        MonteCarloConfig m;
        m.model_id = model;
        m.n = n;
        m.design = parse_design(design);
        m.replicates = replicates;
        m.seed = seed;
        m.grid_points = static_cast<std::size_t>(grid_points);
        m.components = component_options();
        m.solver = solver_config();
        m.threads = worker_count();
        return m;
    }

    /// Range checks for every numeric field; `command` adds the checks that
    /// only apply to one subcommand.
    void validate(const std::string& command = {}) const {
        auto need = [](bool ok, const std::string& msg) {
            if (!ok) throw ConfigError(msg);
        };
        need(model >= 1 && model <= 5, fmt::format("model must be 1..5, got {}", model));
        need(n >= 2, fmt::format("n must be at least 2, got {}", n));
        need(design == "dense" || design == "sparse", fmt::format("design must be dense or sparse, got '{}'", design));
        need(format == "dense" || format == "sparse", fmt::format("format must be dense or sparse, got '{}'", format));
        need(replicates >= 1, fmt::format("replicates must be at least 1, got {}", replicates));
        need(grid_points >= 21, fmt::format("grid_points must be at least 21, got {}", grid_points));
        if (k) need(*k >= 0, fmt::format("k must be a positive integer or auto, got {}", *k));
        need(fve > 0.0 && fve <= 1.0, fmt::format("fve must lie in (0,1], got {}", fve));
        need(max_components >= 0, fmt::format("max_components must be nonnegative, got {}", max_components));
        if (h_mu) need(*h_mu > 0.0 && *h_mu < 1.0, fmt::format("h_mu must lie in (0,1), got {}", *h_mu));
        if (h_sigma) need(*h_sigma > 0.0 && *h_sigma < 1.0, fmt::format("h_sigma must lie in (0,1), got {}", *h_sigma));
        need(bootstrap >= 10, fmt::format("bootstrap must be at least 10, got {}", bootstrap));
        need(max_k >= 0, fmt::format("max_k must be nonnegative, got {}", max_k));
        need(restarts >= 1, fmt::format("restarts must be at least 1, got {}", restarts));
        need(max_iterations >= 1, fmt::format("max_iterations must be at least 1, got {}", max_iterations));
        need(ftol > 0.0, fmt::format("ftol must be positive, got {}", ftol));
        if (k_nn) need(*k_nn >= 1, fmt::format("k_nn must be at least 1, got {}", *k_nn));
        need(train_size >= 2, fmt::format("train_size must be at least 2, got {}", train_size));
        if (command == "fit" || command == "select-dim" || command == "tecator")
            need(!input.empty(), fmt::format("{} needs --input", command));
        if ((command == "fit" || command == "select-dim") && format == "sparse")
            need(!responses.empty(), "sparse input needs --responses");
        if (command == "predict") {
            need(!model_file.empty(), "predict needs --model");
            need(!test.empty(), "predict needs --test");
        }
    }
};

inline nlohmann::ordered_json to_json(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["model"] = c.model;
    j["n"] = c.n;
    j["design"] = c.design;
    j["replicates"] = c.replicates;
    j["grid_points"] = c.grid_points;
    if (!c.k) j["k"] = nullptr;
    else if (*c.k == 0) j["k"] = "auto";
    else j["k"] = *c.k;
    j["fve"] = c.fve;
    j["max_components"] = c.max_components;
    j["h_mu"] = c.h_mu ? nlohmann::ordered_json(*c.h_mu) : nlohmann::ordered_json(nullptr);
    j["h_sigma"] = c.h_sigma ? nlohmann::ordered_json(*c.h_sigma) : nlohmann::ordered_json(nullptr);
    j["cv_bandwidths"] = c.cv_bandwidths;
    j["bootstrap"] = c.bootstrap;
    j["max_k"] = c.max_k;
    j["restarts"] = c.restarts;
    j["max_iterations"] = c.max_iterations;
    j["ftol"] = c.ftol;
    j["k_nn"] = c.k_nn ? nlohmann::ordered_json(*c.k_nn) : nlohmann::ordered_json(nullptr);
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["format"] = c.format;
    j["input"] = c.input;
    j["responses"] = c.responses;
    j["model_file"] = c.model_file;
    j["test"] = c.test;
    j["test_responses"] = c.test_responses;
    j["output"] = c.output;
    j["runtime_column"] = c.runtime_column;
    j["train_size"] = c.train_size;
    return j;
}

/// Starts from `base` and overrides each key present in `j`.
inline RunConfig config_from_json(const nlohmann::ordered_json& j, RunConfig base = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::set<std::string> known{
        "model",   "n",       "design",  "replicates",   "grid_points", "k",          "fve",         "max_components",
        "h_mu",    "h_sigma", "cv_bandwidths", "bootstrap", "max_k",     "restarts",   "max_iterations", "ftol",
        "k_nn",    "seed",    "threads", "format",       "input",       "responses",  "model_file",  "test",
        "test_responses", "output", "runtime_column", "train_size"};
    for (const auto& [key, _] : j.items())
        if (!known.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        auto get_opt = [&](const char* key, auto& field) {
            if (!j.contains(key)) return;
            if (j.at(key).is_null()) field.reset();
            else field = j.at(key).get<typename std::decay_t<decltype(field)>::value_type>();
        };
        get("model", base.model);
        get("n", base.n);
        get("design", base.design);
        get("replicates", base.replicates);
        get("grid_points", base.grid_points);
        if (j.contains("k")) {
            const auto& v = j.at("k");
            if (v.is_null()) {
                base.k.reset();
            } else if (v.is_string()) {
                if (v.get<std::string>() != "auto") throw ConfigError("k must be an integer or \"auto\"");
                base.k = 0;
            } else {
                base.k = v.get<int>();
            }
        }
        get("fve", base.fve);
        get("max_components", base.max_components);
        get_opt("h_mu", base.h_mu);
        get_opt("h_sigma", base.h_sigma);
        get("cv_bandwidths", base.cv_bandwidths);
        get("bootstrap", base.bootstrap);
        get("max_k", base.max_k);
        get("restarts", base.restarts);
        get("max_iterations", base.max_iterations);
        get("ftol", base.ftol);
        get_opt("k_nn", base.k_nn);
        get("seed", base.seed);
        get("threads", base.threads);
        get("format", base.format);
        get("input", base.input);
        get("responses", base.responses);
        get("model_file", base.model_file);
        get("test", base.test);
        get("test_responses", base.test_responses);
        get("output", base.output);
        get("runtime_column", base.runtime_column);
        get("train_size", base.train_size);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("config value has the wrong type: {}", e.what()));
    }
    return base;
}

inline RunConfig parse_k(const std::string& text, RunConfig c) {
    if (text == "auto") {
        c.k = 0;
        return c;
    }
    try {
        std::size_t used = 0;
        const int v = std::stoi(text, &used);
        if (used != text.size() || v < 1) throw ConfigError("");
        c.k = v;
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("k must be a positive integer or auto, got '{}'", text));
    }
    return c;
}

}  // namespace fsdr
