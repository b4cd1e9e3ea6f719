#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "fsdr/commands.hpp"

namespace {

using fsdr::RunConfig;

/// Options bound to a scratch config; only flags that were given on the
/// command line are copied over the defaults and the --config file.
class Binder {
public:
    Binder(CLI::App* app, RunConfig* flags) : app_(app), flags_(flags) {}

    template <class T>
    void option(const std::string& name, T RunConfig::*member, const std::string& help) {
        auto* o = app_->add_option(name, flags_->*member, help);
        setters_.emplace_back(o, [this, member](RunConfig& c) { c.*member = flags_->*member; });
    }

    template <class T>
    void optional(const std::string& name, std::optional<T> RunConfig::*member, const std::string& help) {
        auto value = std::make_shared<T>();
        auto* o = app_->add_option(name, *value, help);
        setters_.emplace_back(o, [value, member](RunConfig& c) { c.*member = *value; });
    }

    void flag(const std::string& name, bool RunConfig::*member, const std::string& help) {
        auto* o = app_->add_flag(name, flags_->*member, help);
        setters_.emplace_back(o, [this, member](RunConfig& c) { c.*member = flags_->*member; });
    }

    void k_option() {
        auto text = std::make_shared<std::string>();
        auto* o = app_->add_option("--k", *text, "number of directions, or auto for bootstrap selection");
        setters_.emplace_back(o, [text](RunConfig& c) { c = fsdr::parse_k(*text, c); });
    }

    void apply(RunConfig& c) const {
        for (const auto& [opt, set] : setters_)
            if (opt->count() > 0) set(c);
    }

private:
    CLI::App* app_;
    RunConfig* flags_;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> setters_;
};

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw fsdr::ConfigError(fmt::format("cannot open config file '{}'", path));
    fsdr::Json j;
    try {
        j = fsdr::Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw fsdr::ConfigError(fmt::format("{}: {}", path, e.what()));
    }
    return fsdr::config_from_json(j);
}

void common_options(Binder& b) {
    b.option("--seed", &RunConfig::seed, "master seed");
    b.option("--threads", &RunConfig::threads, "worker threads (0 = all cores)");
    b.option("--fve", &RunConfig::fve, "fraction of variance explained for the truncation");
    b.option("--max-components", &RunConfig::max_components, "upper bound on the truncation (0 = none)");
    b.option("--restarts", &RunConfig::restarts, "random restarts per direction");
    b.option("--max-iterations", &RunConfig::max_iterations, "Nelder-Mead iteration limit");
    b.option("--ftol", &RunConfig::ftol, "Nelder-Mead relative tolerance");
    b.option("--output", &RunConfig::output, "output path (prefix for simulate)");
}

void smoothing_options(Binder& b) {
    b.option("--grid-points", &RunConfig::grid_points, "grid size for sparse smoothing or simulation");
    b.optional("--h-mu", &RunConfig::h_mu, "mean smoother bandwidth");
    b.optional("--h-sigma", &RunConfig::h_sigma, "covariance smoother bandwidth");
    b.flag("--cv-bandwidths", &RunConfig::cv_bandwidths, "choose bandwidths by 5-fold subject cross-validation");
}

void input_options(Binder& b) {
    b.option("--input", &RunConfig::input, "training data file");
    b.option("--format", &RunConfig::format, "dense or sparse");
    b.option("--responses", &RunConfig::responses, "response file (id,y) for sparse input");
}

void selection_options(Binder& b) {
    b.option("--bootstrap", &RunConfig::bootstrap, "bootstrap replicates");
    b.option("--max-k", &RunConfig::max_k, "largest candidate dimension (0 = D - 1)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Functional sufficient dimension reduction by distance covariance"};
    app.require_subcommand(1);

    struct Sub {
        CLI::App* app;
        std::unique_ptr<RunConfig> flags;
        std::unique_ptr<Binder> binder;
        std::string config_path;
        int (*run)(const RunConfig&, std::ostream&, std::ostream&);
    };
    std::vector<std::unique_ptr<Sub>> subs;
    auto add = [&](const char* name, const char* help, auto run) {
        auto s = std::make_unique<Sub>();
        s->app = app.add_subcommand(name, help);
        s->flags = std::make_unique<RunConfig>();
        s->binder = std::make_unique<Binder>(s->app, s->flags.get());
        s->app->add_option("--config", s->config_path, "JSON config file; flags override it");
        s->run = run;
        common_options(*s->binder);
        subs.push_back(std::move(s));
        return subs.back().get();
    };

    auto* sim = add("simulate", "Monte Carlo study of a benchmark model", fsdr::cmd_simulate);
    sim->binder->option("--model", &RunConfig::model, "benchmark model 1..5");
    sim->binder->option("--n", &RunConfig::n, "sample size");
    sim->binder->option("--design", &RunConfig::design, "dense or sparse");
    sim->binder->option("--replicates", &RunConfig::replicates, "Monte Carlo replicates");
    sim->binder->flag("--runtime-column", &RunConfig::runtime_column, "add per-replicate runtimes to the CSV");
    smoothing_options(*sim->binder);

    auto* fit = add("fit", "estimate the reduction directions", fsdr::cmd_fit);
    input_options(*fit->binder);
    fit->binder->k_option();
    selection_options(*fit->binder);
    fit->binder->optional("--k-nn", &RunConfig::k_nn, "neighbours used by predict");
    smoothing_options(*fit->binder);

    auto* sel = add("select-dim", "bootstrap choice of the structural dimension", fsdr::cmd_select_dim);
    input_options(*sel->binder);
    selection_options(*sel->binder);
    smoothing_options(*sel->binder);

    auto* pred = add("predict", "predict responses for new curves", fsdr::cmd_predict);
    pred->binder->option("--model", &RunConfig::model_file, "model file written by fit");
    pred->binder->option("--test", &RunConfig::test, "test data file");
    pred->binder->option("--test-responses", &RunConfig::test_responses, "response file for sparse test data");
    pred->binder->option("--format", &RunConfig::format, "dense or sparse");
    pred->binder->optional("--k-nn", &RunConfig::k_nn, "neighbours in projection space");

    auto* tec = add("tecator", "train/test analysis of the Tecator spectra", fsdr::cmd_tecator);
    tec->binder->option("--input", &RunConfig::input, "Tecator table");
    tec->binder->option("--train-size", &RunConfig::train_size, "records used for training");
    tec->binder->k_option();
    selection_options(*tec->binder);
    tec->binder->optional("--k-nn", &RunConfig::k_nn, "neighbours in projection space");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? fsdr::exit_ok : fsdr::exit_usage;
    }

    for (const auto& s : subs) {
        if (!s->app->parsed()) continue;
        try {
            RunConfig cfg = s->config_path.empty() ? RunConfig{} : load_config_file(s->config_path);
            s->binder->apply(cfg);
            return s->run(cfg, std::cout, std::cerr);
        } catch (const fsdr::Error& e) {
            std::cerr << "error: " << e.what() << '\n';
            return fsdr::exit_code_for(e);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return fsdr::exit_numeric;
        }
    }
    return fsdr::exit_usage;
}
