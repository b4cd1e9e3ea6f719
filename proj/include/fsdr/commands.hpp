#pragma once

// Subcommand bodies behind the fsdr executable. Each takes a validated
// RunConfig, writes its files and returns a process exit code.

#include <fstream>
#include <iostream>
#include <string>
#include <variant>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "fsdr/artifact.hpp"
#include "fsdr/config.hpp"
#include "fsdr/error.hpp"
#include "fsdr/io.hpp"
#include "fsdr/pipeline.hpp"
#include "fsdr/predict.hpp"
#include "fsdr/sdr.hpp"
#include "fsdr/simlab.hpp"

namespace fsdr {

enum ExitCode : int { exit_ok = 0, exit_usage = 1, exit_data = 2, exit_numeric = 3, exit_invalid_run = 4 };

inline int exit_code_for(const Error& e) {
    switch (e.kind()) {
        case ErrorKind::usage: return exit_usage;
        case ErrorKind::data: return exit_data;
        case ErrorKind::numeric: return exit_numeric;
    }
    return exit_numeric;
}

/// Writes `text` to `path`, or to `fallback` when the path is empty.
inline void emit(const std::string& path, const std::string& text, std::ostream& fallback) {
    if (path.empty()) {
        fallback << text;
        return;
    }
    auto out = detail::open_output(path);
    out << text;
}

inline int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    cfg.validate("simulate");
    const auto report = run_monte_carlo(cfg.monte_carlo_config());
    std::ostringstream csv;
    write_monte_carlo_csv(csv, report, cfg.runtime_column);
    auto summary = monte_carlo_summary(report);
    if (cfg.output.empty()) {
        out << csv.str();
    } else {
        emit(cfg.output + ".csv", csv.str(), out);
        emit(cfg.output + ".json", summary.dump(2) + "\n", out);
    }
    fmt::print(log, "model {} n={} {}: mean {:.4f} sd {:.4f} over {} valid replicates ({} failed)\n", cfg.model, cfg.n,
               cfg.design, report.mean, report.sd, report.valid(), report.failures);
    if (report.invalid) {
        fmt::print(log, "run invalid: more than 10% of replicates failed\n");
        return exit_invalid_run;
    }
    return exit_ok;
}

using AnySample = std::variant<DenseFunctionalSample, SparseFunctionalSample>;

/// Training data named by the config. Sparse data is smoothed on a uniform
/// grid of `grid_points` points.
inline AnySample load_training(const RunConfig& cfg) {
    if (cfg.format == "sparse") return read_sparse_files(cfg.input, cfg.responses).sample;
    auto s = read_dense_csv(cfg.input);
    if (!s.has_responses()) throw DataError(fmt::format("{}: training data needs a response column", cfg.input));
    return s;
}

inline Components components_for(const AnySample& data, const RunConfig& cfg) {
    const auto copt = cfg.component_options();
    if (const auto* d = std::get_if<DenseFunctionalSample>(&data)) return dense_components(*d, copt);
    return sparse_components(std::get<SparseFunctionalSample>(data), Grid::uniform(static_cast<std::size_t>(cfg.grid_points)),
                             copt);
}

inline const Eigen::VectorXd& responses_of(const AnySample& data) {
    return std::visit([](const auto& s) -> const Eigen::VectorXd& { return s.responses; }, data);
}

inline SelectionOptions selection_options(const RunConfig& cfg) {
    SelectionOptions o;
    o.replicates = cfg.bootstrap;
    o.max_k = cfg.max_k;
    o.threads = cfg.worker_count();
    return o;
}

inline Json selection_json(const DimensionSelection& sel, int truncation) {
    Json j;
    j["truncation"] = truncation;
    j["candidate_ks"] = sel.candidate_ks;
    j["variability"] = sel.variability;
    j["chosen_k"] = sel.chosen_k;
    j["bootstrap"] = sel.replicates;
    j["valid_replicates"] = sel.valid_replicates;
    j["seed"] = sel.seed;
    j["warnings"] = sel.warnings;
    return j;
}

/// Fixed K, or the bootstrap choice when k is auto. The selection report is
/// returned through `selection` when one was run.
inline BasisEstimate fit_basis(const Components& c, const Eigen::VectorXd& y, const RunConfig& cfg, int default_k,
                               Json* selection) {
    int k = cfg.k.value_or(default_k);
    const auto solver = cfg.solver_config();
    if (k == 0) {
        const auto sel = select_dimension(c.scores.scores, y, c.eigensystem, derive_seed(cfg.seed, {0x5e1}), solver,
                                          selection_options(cfg));
        k = sel.chosen_k;
        if (selection) *selection = selection_json(sel, c.eigensystem.truncation);
    }
    return sequential_fit(c.scores, c.eigensystem, y, k, cfg.seed, solver);
}

inline ModelArtifact build_artifact(const Components& c, const BasisEstimate& basis, const Eigen::VectorXd& y,
                                    const RunConfig& cfg) {
    FitResult fit{c, basis};
    ModelArtifact a;
    a.model = make_prediction_model(fit, y, 1);
    a.model.k_nn = cfg.k_nn.value_or(std::min<int>(5, static_cast<int>(y.size())));
    a.model.validate();
    a.seed = cfg.seed;
    a.config = to_json(cfg);
    a.config.erase("threads");
    a.warnings = c.warnings;
    return a;
}

inline int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    cfg.validate("fit");
    const auto data = load_training(cfg);
    const auto& y = responses_of(data);
    const auto comps = components_for(data, cfg);
    Json selection;
    const auto basis = fit_basis(comps, y, cfg, 1, &selection);
    auto artifact = build_artifact(comps, basis, y, cfg);
    const std::string text = to_json(artifact).dump(1) + "\n";
    emit(cfg.output, text, out);
    fmt::print(log, "fit: n={} D={} K={} source={} objective {:.6g}\n", y.size(), comps.eigensystem.truncation,
               basis.k(), to_string(comps.scores.source),
               basis.coefficients.objective_values[basis.k() - 1]);
    for (const auto& w : comps.warnings) fmt::print(log, "warning: {}\n", w);
    return exit_ok;
}

inline int cmd_select_dim(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    cfg.validate("select-dim");
    const auto data = load_training(cfg);
    const auto& y = responses_of(data);
    const auto comps = components_for(data, cfg);
    const auto sel = select_dimension(comps.scores.scores, y, comps.eigensystem, cfg.seed, cfg.solver_config(),
                                      selection_options(cfg));
    emit(cfg.output, selection_json(sel, comps.eigensystem.truncation).dump(2) + "\n", out);
    fmt::print(log, "select-dim: D={} chosen k={} ({} of {} bootstrap replicates usable)\n", comps.eigensystem.truncation,
               sel.chosen_k, sel.valid_replicates, sel.replicates);
    for (const auto& w : sel.warnings) fmt::print(log, "warning: {}\n", w);
    return exit_ok;
}

inline std::string predictions_csv(const Eigen::VectorXd& pred, const Eigen::VectorXd& observed) {
    std::ostringstream s;
    s << (observed.size() ? "row,prediction,response\n" : "row,prediction\n");
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
        s << i << ',' << format_double(pred[i]);
        if (observed.size()) s << ',' << format_double(observed[i]);
        s << '\n';
    }
    return s.str();
}

inline int cmd_predict(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    cfg.validate("predict");
    auto artifact = load_artifact(cfg.model_file);
    if (cfg.k_nn) artifact.model.k_nn = *cfg.k_nn;
    Eigen::VectorXd pred, observed;
    std::vector<std::string> warnings;
    if (cfg.format == "sparse") {
        auto rec = read_sparse_files(cfg.test, cfg.test_responses);
        pred = predict(artifact.model, rec.sample);
        observed = rec.sample.responses;
    } else {
        const auto test = read_dense_csv(cfg.test);
        pred = predict(artifact.model, test);
        observed = test.responses;
    }
    emit(cfg.output, predictions_csv(pred, observed), out);
    if (observed.size()) fmt::print(log, "rmse {}\n", format_double(rmse(pred, observed)));
    return exit_ok;
}

/// Train on the first `train_size` records, test on the rest.
struct TecatorResult {
    int truncation = 0;
    int k = 0;
    double rmse = 0.0;
    Json selection;
    Eigen::VectorXd predictions;
    Eigen::VectorXd observed;
};

inline TecatorResult run_tecator(const DenseFunctionalSample& all, const RunConfig& cfg) {
    if (all.n() <= cfg.train_size)
        throw DataError(fmt::format("tecator: {} records leave no test set after {} training records", all.n(), cfg.train_size));
    const auto train = all.subset(0, cfg.train_size);
    const auto test = all.subset(cfg.train_size, all.n() - cfg.train_size);
    const auto comps = dense_components(train, cfg.component_options());
    TecatorResult r;
    const auto basis = fit_basis(comps, train.responses, cfg, 0, &r.selection);
    const auto artifact = build_artifact(comps, basis, train.responses, cfg);
    r.truncation = comps.eigensystem.truncation;
    r.k = static_cast<int>(basis.k());
    r.predictions = predict(artifact.model, test);
    r.observed = test.responses;
    r.rmse = rmse(r.predictions, r.observed);
    return r;
}

inline int cmd_tecator(const RunConfig& cfg, std::ostream& out, std::ostream& log) {
    cfg.validate("tecator");
    const auto all = read_tecator(cfg.input);
    const auto r = run_tecator(all, cfg);
    Json j;
    j["records"] = all.n();
    j["train"] = cfg.train_size;
    j["test"] = all.n() - cfg.train_size;
    j["truncation"] = r.truncation;
    j["k"] = r.k;
    j["k_nn"] = cfg.k_nn.value_or(5);
    j["rmse"] = r.rmse;
    if (!r.selection.is_null()) j["selection"] = r.selection;
    j["predictions"] = detail::vector_json(r.predictions);
    j["observed"] = detail::vector_json(r.observed);
    emit(cfg.output, j.dump(2) + "\n", out);
    fmt::print(log, "tecator: D={} K={} test rmse {:.4f}\n", r.truncation, r.k, r.rmse);
    return exit_ok;
}

}  // namespace fsdr
