#pragma once

// Simulation designs: Brownian predictors, the five benchmark link models,
// sparse designs, the subspace estimation error and a Monte Carlo runner.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"
#include "fsdr/fpca.hpp"
#include "fsdr/funcbase.hpp"
#include "fsdr/parallel.hpp"
#include "fsdr/pipeline.hpp"
#include "fsdr/random.hpp"
#include "fsdr/sdr.hpp"
#include "fsdr/sparse.hpp"

namespace fsdr {

struct ModelSpec {
    int model_id = 1;
    std::vector<Curve> true_directions;
    double noise_sd = 0.1;
    int true_k = 1;
};

inline ModelSpec make_model(int model_id, const GridPtr& grid, double noise_sd = 0.1) {
    using std::numbers::pi;
    auto curve = [&](auto f) { return Curve::from_function(grid, f); };
    const auto sin3 = [](double t) { return std::sin(3.0 * pi * t / 2.0); };
    const auto sin5 = [](double t) { return std::sin(5.0 * pi * t / 2.0); };
    ModelSpec m;
    m.model_id = model_id;
    m.noise_sd = noise_sd;
    switch (model_id) {
        case 1:
            m.true_directions = {curve(sin3)};
            break;
        case 2:
        case 4:
            m.true_directions = {curve(sin3), curve(sin5)};
            break;
        case 3:
            m.true_directions = {curve([](double t) { return std::pow(2.0 * t - 1.0, 3) + 1.0; }),
                                 curve([](double t) { return std::cos((2.0 * t - 1.0) * pi) + 1.0; })};
            break;
        case 5:
            m.true_directions = {curve([](double t) { return std::pow(2.0 * t - 1.0, 2) - 1.0; }), curve(sin5)};
            break;
        default:
            throw ConfigError(fmt::format("unknown model {} (expected 1..5)", model_id));
    }
    m.true_k = static_cast<int>(m.true_directions.size());
    return m;
}

/// Link of each model given the indices u = <eta1, X>, v = <eta2, X> and noise e.
inline double model_response(int model_id, double u, double v, double e) {
    switch (model_id) {
        case 1: return std::exp(u) + e;
        case 2:
        case 3: return std::exp(u) + std::exp(std::abs(v)) + e;
        case 4: return 5.0 * u + 15.0 * v * v * e;
        case 5: return 50.0 * u * v * v + e;
        default: throw ConfigError(fmt::format("unknown model {}", model_id));
    }
}

/// Standard Brownian paths on the grid: X(t_1) = 0 and independent Gaussian
/// increments with variance equal to the grid spacing.
inline DenseFunctionalSample gen_brownian(Eigen::Index n, const GridPtr& grid, std::uint64_t seed) {
    if (grid->front() != 0.0) throw PreconditionError("gen_brownian: grid must start at 0");
    const auto p = static_cast<Eigen::Index>(grid->size());
    Rng rng = make_rng(seed, {0xb0});
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseFunctionalSample s{grid, Eigen::MatrixXd::Zero(n, p), {}};
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 1; j < p; ++j) {
            const double dt = (*grid)[static_cast<std::size_t>(j)] - (*grid)[static_cast<std::size_t>(j - 1)];
            s.curves(i, j) = s.curves(i, j - 1) + std::sqrt(dt) * normal(rng);
        }
    return s;
}

/// Responses for given curves; indices are quadrature inner products with the
/// exact (unnormalized) direction functions.
inline Eigen::VectorXd model_responses(const ModelSpec& spec, const DenseFunctionalSample& x, std::uint64_t seed) {
    Rng rng = make_rng(seed, {0xe5});
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd& w = x.grid->weights();
    const Eigen::VectorXd u = x.curves * w.cwiseProduct(spec.true_directions[0].values);
    const Eigen::VectorXd v = spec.true_k > 1 ? Eigen::VectorXd(x.curves * w.cwiseProduct(spec.true_directions[1].values))
                                              : Eigen::VectorXd::Zero(x.n());
    Eigen::VectorXd y(x.n());
    for (Eigen::Index i = 0; i < x.n(); ++i) y[i] = model_response(spec.model_id, u[i], v[i], spec.noise_sd * normal(rng));
    return y;
}

inline DenseFunctionalSample gen_model(const ModelSpec& spec, Eigen::Index n, const GridPtr& grid, std::uint64_t seed) {
    DenseFunctionalSample s = gen_brownian(n, grid, derive_seed(seed, {1}));
    s.responses = model_responses(spec, s, derive_seed(seed, {2}));
    return s;
}

struct SparseDesign {
    int min_obs = 10;
    int max_obs = 20;
    double noise_sd = 0.1;
};

/// Per subject: N_i uniform on {min..max}, times drawn without replacement
/// from the grid, measurements = curve value + N(0, noise_sd^2).
inline SparseFunctionalSample sparsify(const DenseFunctionalSample& sample, std::uint64_t seed,
                                       const SparseDesign& design = {}) {
    const auto p = static_cast<int>(sample.grid->size());
    if (design.min_obs < 1 || design.max_obs < design.min_obs || design.max_obs > p)
        throw PreconditionError("sparsify: invalid observation count range");
    Rng rng = make_rng(seed, {0x5a});
    std::uniform_int_distribution<int> count(design.min_obs, design.max_obs);
    std::normal_distribution<double> normal(0.0, 1.0);
    SparseFunctionalSample out;
    out.responses = sample.responses;
    std::vector<int> idx(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
        const int m = count(rng);
        std::iota(idx.begin(), idx.end(), 0);
        for (int k = 0; k < m; ++k) {
            std::uniform_int_distribution<int> pick(k, p - 1);
            std::swap(idx[static_cast<std::size_t>(k)], idx[static_cast<std::size_t>(pick(rng))]);
        }
        std::vector<int> chosen(idx.begin(), idx.begin() + m);
        std::sort(chosen.begin(), chosen.end());
        SubjectObservations obs{Eigen::VectorXd(m), Eigen::VectorXd(m)};
        for (int k = 0; k < m; ++k) {
            const int g = chosen[static_cast<std::size_t>(k)];
            obs.times[k] = (*sample.grid)[static_cast<std::size_t>(g)];
            obs.values[k] = sample.curves(i, g) + design.noise_sd * normal(rng);
        }
        out.subjects.push_back(std::move(obs));
    }
    return out;
}

/// ||P_hat - P||_H between projections onto the orthonormalized estimated
/// and true spans.
inline double estimation_error(std::span<const Curve> estimated, const ModelSpec& spec) {
    return subspace_distance(estimated, spec.true_directions);
}

inline double estimation_error(const BasisEstimate& estimate, const ModelSpec& spec) {
    return estimation_error(estimate.directions, spec);
}

enum class Design { dense, sparse };

inline const char* to_string(Design d) { return d == Design::dense ? "dense" : "sparse"; }

inline Design parse_design(const std::string& s) {
    if (s == "dense") return Design::dense;
    if (s == "sparse") return Design::sparse;
    throw ConfigError(fmt::format("unknown design '{}' (expected dense or sparse)", s));
}

struct MonteCarloConfig {
    int model_id = 1;
    Eigen::Index n = 100;
    Design design = Design::dense;
    int replicates = 100;
    std::uint64_t seed = 1;
    std::size_t grid_points = 100;
    ComponentOptions components{};
    SolverConfig solver{};
    unsigned threads = 1;  ///< workers across replicates
};

struct ReplicateResult {
    int replicate = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    double error = 0.0;
    int truncation = 0;
    std::string message;
    double runtime_ms = 0.0;
};

struct MonteCarloReport {
    MonteCarloConfig config;
    std::vector<ReplicateResult> rows;
    int failures = 0;
    double mean = 0.0;
    double sd = 0.0;  ///< sample standard deviation of per-replicate errors
    double se = 0.0;  ///< sd / sqrt(valid replicates)
    bool invalid = false;

    int valid() const { return static_cast<int>(rows.size()) - failures; }
};

/// Mean, sd and se recomputed from the stored per-replicate rows.
inline void summarize(MonteCarloReport& r) {
    std::vector<double> e;
    r.failures = 0;
    for (const auto& row : r.rows) {
        if (row.ok) e.push_back(row.error);
        else ++r.failures;
    }
    r.mean = r.sd = r.se = 0.0;
    if (!e.empty()) {
        r.mean = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
        if (e.size() > 1) {
            double ss = 0.0;
            for (double x : e) ss += (x - r.mean) * (x - r.mean);
            r.sd = std::sqrt(ss / static_cast<double>(e.size() - 1));
        }
        r.se = r.sd / std::sqrt(static_cast<double>(e.size()));
    }
    r.invalid = e.empty() || 10 * r.failures > static_cast<int>(r.rows.size());
}

/// One replicate: generate, optionally sparsify, fit with the true K, score.
inline ReplicateResult run_replicate(const MonteCarloConfig& cfg, const ModelSpec& spec, const GridPtr& grid, int r) {
    ReplicateResult row;
    row.replicate = r;
    row.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(r)});
    const auto start = std::chrono::steady_clock::now();
    try {
        const auto data = gen_model(spec, cfg.n, grid, derive_seed(row.seed, {0}));
        SolverConfig solver = cfg.solver;
        solver.threads = 1;
        FitResult fit;
        if (cfg.design == Design::dense) {
            fit = fit_dense(data, spec.true_k, derive_seed(row.seed, {1}), cfg.components, solver);
        } else {
            const auto sparse = sparsify(data, derive_seed(row.seed, {2}));
            fit = fit_sparse(sparse, grid, spec.true_k, derive_seed(row.seed, {1}), cfg.components, solver);
        }
        row.error = estimation_error(fit.basis, spec);
        row.truncation = fit.components.eigensystem.truncation;
        row.ok = true;
    } catch (const Error& e) {
        row.ok = false;
        row.message = e.what();
    }
    row.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

inline MonteCarloReport run_monte_carlo(const MonteCarloConfig& cfg) {
    if (cfg.replicates < 1) throw ConfigError("run_monte_carlo: need at least one replicate");
    if (cfg.n < 2) throw ConfigError("run_monte_carlo: need n >= 2");
    const GridPtr grid = Grid::uniform(cfg.grid_points);
    const ModelSpec spec = make_model(cfg.model_id, grid);
    MonteCarloReport report;
    report.config = cfg;
    report.rows.resize(static_cast<std::size_t>(cfg.replicates));
    parallel_for(report.rows.size(), cfg.threads, [&](std::size_t r) {
        report.rows[r] = run_replicate(cfg, spec, grid, static_cast<int>(r));
    });
    summarize(report);
    return report;
}

}  // namespace fsdr
