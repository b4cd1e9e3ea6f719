#pragma once

// End-to-end estimation: components and scores from dense or sparse data,
// then the sequential distance-covariance fit.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fsdr/fpca.hpp"
#include "fsdr/sdr.hpp"
#include "fsdr/sparse.hpp"

namespace fsdr {

struct ComponentOptions {
    double fve = 0.99;
    std::optional<Bandwidths> bandwidths;  ///< sparse only; rule of thumb when unset
    bool cv_bandwidths = false;            ///< sparse only; 5-fold subject CV
    std::uint64_t seed = 0;                ///< used by bandwidth CV folds
    int max_components = 0;                ///< upper bound on D; 0 leaves the FVE rule alone
};

inline void cap_truncation(EigenSystem& es, int max_components) {
    if (max_components > 0) es.truncation = std::min(es.truncation, max_components);
}

/// Components and scores shared by fitting and dimension selection.
struct Components {
    EigenSystem eigensystem;
    ScoreMatrix scores;
    NoiseModel noise;        ///< sparse only
    Bandwidths bandwidths;   ///< sparse only
    std::vector<std::string> warnings;
};

inline Components dense_components(const DenseFunctionalSample& sample, const ComponentOptions& opt = {}) {
    sample.validate(2);
    Components c;
    c.eigensystem = fpca(sample, opt.fve);
    cap_truncation(c.eigensystem, opt.max_components);
    c.scores = exact_scores(sample, c.eigensystem);
    return c;
}

inline Components sparse_components(const SparseFunctionalSample& sample, const GridPtr& grid,
                                    const ComponentOptions& opt = {}) {
    sample.validate();
    Components c;
    c.bandwidths = opt.bandwidths.value_or(default_bandwidths(sample, grid->length()));
    if (opt.cv_bandwidths) {
        const auto base = c.bandwidths;
        const std::vector<double> scales{0.5, 0.75, 1.0, 1.25, 1.5};
        std::vector<double> hm, hs;
        for (double s : scales) {
            hm.push_back(std::min(base.h_mu * s, 0.99 * grid->length()));
            hs.push_back(std::min(base.h_sigma * s, 0.99 * grid->length()));
        }
        c.bandwidths.h_mu = cv_mean_bandwidth(sample, hm, opt.seed).chosen;
        const Curve mean0 = smooth_mean(sample, grid, c.bandwidths.h_mu);
        c.bandwidths.h_sigma = cv_covariance_bandwidth(sample, mean0, hs, opt.seed).chosen;
    }
    const Curve mean = smooth_mean(sample, grid, c.bandwidths.h_mu);
    const Kernel2D cov = smooth_covariance(sample, mean, grid, c.bandwidths.h_sigma);
    c.eigensystem = eigen_decompose(cov, opt.fve, &mean);
    cap_truncation(c.eigensystem, opt.max_components);
    c.noise = estimate_noise_variance(sample, mean, cov, grid, c.bandwidths.h_mu);
    c.scores = pace_scores(sample, c.eigensystem, c.noise, &c.warnings);
    return c;
}

struct FitResult {
    Components components;
    BasisEstimate basis;
};

inline FitResult fit_dense(const DenseFunctionalSample& sample, int k, std::uint64_t seed,
                           const ComponentOptions& copt = {}, const SolverConfig& solver = {}) {
    if (!sample.has_responses()) throw DataError("fit: sample has no responses");
    FitResult r;
    r.components = dense_components(sample, copt);
    r.basis = sequential_fit(r.components.scores, r.components.eigensystem, sample.responses, k, seed, solver);
    return r;
}

inline FitResult fit_sparse(const SparseFunctionalSample& sample, const GridPtr& grid, int k, std::uint64_t seed,
                            const ComponentOptions& copt = {}, const SolverConfig& solver = {}) {
    if (!sample.has_responses()) throw DataError("fit: sample has no responses");
    FitResult r;
    r.components = sparse_components(sample, grid, copt);
    r.basis = sequential_fit(r.components.scores, r.components.eigensystem, sample.responses, k, seed, solver);
    return r;
}

}  // namespace fsdr
