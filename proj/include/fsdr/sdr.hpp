#pragma once

// Dimension reduction by maximizing sample distance covariance over FPC
// score coefficients: whitening, the sequential single-index search,
// assembly of direction functions and bootstrap choice of the structural
// dimension.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/dcov.hpp"
#include "fsdr/error.hpp"
#include "fsdr/fpca.hpp"
#include "fsdr/funcbase.hpp"
#include "fsdr/nelder_mead.hpp"
#include "fsdr/parallel.hpp"
#include "fsdr/random.hpp"

namespace fsdr {

struct SolverConfig {
    int restarts = 10;  ///< M
    NelderMeadOptions nelder_mead{};
    unsigned threads = 1;  ///< workers for restarts
    double eigen_floor = 1e-10;  ///< relative floor on score-covariance eigenvalues
    double constraint_tol = 1e-6;
};

struct WhitenedScores {
    Eigen::MatrixXd theta_centered;  ///< n x D
    Eigen::MatrixXd whitener;        ///< Sigma^{-1/2}
    Eigen::MatrixXd dewhitener;      ///< Sigma^{1/2}
    Eigen::MatrixXd score_cov;       ///< Sigma = (1/n) sum (theta_i - mean)(theta_i - mean)^T

    Eigen::Index n() const { return theta_centered.rows(); }
    Eigen::Index dim() const { return theta_centered.cols(); }
    Eigen::MatrixXd white() const { return theta_centered * whitener; }
};

/// Symmetric inverse square root of the score covariance.
inline WhitenedScores whiten(const Eigen::MatrixXd& theta, double eigen_floor = 1e-10) {
    if (theta.rows() < 2) throw PreconditionError("whiten: need at least two score rows");
    if (theta.cols() < 1) throw PreconditionError("whiten: scores have no columns");
    WhitenedScores w;
    const Eigen::RowVectorXd mean = theta.colwise().mean();
    w.theta_centered = theta.rowwise() - mean;
    w.score_cov = (w.theta_centered.transpose() * w.theta_centered) / static_cast<double>(theta.rows());
    w.score_cov = 0.5 * (w.score_cov + w.score_cov.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w.score_cov);
    if (es.info() != Eigen::Success) throw NumericError("whiten: eigen solver failed");
    const Eigen::VectorXd& ev = es.eigenvalues();
    const double lmax = ev.maxCoeff();
    if (!(lmax > 0.0) || ev.minCoeff() <= eigen_floor * lmax)
        throw NumericError(fmt::format(
            "whiten: score covariance is rank deficient (eigenvalues {:.3g} .. {:.3g}); reduce the truncation D",
            ev.minCoeff(), lmax));
    const Eigen::MatrixXd& v = es.eigenvectors();
    w.whitener = v * ev.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    w.dewhitener = v * ev.cwiseSqrt().asDiagonal() * v.transpose();
    return w;
}

inline WhitenedScores whiten(const ScoreMatrix& scores, double eigen_floor = 1e-10) {
    return whiten(scores.scores, eigen_floor);
}

/// D x (D-k) matrix whose columns complete the orthonormal columns of `fixed`
/// to an orthonormal basis of R^D.
inline Eigen::MatrixXd complete_orthobasis(const Eigen::MatrixXd& fixed, Eigen::Index dim, double tol = 1e-8) {
    if (fixed.cols() > 0 && fixed.rows() != dim)
        throw PreconditionError("complete_orthobasis: fixed vectors have the wrong length");
    const Eigen::Index k = fixed.cols();
    if (k > dim) throw PreconditionError("complete_orthobasis: more fixed vectors than dimensions");
    if (k == 0) return Eigen::MatrixXd::Identity(dim, dim);
    const Eigen::MatrixXd gram = fixed.transpose() * fixed;
    if ((gram - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff() > tol)
        throw PreconditionError("complete_orthobasis: fixed vectors are not orthonormal");
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(fixed);
    const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::MatrixXd gamma = q.rightCols(dim - k);
    // One projection pass removes rounding leakage onto the fixed span.
    gamma -= fixed * (fixed.transpose() * gamma);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr2(gamma);
    Eigen::MatrixXd g2 = qr2.householderQ() * Eigen::MatrixXd::Identity(dim, dim - k);
    const Eigen::MatrixXd r = qr2.matrixQR().topRows(dim - k).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < dim - k; ++j)
        if (r(j, j) < 0) g2.col(j) = -g2.col(j);
    return g2;
}

struct SingleIndexResult {
    Eigen::VectorXd direction;   ///< unit vector in whitened coordinates
    double value = 0.0;          ///< V_n^2 of (fixed, direction) against Y
    std::vector<double> initial_values;  ///< objective at each restart's starting point
    std::vector<double> final_values;
};

/// Maximizes V_n^2 of the joint projection (fixed, u) over unit u orthogonal
/// to the fixed directions. Nelder-Mead runs in a tangent chart of the sphere
/// around each random start; the best restart wins (lowest index on ties).
inline SingleIndexResult solve_single_index(const Eigen::MatrixXd& white, const DcovObjective& base_objective,
                                            const Eigen::MatrixXd& fixed, std::uint64_t seed,
                                            const SolverConfig& cfg = {}) {
    const Eigen::Index dim = white.cols();
    const Eigen::Index search_dim = dim - fixed.cols();
    if (search_dim < 1) throw NumericError("solve_single_index: search space exhausted (no directions left)");
    if (white.rows() != base_objective.n()) throw PreconditionError("solve_single_index: response length mismatch");
    if (cfg.restarts < 1) throw PreconditionError("solve_single_index: need at least one restart");

    const Eigen::MatrixXd gamma = complete_orthobasis(fixed, dim);
    DcovObjective objective = base_objective;
    objective.set_fixed(fixed.cols() > 0 ? Eigen::MatrixXd(white * fixed) : Eigen::MatrixXd());
    const Eigen::MatrixXd reduced = white * gamma;  // n x search_dim

    SingleIndexResult out;
    if (search_dim == 1) {
        Eigen::VectorXd u = gamma.col(0);
        sign_normalize(u);
        out.value = objective.with_extra(white * u);
        out.direction = std::move(u);
        out.initial_values.assign(1, out.value);
        out.final_values.assign(1, out.value);
        return out;
    }

    const auto m = static_cast<std::size_t>(cfg.restarts);
    std::vector<Eigen::VectorXd> best_a(m);
    out.initial_values.resize(m);
    out.final_values.resize(m);
    parallel_for(m, cfg.threads, [&](std::size_t r) {
        Rng rng = make_rng(seed, {static_cast<std::uint64_t>(r)});
        const Eigen::VectorXd start = random_unit_vector(search_dim, rng);
        const Eigen::MatrixXd tangent = complete_orthobasis(start, search_dim);
        auto chart = [&](const Eigen::VectorXd& w) -> Eigen::VectorXd {
            Eigen::VectorXd a = start + tangent * w;
            return a / a.norm();
        };
        auto neg = [&](const Eigen::VectorXd& w) { return -objective.with_extra(reduced * chart(w)); };
        out.initial_values[r] = objective.with_extra(reduced * start);
        const auto res = nelder_mead(neg, Eigen::VectorXd::Zero(search_dim - 1), cfg.nelder_mead);
        best_a[r] = chart(res.x);
        out.final_values[r] = -res.value;
    });

    std::size_t best = 0;
    for (std::size_t r = 1; r < m; ++r)
        if (out.final_values[r] > out.final_values[best]) best = r;
    Eigen::VectorXd u = gamma * best_a[best];
    u /= u.norm();
    sign_normalize(u);
    out.direction = std::move(u);
    out.value = out.final_values[best];
    return out;
}

/// D x K coefficient matrix B (columns are intermediate directions in the
/// original score coordinates) with the stagewise objective values.
struct CoefficientMatrix {
    Eigen::MatrixXd coefficients;      ///< B, satisfies B^T Sigma B = I
    Eigen::MatrixXd white_directions;  ///< orthonormal u_1..u_K in whitened coordinates
    Eigen::VectorXd objective_values;  ///< V_n^2 after each stage
    Eigen::Index k() const { return coefficients.cols(); }
};

inline CoefficientMatrix fit_coefficients(const WhitenedScores& ws, const Eigen::VectorXd& y, int k,
                                          std::uint64_t seed, const SolverConfig& cfg = {}) {
    const Eigen::Index dim = ws.dim();
    if (k < 1 || k > dim)
        throw PreconditionError(fmt::format("sequential fit: need 1 <= K <= D, got K = {} with D = {}", k, dim));
    if (y.size() != ws.n()) throw DataError("sequential fit: response length does not match scores");
    const Eigen::MatrixXd white = ws.white();
    const DcovObjective objective(y);

    CoefficientMatrix out;
    out.white_directions.resize(dim, k);
    out.objective_values.resize(k);
    for (int stage = 0; stage < k; ++stage) {
        const Eigen::MatrixXd fixed = out.white_directions.leftCols(stage);
        const auto res = solve_single_index(white, objective, fixed,
                                            derive_seed(seed, {static_cast<std::uint64_t>(stage)}), cfg);
        out.white_directions.col(stage) = res.direction;
        out.objective_values[stage] = res.value;
    }
    out.coefficients = ws.whitener * out.white_directions;
    const Eigen::MatrixXd check = out.coefficients.transpose() * ws.score_cov * out.coefficients;
    const double dev = (check - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
    if (dev > cfg.constraint_tol)
        throw NumericError(fmt::format("sequential fit: constraint B^T Sigma B = I violated by {:.3g}", dev));
    return out;
}

inline CoefficientMatrix fit_coefficients(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y, int k,
                                          std::uint64_t seed, const SolverConfig& cfg = {}) {
    return fit_coefficients(whiten(theta, cfg.eigen_floor), y, k, seed, cfg);
}

/// Direction functions eta_k(t) = sum_j B_jk phi_j(t).
inline std::vector<Curve> assemble_directions(const Eigen::MatrixXd& coefficients, const EigenSystem& es) {
    if (coefficients.rows() != es.truncation)
        throw PreconditionError(fmt::format("assemble_directions: {} coefficient rows for D = {}", coefficients.rows(),
                                            es.truncation));
    const Eigen::MatrixXd eta = es.basis() * coefficients;
    std::vector<Curve> out;
    out.reserve(static_cast<std::size_t>(eta.cols()));
    for (Eigen::Index k = 0; k < eta.cols(); ++k) out.emplace_back(es.mean.grid, eta.col(k));
    return out;
}

struct BasisEstimate {
    CoefficientMatrix coefficients;
    std::vector<Curve> directions;
    Eigen::Index k() const { return coefficients.k(); }
};

inline BasisEstimate sequential_fit(const ScoreMatrix& scores, const EigenSystem& es, const Eigen::VectorXd& y, int k,
                                    std::uint64_t seed, const SolverConfig& cfg = {}) {
    BasisEstimate out;
    out.coefficients = fit_coefficients(scores.scores, y, k, seed, cfg);
    out.directions = assemble_directions(out.coefficients.coefficients, es);
    return out;
}

/// Hilbert-Schmidt distance between the spans of two sets of curves.
inline double subspace_distance(std::span<const Curve> a, std::span<const Curve> b) {
    if (a.empty() || b.empty()) throw PreconditionError("subspace_distance: empty basis");
    const auto qa = gram_schmidt(a);
    const auto qb = gram_schmidt(b);
    return hs_distance(projection_kernel(qa), projection_kernel(qb));
}

struct DimensionSelection {
    std::vector<int> candidate_ks;
    std::vector<double> variability;
    int chosen_k = 0;
    int replicates = 0;        ///< B
    int valid_replicates = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;
};

struct SelectionOptions {
    int replicates = 50;  ///< B
    int max_k = 0;        ///< largest candidate; 0 means D - 1
    unsigned threads = 1; ///< workers across bootstrap replicates
};

/// Bootstrap choice of the structural dimension: for each k in 1..D-1 the
/// mean HS distance between the full-data span and spans refit on resampled
/// (theta, Y); the smallest mean wins, ties to the smaller k. Because the
/// sequential fit is nested, one fit with the largest k serves every k.
inline DimensionSelection select_dimension(const Eigen::MatrixXd& theta, const Eigen::VectorXd& y,
                                           const EigenSystem& es, std::uint64_t seed, const SolverConfig& cfg = {},
                                           const SelectionOptions& opt = {}) {
    const auto dim = static_cast<int>(theta.cols());
    if (dim < 2) throw PreconditionError("select_dimension: need D >= 2");
    if (opt.replicates < 10) throw PreconditionError("select_dimension: need at least 10 bootstrap replicates");
    if (y.size() != theta.rows()) throw DataError("select_dimension: response length does not match scores");
    if (es.truncation != dim) throw PreconditionError("select_dimension: eigensystem truncation does not match scores");
    const int kmax = opt.max_k > 0 ? std::min(opt.max_k, dim - 1) : dim - 1;

    DimensionSelection sel;
    sel.replicates = opt.replicates;
    sel.seed = seed;
    for (int k = 1; k <= kmax; ++k) sel.candidate_ks.push_back(k);

    SolverConfig inner = cfg;
    inner.threads = 1;
    const auto full = fit_coefficients(theta, y, kmax, derive_seed(seed, {0}), inner);
    const auto full_dirs = assemble_directions(full.coefficients, es);

    const auto b_count = static_cast<std::size_t>(opt.replicates);
    std::vector<std::vector<double>> dist(b_count);
    std::vector<std::string> skipped(b_count);
    const Eigen::Index n = theta.rows();
    parallel_for(b_count, opt.threads, [&](std::size_t b) {
        Rng rng = make_rng(seed, {1, static_cast<std::uint64_t>(b)});
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        Eigen::MatrixXd tb(n, theta.cols());
        Eigen::VectorXd yb(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::Index src = pick(rng);
            tb.row(i) = theta.row(src);
            yb[i] = y[src];
        }
        if (yb.maxCoeff() == yb.minCoeff()) {
            skipped[b] = fmt::format("bootstrap replicate {} skipped: constant response", b);
            return;
        }
        try {
            const auto fit = fit_coefficients(tb, yb, kmax, derive_seed(seed, {2, static_cast<std::uint64_t>(b)}), inner);
            const auto dirs = assemble_directions(fit.coefficients, es);
            std::vector<double> d(static_cast<std::size_t>(kmax));
            for (int k = 1; k <= kmax; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                d[ku - 1] = subspace_distance(std::span(full_dirs).first(ku), std::span(dirs).first(ku));
            }
            dist[b] = std::move(d);
        } catch (const Error& e) {
            skipped[b] = fmt::format("bootstrap replicate {} skipped: {}", b, e.what());
        }
    });

    sel.variability.assign(static_cast<std::size_t>(kmax), 0.0);
    for (std::size_t b = 0; b < b_count; ++b) {
        if (!skipped[b].empty()) {
            sel.warnings.push_back(skipped[b]);
            continue;
        }
        ++sel.valid_replicates;
        for (std::size_t k = 0; k < dist[b].size(); ++k) sel.variability[k] += dist[b][k];
    }
    if (2 * sel.valid_replicates < opt.replicates)
        throw NumericError(fmt::format("select_dimension: only {} of {} bootstrap replicates were usable",
                                       sel.valid_replicates, opt.replicates));
    for (auto& v : sel.variability) v /= static_cast<double>(sel.valid_replicates);
    std::size_t best = 0;
    for (std::size_t k = 1; k < sel.variability.size(); ++k)
        if (sel.variability[k] < sel.variability[best]) best = k;
    sel.chosen_k = static_cast<int>(best) + 1;
    return sel;
}

}  // namespace fsdr
