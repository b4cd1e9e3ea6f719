#pragma once

// Sparse longitudinal pipeline: pooled local linear mean and covariance
// surface smoothers, measurement-error variance and conditional-expectation
// (PACE) score prediction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"
#include "fsdr/fpca.hpp"
#include "fsdr/funcbase.hpp"
#include "fsdr/random.hpp"

namespace fsdr {

struct SubjectObservations {
    Eigen::VectorXd times;
    Eigen::VectorXd values;
    Eigen::Index size() const { return times.size(); }
};

struct SparseFunctionalSample {
    std::vector<SubjectObservations> subjects;
    Eigen::VectorXd responses;

    Eigen::Index n() const { return static_cast<Eigen::Index>(subjects.size()); }
    bool has_responses() const { return responses.size() > 0; }

    std::size_t pooled_count() const {
        std::size_t c = 0;
        for (const auto& s : subjects) c += static_cast<std::size_t>(s.size());
        return c;
    }

    void validate() const {
        if (subjects.empty()) throw DataError("sparse sample has no subjects");
        for (std::size_t i = 0; i < subjects.size(); ++i) {
            const auto& s = subjects[i];
            if (s.size() < 1) throw DataError(fmt::format("subject {} has no observations", i));
            if (s.times.size() != s.values.size())
                throw DataError(fmt::format("subject {}: {} times but {} measurements", i, s.times.size(), s.values.size()));
            for (Eigen::Index j = 0; j < s.size(); ++j) {
                if (!(s.times[j] >= 0.0 && s.times[j] <= 1.0))
                    throw DataError(fmt::format("subject {}: time {} outside [0,1]", i, s.times[j]));
                if (!std::isfinite(s.values[j])) throw DataError(fmt::format("subject {}: non-finite measurement", i));
            }
        }
        if (has_responses() && responses.size() != n())
            throw DataError(fmt::format("{} responses for {} subjects", responses.size(), n()));
    }
};

struct Bandwidths {
    double h_mu = 0.0;
    double h_sigma = 0.0;
};

struct NoiseModel {
    double sigma2 = 0.0;
};

inline double epanechnikov(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

/// Rule-of-thumb bandwidths 1.5 * L * N^(-1/5) and 1.5 * L * N^(-1/6), with
/// N the pooled observation count, capped below the domain length.
inline Bandwidths default_bandwidths(const SparseFunctionalSample& sample, double domain_length = 1.0) {
    const auto n = static_cast<double>(std::max<std::size_t>(sample.pooled_count(), 2));
    Bandwidths b;
    b.h_mu = std::min(1.5 * domain_length * std::pow(n, -1.0 / 5.0), 0.99 * domain_length);
    b.h_sigma = std::min(1.5 * domain_length * std::pow(n, -1.0 / 6.0), 0.99 * domain_length);
    return b;
}

namespace detail {

/// Observations pooled by distinct time: count and sum of values.
struct PooledSeries {
    std::vector<double> t;
    std::vector<double> count;
    std::vector<double> sum;
};

template <class Fn>
PooledSeries pool_by_time(const SparseFunctionalSample& sample, Fn&& value_of) {
    std::map<double, std::pair<double, double>> acc;
    for (std::size_t i = 0; i < sample.subjects.size(); ++i) {
        const auto& s = sample.subjects[i];
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            auto& cell = acc[s.times[j]];
            cell.first += 1.0;
            cell.second += value_of(i, j);
        }
    }
    PooledSeries out;
    for (const auto& [t, cs] : acc) {
        out.t.push_back(t);
        out.count.push_back(cs.first);
        out.sum.push_back(cs.second);
    }
    return out;
}

/// Local linear estimate a0 at t; throws BandwidthError if the window holds
/// fewer than two distinct times.
inline double local_linear_1d(const PooledSeries& d, double t, double h) {
    const auto lo = std::lower_bound(d.t.begin(), d.t.end(), t - h) - d.t.begin();
    const auto hi = std::upper_bound(d.t.begin(), d.t.end(), t + h) - d.t.begin();
    double s0 = 0, s1 = 0, s2 = 0, r0 = 0, r1 = 0;
    int distinct = 0;
    for (auto k = lo; k < hi; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        const double dx = d.t[ku] - t;
        const double w = epanechnikov(dx / h);
        if (w <= 0.0) continue;
        ++distinct;
        const double wc = w * d.count[ku];
        s0 += wc;
        s1 += wc * dx;
        s2 += wc * dx * dx;
        r0 += w * d.sum[ku];
        r1 += w * d.sum[ku] * dx;
    }
    const double det = s0 * s2 - s1 * s1;
    if (distinct < 2 || !(det > 1e-14 * s0 * s2))
        throw BandwidthError(fmt::format("fewer than two distinct observation times within {} of t = {}", h, t));
    return (s2 * r0 - s1 * r1) / det;
}

inline void check_coverage(const PooledSeries& d, const Grid& grid, double h) {
    if (d.t.empty()) throw DataError("no pooled observations");
    double prev = grid.front();
    double worst = d.t.front() - prev;
    double where = prev;
    for (double t : d.t) {
        if (t - prev > worst) { worst = t - prev; where = prev; }
        prev = t;
    }
    if (grid.back() - prev > worst) { worst = grid.back() - prev; where = prev; }
    if (worst > 2.0 * h)
        throw BandwidthError(fmt::format("pooled observation times leave a gap of {} after t = {} (bandwidth {})",
                                         worst, where, h));
}

/// Off-diagonal raw covariances pooled by distinct (s, t) time pair, grouped
/// by s for windowed lookups.
struct PooledSurface {
    std::vector<double> s;                 // distinct first times, sorted
    std::vector<std::vector<double>> t;    // per s: distinct second times, sorted
    std::vector<std::vector<double>> count;
    std::vector<std::vector<double>> sum;
};

inline PooledSurface pool_raw_covariances(const SparseFunctionalSample& sample, const Curve& mean) {
    std::map<double, std::map<double, std::pair<double, double>>> acc;
    for (const auto& subj : sample.subjects) {
        const Eigen::Index m = subj.size();
        Eigen::VectorXd resid(m);
        for (Eigen::Index j = 0; j < m; ++j) resid[j] = subj.values[j] - interpolate(mean, subj.times[j]);
        for (Eigen::Index j = 0; j < m; ++j)
            for (Eigen::Index l = 0; l < m; ++l) {
                if (j == l) continue;
                auto& cell = acc[subj.times[j]][subj.times[l]];
                cell.first += 1.0;
                cell.second += resid[j] * resid[l];
            }
    }
    PooledSurface out;
    for (const auto& [s, row] : acc) {
        out.s.push_back(s);
        auto& tt = out.t.emplace_back();
        auto& cc = out.count.emplace_back();
        auto& ss = out.sum.emplace_back();
        for (const auto& [t, cs] : row) {
            tt.push_back(t);
            cc.push_back(cs.first);
            ss.push_back(cs.second);
        }
    }
    return out;
}

/// Local linear surface estimate b0 at (s, t) with a product Epanechnikov kernel.
inline double local_linear_2d(const PooledSurface& d, double s, double t, double h, double min_pairs) {
    const auto lo = std::lower_bound(d.s.begin(), d.s.end(), s - h) - d.s.begin();
    const auto hi = std::upper_bound(d.s.begin(), d.s.end(), s + h) - d.s.begin();
    Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
    Eigen::Vector3d xty = Eigen::Vector3d::Zero();
    double pairs = 0.0;
    for (auto a = lo; a < hi; ++a) {
        const auto au = static_cast<std::size_t>(a);
        const double dx = d.s[au] - s;
        const double wx = epanechnikov(dx / h);
        if (wx <= 0.0) continue;
        const auto& tt = d.t[au];
        const auto b0 = std::lower_bound(tt.begin(), tt.end(), t - h) - tt.begin();
        const auto b1 = std::upper_bound(tt.begin(), tt.end(), t + h) - tt.begin();
        for (auto b = b0; b < b1; ++b) {
            const auto bu = static_cast<std::size_t>(b);
            const double dy = tt[bu] - t;
            const double w = wx * epanechnikov(dy / h);
            if (w <= 0.0) continue;
            const double c = d.count[au][bu];
            const double g = d.sum[au][bu];
            pairs += c;
            const double wc = w * c;
            xtx(0, 0) += wc;
            xtx(0, 1) += wc * dx;
            xtx(0, 2) += wc * dy;
            xtx(1, 1) += wc * dx * dx;
            xtx(1, 2) += wc * dx * dy;
            xtx(2, 2) += wc * dy * dy;
            xty[0] += w * g;
            xty[1] += w * g * dx;
            xty[2] += w * g * dy;
        }
    }
    if (pairs < min_pairs)
        throw BandwidthError(fmt::format("only {} raw covariance pairs within {} of ({}, {})", pairs, h, s, t));
    xtx(1, 0) = xtx(0, 1);
    xtx(2, 0) = xtx(0, 2);
    xtx(2, 1) = xtx(1, 2);
    Eigen::LDLT<Eigen::Matrix3d> ldlt(xtx);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-14 * xtx(0, 0) * h * h))
        throw BandwidthError(fmt::format("degenerate surface window at ({}, {}) with bandwidth {}", s, t, h));
    return ldlt.solve(xty)[0];
}

}  // namespace detail

/// Pooled local linear mean estimate on `grid`.
inline Curve smooth_mean(const SparseFunctionalSample& sample, const GridPtr& grid, double h_mu) {
    sample.validate();
    if (!(h_mu > 0.0 && h_mu < grid->length() + 1e-12)) throw PreconditionError(fmt::format("invalid mean bandwidth {}", h_mu));
    const auto pooled = detail::pool_by_time(sample, [&](std::size_t i, Eigen::Index j) {
        return sample.subjects[i].values[j];
    });
    detail::check_coverage(pooled, *grid, h_mu);
    Eigen::VectorXd v(static_cast<Eigen::Index>(grid->size()));
    for (std::size_t g = 0; g < grid->size(); ++g)
        v[static_cast<Eigen::Index>(g)] = detail::local_linear_1d(pooled, (*grid)[g], h_mu);
    return Curve(grid, std::move(v));
}

/// Local linear smoother of the off-diagonal raw covariances evaluated on
/// grid x grid and symmetrized.
inline Kernel2D smooth_covariance(const SparseFunctionalSample& sample, const Curve& mean, const GridPtr& grid,
                                  double h_sigma, double min_pairs = 10.0) {
    sample.validate();
    require_same_grid(mean.grid, grid, "smooth_covariance");
    if (!(h_sigma > 0.0 && h_sigma < grid->length() + 1e-12))
        throw PreconditionError(fmt::format("invalid covariance bandwidth {}", h_sigma));
    const auto pooled = detail::pool_raw_covariances(sample, mean);
    if (pooled.s.empty()) throw BandwidthError("no off-diagonal raw covariances (every subject has one observation)");
    const auto p = static_cast<Eigen::Index>(grid->size());
    Eigen::MatrixXd m(p, p);
    for (Eigen::Index a = 0; a < p; ++a)
        for (Eigen::Index b = a; b < p; ++b) {
            m(a, b) = detail::local_linear_2d(pooled, (*grid)[static_cast<std::size_t>(a)],
                                              (*grid)[static_cast<std::size_t>(b)], h_sigma, min_pairs);
            m(b, a) = m(a, b);
        }
    m = 0.5 * (m + m.transpose()).eval();
    return Kernel2D(grid, std::move(m));
}

/// Measurement-error variance: smooth the diagonal raw variances to V(t) and
/// average V(t) - Sigma(t,t) over the middle half of the domain, truncated at 0.
inline NoiseModel estimate_noise_variance(const SparseFunctionalSample& sample, const Curve& mean,
                                          const Kernel2D& cov_surface, const GridPtr& grid, double h) {
    require_same_grid(mean.grid, grid, "estimate_noise_variance");
    require_same_grid(cov_surface.grid, grid, "estimate_noise_variance surface");
    const auto pooled = detail::pool_by_time(sample, [&](std::size_t i, Eigen::Index j) {
        const double r = sample.subjects[i].values[j] - interpolate(mean, sample.subjects[i].times[j]);
        return r * r;
    });
    const double lo = grid->front() + 0.25 * grid->length();
    const double hi = grid->back() - 0.25 * grid->length();
    std::vector<double> ts, diff;
    for (std::size_t g = 0; g < grid->size(); ++g) {
        const double t = (*grid)[g];
        if (t < lo - 1e-12 || t > hi + 1e-12) continue;
        ts.push_back(t);
        const auto gi = static_cast<Eigen::Index>(g);
        diff.push_back(detail::local_linear_1d(pooled, t, h) - cov_surface.values(gi, gi));
    }
    double integral = 0.0;
    for (std::size_t k = 1; k < ts.size(); ++k) integral += 0.5 * (diff[k] + diff[k - 1]) * (ts[k] - ts[k - 1]);
    const double span = ts.size() > 1 ? ts.back() - ts.front() : 0.0;
    const double avg = span > 0.0 ? integral / span : (diff.empty() ? 0.0 : diff.front());
    return NoiseModel{std::max(0.0, avg)};
}

struct PaceOptions {
    double ridge = 1e-8;
    double sigma2_floor = 1e-6;
};

/// theta_ij = lambda_j phi_ij^T Sigma_Ui^{-1} (U_i - mu_i) with
/// Sigma_Ui = sum_{k<=D} lambda_k phi_k phi_k^T + sigma^2 I at the subject's
/// times. Warnings (pseudo-inverse fallbacks) are appended to `warnings`.
inline ScoreMatrix pace_scores(const SparseFunctionalSample& sample, const EigenSystem& es, const NoiseModel& noise,
                               std::vector<std::string>* warnings = nullptr, const PaceOptions& opt = {}) {
    sample.validate();
    if (noise.sigma2 < 0.0) throw PreconditionError("pace_scores: negative noise variance");
    const int d = es.truncation;
    const Eigen::VectorXd lambda = es.leading_eigenvalues();
    const double diag = std::max(noise.sigma2, opt.sigma2_floor) + opt.ridge;
    ScoreMatrix out{Eigen::MatrixXd(sample.n(), d), ScoreSource::pace};
    for (Eigen::Index i = 0; i < sample.n(); ++i) {
        const auto& s = sample.subjects[static_cast<std::size_t>(i)];
        const Eigen::Index m = s.size();
        Eigen::MatrixXd phi(m, d);
        Eigen::VectorXd resid(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            resid[j] = s.values[j] - interpolate(es.mean, s.times[j]);
            for (int k = 0; k < d; ++k) phi(j, k) = interpolate(es.eigenfunctions[static_cast<std::size_t>(k)], s.times[j]);
        }
        Eigen::MatrixXd sigma_u = phi * lambda.asDiagonal() * phi.transpose();
        sigma_u.diagonal().array() += diag;
        Eigen::LLT<Eigen::MatrixXd> llt(sigma_u);
        Eigen::VectorXd solved;
        if (llt.info() == Eigen::Success) {
            solved = llt.solve(resid);
        } else {
            if (warnings) warnings->push_back(fmt::format("subject {}: singular Sigma_U, using pseudo-inverse", i));
            solved = sigma_u.completeOrthogonalDecomposition().pseudoInverse() * resid;
        }
        out.scores.row(i) = (lambda.asDiagonal() * (phi.transpose() * solved)).transpose();
    }
    return out;
}

struct BandwidthCv {
    std::vector<double> candidates;
    std::vector<double> errors;  ///< mean squared prediction error; +inf where infeasible
    double chosen = 0.0;
};

namespace detail {
inline std::vector<int> subject_folds(Eigen::Index n, int folds, std::uint64_t seed) {
    std::vector<int> f(static_cast<std::size_t>(n));
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = make_rng(seed, {0xcf});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t k = 0; k < order.size(); ++k) f[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    return f;
}

inline SparseFunctionalSample select_subjects(const SparseFunctionalSample& s, const std::vector<int>& folds, int fold,
                                              bool keep) {
    SparseFunctionalSample out;
    for (std::size_t i = 0; i < s.subjects.size(); ++i)
        if ((folds[i] == fold) == keep) out.subjects.push_back(s.subjects[i]);
    return out;
}
}  // namespace detail

/// Subject-level K-fold cross-validation of the mean bandwidth.
inline BandwidthCv cv_mean_bandwidth(const SparseFunctionalSample& sample, std::vector<double> candidates,
                                     std::uint64_t seed, int folds = 5) {
    sample.validate();
    if (folds < 2 || folds > sample.n()) throw PreconditionError("cv_mean_bandwidth: invalid fold count");
    const auto assign = detail::subject_folds(sample.n(), folds, seed);
    BandwidthCv cv{std::move(candidates), {}, 0.0};
    for (double h : cv.candidates) {
        double sse = 0.0, count = 0.0;
        try {
            for (int f = 0; f < folds; ++f) {
                const auto train = detail::select_subjects(sample, assign, f, false);
                const auto test = detail::select_subjects(sample, assign, f, true);
                const auto pooled = detail::pool_by_time(train, [&](std::size_t i, Eigen::Index j) {
                    return train.subjects[i].values[j];
                });
                for (const auto& s : test.subjects)
                    for (Eigen::Index j = 0; j < s.size(); ++j) {
                        const double r = s.values[j] - detail::local_linear_1d(pooled, s.times[j], h);
                        sse += r * r;
                        count += 1.0;
                    }
            }
            cv.errors.push_back(sse / count);
        } catch (const BandwidthError&) {
            cv.errors.push_back(std::numeric_limits<double>::infinity());
        }
    }
    const auto best = std::min_element(cv.errors.begin(), cv.errors.end()) - cv.errors.begin();
    if (!std::isfinite(cv.errors[static_cast<std::size_t>(best)]))
        throw BandwidthError("cross-validation: every candidate mean bandwidth left empty windows");
    cv.chosen = cv.candidates[static_cast<std::size_t>(best)];
    return cv;
}

/// Subject-level K-fold cross-validation of the covariance-surface bandwidth
/// against held-out raw covariances (pooled by time pair).
inline BandwidthCv cv_covariance_bandwidth(const SparseFunctionalSample& sample, const Curve& mean,
                                           std::vector<double> candidates, std::uint64_t seed, int folds = 5,
                                           double min_pairs = 10.0) {
    sample.validate();
    if (folds < 2 || folds > sample.n()) throw PreconditionError("cv_covariance_bandwidth: invalid fold count");
    const auto assign = detail::subject_folds(sample.n(), folds, seed);
    BandwidthCv cv{std::move(candidates), {}, 0.0};
    std::vector<detail::PooledSurface> train_sets, test_sets;
    std::vector<double> test_sq;
    for (int f = 0; f < folds; ++f) {
        const auto train = detail::select_subjects(sample, assign, f, false);
        const auto test = detail::select_subjects(sample, assign, f, true);
        train_sets.push_back(detail::pool_raw_covariances(train, mean));
        test_sets.push_back(detail::pool_raw_covariances(test, mean));
        double sq = 0.0;
        for (const auto& subj : test.subjects)
            for (Eigen::Index j = 0; j < subj.size(); ++j)
                for (Eigen::Index l = 0; l < subj.size(); ++l) {
                    if (j == l) continue;
                    const double g = (subj.values[j] - interpolate(mean, subj.times[j])) *
                                     (subj.values[l] - interpolate(mean, subj.times[l]));
                    sq += g * g;
                }
        test_sq.push_back(sq);
    }
    for (double h : cv.candidates) {
        double sse = 0.0, count = 0.0;
        try {
            for (std::size_t f = 0; f < train_sets.size(); ++f) {
                const auto& te = test_sets[f];
                double part = test_sq[f];
                for (std::size_t a = 0; a < te.s.size(); ++a)
                    for (std::size_t b = 0; b < te.t[a].size(); ++b) {
                        const double fit = detail::local_linear_2d(train_sets[f], te.s[a], te.t[a][b], h, min_pairs);
                        part += -2.0 * fit * te.sum[a][b] + te.count[a][b] * fit * fit;
                        count += te.count[a][b];
                    }
                sse += part;
            }
            cv.errors.push_back(sse / count);
        } catch (const BandwidthError&) {
            cv.errors.push_back(std::numeric_limits<double>::infinity());
        }
    }
    const auto best = std::min_element(cv.errors.begin(), cv.errors.end()) - cv.errors.begin();
    if (!std::isfinite(cv.errors[static_cast<std::size_t>(best)]))
        throw BandwidthError("cross-validation: every candidate surface bandwidth left sparse windows");
    cv.chosen = cv.candidates[static_cast<std::size_t>(best)];
    return cv;
}

}  // namespace fsdr
