#pragma once

// Functional principal components for densely observed curves.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"
#include "fsdr/funcbase.hpp"

namespace fsdr {

/// n curves sampled on a shared grid (one row per subject) with optional
/// scalar responses.
struct DenseFunctionalSample {
    GridPtr grid;
    Eigen::MatrixXd curves;
    Eigen::VectorXd responses;

    Eigen::Index n() const { return curves.rows(); }
    bool has_responses() const { return responses.size() > 0; }

    void validate(Eigen::Index min_n = 1) const {
        if (!grid) throw DataError("sample without grid");
        if (curves.rows() < min_n) throw DataError(fmt::format("sample needs at least {} curves, got {}", min_n, curves.rows()));
        if (curves.cols() != static_cast<Eigen::Index>(grid->size()))
            throw DataError(fmt::format("curves have {} columns for a grid of {} points", curves.cols(), grid->size()));
        if (!curves.allFinite()) throw DataError("curve values must be finite");
        if (has_responses() && responses.size() != curves.rows())
            throw DataError(fmt::format("{} responses for {} curves", responses.size(), curves.rows()));
        if (!responses.allFinite()) throw DataError("responses must be finite");
    }

    Curve curve(Eigen::Index i) const { return Curve(grid, curves.row(i).transpose()); }

    DenseFunctionalSample subset(Eigen::Index first, Eigen::Index count) const {
        DenseFunctionalSample out{grid, curves.middleRows(first, count), {}};
        if (has_responses()) out.responses = responses.segment(first, count);
        return out;
    }
};

/// Retained eigenpairs (positive eigenvalues only, nonincreasing) of a
/// covariance operator, the centering mean and the truncation level.
struct EigenSystem {
    Eigen::VectorXd eigenvalues;
    std::vector<Curve> eigenfunctions;
    Curve mean;
    int truncation = 0;  ///< D
    double fve_threshold = 0.99;

    /// p x D matrix whose columns are the first D eigenfunctions.
    Eigen::MatrixXd basis(int d = -1) const {
        if (d < 0) d = truncation;
        const Eigen::Index p = mean.size();
        Eigen::MatrixXd m(p, d);
        for (int j = 0; j < d; ++j) m.col(j) = eigenfunctions[static_cast<std::size_t>(j)].values;
        return m;
    }

    Eigen::VectorXd leading_eigenvalues() const { return eigenvalues.head(truncation); }
};

enum class ScoreSource { exact, pace };

inline const char* to_string(ScoreSource s) { return s == ScoreSource::exact ? "exact" : "pace"; }

struct ScoreMatrix {
    Eigen::MatrixXd scores;  ///< n x D
    ScoreSource source = ScoreSource::exact;
};

inline Curve sample_mean(const DenseFunctionalSample& sample) {
    if (sample.n() < 1) throw DataError("sample_mean: empty sample");
    sample.validate(1);
    return Curve(sample.grid, sample.curves.colwise().mean().transpose());
}

/// (1/n) sum of (X_i - Xbar)(s) (X_i - Xbar)(t).
inline Kernel2D sample_covariance(const DenseFunctionalSample& sample) {
    if (sample.n() < 2) throw DataError("sample_covariance: need at least two curves");
    sample.validate(2);
    const Eigen::RowVectorXd mean = sample.curves.colwise().mean();
    const Eigen::MatrixXd centered = sample.curves.rowwise() - mean;
    Eigen::MatrixXd c = (centered.transpose() * centered) / static_cast<double>(sample.n());
    c = 0.5 * (c + c.transpose()).eval();
    return Kernel2D(sample.grid, std::move(c));
}

/// Smallest k whose leading eigenvalues explain at least a fraction R of the
/// total; ties resolve in favour of the smaller k.
inline int fve_truncation(const Eigen::VectorXd& eigenvalues, double fve) {
    if (!(fve > 0.0 && fve <= 1.0)) throw PreconditionError(fmt::format("FVE threshold must lie in (0,1], got {}", fve));
    const double total = eigenvalues.sum();
    if (!(total > 0.0)) throw NumericError("FVE truncation: no positive eigenvalues");
    double cum = 0.0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
        cum += eigenvalues[k];
        if (cum >= fve * total - 1e-12 * total) return static_cast<int>(k + 1);
    }
    return static_cast<int>(eigenvalues.size());
}

/// Quadrature-weighted symmetric eigenproblem: eigenvectors of
/// W^{1/2} C W^{1/2}, mapped back by W^{-1/2}, are L2-orthonormal.
inline EigenSystem eigen_decompose(const Kernel2D& cov, double fve, const Curve* mean = nullptr) {
    if (!(fve > 0.0 && fve <= 1.0)) throw PreconditionError(fmt::format("FVE threshold must lie in (0,1], got {}", fve));
    if (!cov.is_symmetric()) throw PreconditionError("eigen_decompose: covariance kernel is not symmetric");
    const GridPtr& grid = cov.grid;
    const Eigen::VectorXd sw = grid->weights().cwiseSqrt();
    const Eigen::MatrixXd m = sw.asDiagonal() * cov.values * sw.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
    if (solver.info() != Eigen::Success) throw NumericError("eigen_decompose: eigen solver failed");

    const Eigen::VectorXd& vals = solver.eigenvalues();  // ascending
    const Eigen::Index p = vals.size();
    const double lmax = vals[p - 1];
    if (!(lmax > 0.0)) throw NumericError("eigen_decompose: covariance is degenerate (no positive eigenvalues)");
    const double cutoff = lmax * 1e-12;

    EigenSystem es;
    std::vector<double> kept;
    for (Eigen::Index k = p - 1; k >= 0; --k) {
        if (vals[k] <= cutoff) break;
        kept.push_back(vals[k]);
        Eigen::VectorXd phi = solver.eigenvectors().col(k).cwiseQuotient(sw);
        sign_normalize(phi);
        es.eigenfunctions.emplace_back(grid, std::move(phi));
    }
    es.eigenvalues = Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Eigen::Index>(kept.size()));
    es.fve_threshold = fve;
    es.truncation = fve_truncation(es.eigenvalues, fve);
    es.mean = mean ? *mean : Curve(grid, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid->size())));
    return es;
}

/// Mean, covariance and eigen-decomposition of a dense sample.
inline EigenSystem fpca(const DenseFunctionalSample& sample, double fve) {
    const Curve mean = sample_mean(sample);
    return eigen_decompose(sample_covariance(sample), fve, &mean);
}

/// Scores <X_i - mean, phi_j> for rows of `curves` (n x p), j = 1..D.
inline Eigen::MatrixXd project_onto_components(const Eigen::MatrixXd& curves, const GridPtr& grid,
                                               const EigenSystem& es) {
    require_same_grid(grid, es.mean.grid, "project_onto_components");
    if (curves.cols() != static_cast<Eigen::Index>(grid->size()))
        throw DataError("project_onto_components: curve length does not match grid");
    const Eigen::MatrixXd centered = curves.rowwise() - es.mean.values.transpose();
    return centered * grid->weights().asDiagonal() * es.basis();
}

inline ScoreMatrix exact_scores(const DenseFunctionalSample& sample, const EigenSystem& es) {
    sample.validate(1);
    return ScoreMatrix{project_onto_components(sample.curves, sample.grid, es), ScoreSource::exact};
}

}  // namespace fsdr
