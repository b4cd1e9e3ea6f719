#pragma once

// Link estimation on the reduced predictors: k-nearest neighbours with
// inverse-distance weights in the K-dimensional projection space.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"
#include "fsdr/fpca.hpp"
#include "fsdr/pipeline.hpp"
#include "fsdr/sdr.hpp"
#include "fsdr/sparse.hpp"

namespace fsdr {

/// Everything needed to map new curves to predictions.
struct PredictionModel {
    EigenSystem eigensystem;
    ScoreSource source = ScoreSource::exact;
    NoiseModel noise;
    Bandwidths bandwidths;
    BasisEstimate basis;
    Eigen::MatrixXd projections;  ///< n x K training projections B^T theta_i
    Eigen::VectorXd responses;
    int k_nn = 5;

    Eigen::Index k() const { return basis.k(); }

    void validate() const {
        if (k_nn < 1) throw ConfigError(fmt::format("k_nn must be at least 1, got {}", k_nn));
        if (projections.cols() != k())
            throw DataError(fmt::format("model projections have {} columns for K = {}", projections.cols(), k()));
        if (projections.rows() != responses.size())
            throw DataError(fmt::format("model has {} projections but {} responses", projections.rows(), responses.size()));
        if (responses.size() < 1) throw DataError("model has no training responses");
        if (k_nn > responses.size())
            throw ConfigError(fmt::format("k_nn = {} exceeds the training size {}", k_nn, responses.size()));
        if (basis.coefficients.coefficients.rows() != eigensystem.truncation)
            throw DataError("model coefficient rows do not match the truncation level");
    }
};

inline PredictionModel make_prediction_model(const FitResult& fit, const Eigen::VectorXd& responses, int k_nn = 5) {
    PredictionModel m;
    m.eigensystem = fit.components.eigensystem;
    m.source = fit.components.scores.source;
    m.noise = fit.components.noise;
    m.bandwidths = fit.components.bandwidths;
    m.basis = fit.basis;
    m.projections = fit.components.scores.scores * fit.basis.coefficients.coefficients;
    m.responses = responses;
    m.k_nn = k_nn;
    m.validate();
    return m;
}

/// Inverse-distance weighted average over the k nearest training points
/// (ties in distance broken by training index). Exact matches take the
/// plain average of the matching responses.
inline double knn_predict_one(const Eigen::MatrixXd& train, const Eigen::VectorXd& y, const Eigen::RowVectorXd& q, int k_nn) {
    const Eigen::Index n = train.rows();
    if (k_nn < 1 || k_nn > n) throw ConfigError(fmt::format("k_nn = {} must lie in [1, {}]", k_nn, n));
    std::vector<double> dist(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) dist[static_cast<std::size_t>(i)] = (train.row(i) - q).norm();
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto mid = idx.begin() + k_nn;
    std::partial_sort(idx.begin(), mid, idx.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double da = dist[static_cast<std::size_t>(a)], db = dist[static_cast<std::size_t>(b)];
        return da < db || (da == db && a < b);
    });
    const double ref = y[idx.front()];
    if (dist[static_cast<std::size_t>(idx.front())] == 0.0) {
        double sum = 0.0;
        int count = 0;
        for (auto it = idx.begin(); it != mid && dist[static_cast<std::size_t>(*it)] == 0.0; ++it) {
            sum += y[*it] - ref;
            ++count;
        }
        return ref + sum / count;
    }
    double wsum = 0.0, acc = 0.0;
    for (auto it = idx.begin(); it != mid; ++it) {
        const double w = 1.0 / dist[static_cast<std::size_t>(*it)];
        wsum += w;
        acc += w * (y[*it] - ref);
    }
    return ref + acc / wsum;
}

inline Eigen::VectorXd knn_predict(const Eigen::MatrixXd& train, const Eigen::VectorXd& y, const Eigen::MatrixXd& query,
                                   int k_nn) {
    if (train.cols() != query.cols())
        throw DataError(fmt::format("query projections have {} columns, training has {}", query.cols(), train.cols()));
    Eigen::VectorXd out(query.rows());
    for (Eigen::Index i = 0; i < query.rows(); ++i) out[i] = knn_predict_one(train, y, query.row(i), k_nn);
    return out;
}

/// Projections of new dense curves: scores on the training components
/// (after removing the training mean), then B^T theta.
inline Eigen::MatrixXd project(const PredictionModel& m, const DenseFunctionalSample& test) {
    if (test.n() < 1) throw DataError("empty test set");
    if (!same_grid(test.grid, m.eigensystem.mean.grid))
        throw GridMismatchError("test curves are not on the model grid");
    const Eigen::MatrixXd theta = project_onto_components(test.curves, test.grid, m.eigensystem);
    return theta * m.basis.coefficients.coefficients;
}

/// Projections of new sparse subjects through conditional-expectation scores
/// with the stored components and noise variance.
inline Eigen::MatrixXd project(const PredictionModel& m, const SparseFunctionalSample& test,
                               std::vector<std::string>* warnings = nullptr) {
    if (test.n() < 1) throw DataError("empty test set");
    test.validate();
    const ScoreMatrix theta = pace_scores(test, m.eigensystem, m.noise, warnings);
    return theta.scores * m.basis.coefficients.coefficients;
}

template <class Sample>
Eigen::VectorXd predict(const PredictionModel& m, const Sample& test) {
    m.validate();
    return knn_predict(m.projections, m.responses, project(m, test), m.k_nn);
}

inline double rmse(const Eigen::VectorXd& predicted, const Eigen::VectorXd& observed) {
    if (predicted.size() != observed.size() || predicted.size() == 0)
        throw DataError("rmse: prediction and response lengths differ or are empty");
    return std::sqrt((predicted - observed).squaredNorm() / static_cast<double>(predicted.size()));
}

}  // namespace fsdr
