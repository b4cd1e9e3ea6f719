#pragma once

// Sample distance covariance (squared), the double-centering route, an
// independent O(n^3) expansion used as an oracle, and a fast evaluator for
// repeated projections against a fixed response.

#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"

namespace fsdr {

struct CenteredDistanceMatrix {
    Eigen::MatrixXd values;
    Eigen::Index n() const { return values.rows(); }
};

/// Euclidean distances between rows.
inline Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& points) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = (points.row(i) - points.row(j)).norm();
    return a;
}

inline CenteredDistanceMatrix double_center(const Eigen::MatrixXd& points) {
    if (points.rows() < 2) throw PreconditionError("double_center: need at least two points");
    if (points.cols() < 1) throw PreconditionError("double_center: points need at least one coordinate");
    if (!points.allFinite()) throw PreconditionError("double_center: non-finite entries");
    const Eigen::MatrixXd a = pairwise_distances(points);
    const Eigen::VectorXd row = a.rowwise().mean();
    const Eigen::RowVectorXd col = a.colwise().mean();
    const double grand = a.mean();
    Eigen::MatrixXd c = a;
    c.colwise() -= row;
    c.rowwise() -= col;
    c.array() += grand;
    return CenteredDistanceMatrix{std::move(c)};
}

namespace detail {
inline void require_same_rows(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v, const char* where) {
    if (u.rows() != v.rows())
        throw PreconditionError(fmt::format("{}: row counts differ ({} vs {})", where, u.rows(), v.rows()));
    if (u.rows() < 2) throw PreconditionError(fmt::format("{}: need at least two rows", where));
}
}  // namespace detail

/// V_n^2(U, V) = (1/n^2) sum_ij A_ij B_ij.
inline double dcov_sq(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
    detail::require_same_rows(u, v, "dcov_sq");
    const auto a = double_center(u);
    const auto b = double_center(v);
    const auto n = static_cast<double>(u.rows());
    return a.values.cwiseProduct(b.values).sum() / (n * n);
}

/// S1 + S2 - 2 S3 expansion, evaluated literally in O(n^3). Test oracle.
inline double dcov_sq_sform(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
    detail::require_same_rows(u, v, "dcov_sq_sform");
    const Eigen::MatrixXd a = pairwise_distances(u);
    const Eigen::MatrixXd b = pairwise_distances(v);
    const Eigen::Index n = u.rows();
    const auto nd = static_cast<double>(n);
    double s1 = 0.0, sa = 0.0, sb = 0.0, s3 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
            s1 += a(i, j) * b(i, j);
            sa += a(i, j);
            sb += b(i, j);
            for (Eigen::Index k = 0; k < n; ++k) s3 += a(i, j) * b(i, k);
        }
    s1 /= nd * nd;
    const double s2 = (sa / (nd * nd)) * (sb / (nd * nd));
    s3 /= nd * nd * nd;
    return s1 + s2 - 2.0 * s3;
}

/// Repeated evaluation of V_n^2(P, Y) for projections P against a fixed
/// response. Because B is double-centered, sum A_ij B_ij = sum a_ij B_ij, so
/// only raw distances of P are needed. Pairs are stored i<j in row-major
/// order and summed in that fixed order.
class DcovObjective {
public:
    explicit DcovObjective(const Eigen::MatrixXd& response) : n_(response.rows()) {
        if (n_ < 2) throw PreconditionError("DcovObjective: need at least two observations");
        const auto b = double_center(response);
        centered_.reserve(pair_count());
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = i + 1; j < n_; ++j) centered_.push_back(b.values(i, j));
        fixed_sq_.assign(pair_count(), 0.0);
    }

    explicit DcovObjective(const Eigen::VectorXd& y) : DcovObjective(Eigen::MatrixXd(y)) {}

    Eigen::Index n() const { return n_; }

    /// Squared distances of already-fixed projection coordinates (n x k).
    void set_fixed(const Eigen::MatrixXd& fixed) {
        if (fixed.rows() != n_ && fixed.size() != 0) throw PreconditionError("DcovObjective::set_fixed: row mismatch");
        std::size_t idx = 0;
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = i + 1; j < n_; ++j, ++idx)
                fixed_sq_[idx] = fixed.cols() == 0 ? 0.0 : (fixed.row(i) - fixed.row(j)).squaredNorm();
    }

    /// V_n^2 of the joint projection (fixed coordinates, q).
    double with_extra(const Eigen::VectorXd& q) const {
        double s = 0.0;
        std::size_t idx = 0;
        const double* qd = q.data();
        for (Eigen::Index i = 0; i < n_; ++i) {
            const double qi = qd[i];
            for (Eigen::Index j = i + 1; j < n_; ++j, ++idx) {
                const double d = qi - qd[j];
                s += std::sqrt(fixed_sq_[idx] + d * d) * centered_[idx];
            }
        }
        return 2.0 * s / static_cast<double>(n_ * n_);
    }

    /// V_n^2 of the fixed coordinates alone.
    double fixed_only() const {
        double s = 0.0;
        for (std::size_t idx = 0; idx < fixed_sq_.size(); ++idx) s += std::sqrt(fixed_sq_[idx]) * centered_[idx];
        return 2.0 * s / static_cast<double>(n_ * n_);
    }

    /// V_n^2 of an arbitrary projection (n x k), ignoring fixed coordinates.
    double operator()(const Eigen::MatrixXd& projection) const {
        if (projection.rows() != n_) throw PreconditionError("DcovObjective: row mismatch");
        double s = 0.0;
        std::size_t idx = 0;
        for (Eigen::Index i = 0; i < n_; ++i)
            for (Eigen::Index j = i + 1; j < n_; ++j, ++idx)
                s += (projection.row(i) - projection.row(j)).norm() * centered_[idx];
        return 2.0 * s / static_cast<double>(n_ * n_);
    }

private:
    std::size_t pair_count() const { return static_cast<std::size_t>(n_ * (n_ - 1) / 2); }

    Eigen::Index n_;
    std::vector<double> centered_;
    std::vector<double> fixed_sq_;
};

}  // namespace fsdr
