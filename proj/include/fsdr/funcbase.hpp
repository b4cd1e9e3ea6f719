#pragma once

// Discretized functions on [0,1]: grids with trapezoid weights, curves,
// bivariate kernels, L2 inner products and Hilbert-Schmidt distances.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "fsdr/error.hpp"

namespace fsdr {

class Grid {
public:
    /// Composite trapezoid weights over strictly increasing points in [0,1].
    explicit Grid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.size() < 2) throw PreconditionError("grid needs at least two points");
        if (points_.front() < 0.0 || points_.back() > 1.0)
            throw PreconditionError("grid points must lie in [0,1]");
        for (std::size_t i = 1; i < points_.size(); ++i)
            if (!(points_[i] > points_[i - 1]))
                throw PreconditionError(fmt::format("grid points not strictly increasing at index {}", i));
        const auto p = static_cast<Eigen::Index>(points_.size());
        weights_ = Eigen::VectorXd::Zero(p);
        for (Eigen::Index i = 0; i + 1 < p; ++i) {
            const double h = points_[i + 1] - points_[i];
            weights_[i] += 0.5 * h;
            weights_[i + 1] += 0.5 * h;
        }
    }

    /// p equally spaced points with first = 0 and last = 1.
    static std::shared_ptr<const Grid> uniform(std::size_t p) {
        if (p < 2) throw PreconditionError("uniform grid needs at least two points");
        std::vector<double> pts(p);
        for (std::size_t i = 0; i < p; ++i) pts[i] = static_cast<double>(i) / static_cast<double>(p - 1);
        pts.back() = 1.0;
        return std::make_shared<const Grid>(std::move(pts));
    }

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<double>& points() const noexcept { return points_; }
    const Eigen::VectorXd& weights() const noexcept { return weights_; }
    double operator[](std::size_t i) const { return points_[i]; }
    double front() const { return points_.front(); }
    double back() const { return points_.back(); }
    double length() const { return points_.back() - points_.front(); }

    bool operator==(const Grid& other) const { return points_ == other.points_; }

private:
    std::vector<double> points_;
    Eigen::VectorXd weights_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
    return a == b || (a && b && *a == *b);
}

inline void require_same_grid(const GridPtr& a, const GridPtr& b, const char* where) {
    if (!same_grid(a, b)) throw GridMismatchError(where);
}

struct Curve {
    GridPtr grid;
    Eigen::VectorXd values;

    Curve() = default;
    Curve(GridPtr g, Eigen::VectorXd v) : grid(std::move(g)), values(std::move(v)) {
        if (!grid) throw PreconditionError("curve without grid");
        if (static_cast<std::size_t>(values.size()) != grid->size())
            throw PreconditionError(
                fmt::format("curve has {} values for a grid of {} points", values.size(), grid->size()));
        if (!values.allFinite()) throw PreconditionError("curve values must be finite");
    }

    template <class Fn>
    static Curve from_function(const GridPtr& g, Fn&& f) {
        Eigen::VectorXd v(static_cast<Eigen::Index>(g->size()));
        for (std::size_t i = 0; i < g->size(); ++i) v[static_cast<Eigen::Index>(i)] = f((*g)[i]);
        return Curve(g, std::move(v));
    }

    Eigen::Index size() const { return values.size(); }
};

struct Kernel2D {
    GridPtr grid;
    Eigen::MatrixXd values;

    Kernel2D() = default;
    Kernel2D(GridPtr g, Eigen::MatrixXd v) : grid(std::move(g)), values(std::move(v)) {
        if (!grid) throw PreconditionError("kernel without grid");
        const auto p = static_cast<Eigen::Index>(grid->size());
        if (values.rows() != p || values.cols() != p)
            throw PreconditionError(
                fmt::format("kernel is {}x{} for a grid of {} points", values.rows(), values.cols(), p));
    }

    static Kernel2D zero(const GridPtr& g) {
        const auto p = static_cast<Eigen::Index>(g->size());
        return Kernel2D(g, Eigen::MatrixXd::Zero(p, p));
    }

    bool is_symmetric(double tol = 1e-10) const {
        const double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
        return (values - values.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
    }
};

/// Piecewise-linear interpolation; constant extension outside the grid.
inline double interpolate(const Curve& f, double t) {
    const auto& pts = f.grid->points();
    if (t <= pts.front()) return f.values[0];
    if (t >= pts.back()) return f.values[f.size() - 1];
    const auto it = std::upper_bound(pts.begin(), pts.end(), t);
    const auto hi = static_cast<Eigen::Index>(it - pts.begin());
    const auto lo = hi - 1;
    const double w = (t - pts[lo]) / (pts[hi] - pts[lo]);
    return (1.0 - w) * f.values[lo] + w * f.values[hi];
}

inline Curve resample(const Curve& f, const GridPtr& target) {
    return Curve::from_function(target, [&](double t) { return interpolate(f, t); });
}

/// Bilinear interpolation of a kernel at (s, t).
inline double interpolate(const Kernel2D& k, double s, double t) {
    const auto& pts = k.grid->points();
    auto locate = [&](double x, Eigen::Index& lo, double& w) {
        const auto p = static_cast<Eigen::Index>(pts.size());
        if (x <= pts.front()) { lo = 0; w = 0.0; return; }
        if (x >= pts.back()) { lo = p - 2; w = 1.0; return; }
        const auto hi = static_cast<Eigen::Index>(std::upper_bound(pts.begin(), pts.end(), x) - pts.begin());
        lo = hi - 1;
        w = (x - pts[lo]) / (pts[hi] - pts[lo]);
    };
    Eigen::Index i = 0, j = 0;
    double ws = 0.0, wt = 0.0;
    locate(s, i, ws);
    locate(t, j, wt);
    const auto& m = k.values;
    return (1 - ws) * (1 - wt) * m(i, j) + ws * (1 - wt) * m(i + 1, j) + (1 - ws) * wt * m(i, j + 1) +
           ws * wt * m(i + 1, j + 1);
}

inline double inner_product(const Curve& f, const Curve& g) {
    require_same_grid(f.grid, g.grid, "inner_product");
    return (f.values.array() * g.values.array() * f.grid->weights().array()).sum();
}

inline double l2_norm(const Curve& f) { return std::sqrt(inner_product(f, f)); }

/// Double integral of f(s) A(s,t) g(t).
inline double weighted_inner_product(const Curve& f, const Curve& g, const Kernel2D& a,
                                     bool require_symmetric = true) {
    require_same_grid(f.grid, g.grid, "weighted_inner_product");
    require_same_grid(f.grid, a.grid, "weighted_inner_product kernel");
    if (require_symmetric && !a.is_symmetric()) throw PreconditionError("weighted_inner_product: kernel is not symmetric");
    const Eigen::VectorXd& w = f.grid->weights();
    const Eigen::VectorXd wf = f.values.cwiseProduct(w);
    const Eigen::VectorXd wg = g.values.cwiseProduct(w);
    return wf.dot(a.values * wg);
}

/// Operator composition (A o B)(s,t) = integral of A(s,u) B(u,t) du.
inline Kernel2D compose(const Kernel2D& a, const Kernel2D& b) {
    require_same_grid(a.grid, b.grid, "compose");
    return Kernel2D(a.grid, a.values * a.grid->weights().asDiagonal() * b.values);
}

inline double hs_norm(const Kernel2D& a) {
    const Eigen::VectorXd& w = a.grid->weights();
    return std::sqrt((w.transpose() * a.values.cwiseAbs2() * w)(0, 0));
}

/// Hilbert-Schmidt distance ||P1 - P2||_H.
inline double hs_distance(const Kernel2D& p1, const Kernel2D& p2) {
    require_same_grid(p1.grid, p2.grid, "hs_distance");
    const Eigen::VectorXd& w = p1.grid->weights();
    const Eigen::MatrixXd diff = p1.values - p2.values;
    const double sq = (w.transpose() * diff.cwiseAbs2() * w)(0, 0);
    return std::sqrt(std::max(0.0, sq));
}

inline Eigen::MatrixXd gram_matrix(std::span<const Curve> curves) {
    const auto k = static_cast<Eigen::Index>(curves.size());
    Eigen::MatrixXd g(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) g(i, j) = g(j, i) = inner_product(curves[i], curves[j]);
    return g;
}

/// Sum of basis[k](s) basis[k](t); the basis must be L2-orthonormal.
inline Kernel2D projection_kernel(std::span<const Curve> basis, const GridPtr& grid, double tol = 1e-8) {
    const auto p = static_cast<Eigen::Index>(grid->size());
    if (basis.empty()) return Kernel2D(grid, Eigen::MatrixXd::Zero(p, p));
    for (const auto& c : basis) require_same_grid(c.grid, grid, "projection_kernel");
    const auto k = static_cast<Eigen::Index>(basis.size());
    const Eigen::MatrixXd g = gram_matrix(basis);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double target = i == j ? 1.0 : 0.0;
            if (std::abs(g(i, j) - target) > tol)
                throw PreconditionError(fmt::format(
                    "projection_kernel: basis not orthonormal at pair ({}, {}): <b{},b{}> = {}", i, j, i, j, g(i, j)));
        }
    Eigen::MatrixXd m(p, k);
    for (Eigen::Index j = 0; j < k; ++j) m.col(j) = basis[j].values;
    return Kernel2D(grid, m * m.transpose());
}

inline Kernel2D projection_kernel(std::span<const Curve> basis) {
    if (basis.empty()) throw PreconditionError("projection_kernel: empty basis needs an explicit grid");
    return projection_kernel(basis, basis.front().grid);
}

/// Flip so the largest-magnitude entry is positive.
inline void sign_normalize(Eigen::Ref<Eigen::VectorXd> v) {
    Eigen::Index idx = 0;
    v.cwiseAbs().maxCoeff(&idx);
    if (v[idx] < 0) v = -v;
}

/// Modified Gram-Schmidt in L2 with one reorthogonalization pass. Each output
/// curve is sign-normalized.
inline std::vector<Curve> gram_schmidt(std::span<const Curve> curves, double max_condition = 1e10) {
    if (curves.empty()) return {};
    const GridPtr grid = curves.front().grid;
    for (const auto& c : curves) require_same_grid(c.grid, grid, "gram_schmidt");

    const Eigen::MatrixXd g = gram_matrix(curves);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmax > 0.0) || lmin <= lmax / max_condition)
        throw DegenerateBasisError(
            fmt::format("Gram matrix of {} curves is rank deficient (eigenvalues {} .. {})", curves.size(), lmin, lmax));

    const Eigen::VectorXd& w = grid->weights();
    std::vector<Curve> out;
    out.reserve(curves.size());
    for (const auto& c : curves) {
        Eigen::VectorXd v = c.values;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : out) v -= (v.cwiseProduct(w).dot(q.values)) * q.values;
        const double norm = std::sqrt(v.cwiseProduct(w).dot(v));
        if (!(norm > 0.0)) throw DegenerateBasisError("zero-norm residual during orthogonalization");
        v /= norm;
        sign_normalize(v);
        out.emplace_back(grid, std::move(v));
    }
    return out;
}

}  // namespace fsdr
