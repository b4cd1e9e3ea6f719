#pragma once

// Seeded generators shared by the property tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "fsdr/funcbase.hpp"
#include "fsdr/random.hpp"

namespace fsdr::gen {

inline Eigen::MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
    return m;
}

inline int uniform_int(int lo, int hi, Rng& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline double uniform(double lo, double hi, Rng& rng) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Strictly increasing grid in [0,1] with random spacing; endpoints included.
inline GridPtr random_grid(std::size_t p, Rng& rng) {
    std::vector<double> gaps(p - 1);
    for (auto& g : gaps) g = uniform(0.2, 1.0, rng);
    double total = 0.0;
    for (double g : gaps) total += g;
    std::vector<double> pts(p, 0.0);
    for (std::size_t i = 1; i < p; ++i) pts[i] = pts[i - 1] + gaps[i - 1] / total;
    pts.back() = 1.0;
    return std::make_shared<const Grid>(pts);
}

inline Curve random_curve(const GridPtr& grid, Rng& rng) {
    return Curve(grid, gaussian_matrix(static_cast<Eigen::Index>(grid->size()), 1, rng).col(0));
}

inline std::vector<Curve> random_curves(const GridPtr& grid, int k, Rng& rng) {
    std::vector<Curve> out;
    for (int i = 0; i < k; ++i) out.push_back(random_curve(grid, rng));
    return out;
}

/// Curves whose columns are mixed by the matrix q: out_j = sum_i q(i,j) in_i.
inline std::vector<Curve> mix(const std::vector<Curve>& in, const Eigen::MatrixXd& q) {
    std::vector<Curve> out;
    for (Eigen::Index j = 0; j < q.cols(); ++j) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(in.front().size());
        for (Eigen::Index i = 0; i < q.rows(); ++i) v += q(i, j) * in[static_cast<std::size_t>(i)].values;
        out.emplace_back(in.front().grid, v);
    }
    return out;
}

}  // namespace fsdr::gen
