#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace fsdr {

struct NelderMeadOptions {
    int max_iterations = 500;
    /// Stop once the spread of simplex values falls below ftol * (|f_best| + 1e-12).
    double ftol = 1e-8;
    double initial_step = 0.3;
    /// Dimension-dependent coefficients (Gao & Han); plain coefficients otherwise.
    bool adaptive = true;
};

struct NelderMeadResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Derivative-free minimization of f over R^d starting from x0.
template <class Fn>
NelderMeadResult nelder_mead(Fn&& f, const Eigen::VectorXd& x0, const NelderMeadOptions& opt = {}) {
    const Eigen::Index d = x0.size();
    NelderMeadResult res;
    if (d == 0) {
        res.x = x0;
        res.value = f(x0);
        res.evaluations = 1;
        res.converged = true;
        return res;
    }
    const double dn = static_cast<double>(d);
    const double alpha = 1.0;
    const double gamma = opt.adaptive ? 1.0 + 2.0 / dn : 2.0;
    const double rho = opt.adaptive ? 0.75 - 1.0 / (2.0 * dn) : 0.5;
    const double sigma = opt.adaptive ? 1.0 - 1.0 / dn : 0.5;

    std::vector<Eigen::VectorXd> pts(static_cast<std::size_t>(d + 1), x0);
    std::vector<double> vals(static_cast<std::size_t>(d + 1));
    for (Eigen::Index i = 0; i < d; ++i) pts[static_cast<std::size_t>(i + 1)][i] += opt.initial_step;
    for (std::size_t i = 0; i < pts.size(); ++i) vals[i] = f(pts[i]);
    res.evaluations = static_cast<int>(d + 1);

    std::vector<std::size_t> order(pts.size());
    auto sort_simplex = [&] {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
        std::vector<Eigen::VectorXd> p2(pts.size());
        std::vector<double> v2(vals.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
            p2[i] = std::move(pts[order[i]]);
            v2[i] = vals[order[i]];
        }
        pts = std::move(p2);
        vals = std::move(v2);
    };

    sort_simplex();
    const auto last = static_cast<std::size_t>(d);
    for (res.iterations = 0; res.iterations < opt.max_iterations; ++res.iterations) {
        if (std::abs(vals[last] - vals[0]) <= opt.ftol * (std::abs(vals[0]) + 1e-12)) {
            res.converged = true;
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
        for (std::size_t i = 0; i < last; ++i) centroid += pts[i];
        centroid /= dn;

        const Eigen::VectorXd xr = centroid + alpha * (centroid - pts[last]);
        const double fr = f(xr);
        ++res.evaluations;
        if (fr < vals[0]) {
            const Eigen::VectorXd xe = centroid + gamma * (xr - centroid);
            const double fe = f(xe);
            ++res.evaluations;
            if (fe < fr) {
                pts[last] = xe;
                vals[last] = fe;
            } else {
                pts[last] = xr;
                vals[last] = fr;
            }
        } else if (fr < vals[last - 1]) {
            pts[last] = xr;
            vals[last] = fr;
        } else {
            const bool outside = fr < vals[last];
            const Eigen::VectorXd xc =
                outside ? Eigen::VectorXd(centroid + rho * (xr - centroid)) : Eigen::VectorXd(centroid + rho * (pts[last] - centroid));
            const double fc = f(xc);
            ++res.evaluations;
            if (fc < (outside ? fr : vals[last])) {
                pts[last] = xc;
                vals[last] = fc;
            } else {
                for (std::size_t i = 1; i < pts.size(); ++i) {
                    pts[i] = pts[0] + sigma * (pts[i] - pts[0]);
                    vals[i] = f(pts[i]);
                }
                res.evaluations += static_cast<int>(d);
            }
        }
        sort_simplex();
    }
    res.x = pts[0];
    res.value = vals[0];
    return res;
}

}  // namespace fsdr
