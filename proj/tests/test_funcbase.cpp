#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fsdr/funcbase.hpp"
#include "support.hpp"

using namespace fsdr;
using fsdr::gen::mix;
using fsdr::gen::random_curve;
using fsdr::gen::random_curves;
using fsdr::gen::random_grid;
using std::numbers::pi;

namespace {

const GridPtr g100 = Grid::uniform(100);

Curve fn(double (*f)(double)) { return Curve::from_function(g100, f); }

double sin3(double t) { return std::sin(3 * pi * t / 2); }
double sin5(double t) { return std::sin(5 * pi * t / 2); }

}  // namespace

TEST(Grid, TrapezoidWeightsSumToLength) {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        const auto g = random_grid(static_cast<std::size_t>(gen::uniform_int(2, 150, rng)), rng);
        EXPECT_NEAR(g->weights().sum(), g->length(), 1e-12);
        EXPECT_GT(g->weights().minCoeff(), 0.0);
    }
    EXPECT_NEAR(g100->weights().sum(), 1.0, 1e-12);
    EXPECT_EQ((*g100)[0], 0.0);
    EXPECT_EQ((*g100)[99], 1.0);
}

TEST(Grid, RejectsBadPoints) {
    EXPECT_THROW(Grid({0.0}), PreconditionError);
    EXPECT_THROW(Grid({0.0, 0.5, 0.5}), PreconditionError);
    EXPECT_THROW(Grid({-0.1, 0.5}), PreconditionError);
    EXPECT_THROW(Grid({0.2, 1.5}), PreconditionError);
}

TEST(Curve, RejectsWrongLengthAndNonFinite) {
    EXPECT_THROW(Curve(g100, Eigen::VectorXd::Zero(3)), PreconditionError);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(100);
    v[4] = std::nan("");
    EXPECT_THROW(Curve(g100, v), PreconditionError);
}

TEST(InnerProduct, Examples) {
    const Curve one = Curve::from_function(g100, [](double) { return 1.0; });
    EXPECT_NEAR(inner_product(one, one), 1.0, 1e-12);
    EXPECT_NEAR(inner_product(fn(sin3), fn(sin3)), 0.5, 1e-6);
    EXPECT_NEAR(inner_product(fn(sin3), fn(sin5)), 0.0, 1e-6);
}

TEST(InnerProduct, SymmetricAndBilinear) {
    Rng rng(12);
    for (int rep = 0; rep < 100; ++rep) {
        const auto g = random_grid(37, rng);
        const Curve f = random_curve(g, rng), h = random_curve(g, rng), k = random_curve(g, rng);
        const double a = gen::uniform(-3, 3, rng);
        EXPECT_NEAR(inner_product(f, h), inner_product(h, f), 1e-12);
        const Curve lin(g, a * f.values + k.values);
        EXPECT_NEAR(inner_product(lin, h), a * inner_product(f, h) + inner_product(k, h), 1e-10);
    }
}

TEST(InnerProduct, GridMismatch) {
    const auto other = Grid::uniform(50);
    const Curve a = Curve::from_function(g100, sin3);
    const Curve b = Curve::from_function(other, sin3);
    EXPECT_THROW(inner_product(a, b), GridMismatchError);
    // equal points on distinct grid objects are the same grid
    const Curve c = Curve::from_function(Grid::uniform(100), sin3);
    EXPECT_NO_THROW(inner_product(a, c));
}

TEST(InnerProduct, ExactForPiecewiseLinearIntegrands) {
    Rng rng(13);
    for (int rep = 0; rep < 100; ++rep) {
        const auto g = random_grid(static_cast<std::size_t>(gen::uniform_int(2, 60, rng)), rng);
        const Curve f = random_curve(g, rng);
        const Curve one(g, Eigen::VectorXd::Ones(f.size()));
        // the interpolant of f integrated on a 7x refinement of the grid
        std::vector<double> fine;
        for (std::size_t i = 0; i + 1 < g->size(); ++i)
            for (int s = 0; s < 7; ++s) fine.push_back((*g)[i] + s * ((*g)[i + 1] - (*g)[i]) / 7.0);
        fine.push_back(g->back());
        const auto fg = std::make_shared<const Grid>(fine);
        const Curve ff = resample(f, fg);
        const Curve fone(fg, Eigen::VectorXd::Ones(ff.size()));
        EXPECT_NEAR(inner_product(f, one), inner_product(ff, fone), 1e-12);
    }
}

TEST(WeightedInnerProduct, IdentityKernelReducesToInnerProduct) {
    Rng rng(14);
    const auto g = random_grid(40, rng);
    const Curve f = random_curve(g, rng), h = random_curve(g, rng);
    const Kernel2D delta(g, g->weights().cwiseInverse().asDiagonal().toDenseMatrix());
    EXPECT_NEAR(weighted_inner_product(f, h, delta), inner_product(f, h), 1e-10);
}

TEST(WeightedInnerProduct, RankOneAndDefiniteness) {
    Rng rng(15);
    const Curve phi0 = fn(sin3);
    const Curve phi(g100, phi0.values / l2_norm(phi0));
    const Kernel2D a(g100, phi.values * phi.values.transpose());
    for (int rep = 0; rep < 20; ++rep) {
        const Curve f = random_curve(g100, rng), h = random_curve(g100, rng);
        EXPECT_NEAR(weighted_inner_product(f, h, a), inner_product(f, phi) * inner_product(phi, h), 1e-10);
        const Eigen::MatrixXd m = gen::gaussian_matrix(100, 100, rng);
        const Kernel2D pd(g100, m * m.transpose() + Eigen::MatrixXd::Identity(100, 100));
        EXPECT_GT(weighted_inner_product(f, f, pd), 0.0);
    }
}

TEST(WeightedInnerProduct, AsymmetricKernelRejected) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(100, 100);
    m(0, 1) = 1.0;
    const Curve f = fn(sin3);
    EXPECT_THROW(weighted_inner_product(f, f, Kernel2D(g100, m)), PreconditionError);
    EXPECT_NO_THROW(weighted_inner_product(f, f, Kernel2D(g100, m), false));
}

TEST(ProjectionKernel, Examples) {
    const Curve u(g100, fn(sin3).values / l2_norm(fn(sin3)));
    const Curve v(g100, fn(sin5).values / l2_norm(fn(sin5)));
    const std::vector<Curve> one{u};
    const auto p1 = projection_kernel(one);
    EXPECT_NEAR((p1.values - u.values * u.values.transpose()).cwiseAbs().maxCoeff(), 0.0, 1e-14);
    EXPECT_EQ(hs_norm(projection_kernel({}, g100)), 0.0);
    const auto b2 = gram_schmidt(std::vector<Curve>{u, v});
    EXPECT_NEAR(hs_norm(projection_kernel(b2)), std::sqrt(2.0), 1e-10);
}

TEST(ProjectionKernel, NonOrthonormalNamesPair) {
    const std::vector<Curve> basis{fn(sin3), fn(sin5)};
    try {
        projection_kernel(basis);
        FAIL() << "expected a precondition error";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("(0, 0)"), std::string::npos) << e.what();
    }
}

TEST(ProjectionKernel, IdempotentUnderComposition) {
    Rng rng(16);
    for (int k = 1; k <= 4; ++k) {
        const auto q = gram_schmidt(random_curves(g100, k, rng));
        const auto p = projection_kernel(q);
        EXPECT_LT((compose(p, p).values - p.values).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_TRUE(p.is_symmetric());
    }
}

TEST(HsDistance, Examples) {
    const auto q = gram_schmidt(std::vector<Curve>{fn(sin3), fn(sin5)});
    const auto p0 = projection_kernel(std::span(q).first(1));
    const auto p1 = projection_kernel(std::span(q).last(1));
    EXPECT_EQ(hs_distance(p0, p0), 0.0);
    EXPECT_NEAR(hs_distance(p0, p1), std::sqrt(2.0), 1e-10);
    Rng rng(17);
    for (int k = 1; k <= 5; ++k) {
        const auto b = gram_schmidt(random_curves(g100, k, rng));
        EXPECT_NEAR(hs_distance(projection_kernel(b), Kernel2D::zero(g100)), std::sqrt(k), 1e-10);
    }
}

TEST(HsDistance, MetricProperties) {
    Rng rng(18);
    for (int rep = 0; rep < 50; ++rep) {
        const auto g = random_grid(30, rng);
        auto proj = [&] { return projection_kernel(gram_schmidt(random_curves(g, gen::uniform_int(1, 3, rng), rng))); };
        const auto a = proj(), b = proj(), c = proj();
        EXPECT_GE(hs_distance(a, b), 0.0);
        EXPECT_NEAR(hs_distance(a, b), hs_distance(b, a), 1e-12);
        EXPECT_LE(hs_distance(a, c), hs_distance(a, b) + hs_distance(b, c) + 1e-12);
    }
}

TEST(HsDistance, InvariantUnderRotationOfBasis) {
    Rng rng(19);
    for (int rep = 0; rep < 30; ++rep) {
        const int k = gen::uniform_int(1, 4, rng);
        const auto g = random_grid(60, rng);
        const auto q = gram_schmidt(random_curves(g, k, rng));
        const auto other = projection_kernel(gram_schmidt(random_curves(g, k, rng)));
        const auto rotated = mix(q, random_orthogonal(k, rng));
        const auto pq = projection_kernel(q);
        const auto pr = projection_kernel(rotated);
        EXPECT_NEAR(hs_distance(pq, pr), 0.0, 1e-8);
        EXPECT_NEAR(hs_distance(pq, other), hs_distance(pr, other), 1e-8);
    }
}

TEST(GramSchmidt, Examples) {
    const Curve f = fn(sin3);
    const auto one = gram_schmidt(std::vector<Curve>{f});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_NEAR((one[0].values - f.values / l2_norm(f)).cwiseAbs().maxCoeff(), 0.0, 1e-12);

    const auto q = gram_schmidt(std::vector<Curve>{fn(sin3), fn(sin5)});
    const auto again = gram_schmidt(q);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR((again[i].values - q[i].values).cwiseAbs().maxCoeff(), 0.0, 1e-12);

    const Curve c1 = Curve::from_function(g100, [](double) { return 1.0; });
    const Curve lin = Curve::from_function(g100, [](double t) { return t; });
    const auto leg = gram_schmidt(std::vector<Curve>{c1, lin});
    EXPECT_NEAR((leg[0].values - c1.values).cwiseAbs().maxCoeff(), 0.0, 1e-12);
    const Curve target = Curve::from_function(g100, [](double t) { return std::sqrt(12.0) * (t - 0.5); });
    // trapezoid norm of a quadratic carries an O(h^2) error
    EXPECT_NEAR((leg[1].values.cwiseAbs() - target.values.cwiseAbs()).cwiseAbs().maxCoeff(), 0.0, 1e-3);
    EXPECT_NEAR(std::abs(inner_product(leg[1], target)), 1.0, 1e-3);
}

TEST(GramSchmidt, OrthonormalOutputAndSameSpan) {
    Rng rng(20);
    for (int rep = 0; rep < 50; ++rep) {
        const auto g = random_grid(45, rng);
        const int k = gen::uniform_int(1, 6, rng);
        const auto in = random_curves(g, k, rng);
        const auto q = gram_schmidt(in);
        EXPECT_LT((gram_matrix(q) - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff(), 1e-10);
        const auto back = projection_kernel(q);
        for (const auto& c : in) {
            const Eigen::VectorXd proj = back.values * g->weights().asDiagonal() * c.values;
            EXPECT_LT((proj - c.values).cwiseAbs().maxCoeff(), 1e-8);
        }
        for (const auto& c : q) {
            Eigen::Index idx = 0;
            c.values.cwiseAbs().maxCoeff(&idx);
            EXPECT_GT(c.values[idx], 0.0);
        }
    }
}

TEST(GramSchmidt, RankDeficientThrows) {
    const Curve f = fn(sin3);
    const Curve twice(g100, 2.0 * f.values);
    EXPECT_THROW(gram_schmidt(std::vector<Curve>{f, twice}), DegenerateBasisError);
    EXPECT_THROW(gram_schmidt(std::vector<Curve>{Curve(g100, Eigen::VectorXd::Zero(100))}), DegenerateBasisError);
}

TEST(Interpolation, LinearAndBilinear) {
    const Curve lin = Curve::from_function(g100, [](double t) { return 2 * t - 1; });
    EXPECT_NEAR(interpolate(lin, 0.3337), 2 * 0.3337 - 1, 1e-12);
    EXPECT_EQ(interpolate(lin, -1.0), -1.0);
    Eigen::MatrixXd m(100, 100);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) m(i, j) = (*g100)[i] + 3 * (*g100)[j];
    const Kernel2D k(g100, m);
    EXPECT_NEAR(interpolate(k, 0.123, 0.77), 0.123 + 3 * 0.77, 1e-12);
    const auto coarse = Grid::uniform(11);
    EXPECT_NEAR(resample(lin, coarse).values[5], 0.0, 1e-12);
}
