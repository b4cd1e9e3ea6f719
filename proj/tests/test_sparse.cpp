#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "fsdr/fpca.hpp"
#include "fsdr/pipeline.hpp"
#include "fsdr/simlab.hpp"
#include "fsdr/sparse.hpp"
#include "support.hpp"

using namespace fsdr;
using std::numbers::pi;

namespace {

const GridPtr g100 = Grid::uniform(100);

SparseDesign noiseless() {
    SparseDesign d;
    d.noise_sd = 0.0;
    return d;
}

/// Curves s_i * phi(t) with s_i ~ N(0, v).
DenseFunctionalSample rank_one(Eigen::Index n, const Curve& phi, double v, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(v));
    DenseFunctionalSample s{g100, Eigen::MatrixXd(n, 100), Eigen::VectorXd::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) s.curves.row(i) = normal(rng) * phi.values.transpose();
    return s;
}

double variance(const Eigen::VectorXd& x) { return (x.array() - x.mean()).square().mean(); }

Components sparse_parts(const SparseFunctionalSample& s, double fve = 0.99) {
    ComponentOptions o;
    o.fve = fve;
    return sparse_components(s, g100, o);
}

}  // namespace

TEST(Bandwidths, RuleOfThumb) {
    SparseFunctionalSample s;
    for (int i = 0; i < 100; ++i) s.subjects.push_back({Eigen::VectorXd::LinSpaced(10, 0, 1), Eigen::VectorXd::Zero(10)});
    const auto b = default_bandwidths(s);
    EXPECT_NEAR(b.h_mu, 1.5 * std::pow(1000.0, -0.2), 1e-15);
    EXPECT_NEAR(b.h_sigma, 1.5 * std::pow(1000.0, -1.0 / 6.0), 1e-15);
    EXPECT_LT(b.h_mu, 1.0);
    EXPECT_GT(b.h_mu, 0.0);
}

TEST(SmoothMean, ReproducesConstantsAndLines) {
    for (double c : {-2.0, 0.0, 3.5}) {
        DenseFunctionalSample flat{g100, Eigen::MatrixXd::Constant(60, 100, c), {}};
        const auto sp = sparsify(flat, 32, noiseless());
        EXPECT_LT((smooth_mean(sp, g100, 0.1).values.array() - c).abs().maxCoeff(), 1e-10);
    }
    DenseFunctionalSample line{g100, Eigen::MatrixXd(60, 100), {}};
    for (int j = 0; j < 100; ++j) line.curves.col(j).setConstant(0.7 - 1.3 * (*g100)[static_cast<std::size_t>(j)]);
    const auto sp = sparsify(line, 33, noiseless());
    const auto mu = smooth_mean(sp, g100, 0.08);
    for (int j = 0; j < 100; ++j) EXPECT_NEAR(mu.values[j], 0.7 - 1.3 * (*g100)[static_cast<std::size_t>(j)], 1e-8);
}

TEST(SmoothMean, BrownianMeanNearZero) {
    const auto bm = gen_brownian(200, g100, 34);
    const auto sp = sparsify(bm, 35);
    const auto b = default_bandwidths(sp);
    EXPECT_LE(smooth_mean(sp, g100, b.h_mu).values.cwiseAbs().maxCoeff(), 0.15);
}

TEST(SmoothMean, EmptyWindowNamesPoint) {
    SparseFunctionalSample s;
    for (int i = 0; i < 20; ++i) s.subjects.push_back({Eigen::VectorXd::LinSpaced(5, 0.0, 0.3), Eigen::VectorXd::Ones(5)});
    try {
        smooth_mean(s, g100, 0.05);
        FAIL() << "expected a bandwidth error";
    } catch (const BandwidthError& e) {
        EXPECT_NE(std::string(e.what()).find("widen bandwidth"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("0.3"), std::string::npos) << e.what();
    }
}

TEST(SmoothCovariance, RankOneOracle) {
    const Curve phi = Curve::from_function(g100, [](double t) { return std::sqrt(2.0) * std::sin(pi * t / 2); });
    const auto dense = rank_one(200, phi, 1.0, 36);
    const auto sp = sparsify(dense, 37, noiseless());
    const auto b = default_bandwidths(sp);
    const auto mu = smooth_mean(sp, g100, b.h_mu);
    const auto cov = smooth_covariance(sp, mu, g100, b.h_sigma);
    const double v = variance(dense.curves.col(99)) / 2.0;
    const Kernel2D truth(g100, v * phi.values * phi.values.transpose());
    EXPECT_LE(hs_distance(cov, truth) / hs_norm(truth), 0.15);
    EXPECT_EQ((cov.values - cov.values.transpose()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(SmoothCovariance, ConstantCurvesGiveFlatSurface) {
    Rng rng(38);
    std::normal_distribution<double> normal(0.0, 1.0);
    DenseFunctionalSample dense{g100, Eigen::MatrixXd(200, 100), {}};
    for (int i = 0; i < 200; ++i) dense.curves.row(i).setConstant(normal(rng));
    const auto sp = sparsify(dense, 39, noiseless());
    const auto b = default_bandwidths(sp);
    const auto cov = smooth_covariance(sp, smooth_mean(sp, g100, b.h_mu), g100, b.h_sigma);
    const double v = variance(dense.curves.col(0));
    EXPECT_LE((cov.values.array() - v).abs().maxCoeff(), 0.15 * v);
}

TEST(SmoothCovariance, NeedsOffDiagonalPairs) {
    SparseFunctionalSample s;
    for (int i = 0; i < 50; ++i) s.subjects.push_back({Eigen::VectorXd::Constant(1, i / 49.0), Eigen::VectorXd::Ones(1)});
    const Curve mu(g100, Eigen::VectorXd::Ones(100));
    EXPECT_THROW(smooth_covariance(s, mu, g100, 0.2), BandwidthError);
}

TEST(NoiseVariance, NoiselessNearZero) {
    const auto sp = sparsify(gen_brownian(200, g100, 40), 41, noiseless());
    const auto c = sparse_parts(sp);
    EXPECT_LE(c.noise.sigma2, 0.005);
}

TEST(NoiseVariance, RecoversDesignNoise) {
    int inside = 0;
    const int reps = 100;
    for (int r = 0; r < reps; ++r) {
        const auto sp = sparsify(gen_brownian(200, g100, derive_seed(42, {static_cast<std::uint64_t>(r)})),
                                 derive_seed(43, {static_cast<std::uint64_t>(r)}));
        const auto b = default_bandwidths(sp);
        const auto mu = smooth_mean(sp, g100, b.h_mu);
        const auto cov = smooth_covariance(sp, mu, g100, b.h_sigma);
        const double s2 = estimate_noise_variance(sp, mu, cov, g100, b.h_mu).sigma2;
        if (s2 >= 0.005 && s2 <= 0.02) ++inside;
    }
    EXPECT_GE(inside, 90);
}

TEST(NoiseVariance, TruncatedAtZero) {
    const auto sp = sparsify(gen_brownian(100, g100, 44), 45);
    const auto b = default_bandwidths(sp);
    const auto mu = smooth_mean(sp, g100, b.h_mu);
    const Kernel2D huge(g100, Eigen::MatrixXd::Constant(100, 100, 50.0));
    EXPECT_EQ(estimate_noise_variance(sp, mu, huge, g100, b.h_mu).sigma2, 0.0);
}

TEST(Pace, SingleObservationClosedForm) {
    const Curve phi = Curve::from_function(g100, [](double t) { return std::sqrt(2.0) * std::sin(pi * t / 2); });
    EigenSystem es;
    es.eigenvalues = Eigen::VectorXd::Constant(1, 0.4);
    es.eigenfunctions = {phi};
    es.mean = Curve::from_function(g100, [](double t) { return 0.1 * t; });
    es.truncation = 1;
    const double t = 0.37, u = 0.9, s2 = 0.02;
    SparseFunctionalSample s;
    s.subjects.push_back({Eigen::VectorXd::Constant(1, t), Eigen::VectorXd::Constant(1, u)});
    const double f = interpolate(phi, t), m = interpolate(es.mean, t);
    const double expect = 0.4 * f * (u - m) / (0.4 * f * f + std::max(s2, 1e-6) + 1e-8);
    EXPECT_NEAR(pace_scores(s, es, NoiseModel{s2}).scores(0, 0), expect, 1e-12);
    const double noiseless = pace_scores(s, es, NoiseModel{0.0}).scores(0, 0);
    EXPECT_LT(std::abs(pace_scores(s, es, NoiseModel{s2}).scores(0, 0)), std::abs(noiseless));
}

TEST(Pace, DenseNoiselessMatchesExactScores) {
    const auto bm = gen_brownian(300, g100, 46);
    const auto es = fpca(bm, 1.0);
    const auto exact = exact_scores(bm, es);
    SparseFunctionalSample s;
    for (int i = 0; i < 20; ++i)
        s.subjects.push_back({Eigen::Map<const Eigen::VectorXd>(g100->points().data(), 100), bm.curves.row(i).transpose()});
    const auto pace = pace_scores(s, es, NoiseModel{0.0});
    EXPECT_EQ(pace.source, ScoreSource::pace);
    EXPECT_LT((pace.scores - exact.scores.topRows(20)).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Pace, MeanMeasurementsGiveZeroScores) {
    const auto sp = sparsify(gen_brownian(150, g100, 47), 48);
    auto c = sparse_parts(sp);
    SparseFunctionalSample at_mean = sp;
    for (auto& subj : at_mean.subjects)
        for (Eigen::Index j = 0; j < subj.size(); ++j) subj.values[j] = interpolate(c.eigensystem.mean, subj.times[j]);
    EXPECT_LT(pace_scores(at_mean, c.eigensystem, c.noise).scores.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Pace, LinearInMeasurements) {
    const auto sp = sparsify(gen_brownian(150, g100, 49), 50);
    const auto c = sparse_parts(sp);
    Rng rng(51);
    auto centered = [&](const SparseFunctionalSample& s) {
        SparseFunctionalSample out = s;
        for (auto& subj : out.subjects)
            for (Eigen::Index j = 0; j < subj.size(); ++j) subj.values[j] -= interpolate(c.eigensystem.mean, subj.times[j]);
        return out;
    };
    auto shifted = [&](SparseFunctionalSample s) {
        for (auto& subj : s.subjects)
            for (Eigen::Index j = 0; j < subj.size(); ++j) subj.values[j] += interpolate(c.eigensystem.mean, subj.times[j]);
        return s;
    };
    SparseFunctionalSample other = sp;
    for (auto& subj : other.subjects) subj.values = gen::gaussian_matrix(subj.size(), 1, rng).col(0);
    const auto a = centered(sp), b = centered(other);
    SparseFunctionalSample combo = a;
    for (std::size_t i = 0; i < combo.subjects.size(); ++i) combo.subjects[i].values = 2.0 * a.subjects[i].values - 0.5 * b.subjects[i].values;
    const auto sa = pace_scores(shifted(a), c.eigensystem, c.noise).scores;
    const auto sb = pace_scores(shifted(b), c.eigensystem, c.noise).scores;
    const auto sc = pace_scores(shifted(combo), c.eigensystem, c.noise).scores;
    EXPECT_LT((sc - (2.0 * sa - 0.5 * sb)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Pace, ShrinksSingleObservationSubjects) {
    const auto sp = sparsify(gen_brownian(200, g100, 52), 53);
    const auto c = sparse_parts(sp);
    ASSERT_GT(c.noise.sigma2, 0.0);
    SparseFunctionalSample singles;
    Rng rng(54);
    for (int i = 0; i < 30; ++i)
        singles.subjects.push_back({Eigen::VectorXd::Constant(1, gen::uniform(0.05, 1.0, rng)),
                                    Eigen::VectorXd::Constant(1, gen::uniform(-2, 2, rng))});
    const auto noisy = pace_scores(singles, c.eigensystem, c.noise).scores;
    const auto clean = pace_scores(singles, c.eigensystem, NoiseModel{0.0}).scores;
    for (Eigen::Index i = 0; i < noisy.rows(); ++i)
        for (Eigen::Index j = 0; j < noisy.cols(); ++j)
            if (clean(i, j) != 0.0) {
                EXPECT_LT(std::abs(noisy(i, j)), std::abs(clean(i, j)));
            }
}

TEST(Pace, RecoversLeadingKarhunenLoeveScore) {
    const Curve phi1 = Curve::from_function(g100, [](double t) { return std::sqrt(2.0) * std::sin(pi * t / 2); });
    int good = 0;
    const int reps = 30;
    for (int r = 0; r < reps; ++r) {
        const auto bm = gen_brownian(200, g100, derive_seed(55, {static_cast<std::uint64_t>(r)}));
        const auto sp = sparsify(bm, derive_seed(56, {static_cast<std::uint64_t>(r)}));
        const auto c = sparse_parts(sp);
        const Eigen::VectorXd truth = bm.curves * g100->weights().cwiseProduct(phi1.values);
        const Eigen::VectorXd est = c.scores.scores.col(0);
        const Eigen::VectorXd a = truth.array() - truth.mean(), b = est.array() - est.mean();
        const double corr = std::abs(a.dot(b)) / (a.norm() * b.norm());
        if (corr > 0.85) ++good;
    }
    EXPECT_GE(good, static_cast<int>(std::ceil(0.9 * reps)));
}

TEST(BandwidthCv, PicksACandidate) {
    const auto sp = sparsify(gen_brownian(100, g100, 57), 58);
    const auto b = default_bandwidths(sp);
    const std::vector<double> hm{0.5 * b.h_mu, b.h_mu, 1.5 * b.h_mu};
    const auto cv = cv_mean_bandwidth(sp, hm, 59);
    EXPECT_NE(std::find(hm.begin(), hm.end(), cv.chosen), hm.end());
    const auto mu = smooth_mean(sp, g100, cv.chosen);
    const std::vector<double> hs{0.75 * b.h_sigma, b.h_sigma};
    const auto cc = cv_covariance_bandwidth(sp, mu, hs, 59);
    EXPECT_NE(std::find(hs.begin(), hs.end(), cc.chosen), hs.end());
    EXPECT_EQ(cv_mean_bandwidth(sp, hm, 59).chosen, cv.chosen);

    ComponentOptions o;
    o.cv_bandwidths = true;
    o.seed = 60;
    const auto comps = sparse_components(sp, g100, o);
    EXPECT_GT(comps.bandwidths.h_mu, 0.0);
    EXPECT_GT(comps.eigensystem.truncation, 0);
}
