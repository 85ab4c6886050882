#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "fdiff/limiting.hpp"

using namespace fdiff;

namespace {

// Classical RK4 for the noiseless planar mean system, used as an oracle.
std::array<double, 2> planar_rk4(double x, double y, double A, double B, double T, double h) {
    auto f = [&](double u, double v) {
        return std::array<double, 2>{-u * u * u + u - A * (u - v), -v * v * v + v - B * (u - v)};
    };
    const auto n = static_cast<std::size_t>(std::llround(T / h));
    for (std::size_t i = 0; i < n; ++i) {
        const auto k1 = f(x, y);
        const auto k2 = f(x + 0.5 * h * k1[0], y + 0.5 * h * k1[1]);
        const auto k3 = f(x + 0.5 * h * k2[0], y + 0.5 * h * k2[1]);
        const auto k4 = f(x + h * k3[0], y + h * k3[1]);
        x += h / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]);
        y += h / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]);
    }
    return {x, y};
}

ModelParams horizon_params(double a, double b, double sigma, double dt, double T) {
    ModelParams p = coupled_params(a, b, sigma);
    p.dt = dt;
    p.steps = static_cast<std::size_t>(std::llround(T / dt));
    return p;
}

double noiseless_picard_error(double x0, double y0, double dt) {
    const ModelParams p = horizon_params(2.0, 2.5, 0.0, dt, 5.0);
    PicardOptions opt;
    opt.tol = 1e-12;
    opt.max_iter = 5000;
    const PicardResult r = picard_means(p, InitialCondition::uniform_value(x0, y0), opt);
    EXPECT_EQ(r.copies, 1u);
    const auto stride = static_cast<std::size_t>(std::llround(0.25 / dt));
    double err = 0.0;
    for (std::size_t k = 0; k <= p.steps; k += stride) {
        const auto ref = planar_rk4(x0, y0, 2.0, 2.5, dt * static_cast<double>(k), 1e-4);
        err = std::max({err, std::abs(r.means.mx[k] - ref[0]), std::abs(r.means.my[k] - ref[1])});
    }
    return err;
}

}  // namespace

TEST(PicardMeans, NoiselessFixedPointFollowsPlanarOde) {
    EXPECT_LE(noiseless_picard_error(0.8, 0.8, 0.001), 1e-4);
}

TEST(PicardMeans, NoiselessFixedPointConvergesAtFirstOrder) {
    // Off the diagonal the Euler error is larger but halves with the step.
    for (const auto [x0, y0] : {std::pair{0.8, 0.2}, std::pair{-0.5, 0.9}}) {
        const double coarse = noiseless_picard_error(x0, y0, 0.002);
        const double fine = noiseless_picard_error(x0, y0, 0.001);
        EXPECT_LE(fine, 2e-3);
        EXPECT_NEAR(coarse / fine, 2.0, 0.2) << "start (" << x0 << ", " << y0 << ")";
    }
}

TEST(PicardMeans, ZeroCouplingDecouplesPopulations) {
    ModelParams p = horizon_params(0.0, 0.0, 0.5, 0.005, 1.0);
    p.theta11 = p.theta22 = 0.0;
    PicardOptions opt;
    opt.mc_copies = 20000;
    const PicardResult a = picard_means(p, InitialCondition::uniform_value(0.8, 0.8), opt);
    const PicardResult b = picard_means(p, InitialCondition::uniform_value(0.8, -0.4), opt);
    // Frozen means do not enter the drift: the second iteration reproduces the first.
    ASSERT_EQ(a.residuals.size(), 2u);
    EXPECT_EQ(a.residuals[1], 0.0);
    EXPECT_EQ(a.means.mx, b.means.mx);

    // Independent Monte Carlo of the scalar double-well SDE.
    std::mt19937_64 g(77);
    std::normal_distribution<double> nd;
    constexpr int copies = 20000;
    double s = 0.0, ss = 0.0;
    for (int c = 0; c < copies; ++c) {
        double x = 0.8;
        for (std::size_t k = 0; k < p.steps; ++k) x += p.dt * (-x * x * x + x) + 0.5 * std::sqrt(p.dt) * nd(g);
        s += x;
        ss += x * x;
    }
    const double mean = s / copies;
    const double se = std::sqrt((ss / copies - mean * mean) / copies);
    EXPECT_LT(std::abs(a.means.mx.back() - mean), 4.0 * se);
    EXPECT_LT(std::abs(a.means.my.back() - mean), 4.0 * se);
}

TEST(PicardMeans, NoiselessZeroCouplingIsScalarEuler) {
    ModelParams p = horizon_params(0.0, 0.0, 0.0, 0.01, 3.0);
    p.theta11 = p.theta22 = 0.0;
    const PicardResult r = picard_means(p, InitialCondition::uniform_value(0.3, -1.7));
    double x = 0.3, y = -1.7;
    for (std::size_t k = 0; k <= p.steps; ++k) {
        EXPECT_NEAR(r.means.mx[k], x, 1e-15);
        EXPECT_NEAR(r.means.my[k], y, 1e-15);
        x += p.dt * (-x * x * x + x);
        y += p.dt * (-y * y * y + y);
    }
}

TEST(PicardMeans, ResidualsContractAfterFirstIteration) {
    const ModelParams p = horizon_params(2.0, 2.5, 0.5, 0.005, 1.0);
    PicardOptions opt;
    opt.tol = 1e-12;
    opt.mc_copies = 2000;
    const PicardResult r = picard_means(p, InitialCondition::iid(InitialLaw::uniform(0.7, 0.9), InitialLaw::uniform(0.7, 0.9)), opt);
    ASSERT_GE(r.residuals.size(), 3u);
    for (std::size_t i = 2; i < r.residuals.size(); ++i) EXPECT_LE(r.residuals[i], r.residuals[i - 1]) << "iteration " << i;
    EXPECT_LT(r.residuals.back(), 1e-12);
}

TEST(PicardMeans, DeterministicAndIndependentOfThreads) {
    const ModelParams p = horizon_params(2.0, 7.0, 0.6, 0.005, 1.0);
    PicardOptions opt;
    opt.mc_copies = 5000;
    set_max_threads(1);
    const PicardResult a = picard_means(p, InitialCondition{}, opt);
    set_max_threads(4);
    const PicardResult b = picard_means(p, InitialCondition{}, opt);
    set_max_threads(0);
    EXPECT_EQ(a.means.mx, b.means.mx);
    EXPECT_EQ(a.means.my, b.means.my);
    EXPECT_EQ(a.residuals, b.residuals);
}

TEST(PicardMeans, RejectsBadOptionsAndReportsNonConvergence) {
    const ModelParams p = horizon_params(2.0, 2.5, 0.5, 0.005, 1.0);
    PicardOptions opt;
    opt.tol = 0.0;
    EXPECT_THROW(picard_means(p, InitialCondition{}, opt), ValidationError);
    opt = PicardOptions{};
    opt.mc_copies = 0;
    EXPECT_THROW(picard_means(p, InitialCondition{}, opt), ValidationError);
    opt = PicardOptions{};
    opt.mc_copies = 500;
    opt.max_iter = 2;
    opt.tol = 1e-14;
    try {
        picard_means(p, InitialCondition{}, opt);
        FAIL() << "expected ConvergenceError";
    } catch (const ConvergenceError& e) {
        EXPECT_GT(e.residual(), 0.0);
    }
}

TEST(LimitingPair, NoiselessPathEqualsMeanFunctions) {
    const ModelParams p = horizon_params(2.0, 2.5, 0.0, 0.005, 4.0);
    PicardOptions opt;
    opt.tol = 1e-13;
    opt.max_iter = 1000;
    const MeanFunctions m = picard_means(p, InitialCondition::uniform_value(0.8, 0.3), opt).means;
    const LimitingPath path = simulate_limiting_pair(p, m, 0.8, 0.3, RngStream(1, 0));
    for (std::size_t k = 0; k <= p.steps; ++k) {
        EXPECT_NEAR(path.x[k], m.mx[k], 1e-12);
        EXPECT_NEAR(path.y[k], m.my[k], 1e-12);
    }
}

TEST(LimitingPair, MonteCarloMeanMatchesMeanFunctions) {
    const ModelParams p = horizon_params(2.0, 2.5, 0.5, 0.005, 1.0);
    const MeanFunctions m = picard_means(p, InitialCondition{}).means;
    constexpr std::size_t copies = 10000;
    std::vector<double> xs(copies), ys(copies);
    parallel_for(copies, [&](std::size_t c) {
        const LimitingPath path = simulate_limiting_pair(p, m, 0.8, 0.8, RngStream(913, c));
        xs[c] = path.x.back();
        ys[c] = path.y.back();
    });
    auto check = [&](const std::vector<double>& v, double target) {
        const double mean = mean_of(v);
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double se = std::sqrt(ss / static_cast<double>(copies - 1) / static_cast<double>(copies));
        EXPECT_LT(std::abs(mean - target), 3.0 * se) << "mean " << mean << " target " << target;
    };
    const auto [tx, ty] = m.at(1.0);
    check(xs, tx);
    check(ys, ty);
}

TEST(LimitingPair, ZeroIncrementsReproduceNoiselessFlow) {
    ModelParams p = horizon_params(2.0, 7.0, 0.6, 0.005, 2.0);
    const MeanFunctions m = picard_means(p, InitialCondition{}, PicardOptions{1e-4, 4000, 200, true}).means;
    const std::vector<double> zero(p.steps, 0.0);
    const LimitingPath noisy = simulate_limiting_pair(p, m, 0.1, -0.4, zero, zero);
    p.sigma = 0.0;
    const LimitingPath quiet = simulate_limiting_pair(p, m, 0.1, -0.4, RngStream(5, 5));
    EXPECT_EQ(noisy.x, quiet.x);
    EXPECT_EQ(noisy.y, quiet.y);
}

TEST(LimitingPair, InterpolatesOnCoarserGridAndRejectsShortGrid) {
    ModelParams p = horizon_params(2.0, 2.5, 0.0, 0.005, 1.0);
    MeanFunctions m;
    m.dt = 0.5;
    m.mx = {0.0, 1.0, 2.0};
    m.my = {0.0, 0.0, 0.0};
    EXPECT_DOUBLE_EQ(m.at(0.25).first, 0.5);
    EXPECT_DOUBLE_EQ(m.at(1.0).first, 2.0);
    EXPECT_NO_THROW(simulate_limiting_pair(p, m, 0.0, 0.0, RngStream(1, 1)));
    p.steps = 201;
    EXPECT_THROW(simulate_limiting_pair(p, m, 0.0, 0.0, RngStream(1, 1)), ValidationError);
    EXPECT_THROW(m.at(1.2), ValidationError);
}

TEST(Chaos, CouplingConsumesIdenticalIncrements) {
    // Without any interaction particle 0 and its limiting copy solve the same
    // equation; equal streams make the two paths bit-identical.
    ModelParams q = coupled_params(0.0, 0.0, 0.7, 10, 0.0);
    q.steps = 400;
    MeanFunctions m;
    m.dt = q.dt;
    m.mx.assign(q.steps + 1, 0.0);
    m.my.assign(q.steps + 1, 0.0);
    const ChaosOptions opt;
    EXPECT_EQ(coupled_sup_error(q, opt.ic, m), 0.0);
}

TEST(Chaos, SlopeNearInverseSquareRoot) {
    const ModelParams p = coupled_params(2.0, 2.5, 0.5);
    const ChaosReport r = chaos_error(p, {10, 40, 160, 640}, 200, 1.0);
    EXPECT_NEAR(r.fitted_slope, -0.5, 0.15);
    for (double e : r.errors) EXPECT_GT(e, 0.0);
    int inversions = 0;
    for (std::size_t i = 1; i < r.errors.size(); ++i) {
        if (r.errors[i] > r.errors[i - 1]) {
            ++inversions;
            const double band = 2.0 * std::hypot(r.stderrs[i], r.stderrs[i - 1]);
            EXPECT_LE(r.errors[i] - r.errors[i - 1], band);
        }
    }
    EXPECT_LE(inversions, 1);
}

TEST(Chaos, DeterministicGivenSeed) {
    const ModelParams p = coupled_params(2.0, 7.0, 0.6);
    ChaosOptions opt;
    opt.picard.mc_copies = 4000;
    const ChaosReport a = chaos_error(p, {10, 20}, 10, 0.5, opt);
    const ChaosReport b = chaos_error(p, {10, 20}, 10, 0.5, opt);
    EXPECT_EQ(a.errors, b.errors);
    EXPECT_EQ(a.fitted_slope, b.fitted_slope);
}

TEST(Chaos, RejectsBadSystemSizes) {
    const ModelParams p = coupled_params(2.0, 2.5, 0.5);
    EXPECT_THROW(chaos_error(p, {11, 40}, 5, 1.0), ValidationError);
    EXPECT_THROW(chaos_error(p, {40, 10}, 5, 1.0), ValidationError);
    EXPECT_THROW(chaos_error(p, {}, 5, 1.0), ValidationError);
    EXPECT_THROW(chaos_error(p, {10, 40}, 0, 1.0), ValidationError);
}

TEST(LogLogSlope, ExactPowerLaw) {
    const std::vector<double> x{1, 2, 4, 8}, y{3, 3 / std::sqrt(2.0), 1.5, 3 / std::sqrt(8.0)};
    EXPECT_NEAR(loglog_slope(x, y), -0.5, 1e-14);
    EXPECT_THROW(loglog_slope(std::vector<double>{1}, std::vector<double>{1}), AnalysisError);
}
