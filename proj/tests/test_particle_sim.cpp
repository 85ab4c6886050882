#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "fdiff/particles.hpp"
#include "fdiff/phase.hpp"
#include "fdiff/rhythm.hpp"

using namespace fdiff;

namespace {

ParticleState random_state(std::size_t n1, std::size_t n2, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> d(0.3, 1.5);
    ParticleState s;
    for (std::size_t i = 0; i < n1; ++i) s.x.push_back(d(g));
    for (std::size_t i = 0; i < n2; ++i) s.y.push_back(d(g));
    return s;
}

// Kahan-compensated sum in extended precision.
long double compensated_sum(const std::vector<double>& v) {
    long double s = 0.0L, c = 0.0L;
    for (double x : v) {
        const long double y = static_cast<long double>(x) - c;
        const long double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

}  // namespace

TEST(EmpiricalMeans, ConstantState) {
    ParticleState s;
    s.x.assign(10, 0.8);
    s.y.assign(7, 0.8);
    const auto [m1, m2] = empirical_means(s);
    EXPECT_NEAR(m1, 0.8, 1e-15);
    EXPECT_NEAR(m2, 0.8, 1e-15);
}

TEST(EmpiricalMeans, TwoPointAverage) {
    ParticleState s;
    s.x = {1, -1};
    s.y = {2, 0};
    const auto [m1, m2] = empirical_means(s);
    EXPECT_EQ(m1, 0.0);
    EXPECT_EQ(m2, 1.0);
}

TEST(EmpiricalMeans, AgreesWithCompensatedSummation) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ParticleState s = random_state(5000, 3001, seed);
        const auto [m1, m2] = empirical_means(s);
        const long double r1 = compensated_sum(s.x) / s.x.size();
        const long double r2 = compensated_sum(s.y) / s.y.size();
        EXPECT_LE(std::abs(m1 - static_cast<double>(r1)), 1e-12 * std::abs(static_cast<double>(r1)));
        EXPECT_LE(std::abs(m2 - static_cast<double>(r2)), 1e-12 * std::abs(static_cast<double>(r2)));
    }
}

TEST(EmpiricalMeans, EmptyPopulationRejected) {
    ParticleState s;
    s.x = {1.0};
    EXPECT_THROW(empirical_means(s), ValidationError);
}

TEST(EmStep, EquilibriumAtOneIsFixedWithoutNoise) {
    ModelParams p = coupled_params(2.0, 2.5, 0.0, 20);
    ParticleState s;
    s.x.assign(10, 1.0);
    s.y.assign(10, 1.0);
    const ParticleState next = em_step(s, p, std::uint64_t{0});
    EXPECT_EQ(next.x, s.x);
    EXPECT_EQ(next.y, s.y);
    EXPECT_DOUBLE_EQ(next.t, p.dt);
}

TEST(EmStep, CommonValueMovesByDoubleWellDrift) {
    ModelParams p = coupled_params(2.0, 2.5, 0.0, 20);
    ParticleState s;
    s.x.assign(10, 0.8);
    s.y.assign(10, 0.8);
    const ParticleState next = em_step(s, p, std::uint64_t{0});
    for (double v : next.x) EXPECT_NEAR(v, 0.80144, 1e-14);
    for (double v : next.y) EXPECT_NEAR(v, 0.80144, 1e-14);
}

TEST(EmStep, NegatedStateGivesNegatedTrajectory) {
    ModelParams p = coupled_params(2.0, 7.0, 0.0, 40);
    ParticleState a = random_state(20, 20, 9);
    ParticleState b = a;
    for (double& v : b.x) v = -v;
    for (double& v : b.y) v = -v;
    for (std::uint64_t k = 0; k < 200; ++k) {
        a = em_step(std::move(a), p, k);
        b = em_step(std::move(b), p, k);
    }
    for (std::size_t i = 0; i < a.x.size(); ++i) EXPECT_EQ(a.x[i], -b.x[i]);
    for (std::size_t i = 0; i < a.y.size(); ++i) EXPECT_EQ(a.y[i], -b.y[i]);
}

TEST(EmStep, MatchesDriftFormulaWithInjectedIncrements) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 6);
    const ParticleState s = random_state(3, 3, 4);
    const std::vector<double> xi_x{0.3, -1.2, 2.0}, xi_y{-0.7, 0.1, 0.0};
    const ParticleState n = em_step(s, p, xi_x, xi_y);
    const double m1 = (s.x[0] + s.x[1] + s.x[2]) / 3.0, m2 = (s.y[0] + s.y[1] + s.y[2]) / 3.0;
    const double sq = 0.5 * std::sqrt(p.dt);
    for (int j = 0; j < 3; ++j) {
        const double x = s.x[j], y = s.y[j];
        const double ex = x + p.dt * (-x * x * x + x - 0.5 * 8 * (x - m1) - 0.5 * 4 * (x - m2)) + sq * xi_x[j];
        const double ey = y + p.dt * (-y * y * y + y - 0.5 * (-5) * (y - m1) - 0.5 * 8 * (y - m2)) + sq * xi_y[j];
        EXPECT_NEAR(n.x[j], ex, 1e-14);
        EXPECT_NEAR(n.y[j], ey, 1e-14);
    }
}

TEST(EmStep, DivergenceReportsStep) {
    ModelParams p = coupled_params(2.0, 2.5, 0.0, 2);
    p.dt = 0.5;
    ParticleState s;
    s.x = {50.0};
    s.y = {50.0};
    try {
        for (std::uint64_t k = 0; k < 10; ++k) s = em_step(std::move(s), p, k);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.step(), 2u);  // 50 -> -62425 -> overflow
    }
}

TEST(SimulateParticles, BufferedStreamsMatchStepwiseDraws) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 20);
    p.steps = 31;
    const InitialCondition ic = InitialCondition::iid(InitialLaw::uniform(0.7, 0.9), InitialLaw::normal(0.8, 0.1));
    const ParticleRun run = simulate_particles(p, ic, 1);
    ParticleState s = ic.sample(p.n1, p.n2, p.seed);
    for (std::uint64_t k = 0; k < p.steps; ++k) s = em_step(std::move(s), p, k);
    EXPECT_EQ(run.final_state.x, s.x);
    EXPECT_EQ(run.final_state.y, s.y);
}

TEST(SimulateParticles, SamplingLayout) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 10);
    p.steps = 100;
    const ParticleRun run = simulate_particles(p, InitialCondition{}, 20);
    EXPECT_EQ(run.means.size(), 6u);
    EXPECT_DOUBLE_EQ(run.means.dt_sample, 0.1);
    EXPECT_DOUBLE_EQ(run.means.m1[0], 0.8);
    p.steps = 101;
    EXPECT_EQ(simulate_particles(p, InitialCondition{}, 20).means.size(), 6u);
    EXPECT_THROW(simulate_particles(p, InitialCondition{}, 0), ValidationError);
}

TEST(SimulateParticles, DeterministicGivenSeed) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 100);
    p.steps = 500;
    const auto a = simulate_particles(p, InitialCondition{}, 5).means;
    const auto b = simulate_particles(p, InitialCondition{}, 5).means;
    EXPECT_EQ(a, b);
    p.seed = 2;
    EXPECT_NE(simulate_particles(p, InitialCondition{}, 5).means, a);
}

TEST(SimulateParticles, IndependentOfWorkerCount) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 50);
    p.steps = 200;
    set_max_threads(1);
    const auto a = simulate_replicas(p, InitialCondition{}, 4, 10);
    set_max_threads(4);
    const auto b = simulate_replicas(p, InitialCondition{}, 4, 10);
    set_max_threads(0);
    EXPECT_EQ(a, b);
}

TEST(SimulateParticles, NoiselessRunSettlesOnAnEquilibrium) {
    ModelParams p = coupled_params(2.0, 2.5, 0.0);
    p.steps = 40000;
    const ParticleRun run = simulate_particles(p, InitialCondition{}, 100);
    const auto [m1, m2] = empirical_means(run.final_state);
    const auto f = vector_field(m1, m2, 2.0, 2.5);
    EXPECT_LT(std::abs(f[0]), 1e-8);
    EXPECT_LT(std::abs(f[1]), 1e-8);
    EXPECT_THROW(poincare_periods(run.means, 0.1 * p.horizon()), AnalysisError);
}

TEST(SimulateParticles, IntermediateNoiseOscillates) {
    // Shorter than the full reference run: 1e5 steps already hold > 20 returns.
    ModelParams p = coupled_params(2.0, 2.5, 0.5);
    p.steps = 100000;
    const ParticleRun run = simulate_particles(p, InitialCondition{}, 20);
    EXPECT_GE(poincare_crossings(run.means, 0.1 * p.horizon()).size(), 10u);
}

TEST(SimulateParticles, StrongNoiseStaysNearOriginWithoutCycle) {
    ModelParams p = coupled_params(2.0, 2.5, 5.0);
    p.steps = 100000;
    const ParticleRun run = simulate_particles(p, InitialCondition{}, 20);
    const double burn = 0.1 * p.horizon();
    // Near the origin: well inside the unit distance to the noiseless
    // equilibria at +-(1, 1), both at peak and on average.
    double peak = 0.0, ss = 0.0;
    std::size_t count = 0;
    for (std::size_t i = static_cast<std::size_t>(burn / run.means.dt_sample); i < run.means.size(); ++i, ++count) {
        peak = std::max({peak, std::abs(run.means.m1[i]), std::abs(run.means.m2[i])});
        ss += run.means.m1[i] * run.means.m1[i] + run.means.m2[i] * run.means.m2[i];
    }
    EXPECT_LT(peak, 1.0);
    EXPECT_LT(std::sqrt(ss / static_cast<double>(count)), 0.25) << "peak " << peak;
    const auto c = poincare_crossings(run.means, burn);
    if (c.size() >= 2) {
        const auto e = poincare_periods(run.means, burn);
        EXPECT_GT(e.std_period, 0.5 * e.mean_period);
    }
}

TEST(SimulateParticles, MeanConsistencyWithScalarOde) {
    // All particles start at one value without noise: the interaction terms
    // vanish and each mean follows the explicit Euler map of dx = -x^3 + x.
    ModelParams p = coupled_params(2.0, 2.5, 0.0, 200);
    p.steps = 2000;
    const ParticleRun run = simulate_particles(p, InitialCondition::uniform_value(0.3, 0.3), 1);
    double x = 0.3;
    for (std::size_t k = 0; k <= p.steps; ++k) {
        EXPECT_NEAR(run.means.m1[k], x, 1e-9);
        EXPECT_NEAR(run.means.m2[k], x, 1e-9);
        x += p.dt * (-x * x * x + x);
    }
    for (double v : run.final_state.x) EXPECT_EQ(v, run.final_state.x[0]);
}

TEST(SimulateParticles, ExchangeableUnderConsistentPermutation) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5, 16);
    ParticleState a = random_state(8, 8, 21);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(5));
    ParticleState b = a;
    for (std::size_t j = 0; j < 8; ++j) {
        b.x[j] = a.x[perm[j]];
        b.y[j] = a.y[perm[j]];
    }
    std::vector<double> xa(8), ya(8), xb(8), yb(8);
    for (std::uint64_t k = 0; k < 100; ++k) {
        for (std::size_t j = 0; j < 8; ++j) {
            xa[j] = RngStream(p.seed, j).normal(k);
            ya[j] = RngStream(p.seed, 8 + j).normal(k);
        }
        for (std::size_t j = 0; j < 8; ++j) {
            xb[j] = xa[perm[j]];
            yb[j] = ya[perm[j]];
        }
        a = em_step(std::move(a), p, xa, ya);
        b = em_step(std::move(b), p, xb, yb);
        // Tree-reduction means of permuted data may round differently in the last bit.
        std::vector<double> sa = a.x, sb = b.x;
        std::sort(sa.begin(), sa.end());
        std::sort(sb.begin(), sb.end());
        for (std::size_t j = 0; j < 8; ++j) ASSERT_NEAR(sa[j], sb[j], 1e-12);
    }
    const auto [ma1, ma2] = empirical_means(a);
    const auto [mb1, mb2] = empirical_means(b);
    EXPECT_NEAR(ma1, mb1, 1e-14);
    EXPECT_NEAR(ma2, mb2, 1e-14);
}

TEST(SimulateParticles, CostPerStepIsLinearInN) {
    auto per_step = [](std::size_t n) {
        ModelParams p = coupled_params(2.0, 2.5, 0.5, n);
        p.steps = 2000000 / n;
        double best = 1e300;
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            (void)simulate_particles(p, InitialCondition{}, 1000);
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            best = std::min(best, s / static_cast<double>(p.steps));
        }
        return best;
    };
    const double small = per_step(1000), large = per_step(10000);
    const double ratio = large / small;
    EXPECT_GT(ratio, 10.0 / 1.2);
    EXPECT_LT(ratio, 10.0 * 1.2);
}
