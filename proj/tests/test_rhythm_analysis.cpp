#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fdiff/particles.hpp"
#include "fdiff/rhythm.hpp"

using namespace fdiff;

namespace {

MeanTrajectory rotation(double period, double dt, double T, double phase = 0.0) {
    MeanTrajectory tr;
    tr.dt_sample = dt;
    const auto n = static_cast<std::size_t>(std::llround(T / dt));
    for (std::size_t i = 0; i <= n; ++i) {
        const double w = 2.0 * std::numbers::pi * (dt * static_cast<double>(i)) / period + phase;
        tr.push_back(std::sin(w), std::cos(w));
    }
    return tr;
}

MeanTrajectory subsample(const MeanTrajectory& t, std::size_t every) {
    MeanTrajectory s;
    s.t0 = t.t0;
    s.dt_sample = t.dt_sample * static_cast<double>(every);
    for (std::size_t i = 0; i < t.size(); i += every) s.push_back(t.m1[i], t.m2[i]);
    return s;
}

}  // namespace

TEST(Poincare, ExactRotation) {
    const PeriodEstimate e = poincare_periods(rotation(10.0, 0.01, 200.0), 0.0);
    EXPECT_NEAR(e.mean_period, 10.0, 1e-3);
    EXPECT_LT(e.std_period, 1e-3);
    EXPECT_EQ(e.n_events, 20u);
    EXPECT_EQ(e.method, PeriodMethod::poincare);
}

TEST(Poincare, CrossingsInterpolatedAndOriented) {
    // cos crosses zero downward at t = 2.5 + 10 k where sin > 0.
    const auto c = poincare_crossings(rotation(10.0, 0.1, 40.0), 0.0);
    ASSERT_EQ(c.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(c[k], 2.5 + 10.0 * static_cast<double>(k), 1e-2);
    // Reversed orientation (clockwise) never crosses with m1 > 0.
    MeanTrajectory r = rotation(10.0, 0.1, 40.0);
    for (double& v : r.m1) v = -v;
    EXPECT_TRUE(poincare_crossings(r, 0.0).empty());
}

TEST(Poincare, BurnInDropsEarlyCrossings) {
    const auto tr = rotation(10.0, 0.01, 100.0);
    EXPECT_EQ(poincare_crossings(tr, 0.0).size(), 10u);
    EXPECT_EQ(poincare_crossings(tr, 30.0).size(), 7u);
    EXPECT_THROW(poincare_periods(tr, 200.0), ValidationError);
}

TEST(Poincare, NoRhythmWithoutNoise) {
    ModelParams p = coupled_params(2.0, 2.5, 0.0);
    p.steps = 20000;
    const MeanTrajectory tr = simulate_particles(p, InitialCondition{}, 20).means;
    try {
        poincare_periods(tr, 10.0);
        FAIL() << "expected AnalysisError";
    } catch (const AnalysisError& e) {
        EXPECT_NE(std::string(e.what()).find("no rhythm detected"), std::string::npos);
    }
}

TEST(Poincare, SummaryReportsBothSpreads) {
    const PoincareSummary s = poincare_summary({rotation(10.0, 0.01, 100.0), rotation(12.0, 0.01, 120.0)}, 0.0);
    ASSERT_EQ(s.runs.size(), 2u);
    EXPECT_NEAR(s.mean_period, 11.0, 1e-3);
    EXPECT_NEAR(s.std_run_means, std::sqrt(2.0), 1e-3);
    EXPECT_NEAR(s.pooled_mean, (9 * 10.0 + 9 * 12.0) / 18.0, 1e-3);
    EXPECT_GT(s.pooled_std, 0.9);
}

TEST(Poincare, StrideIndependence) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5);
    p.steps = 60000;
    const MeanTrajectory fine = simulate_particles(p, InitialCondition{}, 1).means;
    const double burn = 0.1 * p.horizon();
    const double ref = poincare_periods(fine, burn).mean_period;
    for (std::size_t stride : {10u, 20u}) {
        const MeanTrajectory coarse = subsample(fine, stride);
        EXPECT_LT(std::abs(poincare_periods(coarse, burn).mean_period - ref), 0.01 * ref) << "stride " << stride;
    }
    ModelParams q = p;
    q.steps = 2000;
    EXPECT_EQ(simulate_particles(q, InitialCondition{}, 20).means,
              subsample(simulate_particles(q, InitialCondition{}, 1).means, 20));
}

TEST(Spectrum, PureSinusoidPeak) {
    const MeanTrajectory tr = rotation(25.0, 0.005, 1000.0 - 0.005);
    ASSERT_EQ(tr.size(), 200000u);
    const auto [s, e] = dft_period({tr}, 0.0);
    EXPECT_NEAR(s.bin_width, 1.0 / 1000.0, 1e-12);
    EXPECT_NEAR(s.peak_frequency, 1.0 / 25.0, s.bin_width);
    EXPECT_NEAR(e.mean_period, 25.0, 25.0 * 25.0 * s.bin_width);
    EXPECT_EQ(e.method, PeriodMethod::dft);
    EXPECT_EQ(s.frequencies.size(), 100001u);
    EXPECT_EQ(s.frequencies[0], 0.0);
}

TEST(Spectrum, AveragesReplicasAndIgnoresOffset) {
    MeanTrajectory a = rotation(20.0, 0.1, 399.9), b = rotation(20.0, 0.1, 399.9, 1.0);
    for (double& v : b.m2) v += 3.0;
    const auto [s, e] = dft_period({a, b}, 0.0);
    EXPECT_NEAR(e.mean_period, 20.0, 1e-9);
    EXPECT_EQ(e.n_replicas, 2u);
    EXPECT_EQ(s.replica_peaks.size(), 2u);
    EXPECT_NEAR(e.std_period, 0.0, 1e-12);
    EXPECT_NEAR(s.power[0], 0.0, 1e-12);
}

TEST(Spectrum, RejectsFlatAndMismatchedInput) {
    MeanTrajectory flat;
    flat.dt_sample = 0.1;
    for (int i = 0; i < 100; ++i) flat.push_back(0.5, 0.5);
    EXPECT_THROW(spectrum({flat}, 0.0), AnalysisError);
    MeanTrajectory shorter = flat;
    shorter.m1.pop_back();
    shorter.m2.pop_back();
    EXPECT_THROW(spectrum({flat, shorter}, 0.0), ValidationError);
    EXPECT_THROW(spectrum({}, 0.0), ValidationError);
}

TEST(DetectCycle, SustainedVersusDecaying) {
    EXPECT_TRUE(detect_cycle(rotation(10.0, 0.01, 200.0), 0.0).sustained);
    MeanTrajectory decay = rotation(10.0, 0.01, 200.0);
    for (std::size_t i = 0; i < decay.size(); ++i) {
        const double f = std::exp(-0.1 * decay.time(i));
        decay.m1[i] *= f;
        decay.m2[i] *= f;
    }
    const CycleVerdict v = detect_cycle(decay, 0.0);
    EXPECT_GE(v.returns, 10u);
    EXPECT_LT(v.late_amplitude, 1e-3);
    EXPECT_FALSE(v.sustained);
}
