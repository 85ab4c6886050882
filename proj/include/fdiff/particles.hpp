#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/parallel.hpp"
#include "fdiff/params.hpp"
#include "fdiff/rng.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Any |coordinate| above this aborts a simulation as divergent.
inline constexpr double kDivergenceBound = 1e6;

/// Seed tags for sub-streams derived from ModelParams::seed.
enum class SeedTag : std::uint64_t { initial_x = 1, initial_y = 2, replica = 3, picard = 4, chaos = 5, tilde = 6 };

struct ParticleState {
    double t = 0.0;
    std::vector<double> x;  // population 1
    std::vector<double> y;  // population 2
};

/// Law of one population's initial positions.
struct InitialLaw {
    enum class Kind { point, uniform, normal };
    Kind kind = Kind::point;
    double a = 0.8;  // point value | lower bound | mean
    double b = 0.0;  // unused      | upper bound | standard deviation

    static InitialLaw point(double v) { return {Kind::point, v, 0.0}; }
    static InitialLaw uniform(double lo, double hi) { return {Kind::uniform, lo, hi}; }
    static InitialLaw normal(double mean, double sd) { return {Kind::normal, mean, sd}; }

    /// Draw `index` of the stream; `antithetic` reflects the underlying
    /// standard variate (u -> 1-u, z -> -z).
    double sample(const RngStream& s, std::uint64_t index, bool antithetic = false) const {
        switch (kind) {
            case Kind::point: return a;
            case Kind::uniform: {
                const double u = s.uniform(index);
                return a + (b - a) * (antithetic ? 1.0 - u : u);
            }
            case Kind::normal: {
                const double z = s.normal(index);
                return a + b * (antithetic ? -z : z);
            }
        }
        return a;
    }

    double mean() const noexcept { return kind == Kind::uniform ? 0.5 * (a + b) : a; }
    bool deterministic() const noexcept { return kind == Kind::point || (kind == Kind::normal && b == 0.0); }
};

/// Either every particle of a population at one value, or i.i.d. draws.
struct InitialCondition {
    InitialLaw x = InitialLaw::point(0.8);
    InitialLaw y = InitialLaw::point(0.8);

    static InitialCondition uniform_value(double x0, double y0) { return {InitialLaw::point(x0), InitialLaw::point(y0)}; }
    static InitialCondition iid(InitialLaw lx, InitialLaw ly) { return {lx, ly}; }

    /// Particle j of population 1 draws index j of the initial_x stream
    /// (likewise for population 2), so positions do not depend on N.
    ParticleState sample(std::size_t n1, std::size_t n2, std::uint64_t seed) const {
        ParticleState s;
        s.x.resize(n1);
        s.y.resize(n2);
        const RngStream sx(derive_seed(seed, {static_cast<std::uint64_t>(SeedTag::initial_x)}), 0);
        const RngStream sy(derive_seed(seed, {static_cast<std::uint64_t>(SeedTag::initial_y)}), 0);
        for (std::size_t j = 0; j < n1; ++j) s.x[j] = x.sample(sx, j);
        for (std::size_t j = 0; j < n2; ++j) s.y[j] = y.sample(sy, j);
        return s;
    }
};

/// Arithmetic means of both populations (fixed-order tree reduction).
inline std::pair<double, double> empirical_means(const ParticleState& s) {
    if (s.x.empty() || s.y.empty()) throw ValidationError("empirical means of an empty population");
    return {mean_of(s.x), mean_of(s.y)};
}

/// Drift of one population-1 particle at position x given both means.
inline double drift_x(double x, double m1, double m2, const ModelParams& p) noexcept {
    return -x * x * x + x - p.intra1() * (x - m1) - p.A() * (x - m2);
}

/// Drift of one population-2 particle at position y given both means.
inline double drift_y(double y, double m1, double m2, const ModelParams& p) noexcept {
    return -y * y * y + y - p.alpha * p.theta21 * (y - m1) - p.intra2() * (y - m2);
}

namespace detail {

/// One explicit Euler-Maruyama sweep with frozen means; returns max |coordinate|.
inline double em_sweep(std::span<double> x, std::span<double> y, double m1, double m2, const ModelParams& p,
                       std::span<const double> xi_x, std::span<const double> xi_y) {
    const double dt = p.dt;
    const double noise = p.sigma * std::sqrt(dt);
    const double c1 = p.intra1();
    const double c12 = p.A();
    const double c21 = p.alpha * p.theta21;
    const double c2 = p.intra2();
    double peak = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
        const double v = x[j];
        const double next = v + dt * (-v * v * v + v - c1 * (v - m1) - c12 * (v - m2)) + noise * xi_x[j];
        x[j] = next;
        peak = std::max(peak, std::abs(next));
    }
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double v = y[j];
        const double next = v + dt * (-v * v * v + v - c21 * (v - m1) - c2 * (v - m2)) + noise * xi_y[j];
        y[j] = next;
        peak = std::max(peak, std::abs(next));
    }
    return peak;
}

inline void check_peak(double peak, std::size_t step, double t) {
    if (!(peak <= kDivergenceBound)) throw DivergenceError("particle system diverged", step, t);
}

}  // namespace detail

/// Advances the state by one step with caller-supplied standard normals.
inline ParticleState em_step(ParticleState s, const ModelParams& p, std::span<const double> xi_x,
                             std::span<const double> xi_y, std::size_t step_index = 0) {
    if (xi_x.size() != s.x.size() || xi_y.size() != s.y.size()) {
        throw ValidationError("increment vectors do not match population sizes");
    }
    const auto [m1, m2] = empirical_means(s);
    const double peak = detail::em_sweep(s.x, s.y, m1, m2, p, xi_x, xi_y);
    s.t += p.dt;
    detail::check_peak(peak, step_index + 1, s.t);
    return s;
}

/// Advances the state by step `k`, drawing particle j's increment from
/// stream (p.seed, j) for population 1 and (p.seed, n1 + j) for population 2.
inline ParticleState em_step(ParticleState s, const ModelParams& p, std::uint64_t k) {
    std::vector<double> xi_x(s.x.size()), xi_y(s.y.size());
    if (p.sigma > 0.0) {
        for (std::size_t j = 0; j < xi_x.size(); ++j) xi_x[j] = RngStream(p.seed, j).normal(k);
        for (std::size_t j = 0; j < xi_y.size(); ++j) xi_y[j] = RngStream(p.seed, xi_x.size() + j).normal(k);
    }
    return em_step(std::move(s), p, xi_x, xi_y, k);
}

struct ParticleRun {
    MeanTrajectory means;
    ParticleState final_state;
    // Path of particle 0 of each population at every step (only when requested).
    std::vector<double> tagged_x;
    std::vector<double> tagged_y;
};

/// Runs p.steps Euler-Maruyama steps from `ic` and records the empirical
/// means every `sample_stride` steps (including step 0).
inline ParticleRun simulate_particles(const ModelParams& params, const InitialCondition& ic,
                                      std::size_t sample_stride = 20, bool record_tagged = false) {
    const ModelParams p = validate_params(params);
    if (p.n1 == 0 || p.n2 == 0) throw ValidationError("particle simulation needs n1 > 0 and n2 > 0");
    if (sample_stride == 0) throw ValidationError("sample_stride must be positive");

    ParticleRun run;
    ParticleState& s = run.final_state;
    s = ic.sample(p.n1, p.n2, p.seed);
    MeanTrajectory& traj = run.means;
    traj.t0 = 0.0;
    traj.dt_sample = p.dt * static_cast<double>(sample_stride);
    traj.m1.reserve(p.steps / sample_stride + 1);
    traj.m2.reserve(p.steps / sample_stride + 1);

    const std::size_t n1 = p.n1;
    std::vector<double> xi_x(n1, 0.0), xi_y(p.n2, 0.0);
    std::vector<double> pending_x(n1, 0.0), pending_y(p.n2, 0.0);
    const bool noisy = p.sigma > 0.0;
    if (record_tagged) {
        run.tagged_x.reserve(p.steps + 1);
        run.tagged_y.reserve(p.steps + 1);
    }

    for (std::size_t k = 0; k < p.steps; ++k) {
        if (record_tagged) {
            run.tagged_x.push_back(s.x[0]);
            run.tagged_y.push_back(s.y[0]);
        }
        const auto [m1, m2] = empirical_means(s);
        if (k % sample_stride == 0) traj.push_back(m1, m2);
        if (noisy) {
            // Box-Muller yields two steps' worth per counter block.
            if ((k & 1u) == 0) {
                for (std::size_t j = 0; j < n1; ++j) {
                    const auto pair = RngStream(p.seed, j).normal_pair(k >> 1);
                    xi_x[j] = pair[0];
                    pending_x[j] = pair[1];
                }
                for (std::size_t j = 0; j < p.n2; ++j) {
                    const auto pair = RngStream(p.seed, n1 + j).normal_pair(k >> 1);
                    xi_y[j] = pair[0];
                    pending_y[j] = pair[1];
                }
            } else {
                xi_x.swap(pending_x);
                xi_y.swap(pending_y);
            }
        }
        const double peak = detail::em_sweep(s.x, s.y, m1, m2, p, xi_x, xi_y);
        s.t = static_cast<double>(k + 1) * p.dt;
        detail::check_peak(peak, k + 1, s.t);
    }
    if (p.steps % sample_stride == 0) {
        const auto [m1, m2] = empirical_means(s);
        traj.push_back(m1, m2);
    }
    if (record_tagged) {
        run.tagged_x.push_back(s.x[0]);
        run.tagged_y.push_back(s.y[0]);
    }
    return run;
}

/// Independent replicas with seeds derive_seed(p.seed, {replica, r}).
inline std::vector<MeanTrajectory> simulate_replicas(const ModelParams& p, const InitialCondition& ic,
                                                     std::size_t replicas, std::size_t sample_stride = 20) {
    std::vector<MeanTrajectory> out(replicas);
    parallel_for(replicas, [&](std::size_t r) {
        ModelParams q = p;
        q.seed = derive_seed(p.seed, {static_cast<std::uint64_t>(SeedTag::replica), r});
        out[r] = simulate_particles(q, ic, sample_stride).means;
    });
    return out;
}

}  // namespace fdiff
