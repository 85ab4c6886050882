#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/params.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Uniform cell-centred mesh of M cells on [-L, L].
struct FpGrid {
    double L = 4.0;
    std::size_t M = 800;

    double h() const noexcept { return 2.0 * L / static_cast<double>(M); }
    double center(std::size_t i) const noexcept { return -L + (static_cast<double>(i) + 0.5) * h(); }
    double face(std::size_t i) const noexcept { return -L + static_cast<double>(i) * h(); }  // i = 0..M
};

/// Cell averages of the two limiting densities at time t.
struct DensityPair {
    FpGrid grid;
    double t = 0.0;
    std::vector<double> q1;
    std::vector<double> q2;
};

/// Midpoint rule for the integral of z^p q(z) over the grid.
inline double density_moment(const FpGrid& g, std::span<const double> q, int p) {
    if (p < 0) throw ValidationError("moment order must be non-negative");
    if (q.size() != g.M) throw ValidationError("density length does not match the grid");
    double s = 0.0;
    for (std::size_t i = 0; i < g.M; ++i) {
        const double x = g.center(i);
        double xp = 1.0;
        for (int k = 0; k < p; ++k) xp *= x;
        s += xp * q[i];
    }
    return s * g.h();
}

/// Cell averages of a normal density N(mean, sd^2), renormalized to unit mass.
inline std::vector<double> gaussian_cells(const FpGrid& g, double mean, double sd) {
    if (!(sd > 0.0)) throw ValidationError("initial width must be positive");
    std::vector<double> q(g.M);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.M; ++i) {
        // exact cell average through the normal CDF
        const double a = (g.face(i) - mean) / (sd * std::numbers::sqrt2);
        const double b = (g.face(i + 1) - mean) / (sd * std::numbers::sqrt2);
        q[i] = 0.5 * (std::erf(b) - std::erf(a)) / g.h();
        mass += q[i] * g.h();
    }
    if (!(mass > 0.0)) throw ValidationError("initial density has no mass on the grid");
    for (double& v : q) v /= mass;
    return q;
}

/// Drift of population 1 (pop = 0) or 2 (pop = 1) at x given both means.
inline double fp_drift(int pop, double x, double m1, double m2, const ModelParams& p) noexcept {
    if (pop == 0) {
        return (1.0 - p.intra1() - p.A()) * x - x * x * x + p.intra1() * m1 + p.A() * m2;
    }
    const double c21 = p.alpha * p.theta21;
    return (1.0 - c21 - p.intra2()) * x - x * x * x + c21 * m1 + p.intra2() * m2;
}

namespace detail {

/// w / (e^w - 1), continuous at 0.
inline double bernoulli(double w) noexcept {
    if (std::abs(w) < 1e-10) return 1.0 - 0.5 * w;
    return w / std::expm1(w);
}

/// Face drifts split as b(x) = b0(x) + K(m1, m2); b0 and exp(h b0 / D) are
/// fixed for a run, so a step needs one exponential per population.
struct FpOperator {
    FpGrid grid;
    double D = 0.0;
    std::array<std::vector<double>, 2> b0;    // faces 0..M
    std::array<std::vector<double>, 2> e0;    // exp(h b0 / D)
    std::array<double, 2> c_m1{}, c_m2{};     // K = c_m1 m1 + c_m2 m2
    std::array<double, 2> lin{};              // b0(x) = lin x - x^3
    std::vector<double> flux;

    FpOperator(const FpGrid& g, const ModelParams& p) : grid(g), D(0.5 * p.sigma * p.sigma) {
        const double c21 = p.alpha * p.theta21;
        lin = {1.0 - p.intra1() - p.A(), 1.0 - c21 - p.intra2()};
        c_m1 = {p.intra1(), c21};
        c_m2 = {p.A(), p.intra2()};
        for (int k = 0; k < 2; ++k) {
            b0[k].resize(g.M + 1);
            e0[k].resize(g.M + 1);
            for (std::size_t i = 0; i <= g.M; ++i) {
                const double x = g.face(i);
                b0[k][i] = lin[k] * x - x * x * x;
                e0[k][i] = D > 0.0 ? std::exp(g.h() * b0[k][i] / D) : 0.0;
            }
        }
        flux.assign(g.M + 1, 0.0);
    }

    double max_drift(double m1, double m2) const {
        // |b0 + K| over the faces peaks at an end face or next to a critical
        // point of the cubic b0, so only those faces are examined.
        double bmax = 0.0;
        const std::size_t M = grid.M;
        for (int k = 0; k < 2; ++k) {
            const double K = c_m1[k] * m1 + c_m2[k] * m2;
            auto probe = [&](std::size_t i) { bmax = std::max(bmax, std::abs(b0[k][i] + K)); };
            probe(0);
            probe(M);
            if (lin[k] > 0.0) {
                const double xc = std::sqrt(lin[k] / 3.0);
                for (double x : {-xc, xc}) {
                    const double s = (x + grid.L) / grid.h();
                    if (s < 0.0 || s > static_cast<double>(M)) continue;
                    const auto i = static_cast<std::size_t>(s);
                    probe(i);
                    if (i < M) probe(i + 1);
                }
            }
        }
        return bmax;
    }

    double stable_dt(double m1, double m2, double sigma) const {
        const double h = grid.h();
        const double bmax = max_drift(m1, m2);
        double dt = bmax > 0.0 ? 0.5 * h / bmax : 1e300;
        if (sigma > 0.0) dt = std::min(dt, 0.5 * h * h / (sigma * sigma));
        return dt;
    }

    /// One explicit conservative step of density `pop` with the exponentially
    /// fitted (Scharfetter-Gummel / Chang-Cooper) flux, zero flux at both ends.
    void sweep(std::vector<double>& q, int pop, double m1, double m2, double dt) {
        const std::size_t M = grid.M;
        const double h = grid.h();
        const double K = c_m1[pop] * m1 + c_m2[pop] * m2;
        const auto& b0k = b0[pop];
        const auto& e0k = e0[pop];
        flux[0] = flux[M] = 0.0;
        if (D > 0.0) {
            const double eK = std::exp(h * K / D);
            const double inv_d = h / D;
            const double dh = D / h;
            for (std::size_t i = 1; i < M; ++i) {
                const double w = inv_d * (b0k[i] + K);
                const double ew = e0k[i] * eK;
                const double bw = (std::abs(w) > 1e-3 && std::isfinite(ew)) ? w / (ew - 1.0) : bernoulli(w);
                flux[i] = dh * ((w + bw) * q[i - 1] - bw * q[i]);  // B(-w) = w + B(w)
            }
        } else {
            for (std::size_t i = 1; i < M; ++i) {
                const double b = b0k[i] + K;
                flux[i] = std::max(b, 0.0) * q[i - 1] + std::min(b, 0.0) * q[i];
            }
        }
        const double r = dt / h;
        for (std::size_t i = 0; i < M; ++i) q[i] -= r * (flux[i + 1] - flux[i]);
    }
};

/// Mass and mean of both densities in one pass.
struct FpMoments {
    double mass1 = 0.0, mass2 = 0.0, m1 = 0.0, m2 = 0.0, min_value = 0.0;
};

inline FpMoments fp_moments(const DensityPair& d) {
    const FpGrid& g = d.grid;
    FpMoments r;
    double a1 = 0.0, a2 = 0.0, b1 = 0.0, b2 = 0.0, lo = 0.0;
    for (std::size_t i = 0; i < g.M; ++i) {
        const double x = g.center(i);
        a1 += d.q1[i];
        a2 += d.q2[i];
        b1 += x * d.q1[i];
        b2 += x * d.q2[i];
        lo = std::min({lo, d.q1[i], d.q2[i]});
    }
    const double h = g.h();
    r.mass1 = a1 * h;
    r.mass2 = a2 * h;
    r.m1 = b1 * h;
    r.m2 = b2 * h;
    r.min_value = lo;
    return r;
}

/// Steps `d` in place from pre-step moments `pre`; returns post-step moments.
inline FpMoments fp_advance(FpOperator& op, DensityPair& d, const FpMoments& pre, double dt) {
    op.sweep(d.q1, 0, pre.m1, pre.m2, dt);
    op.sweep(d.q2, 1, pre.m1, pre.m2, dt);
    d.t += dt;
    return fp_moments(d);
}

inline double mass_change(const FpMoments& a, const FpMoments& b) {
    return std::max(std::abs(a.mass1 - b.mass1), std::abs(a.mass2 - b.mass2));
}

}  // namespace detail

/// Largest stable explicit step: min(0.5 h^2 / sigma^2, 0.5 h / max|b|).
inline double fp_stable_dt(const DensityPair& d, const ModelParams& p) {
    const detail::FpOperator op(d.grid, p);
    return op.stable_dt(density_moment(d.grid, d.q1, 1), density_moment(d.grid, d.q2, 1), p.sigma);
}

/// Advances both densities by dt_pde; the means entering the drifts are
/// those of the pre-step densities.
inline DensityPair fp_step(DensityPair d, const ModelParams& p, double dt_pde) {
    if (!(dt_pde > 0.0)) throw ValidationError("dt_pde must be positive");
    if (d.q1.size() != d.grid.M || d.q2.size() != d.grid.M) throw ValidationError("density length does not match the grid");
    detail::FpOperator op(d.grid, p);
    const auto pre = detail::fp_moments(d);
    const double drift = detail::mass_change(pre, detail::fp_advance(op, d, pre, dt_pde));
    if (!(drift <= 1e-6)) {
        throw DivergenceError("Fokker-Planck step lost mass (" + std::to_string(drift) + ")", 0, d.t);
    }
    return d;
}

/// Initial densities: normal laws of the given widths (a narrow width stands in
/// for a point mass).
struct FpInitial {
    double mean1 = 0.8;
    double mean2 = 0.8;
    double sd1 = 0.05;
    double sd2 = 0.05;
};

struct FpOptions {
    FpGrid grid{};
    double sample_dt = 0.1;       // output grid of the means
    double snapshot_every = 0.0;  // 0 disables density snapshots
    double dt_max = 0.01;         // cap on the adaptive step
};

struct FpResult {
    MeanTrajectory means;
    std::vector<DensityPair> snapshots;
    DensityPair final_state;
    double max_mass_error = 0.0;  // max over time of |mass - 1|
    double min_density = 0.0;     // most negative cell value seen
    std::size_t steps = 0;
};

/// Evolves the pair on [0, T] with adaptive explicit steps; the means are
/// linearly interpolated onto the uniform sample grid.
inline FpResult solve_fp(const ModelParams& params, const FpInitial& ic, double T, const FpOptions& opt = {}) {
    ModelParams p = params;
    p.n1 = p.n2 = 0;
    p = validate_params(p);
    if (!(T > 0.0)) throw ValidationError("T must be positive");
    if (!(opt.sample_dt > 0.0)) throw ValidationError("sample_dt must be positive");
    if (opt.grid.M < 4 || !(opt.grid.L > 0.0)) throw ValidationError("grid needs L > 0 and M >= 4");

    FpResult res;
    DensityPair d;
    d.grid = opt.grid;
    d.q1 = gaussian_cells(d.grid, ic.mean1, ic.sd1);
    d.q2 = gaussian_cells(d.grid, ic.mean2, ic.sd2);

    MeanTrajectory& out = res.means;
    out.dt_sample = opt.sample_dt;
    detail::FpMoments mom = detail::fp_moments(d);
    out.push_back(mom.m1, mom.m2);
    const auto n_samples = static_cast<std::size_t>(std::floor(T / opt.sample_dt + 1e-9));
    std::size_t next_sample = 1;
    double next_snapshot = opt.snapshot_every;
    if (opt.snapshot_every > 0.0) res.snapshots.push_back(d);

    detail::FpOperator op(d.grid, p);
    while (d.t < T - 1e-12) {
        const double dt = std::min({op.stable_dt(mom.m1, mom.m2, p.sigma), opt.dt_max, T - d.t});
        const double t_prev = d.t;
        const detail::FpMoments prev = mom;
        mom = detail::fp_advance(op, d, prev, dt);
        ++res.steps;
        const double lost = detail::mass_change(prev, mom);
        if (!(lost <= 1e-6)) throw DivergenceError("Fokker-Planck step lost mass (" + std::to_string(lost) + ")", res.steps, d.t);
        if (!std::isfinite(mom.m1) || !std::isfinite(mom.m2)) throw DivergenceError("Fokker-Planck means are not finite", res.steps, d.t);
        while (next_sample <= n_samples && opt.sample_dt * static_cast<double>(next_sample) <= d.t + 1e-12) {
            const double ts = opt.sample_dt * static_cast<double>(next_sample);
            const double w = (ts - t_prev) / (d.t - t_prev);
            out.push_back(prev.m1 + w * (mom.m1 - prev.m1), prev.m2 + w * (mom.m2 - prev.m2));
            ++next_sample;
        }
        res.max_mass_error = std::max({res.max_mass_error, std::abs(mom.mass1 - 1.0), std::abs(mom.mass2 - 1.0)});
        res.min_density = std::min(res.min_density, mom.min_value);
        if (opt.snapshot_every > 0.0 && d.t >= next_snapshot - 1e-12) {
            res.snapshots.push_back(d);
            next_snapshot += opt.snapshot_every;
        }
    }
    res.final_state = std::move(d);
    return res;
}

/// CSV `x,q1,q2` of one density pair (negativity clamped to zero).
inline std::string format_snapshot(const DensityPair& d) {
    std::string s = "x,q1,q2\n";
    char buf[96];
    for (std::size_t i = 0; i < d.grid.M; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", d.grid.center(i), std::max(0.0, d.q1[i]), std::max(0.0, d.q2[i]));
        s += buf;
    }
    return s;
}

}  // namespace fdiff
