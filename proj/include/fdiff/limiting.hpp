#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/parallel.hpp"
#include "fdiff/params.hpp"
#include "fdiff/particles.hpp"
#include "fdiff/rng.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Deterministic mean functions E[x(t)], E[y(t)] on the grid t0 + k*dt.
struct MeanFunctions {
    double t0 = 0.0;
    double dt = 0.005;
    std::vector<double> mx;
    std::vector<double> my;

    std::size_t size() const noexcept { return mx.size(); }
    double horizon() const noexcept { return mx.empty() ? t0 : t0 + dt * static_cast<double>(mx.size() - 1); }

    void check() const {
        if (!(dt > 0.0)) throw ValidationError("mean-function grid spacing must be positive");
        if (mx.size() != my.size() || mx.empty()) throw ValidationError("mean functions must be non-empty and of equal length");
        for (std::size_t k = 0; k < mx.size(); ++k) {
            if (!std::isfinite(mx[k]) || !std::isfinite(my[k])) throw ValidationError("mean functions must be finite");
        }
    }

    /// Piecewise-linear interpolation; throws outside [t0, horizon].
    std::pair<double, double> at(double t) const {
        const double s = (t - t0) / dt;
        const double last = static_cast<double>(mx.size() - 1);
        if (s < -1e-9 || s > last + 1e-9) throw ValidationError("time " + std::to_string(t) + " outside mean-function grid");
        const double c = std::clamp(s, 0.0, last);
        const auto k = static_cast<std::size_t>(std::min(std::floor(c), std::max(0.0, last - 1.0)));
        if (mx.size() == 1) return {mx[0], my[0]};
        const double w = c - static_cast<double>(k);
        return {mx[k] + w * (mx[k + 1] - mx[k]), my[k] + w * (my[k + 1] - my[k])};
    }

    MeanTrajectory to_trajectory() const {
        MeanTrajectory t;
        t.t0 = t0;
        t.dt_sample = dt;
        t.m1 = mx;
        t.m2 = my;
        return t;
    }
};

struct PicardOptions {
    double tol = 1e-4;
    std::size_t mc_copies = 100000;
    std::size_t max_iter = 200;
    bool antithetic = true;  // pair copy c with the reflected noise and initial draw
};

struct PicardResult {
    MeanFunctions means;
    std::vector<double> residuals;  // sup-norm change per iteration
    std::size_t copies = 0;         // copies actually simulated
};

namespace detail {

constexpr std::size_t kPicardChunk = 1024;

/// Sums of x and y over a chunk of Monte Carlo copies at every grid point,
/// with the means frozen at `frozen`.
inline void picard_chunk(const ModelParams& p, const InitialCondition& ic, const MeanFunctions& frozen,
                         std::uint64_t seed, std::size_t c0, std::size_t c1, bool antithetic,
                         std::vector<double>& sx, std::vector<double>& sy) {
    const std::size_t n = frozen.size() - 1;
    sx.assign(n + 1, 0.0);
    sy.assign(n + 1, 0.0);
    const double dt = p.dt;
    const double noise = p.sigma * std::sqrt(dt);
    const RngStream icx(derive_seed(seed, {static_cast<std::uint64_t>(SeedTag::initial_x)}), 0);
    const RngStream icy(derive_seed(seed, {static_cast<std::uint64_t>(SeedTag::initial_y)}), 0);
    for (std::size_t c = c0; c < c1; ++c) {
        const RngStream w(seed, c);
        double xa = ic.x.sample(icx, c), ya = ic.y.sample(icy, c);
        double xb = ic.x.sample(icx, c, true), yb = ic.y.sample(icy, c, true);
        sx[0] += antithetic ? xa + xb : xa;
        sy[0] += antithetic ? ya + yb : ya;
        for (std::size_t k = 0; k < n; ++k) {
            const double m1 = frozen.mx[k], m2 = frozen.my[k];
            const auto xi = p.sigma > 0.0 ? w.normal_pair(k) : std::array<double, 2>{0.0, 0.0};
            const double nxa = xa + dt * drift_x(xa, m1, m2, p) + noise * xi[0];
            const double nya = ya + dt * drift_y(ya, m1, m2, p) + noise * xi[1];
            xa = nxa;
            ya = nya;
            if (antithetic) {
                const double nxb = xb + dt * drift_x(xb, m1, m2, p) - noise * xi[0];
                const double nyb = yb + dt * drift_y(yb, m1, m2, p) - noise * xi[1];
                xb = nxb;
                yb = nyb;
                sx[k + 1] += xa + xb;
                sy[k + 1] += ya + yb;
            } else {
                sx[k + 1] += xa;
                sy[k + 1] += ya;
            }
            if (!(std::abs(xa) <= kDivergenceBound && std::abs(ya) <= kDivergenceBound &&
                  std::abs(xb) <= kDivergenceBound && std::abs(yb) <= kDivergenceBound)) {
                throw DivergenceError("limiting dynamics diverged", k + 1, dt * static_cast<double>(k + 1));
            }
        }
    }
}

}  // namespace detail

/// Fixed point of the map "frozen means -> Monte Carlo means of the limiting
/// SDE driven by them" on the grid k*p.dt, k = 0..p.steps.
///
/// The Brownian increments and initial draws are the same in every
/// iteration, so the map is deterministic and its residuals are exact.
inline PicardResult picard_means(const ModelParams& params, const InitialCondition& ic, const PicardOptions& opt = {}) {
    ModelParams p = params;
    p.n1 = p.n2 = 0;  // the limit carries alpha only
    p = validate_params(p);
    if (!(opt.tol > 0.0)) throw ValidationError("Picard tolerance must be positive");
    if (opt.mc_copies < 1) throw ValidationError("mc_copies must be at least 1");

    const bool exact = p.sigma == 0.0 && ic.x.deterministic() && ic.y.deterministic();
    const bool anti = opt.antithetic && !exact && opt.mc_copies >= 2;
    const std::size_t base = exact ? 1 : (anti ? opt.mc_copies / 2 : opt.mc_copies);
    const std::size_t copies = anti ? 2 * base : base;
    const std::uint64_t seed = derive_seed(p.seed, {static_cast<std::uint64_t>(SeedTag::picard)});

    PicardResult res;
    res.copies = copies;
    MeanFunctions& m = res.means;
    m.t0 = 0.0;
    m.dt = p.dt;
    m.mx.assign(p.steps + 1, ic.x.mean());
    m.my.assign(p.steps + 1, ic.y.mean());

    const std::size_t chunks = (base + detail::kPicardChunk - 1) / detail::kPicardChunk;
    std::vector<std::vector<double>> sx(chunks), sy(chunks);
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        parallel_for(chunks, [&](std::size_t c) {
            const std::size_t c0 = c * detail::kPicardChunk;
            detail::picard_chunk(p, ic, m, seed, c0, std::min(base, c0 + detail::kPicardChunk), anti, sx[c], sy[c]);
        });
        double resid = 0.0;
        const double inv = 1.0 / static_cast<double>(copies);
        for (std::size_t k = 0; k <= p.steps; ++k) {
            double ax = 0.0, ay = 0.0;
            for (std::size_t c = 0; c < chunks; ++c) {
                ax += sx[c][k];
                ay += sy[c][k];
            }
            ax *= inv;
            ay *= inv;
            resid = std::max({resid, std::abs(ax - m.mx[k]), std::abs(ay - m.my[k])});
            m.mx[k] = ax;
            m.my[k] = ay;
        }
        res.residuals.push_back(resid);
        if (resid < opt.tol) return res;
    }
    throw ConvergenceError("Picard iteration did not converge in " + std::to_string(opt.max_iter) + " iterations",
                           res.residuals.empty() ? 0.0 : res.residuals.back());
}

/// One sample path of the limiting pair.
struct LimitingPath {
    double dt = 0.0;
    std::vector<double> x;
    std::vector<double> y;
};

/// EM path of the limiting pair from (x0, y0) over p.steps steps, with the
/// means read from `means` and standard-normal increments supplied by the
/// caller (dW = sqrt(dt) * xi).
inline LimitingPath simulate_limiting_pair(const ModelParams& p, const MeanFunctions& means, double x0, double y0,
                                           std::span<const double> xi_x, std::span<const double> xi_y) {
    means.check();
    if (xi_x.size() < p.steps || xi_y.size() < p.steps) throw ValidationError("injected path shorter than p.steps");
    if (p.horizon() > means.horizon() + 1e-9 * std::max(1.0, means.horizon())) {
        throw ValidationError("simulation horizon exceeds the mean-function grid");
    }
    const bool aligned = std::abs(means.dt - p.dt) <= 1e-15 * p.dt && means.t0 == 0.0;
    LimitingPath path;
    path.dt = p.dt;
    path.x.resize(p.steps + 1);
    path.y.resize(p.steps + 1);
    path.x[0] = x0;
    path.y[0] = y0;
    const double noise = p.sigma * std::sqrt(p.dt);
    double x = x0, y = y0;
    for (std::size_t k = 0; k < p.steps; ++k) {
        const auto [m1, m2] = aligned ? std::pair{means.mx[k], means.my[k]} : means.at(p.dt * static_cast<double>(k));
        const double nx = x + p.dt * drift_x(x, m1, m2, p) + noise * xi_x[k];
        const double ny = y + p.dt * drift_y(y, m1, m2, p) + noise * xi_y[k];
        x = nx;
        y = ny;
        if (!(std::abs(x) <= kDivergenceBound && std::abs(y) <= kDivergenceBound)) {
            throw DivergenceError("limiting pair diverged", k + 1, p.dt * static_cast<double>(k + 1));
        }
        path.x[k + 1] = x;
        path.y[k + 1] = y;
    }
    return path;
}

/// Same, drawing step k's (xi_x, xi_y) as normal_pair(k) of `stream`.
inline LimitingPath simulate_limiting_pair(const ModelParams& p, const MeanFunctions& means, double x0, double y0,
                                           const RngStream& stream) {
    std::vector<double> xi_x(p.steps, 0.0), xi_y(p.steps, 0.0);
    if (p.sigma > 0.0) {
        for (std::size_t k = 0; k < p.steps; ++k) {
            const auto pr = stream.normal_pair(k);
            xi_x[k] = pr[0];
            xi_y[k] = pr[1];
        }
    }
    return simulate_limiting_pair(p, means, x0, y0, xi_x, xi_y);
}

struct ChaosOptions {
    InitialCondition ic = InitialCondition::iid(InitialLaw::uniform(0.7, 0.9), InitialLaw::uniform(0.7, 0.9));
    PicardOptions picard{};
};

struct ChaosReport {
    std::vector<std::size_t> n_values;
    std::vector<double> errors;   // mean over replicas of sup_t l1 distance
    std::vector<double> stderrs;  // standard error of each mean
    double fitted_slope = 0.0;    // least squares of log error on log N
    std::size_t replicas = 0;
    MeanFunctions means;          // limiting means used for the coupling
};

/// Least-squares slope of log(y) against log(x).
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw AnalysisError("slope fit needs at least two points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw AnalysisError("slope fit needs positive data");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// sup_k |x_0(t_k) - x_lim(t_k)| + |y_0(t_k) - y_lim(t_k)| for one replica:
/// the limiting copy of tagged particle 0 starts at the same point and
/// consumes exactly the increments of that particle's streams.
inline double coupled_sup_error(const ModelParams& q, const InitialCondition& ic, const MeanFunctions& means) {
    const ParticleRun run = simulate_particles(q, ic, q.steps, true);
    std::vector<double> xi_x(q.steps), xi_y(q.steps);
    const RngStream sx(q.seed, 0), sy(q.seed, q.n1);
    for (std::size_t k = 0; k < q.steps; ++k) {
        xi_x[k] = q.sigma > 0.0 ? sx.normal(k) : 0.0;
        xi_y[k] = q.sigma > 0.0 ? sy.normal(k) : 0.0;
    }
    const LimitingPath lim = simulate_limiting_pair(q, means, run.tagged_x[0], run.tagged_y[0], xi_x, xi_y);
    double sup = 0.0;
    for (std::size_t k = 0; k <= q.steps; ++k) {
        sup = std::max(sup, std::abs(run.tagged_x[k] - lim.x[k]) + std::abs(run.tagged_y[k] - lim.y[k]));
    }
    return sup;
}

/// Coupled-path propagation-of-chaos experiment over the system sizes in
/// `n_values` (even, strictly increasing) on [0, T].
inline ChaosReport chaos_error(const ModelParams& params, const std::vector<std::size_t>& n_values,
                               std::size_t replicas, double T, const ChaosOptions& opt = {}) {
    if (replicas < 1) throw ValidationError("replicas must be at least 1");
    if (n_values.empty()) throw ValidationError("n_values must not be empty");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] < 2 || n_values[i] % 2 != 0) throw ValidationError("system sizes must be even and >= 2");
        if (i > 0 && n_values[i] <= n_values[i - 1]) throw ValidationError("system sizes must be strictly increasing");
    }
    if (!(T > 0.0)) throw ValidationError("horizon T must be positive");
    if (params.alpha != 0.5) throw ValidationError("chaos experiment uses the alpha = 1/2 split");

    ModelParams base = params;
    base.steps = static_cast<std::size_t>(std::llround(T / base.dt));
    if (base.steps < 1) throw ValidationError("T shorter than one time step");

    ChaosReport rep;
    rep.n_values = n_values;
    rep.replicas = replicas;
    rep.means = picard_means(base, opt.ic, opt.picard).means;

    for (const std::size_t n : n_values) {
        std::vector<double> err(replicas);
        parallel_for(replicas, [&](std::size_t r) {
            ModelParams q = base;
            q.n1 = n / 2;
            q.n2 = n / 2;
            q.seed = derive_seed(params.seed, {static_cast<std::uint64_t>(SeedTag::chaos), n, r});
            err[r] = coupled_sup_error(q, opt.ic, rep.means);
        });
        const double mean = mean_of(err);
        double ss = 0.0;
        for (double e : err) ss += (e - mean) * (e - mean);
        const double sd = replicas > 1 ? std::sqrt(ss / static_cast<double>(replicas - 1)) : 0.0;
        rep.errors.push_back(mean);
        rep.stderrs.push_back(sd / std::sqrt(static_cast<double>(replicas)));
    }
    std::vector<double> nv(n_values.begin(), n_values.end());
    rep.fitted_slope = loglog_slope(nv, rep.errors);
    return rep;
}

}  // namespace fdiff
