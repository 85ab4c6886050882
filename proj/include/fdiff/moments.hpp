#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fdiff/errors.hpp"
#include "fdiff/limiting.hpp"
#include "fdiff/parallel.hpp"
#include "fdiff/params.hpp"
#include "fdiff/phase.hpp"
#include "fdiff/rng.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Means and variances of the two Gaussian approximating processes.
struct MomentState {
    double m1 = 0.0;
    double m2 = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;

    MomentState operator+(const MomentState& o) const noexcept { return {m1 + o.m1, m2 + o.m2, v1 + o.v1, v2 + o.v2}; }
    MomentState operator*(double s) const noexcept { return {m1 * s, m2 * s, v1 * s, v2 * s}; }
    bool operator==(const MomentState&) const = default;
};

/// Right-hand side of the closed mean/variance system.
inline MomentState moment_rhs(const MomentState& s, const ModelParams& p) noexcept {
    const double A = p.A(), B = p.B(), s2 = p.sigma * p.sigma;
    return {
        -s.m1 * s.m1 * s.m1 + s.m1 * (1.0 - 3.0 * s.v1) - A * (s.m1 - s.m2),
        -s.m2 * s.m2 * s.m2 + s.m2 * (1.0 - 3.0 * s.v2) + B * (s.m2 - s.m1),
        -6.0 * s.v1 * s.v1 - 6.0 * s.m1 * s.m1 * s.v1 + 2.0 * s.v1 - 2.0 * p.intra1() * s.v1 - 2.0 * A * s.v1 + s2,
        -6.0 * s.v2 * s.v2 - 6.0 * s.m2 * s.m2 * s.v2 + 2.0 * s.v2 + 2.0 * B * s.v2 - 2.0 * p.intra2() * s.v2 + s2,
    };
}

/// Analytic Jacobian of moment_rhs in the order (m1, m2, v1, v2).
inline Eigen::Matrix4d moment_jacobian(const MomentState& s, const ModelParams& p) {
    const double A = p.A(), B = p.B();
    Eigen::Matrix4d J = Eigen::Matrix4d::Zero();
    J(0, 0) = -3.0 * s.m1 * s.m1 + 1.0 - 3.0 * s.v1 - A;
    J(0, 1) = A;
    J(0, 2) = -3.0 * s.m1;
    J(1, 0) = -B;
    J(1, 1) = -3.0 * s.m2 * s.m2 + 1.0 - 3.0 * s.v2 + B;
    J(1, 3) = -3.0 * s.m2;
    J(2, 0) = -12.0 * s.m1 * s.v1;
    J(2, 2) = -12.0 * s.v1 - 6.0 * s.m1 * s.m1 + 2.0 - 2.0 * p.intra1() - 2.0 * A;
    J(3, 1) = -12.0 * s.m2 * s.v2;
    J(3, 3) = -12.0 * s.v2 - 6.0 * s.m2 * s.m2 + 2.0 + 2.0 * B - 2.0 * p.intra2();
    return J;
}

enum class OdeScheme { rk4, euler };

/// Fixed-step trajectory of the moment system on [0, T], sampled every
/// `stride` steps, with v1, v2 columns.
inline MeanTrajectory integrate_moments(const MomentState& s0, const ModelParams& p, double T, double dt_ode = 0.001,
                                        std::size_t stride = 1, OdeScheme scheme = OdeScheme::rk4) {
    if (!(dt_ode > 0.0)) throw ValidationError("dt_ode must be positive");
    if (!(T >= 0.0)) throw ValidationError("T must be non-negative");
    if (stride < 1) throw ValidationError("stride must be positive");
    if (s0.v1 < 0.0 || s0.v2 < 0.0) throw ValidationError("initial variances must be non-negative");
    const auto steps = static_cast<std::size_t>(std::llround(T / dt_ode));
    MeanTrajectory tr;
    tr.dt_sample = dt_ode * static_cast<double>(stride);
    tr.has_variances = true;
    MomentState s = s0;
    tr.push_back(s.m1, s.m2, s.v1, s.v2);
    for (std::size_t k = 1; k <= steps; ++k) {
        if (scheme == OdeScheme::euler) {
            s = s + moment_rhs(s, p) * dt_ode;
        } else {
            const MomentState k1 = moment_rhs(s, p);
            const MomentState k2 = moment_rhs(s + k1 * (0.5 * dt_ode), p);
            const MomentState k3 = moment_rhs(s + k2 * (0.5 * dt_ode), p);
            const MomentState k4 = moment_rhs(s + k3 * dt_ode, p);
            s = s + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt_ode / 6.0);
        }
        const double peak = std::max({std::abs(s.m1), std::abs(s.m2), std::abs(s.v1), std::abs(s.v2)});
        if (!(peak <= kDivergenceBound)) {
            throw DivergenceError("moment system diverged", k, dt_ode * static_cast<double>(k));
        }
        if (k % stride == 0) tr.push_back(s.m1, s.m2, s.v1, s.v2);
    }
    return tr;
}

namespace detail {

/// Nonnegative root of -6 v^2 + c v + sigma^2 = 0, cancellation-free.
inline double variance_root(double c, double sigma) {
    const double s2 = sigma * sigma;
    const double disc = std::sqrt(c * c + 24.0 * s2);
    if (c <= 0.0) return s2 == 0.0 ? 0.0 : 2.0 * s2 / (disc - c);
    return (c + disc) / 12.0;
}

}  // namespace detail

/// Variances (v1, v2) of the symmetric equilibrium (0, 0, v1, v2) for any
/// intra-population couplings.
inline std::array<double, 2> hopf_equilibrium(const ModelParams& p, double sigma) {
    if (!(sigma >= 0.0)) throw ValidationError("sigma must be non-negative");
    const double c1 = 2.0 - 2.0 * p.intra1() - 2.0 * p.A();
    const double c2 = 2.0 + 2.0 * p.B() - 2.0 * p.intra2();
    return {detail::variance_root(c1, sigma), detail::variance_root(c2, sigma)};
}

/// Closed forms valid when alpha*theta11 = (1-alpha)*theta22 = 4.
inline std::array<double, 2> hopf_equilibrium_closed_form(double A, double B, double sigma) {
    const double s2 = 6.0 * sigma * sigma;
    return {(-3.0 - A + std::sqrt((-3.0 - A) * (-3.0 - A) + s2)) / 6.0,
            (-3.0 + B + std::sqrt((-3.0 + B) * (-3.0 + B) + s2)) / 6.0};
}

/// Closed-form eigenvalues (lambda1..lambda4) at the symmetric equilibrium,
/// same validity as hopf_equilibrium_closed_form.
inline std::array<std::complex<double>, 4> hopf_closed_form_eigenvalues(double A, double B, double sigma) {
    using C = std::complex<double>;
    const double s2 = 6.0 * sigma * sigma;
    const double S1 = std::sqrt((A + 3.0) * (A + 3.0) + s2);
    const double S2 = std::sqrt((B - 3.0) * (B - 3.0) + s2);
    const double bracket = A * A + A * (S1 - S2 - 7.0 * B + 3.0) - (S2 - B) * (S1 + B) - 3.0 * B + s2 + 9.0;
    const C root = std::sqrt(C(bracket, 0.0)) * std::sqrt(2.0);
    const double head = 10.0 - A + B - S1 - S2;
    const auto v = hopf_equilibrium_closed_form(A, B, sigma);
    return {(C(head) - root) / 4.0, (C(head) + root) / 4.0, C(-6.0 - 2.0 * A - 12.0 * v[0]),
            C(-6.0 + 2.0 * B - 12.0 * v[1])};
}

/// True when the closed forms apply (alpha*theta11 = (1-alpha)*theta22 = 4).
inline bool hopf_closed_form_applies(const ModelParams& p) {
    return std::abs(p.intra1() - 4.0) < 1e-12 && std::abs(p.intra2() - 4.0) < 1e-12;
}

struct HopfEigen {
    double sigma = 0.0;
    std::array<double, 2> v_tilde{};
    std::array<std::complex<double>, 4> lambda{};  // lambda1 is the "-" branch of the mean block
    bool conjugate_pair = false;                   // lambda2 == conj(lambda1), nonzero imaginary part
    bool closed_form_checked = false;
};

/// Eigenvalues of the Jacobian at (0, 0, v1, v2). The numeric eigen-solve is
/// always performed; when the closed forms apply they must agree to 1e-8.
inline HopfEigen hopf_eigenvalues(const ModelParams& p, double sigma) {
    ModelParams q = p;
    q.sigma = sigma;
    HopfEigen out;
    out.sigma = sigma;
    out.v_tilde = hopf_equilibrium(q, sigma);
    const Eigen::Matrix4d J = moment_jacobian({0.0, 0.0, out.v_tilde[0], out.v_tilde[1]}, q);
    const Eigen::EigenSolver<Eigen::Matrix4d> solver(J, false);
    if (solver.info() != Eigen::Success) throw AnalysisError("eigen-decomposition failed");
    std::vector<std::complex<double>> ev(4);
    for (int i = 0; i < 4; ++i) ev[static_cast<std::size_t>(i)] = solver.eigenvalues()[i];

    // Assign lambda3, lambda4 to the variance-block diagonal, the rest to the mean block.
    auto take_nearest = [&ev](std::complex<double> target) {
        auto it = std::min_element(ev.begin(), ev.end(), [&](auto a, auto b) { return std::abs(a - target) < std::abs(b - target); });
        const auto v = *it;
        ev.erase(it);
        return v;
    };
    out.lambda[2] = take_nearest(J(2, 2));
    out.lambda[3] = take_nearest(J(3, 3));
    std::sort(ev.begin(), ev.end(), [](auto a, auto b) {
        return std::abs(a.imag() - b.imag()) > 1e-12 ? a.imag() < b.imag() : a.real() < b.real();
    });
    out.lambda[0] = ev[0];
    out.lambda[1] = ev[1];
    const double scale = 1e-9 * (1.0 + std::abs(J(0, 0)) + std::abs(J(1, 1)) + std::abs(J(0, 1)) + std::abs(J(1, 0)));
    out.conjugate_pair = std::abs(out.lambda[0].imag()) > scale && std::abs(out.lambda[1] - std::conj(out.lambda[0])) < scale;

    if (hopf_closed_form_applies(q)) {
        const auto cf = hopf_closed_form_eigenvalues(q.A(), q.B(), sigma);
        for (std::size_t i = 0; i < 4; ++i) {
            if (std::abs(cf[i] - out.lambda[i]) > 1e-8) {
                throw AnalysisError("closed-form and numeric eigenvalue " + std::to_string(i + 1) + " disagree at sigma=" +
                                    std::to_string(sigma));
            }
        }
        out.closed_form_checked = true;
    }
    return out;
}

/// Bisection on sigma -> Re lambda1 until the bracket is narrower than tol.
inline double find_sigma_c(const ModelParams& p, double sigma_lo, double sigma_hi, double tol = 1e-6) {
    if (!(sigma_hi > sigma_lo) || !(sigma_lo >= 0.0) || !(tol > 0.0)) {
        throw ValidationError("find_sigma_c needs 0 <= sigma_lo < sigma_hi and tol > 0");
    }
    auto re = [&p](double s) { return hopf_eigenvalues(p, s).lambda[0].real(); };
    double lo = sigma_lo, hi = sigma_hi;
    double flo = re(lo);
    const double fhi = re(hi);
    if ((flo < 0.0) == (fhi < 0.0)) {
        throw AnalysisError("Re lambda1 has no sign change on [" + std::to_string(sigma_lo) + ", " +
                            std::to_string(sigma_hi) + "]");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double fm = re(mid);
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

struct HopfReport {
    std::vector<double> sigma_grid;
    std::vector<HopfEigen> eigen_table;
    std::optional<double> sigma_c;  // set when Re lambda1 changes sign on the grid
};

/// Eigenvalue scan over `points` evenly spaced sigmas in [sigma_lo, sigma_hi];
/// sigma_c is refined by bisection inside the first sign-change interval.
inline HopfReport hopf_scan(const ModelParams& p, double sigma_lo, double sigma_hi, std::size_t points, double tol = 1e-6) {
    if (points < 2 || !(sigma_hi > sigma_lo)) throw ValidationError("hopf_scan needs >= 2 points on a non-empty range");
    HopfReport rep;
    for (std::size_t i = 0; i < points; ++i) {
        const double s = sigma_lo + (sigma_hi - sigma_lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        rep.sigma_grid.push_back(s);
        rep.eigen_table.push_back(hopf_eigenvalues(p, s));
    }
    for (std::size_t i = 1; i < points; ++i) {
        const double a = rep.eigen_table[i - 1].lambda[0].real(), b = rep.eigen_table[i].lambda[0].real();
        if ((a < 0.0) != (b < 0.0)) {
            rep.sigma_c = find_sigma_c(p, rep.sigma_grid[i - 1], rep.sigma_grid[i], tol);
            break;
        }
    }
    return rep;
}

/// Sample of the Gaussian approximating pair on the grid k*dt.
struct TildePath {
    double dt = 0.0;
    std::vector<double> z1, z2;  // centered Gaussian parts
    std::vector<double> xt, yt;  // m1 + sigma z1, m2 + sigma z2
};

namespace detail {

inline MomentState moments_at(const MeanTrajectory& m, double t) {
    const double s = (t - m.t0) / m.dt_sample;
    const double last = static_cast<double>(m.size() - 1);
    if (s < -1e-9 || s > last + 1e-9) throw ValidationError("moment trajectory does not cover t=" + std::to_string(t));
    const double c = std::clamp(s, 0.0, last);
    if (m.size() == 1) return {m.m1[0], m.m2[0], m.v1[0], m.v2[0]};
    const auto k = static_cast<std::size_t>(std::min(std::floor(c), last - 1.0));
    const double w = c - static_cast<double>(k);
    auto lerp = [&](const std::vector<double>& v) { return v[k] + w * (v[k + 1] - v[k]); };
    return {lerp(m.m1), lerp(m.m2), lerp(m.v1), lerp(m.v2)};
}

}  // namespace detail

/// EM integration of the linear z-equations over p.steps steps with
/// standard-normal increments supplied by the caller (dW = sqrt(dt) * xi).
/// Means and variances are read from `moments` (interpolated if the grids differ).
inline TildePath simulate_tilde(const ModelParams& p, const MeanTrajectory& moments, std::span<const double> xi_x,
                                std::span<const double> xi_y) {
    moments.check();
    if (!moments.has_variances || moments.empty()) throw ValidationError("simulate_tilde needs a moment trajectory with variances");
    if (xi_x.size() < p.steps || xi_y.size() < p.steps) throw ValidationError("injected path shorter than p.steps");
    if (p.horizon() > moments.end_time() + 1e-9 * std::max(1.0, moments.end_time())) {
        throw ValidationError("simulation horizon exceeds the moment trajectory");
    }
    const bool aligned = moments.t0 == 0.0 && std::abs(moments.dt_sample - p.dt) <= 1e-15 * p.dt;
    auto at = [&](std::size_t k) {
        return aligned ? MomentState{moments.m1[k], moments.m2[k], moments.v1[k], moments.v2[k]}
                       : detail::moments_at(moments, p.dt * static_cast<double>(k));
    };
    const double c1 = 1.0 - p.intra1() - p.A();
    const double c2 = 1.0 - p.alpha * p.theta21 - p.intra2();
    const double sq = std::sqrt(p.dt);
    TildePath path;
    path.dt = p.dt;
    path.z1.assign(p.steps + 1, 0.0);
    path.z2.assign(p.steps + 1, 0.0);
    path.xt.resize(p.steps + 1);
    path.yt.resize(p.steps + 1);
    MomentState m = at(0);
    path.xt[0] = m.m1;
    path.yt[0] = m.m2;
    double z1 = 0.0, z2 = 0.0;
    for (std::size_t k = 0; k < p.steps; ++k) {
        const double a1 = -3.0 * m.v1 - 3.0 * m.m1 * m.m1 + c1;
        const double a2 = -3.0 * m.v2 - 3.0 * m.m2 * m.m2 + c2;
        z1 += p.dt * a1 * z1 + sq * xi_x[k];
        z2 += p.dt * a2 * z2 + sq * xi_y[k];
        m = at(k + 1);
        path.z1[k + 1] = z1;
        path.z2[k + 1] = z2;
        path.xt[k + 1] = m.m1 + p.sigma * z1;
        path.yt[k + 1] = m.m2 + p.sigma * z2;
    }
    return path;
}

/// Same, drawing step k's (xi_x, xi_y) as normal_pair(k) of `stream`.
inline TildePath simulate_tilde(const ModelParams& p, const MeanTrajectory& moments, const RngStream& stream) {
    std::vector<double> xi_x(p.steps), xi_y(p.steps);
    for (std::size_t k = 0; k < p.steps; ++k) {
        const auto pr = stream.normal_pair(k);
        xi_x[k] = pr[0];
        xi_y[k] = pr[1];
    }
    return simulate_tilde(p, moments, xi_x, xi_y);
}

struct TildeErrorOptions {
    double T = 1.0;
    double x0 = 0.8;
    double y0 = 0.8;
    std::size_t replicas = 1000;
    // The limiting means come from an antithetic Picard solve and the moments
    // from explicit Euler on the same grid, so both sides share one
    // discretization and the measured error is the approximation error.
    PicardOptions picard{1e-10, 20000, 200, true};
    OdeScheme moment_scheme = OdeScheme::euler;
};

struct TildeErrorReport {
    std::vector<double> sigmas;
    std::vector<double> errors;   // mean over replicas of sup_t |x - xt| + |y - yt|
    std::vector<double> stderrs;
    double fitted_slope = 0.0;    // log error on log sigma
    std::size_t replicas = 0;
};

/// Shared-path distance between the limiting pair and its Gaussian
/// approximation, for each sigma in `sigmas`.
inline TildeErrorReport tilde_error(const ModelParams& params, const std::vector<double>& sigmas,
                                    const TildeErrorOptions& opt = {}) {
    if (sigmas.empty()) throw ValidationError("sigma list must not be empty");
    if (opt.replicas < 1) throw ValidationError("replicas must be at least 1");
    TildeErrorReport rep;
    rep.sigmas = sigmas;
    rep.replicas = opt.replicas;
    const InitialCondition ic = InitialCondition::uniform_value(opt.x0, opt.y0);
    for (const double sigma : sigmas) {
        if (!(sigma > 0.0)) throw ValidationError("tilde_error needs sigma > 0");
        ModelParams q = params;
        q.n1 = q.n2 = 0;
        q.sigma = sigma;
        q.steps = static_cast<std::size_t>(std::llround(opt.T / q.dt));
        if (q.steps < 1) throw ValidationError("T shorter than one time step");
        const MeanFunctions means = picard_means(q, ic, opt.picard).means;
        const MeanTrajectory mom = integrate_moments({opt.x0, opt.y0, 0.0, 0.0}, q, opt.T, q.dt, 1, opt.moment_scheme);
        const std::uint64_t seed = derive_seed(params.seed, {static_cast<std::uint64_t>(SeedTag::tilde)});
        std::vector<double> err(opt.replicas);
        parallel_for(opt.replicas, [&](std::size_t r) {
            const RngStream stream(seed, r);
            const LimitingPath lim = simulate_limiting_pair(q, means, opt.x0, opt.y0, stream);
            const TildePath til = simulate_tilde(q, mom, stream);
            double sup = 0.0;
            for (std::size_t k = 0; k <= q.steps; ++k) {
                sup = std::max(sup, std::abs(lim.x[k] - til.xt[k]) + std::abs(lim.y[k] - til.yt[k]));
            }
            err[r] = sup;
        });
        const double mean = mean_of(err);
        double ss = 0.0;
        for (double e : err) ss += (e - mean) * (e - mean);
        rep.errors.push_back(mean);
        rep.stderrs.push_back(opt.replicas > 1 ? std::sqrt(ss / static_cast<double>(opt.replicas - 1) / static_cast<double>(opt.replicas)) : 0.0);
    }
    if (sigmas.size() >= 2) rep.fitted_slope = loglog_slope(sigmas, rep.errors);
    return rep;
}

}  // namespace fdiff
