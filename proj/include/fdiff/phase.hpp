#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

/// Noiseless planar system for the two limiting means:
///   dx = -x^3 + x - A (x - y),   dy = -y^3 + y - B (x - y).
inline std::array<double, 2> vector_field(double x, double y, double A, double B) noexcept {
    return {-x * x * x + x - A * (x - y), -y * y * y + y - B * (x - y)};
}

/// Jacobian of vector_field, row-major {dfx/dx, dfx/dy, dfy/dx, dfy/dy}.
inline std::array<double, 4> field_jacobian(double x, double y, double A, double B) noexcept {
    return {-3.0 * x * x + 1.0 - A, A, -B, -3.0 * y * y + 1.0 + B};
}

/// Eigenvalues of a real 2x2 matrix; the first has the smaller real part
/// (or negative imaginary part for a complex pair).
inline std::array<std::complex<double>, 2> eig2(const std::array<double, 4>& m) {
    const double tr = m[0] + m[3];
    const double half_diff = 0.5 * (m[0] - m[3]);
    const double disc = half_diff * half_diff + m[1] * m[2];
    if (disc >= 0.0) {
        const double r = std::sqrt(disc);
        return {std::complex<double>(0.5 * tr - r, 0.0), std::complex<double>(0.5 * tr + r, 0.0)};
    }
    const double im = std::sqrt(-disc);
    return {std::complex<double>(0.5 * tr, -im), std::complex<double>(0.5 * tr, im)};
}

/// Lower end of the admissible beta domain: max((A-1)/A, B/(1+B)).
inline double beta_domain_lo(double A, double B) {
    if (!(A > 0.0) || !(B > 0.0)) throw ValidationError("beta map needs A > 0 and B > 0");
    return std::max((A - 1.0) / A, B / (1.0 + B));
}

/// f(beta) = sqrt[(1 - B(1-beta)/beta) / (1 - A(1-beta))]; equilibria off the
/// diagonal are (xbar, beta*xbar) with beta = f(beta), xbar = sqrt(1 - A(1-beta)).
inline double beta_map(double beta, double A, double B) {
    const double den = 1.0 - A * (1.0 - beta);
    if (!(beta > 0.0)) throw ValidationError("beta map needs beta > 0");
    const double num = 1.0 - B * (1.0 - beta) / beta;
    if (!(den > 0.0) || !(num >= 0.0)) {
        throw ValidationError("beta=" + std::to_string(beta) + " outside the admissible domain");
    }
    return std::sqrt(num / den);
}

/// Critical points of beta_map, (AB -+ sqrt(AB(B-A+1))) / (A(1+B)); absent
/// when B < A - 1.
inline std::optional<std::array<double, 2>> beta_critical_points(double A, double B) {
    const double d = A * B * (B - A + 1.0);
    if (d < 0.0) return std::nullopt;
    const double r = std::sqrt(d);
    const double den = A * (1.0 + B);
    return std::array<double, 2>{(A * B - r) / den, (A * B + r) / den};
}

enum class Regime { below_lower, lower_boundary, between, upper_boundary, above_upper };

/// Regimes B < A-1, B = A-1, A-1 < B < A+2, B = A+2, B > A+2 (equalities to 1e-9).
inline Regime classify_regime(double A, double B) {
    constexpr double tol = 1e-9;
    if (std::abs(B - (A - 1.0)) < tol) return Regime::lower_boundary;
    if (std::abs(B - (A + 2.0)) < tol) return Regime::upper_boundary;
    if (B < A - 1.0) return Regime::below_lower;
    if (B < A + 2.0) return Regime::between;
    return Regime::above_upper;
}

inline std::string to_string(Regime r) {
    switch (r) {
        case Regime::below_lower: return "B<A-1";
        case Regime::lower_boundary: return "B=A-1";
        case Regime::between: return "A-1<B<A+2";
        case Regime::upper_boundary: return "B=A+2";
        case Regime::above_upper: return "B>A+2";
    }
    return "?";
}

enum class EquilibriumKind {
    unstable_node,
    stable_node,
    saddle,
    stable_spiral,
    unstable_spiral,
    degenerate,
    center_candidate,
};

inline std::string to_string(EquilibriumKind k) {
    switch (k) {
        case EquilibriumKind::unstable_node: return "unstable-node";
        case EquilibriumKind::stable_node: return "stable-node";
        case EquilibriumKind::saddle: return "saddle";
        case EquilibriumKind::stable_spiral: return "stable-spiral";
        case EquilibriumKind::unstable_spiral: return "unstable-spiral";
        case EquilibriumKind::degenerate: return "degenerate";
        case EquilibriumKind::center_candidate: return "center-candidate";
    }
    return "?";
}

/// Eigenvalues below eps in modulus count as zero; |Im| above eps as complex.
inline EquilibriumKind classify(const std::array<std::complex<double>, 2>& ev, double eps) {
    if (std::abs(ev[0]) < eps || std::abs(ev[1]) < eps) return EquilibriumKind::degenerate;
    if (std::abs(ev[0].imag()) > eps) {
        const double re = ev[0].real();
        if (re < -eps) return EquilibriumKind::stable_spiral;
        if (re > eps) return EquilibriumKind::unstable_spiral;
        return EquilibriumKind::center_candidate;
    }
    const double a = ev[0].real(), b = ev[1].real();
    if (a < 0.0 && b < 0.0) return EquilibriumKind::stable_node;
    if (a > 0.0 && b > 0.0) return EquilibriumKind::unstable_node;
    return EquilibriumKind::saddle;
}

struct Equilibrium {
    double x = 0.0;
    double y = 0.0;
    std::optional<double> beta;  // y/x, absent for the origin
    std::array<std::complex<double>, 2> eigenvalues{};
    EquilibriumKind kind = EquilibriumKind::degenerate;
};

struct EquilibriumReport {
    double A = 0.0;
    double B = 0.0;
    double gamma = 0.0;  // A - B
    Regime regime = Regime::between;
    bool hypothesis_holds = false;  // A > 1 and B > A - 1
    std::vector<Equilibrium> equilibria;
};

namespace detail {

inline double beta_residual(double beta, double A, double B) { return beta - beta_map(beta, A, B); }

/// Roots of beta = f(beta) on [lo, hi] by sign scanning and bisection.
inline std::vector<double> scan_beta_roots(double lo, double hi, double A, double B, int panels) {
    std::vector<double> roots;
    if (!(hi > lo)) return roots;
    const double h = (hi - lo) / panels;
    double a = lo, ga = beta_residual(a, A, B);
    for (int i = 1; i <= panels; ++i) {
        const double b = (i == panels) ? hi : lo + h * i;
        const double gb = beta_residual(b, A, B);
        if (ga == 0.0) {
            roots.push_back(a);
        } else if ((ga < 0.0) != (gb < 0.0) && gb != 0.0) {
            double l = a, r = b, gl = ga;
            for (int it = 0; it < 200 && r - l > 1e-15 * std::max(1.0, std::abs(l)); ++it) {
                const double mid = 0.5 * (l + r);
                const double gm = beta_residual(mid, A, B);
                if ((gm < 0.0) == (gl < 0.0)) {
                    l = mid;
                    gl = gm;
                } else {
                    r = mid;
                }
            }
            roots.push_back(0.5 * (l + r));
        }
        a = b;
        ga = gb;
    }
    return roots;
}

/// Newton refinement of an equilibrium of the planar field.
inline std::array<double, 2> polish(double x, double y, double A, double B) {
    for (int it = 0; it < 50; ++it) {
        const auto f = vector_field(x, y, A, B);
        if (std::abs(f[0]) < 1e-15 && std::abs(f[1]) < 1e-15) break;
        const auto j = field_jacobian(x, y, A, B);
        const double det = j[0] * j[3] - j[1] * j[2];
        if (det == 0.0) break;
        const double dx = (j[3] * f[0] - j[1] * f[1]) / det;
        const double dy = (-j[2] * f[0] + j[0] * f[1]) / det;
        x -= dx;
        y -= dy;
        if (std::abs(dx) + std::abs(dy) < 1e-17) break;
    }
    return {x, y};
}

}  // namespace detail

/// All equilibria of the planar field for A > 0, B > 0: the origin, +-(1,1),
/// and the off-diagonal pair +-(xbar, beta xbar) when beta = f(beta) has a root
/// other than 1. Outside A > 1, B > A - 1 the result is best effort.
inline EquilibriumReport find_equilibria(double A, double B) {
    if (!std::isfinite(A) || !std::isfinite(B) || !(A > 0.0) || !(B > 0.0)) {
        throw ValidationError("find_equilibria needs finite A > 0 and B > 0");
    }
    EquilibriumReport rep;
    rep.A = A;
    rep.B = B;
    rep.gamma = A - B;
    rep.regime = classify_regime(A, B);
    rep.hypothesis_holds = A > 1.0 && B > A - 1.0;
    const double eps = 1e-9 * (1.0 + std::abs(A) + std::abs(B));
    using C = std::complex<double>;

    Equilibrium origin;
    origin.eigenvalues = {C(std::min(1.0, 1.0 - A + B)), C(std::max(1.0, 1.0 - A + B))};
    origin.kind = classify(origin.eigenvalues, eps);
    rep.equilibria.push_back(origin);

    const bool degenerate = rep.regime == Regime::upper_boundary;
    const double l2 = degenerate ? 0.0 : -2.0 - A + B;
    for (double s : {1.0, -1.0}) {
        Equilibrium e;
        e.x = s;
        e.y = s;
        e.beta = 1.0;
        e.eigenvalues = {C(std::min(-2.0, l2)), C(std::max(-2.0, l2))};
        e.kind = degenerate ? EquilibriumKind::degenerate : classify(e.eigenvalues, eps);
        rep.equilibria.push_back(e);
    }
    if (degenerate) return rep;

    const double lo = beta_domain_lo(A, B) + 1e-9;
    constexpr int kPanels = 10000;
    std::vector<double> roots = detail::scan_beta_roots(lo, 1.0 - 1e-6, A, B, kPanels);
    const auto upper = detail::scan_beta_roots(1.0 + 1e-6, 10.0, A, B, kPanels);
    roots.insert(roots.end(), upper.begin(), upper.end());

    for (double beta : roots) {
        const double xb = std::sqrt(1.0 - A * (1.0 - beta));
        const auto pt = detail::polish(xb, beta * xb, A, B);
        const auto res = vector_field(pt[0], pt[1], A, B);
        if (!(std::abs(res[0]) < 1e-10 && std::abs(res[1]) < 1e-10)) {
            throw AnalysisError("equilibrium polish failed near beta=" + std::to_string(beta));
        }
        for (double s : {1.0, -1.0}) {
            Equilibrium e;
            e.x = s * pt[0];
            e.y = s * pt[1];
            e.beta = pt[1] / pt[0];
            e.eigenvalues = eig2(field_jacobian(e.x, e.y, A, B));
            e.kind = classify(e.eigenvalues, eps);
            rep.equilibria.push_back(e);
        }
    }
    return rep;
}

/// Field samples on a res x res lattice spanning [xlo,xhi] x [ylo,yhi]
/// (endpoints included); magnitudes rescaled so the largest is 1.
struct FieldSample {
    std::size_t res = 0;
    std::vector<double> x, y, dx, dy, magnitude;  // row-major, y outer
};

inline FieldSample sample_field(double A, double B, double xlo, double xhi, double ylo, double yhi, std::size_t res) {
    if (res < 1) throw ValidationError("resolution must be positive");
    if (!(xhi >= xlo) || !(yhi >= ylo)) throw ValidationError("window bounds are inverted");
    FieldSample f;
    f.res = res;
    const std::size_t n = res * res;
    f.x.reserve(n);
    f.y.reserve(n);
    f.dx.reserve(n);
    f.dy.reserve(n);
    f.magnitude.reserve(n);
    auto coord = [res](double lo, double hi, std::size_t i) {
        return res == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(res - 1);
    };
    double peak = 0.0;
    for (std::size_t j = 0; j < res; ++j) {
        for (std::size_t i = 0; i < res; ++i) {
            const double x = coord(xlo, xhi, i), y = coord(ylo, yhi, j);
            const auto v = vector_field(x, y, A, B);
            f.x.push_back(x);
            f.y.push_back(y);
            f.dx.push_back(v[0]);
            f.dy.push_back(v[1]);
            const double m = std::hypot(v[0], v[1]);
            f.magnitude.push_back(m);
            peak = std::max(peak, m);
        }
    }
    if (peak > 0.0) {
        for (double& m : f.magnitude) m /= peak;
    }
    return f;
}

/// RK4 trajectory of the planar field, sampled every `stride` steps.
inline MeanTrajectory planar_trajectory(double x0, double y0, double A, double B, double T, double dt,
                                        std::size_t stride = 1) {
    if (!(dt > 0.0) || !(T >= 0.0) || stride < 1) throw ValidationError("planar_trajectory needs dt > 0, T >= 0, stride >= 1");
    const auto steps = static_cast<std::size_t>(std::llround(T / dt));
    MeanTrajectory tr;
    tr.dt_sample = dt * static_cast<double>(stride);
    double x = x0, y = y0;
    tr.push_back(x, y);
    for (std::size_t k = 1; k <= steps; ++k) {
        const auto k1 = vector_field(x, y, A, B);
        const auto k2 = vector_field(x + 0.5 * dt * k1[0], y + 0.5 * dt * k1[1], A, B);
        const auto k3 = vector_field(x + 0.5 * dt * k2[0], y + 0.5 * dt * k2[1], A, B);
        const auto k4 = vector_field(x + dt * k3[0], y + dt * k3[1], A, B);
        x += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
        if (!(std::abs(x) <= 1e6 && std::abs(y) <= 1e6)) throw DivergenceError("planar flow diverged", k, dt * static_cast<double>(k));
        if (k % stride == 0) tr.push_back(x, y);
    }
    return tr;
}

}  // namespace fdiff
