#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fdiff/errors.hpp"

namespace fdiff {

/// Model and discretization constants of the two-population system.
///
/// Population 1 has n1 particles at positions x, population 2 has n2 at y.
/// The inter-population couplings are usually quoted through the derived
/// pair (A, B); those are computed on demand and never stored.
struct ModelParams {
    std::size_t n1 = 500;
    std::size_t n2 = 500;
    double alpha = 0.5;
    double theta11 = 8.0;
    double theta22 = 8.0;
    double theta12 = 4.0;
    double theta21 = -5.0;
    double sigma = 0.5;
    double dt = 0.005;
    std::size_t steps = 1;
    std::uint64_t seed = 1;

    /// (1 - alpha) * theta12: pull of population 1 toward the mean of 2.
    double A() const noexcept { return (1.0 - alpha) * theta12; }
    /// -alpha * theta21: push of population 2 away from the mean of 1.
    double B() const noexcept { return -alpha * theta21; }
    /// alpha * theta11
    double intra1() const noexcept { return alpha * theta11; }
    /// (1 - alpha) * theta22
    double intra2() const noexcept { return (1.0 - alpha) * theta22; }

    std::size_t n() const noexcept { return n1 + n2; }
    double horizon() const noexcept { return dt * static_cast<double>(steps); }

    /// Sets theta12 and theta21 so that A() and B() return the given values.
    ModelParams& set_coupling(double a, double b) {
        if (!(alpha > 0.0 && alpha < 1.0)) {
            throw ValidationError("coupling (A, B) needs 0 < alpha < 1");
        }
        theta12 = a / (1.0 - alpha);
        theta21 = -b / alpha;
        return *this;
    }
};

/// Checks consistency and returns the normalized copy (alpha snapped to
/// n1/(n1+n2) when both counts are set).
inline ModelParams validate_params(ModelParams p) {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(p.dt) || p.dt <= 0.0) throw ValidationError("dt must be positive, got " + std::to_string(p.dt));
    if (p.steps < 1) throw ValidationError("steps must be at least 1");
    if (!finite(p.sigma) || p.sigma < 0.0) throw ValidationError("sigma must be non-negative, got " + std::to_string(p.sigma));
    if (!finite(p.alpha) || p.alpha < 0.0 || p.alpha > 1.0) {
        throw ValidationError("alpha must lie in [0,1], got " + std::to_string(p.alpha));
    }
    if (!finite(p.theta11) || !finite(p.theta22) || !finite(p.theta12) || !finite(p.theta21)) {
        throw ValidationError("coupling strengths must be finite");
    }
    if (p.n1 > 0 && p.n2 > 0) {
        const double ratio = static_cast<double>(p.n1) / static_cast<double>(p.n1 + p.n2);
        if (std::abs(ratio - p.alpha) > 1e-12) {
            throw ValidationError("alpha=" + std::to_string(p.alpha) + " inconsistent with n1/(n1+n2)=" +
                                  std::to_string(ratio));
        }
        p.alpha = ratio;
    }
    return p;
}

/// Parameters for the two-community setting with alpha = 0.5 and equal
/// intra-population couplings, parameterized by (A, B, sigma).
inline ModelParams coupled_params(double a, double b, double sigma, std::size_t n = 1000, double theta_intra = 8.0) {
    ModelParams p;
    p.n1 = n / 2;
    p.n2 = n - n / 2;
    p.alpha = n > 0 ? static_cast<double>(p.n1) / static_cast<double>(n) : 0.5;
    p.theta11 = theta_intra;
    p.theta22 = theta_intra;
    p.sigma = sigma;
    p.set_coupling(a, b);
    return p;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ValidationError("config key '" + key + "': not a number: '" + v + "'");
    }
    if (used != v.size()) throw ValidationError("config key '" + key + "': trailing characters in '" + v + "'");
    return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    }
    return std::stoull(v);
}

}  // namespace detail

/// Applies a flat `key=value` text (ModelParams field names, '#' comments)
/// on top of `base`. Unknown keys are rejected.
inline ModelParams apply_config(ModelParams base, const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": missing '='");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        if (key == "n1") base.n1 = detail::parse_count(key, val);
        else if (key == "n2") base.n2 = detail::parse_count(key, val);
        else if (key == "alpha") base.alpha = detail::parse_real(key, val);
        else if (key == "theta11") base.theta11 = detail::parse_real(key, val);
        else if (key == "theta22") base.theta22 = detail::parse_real(key, val);
        else if (key == "theta12") base.theta12 = detail::parse_real(key, val);
        else if (key == "theta21") base.theta21 = detail::parse_real(key, val);
        else if (key == "sigma") base.sigma = detail::parse_real(key, val);
        else if (key == "dt") base.dt = detail::parse_real(key, val);
        else if (key == "steps") base.steps = detail::parse_count(key, val);
        else if (key == "seed") base.seed = detail::parse_count(key, val);
        else throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
    return base;
}

inline ModelParams load_config(const std::string& path, ModelParams base = {}) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return apply_config(base, ss.str());
}

/// Inverse of apply_config; full precision.
inline std::string to_config(const ModelParams& p) {
    std::ostringstream o;
    o.precision(17);
    o << "n1=" << p.n1 << "\nn2=" << p.n2 << "\nalpha=" << p.alpha << "\ntheta11=" << p.theta11
      << "\ntheta22=" << p.theta22 << "\ntheta12=" << p.theta12 << "\ntheta21=" << p.theta21 << "\nsigma=" << p.sigma
      << "\ndt=" << p.dt << "\nsteps=" << p.steps << "\nseed=" << p.seed << "\n";
    return o.str();
}

}  // namespace fdiff
