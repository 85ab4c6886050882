#pragma once

#include <charconv>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fdiff/errors.hpp"

namespace fdiff {

/// Uniformly sampled (m1, m2) series, optionally with variances (v1, v2).
/// Sample i sits at time t0 + i * dt_sample.
struct MeanTrajectory {
    double t0 = 0.0;
    double dt_sample = 1.0;
    std::vector<double> m1;
    std::vector<double> m2;
    bool has_variances = false;
    std::vector<double> v1;
    std::vector<double> v2;

    std::size_t size() const noexcept { return m1.size(); }
    bool empty() const noexcept { return m1.empty(); }
    double time(std::size_t i) const noexcept { return t0 + static_cast<double>(i) * dt_sample; }
    double end_time() const noexcept { return empty() ? t0 : time(size() - 1); }

    void push_back(double a, double b) {
        m1.push_back(a);
        m2.push_back(b);
    }
    void push_back(double a, double b, double va, double vb) {
        push_back(a, b);
        v1.push_back(va);
        v2.push_back(vb);
    }

    /// Throws ValidationError when column lengths or sampling are inconsistent.
    void check() const {
        if (!(dt_sample > 0.0)) throw ValidationError("trajectory sampling interval must be positive");
        if (m1.size() != m2.size()) throw ValidationError("trajectory columns m1/m2 differ in length");
        if (has_variances && (v1.size() != m1.size() || v2.size() != m1.size())) {
            throw ValidationError("trajectory variance columns differ in length");
        }
        if (!has_variances && (!v1.empty() || !v2.empty())) {
            throw ValidationError("trajectory carries variances without has_variances");
        }
    }

    bool operator==(const MeanTrajectory&) const = default;
};

namespace detail {

inline void append_real(std::string& out, double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    out.append(buf, static_cast<std::size_t>(n));
}

inline double read_real(std::string_view s, int lineno) {
    double v = 0.0;
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw IoError("line " + std::to_string(lineno) + ": malformed number '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

/// CSV text: optional `# t0=...,dt_sample=...` line carrying the exact time
/// base, then the header `t,m1,m2[,v1,v2]` and one row per sample.
inline std::string format_series(const MeanTrajectory& traj) {
    traj.check();
    std::string out;
    out.reserve(64 * (traj.size() + 2));
    out += "# t0=";
    detail::append_real(out, traj.t0);
    out += ",dt_sample=";
    detail::append_real(out, traj.dt_sample);
    out += traj.has_variances ? "\nt,m1,m2,v1,v2\n" : "\nt,m1,m2\n";
    for (std::size_t i = 0; i < traj.size(); ++i) {
        detail::append_real(out, traj.time(i));
        out += ',';
        detail::append_real(out, traj.m1[i]);
        out += ',';
        detail::append_real(out, traj.m2[i]);
        if (traj.has_variances) {
            out += ',';
            detail::append_real(out, traj.v1[i]);
            out += ',';
            detail::append_real(out, traj.v2[i]);
        }
        out += '\n';
    }
    return out;
}

inline MeanTrajectory parse_series(const std::string& text) {
    MeanTrajectory traj;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool have_base = false;
    bool have_header = false;
    std::vector<double> times;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto t0p = line.find("t0=");
            const auto dtp = line.find("dt_sample=");
            if (t0p != std::string::npos && dtp != std::string::npos) {
                const auto comma = line.find(',', t0p);
                traj.t0 = detail::read_real(std::string_view(line).substr(t0p + 3, comma - t0p - 3), lineno);
                traj.dt_sample = detail::read_real(std::string_view(line).substr(dtp + 10), lineno);
                have_base = true;
            }
            continue;
        }
        if (!have_header) {
            if (line == "t,m1,m2") traj.has_variances = false;
            else if (line == "t,m1,m2,v1,v2") traj.has_variances = true;
            else throw IoError("malformed header '" + line + "'");
            have_header = true;
            continue;
        }
        const auto fields = detail::split_commas(line);
        const std::size_t want = traj.has_variances ? 5 : 3;
        if (fields.size() != want) {
            throw IoError("line " + std::to_string(lineno) + ": expected " + std::to_string(want) + " columns, got " +
                          std::to_string(fields.size()));
        }
        times.push_back(detail::read_real(fields[0], lineno));
        traj.m1.push_back(detail::read_real(fields[1], lineno));
        traj.m2.push_back(detail::read_real(fields[2], lineno));
        if (traj.has_variances) {
            traj.v1.push_back(detail::read_real(fields[3], lineno));
            traj.v2.push_back(detail::read_real(fields[4], lineno));
        }
    }
    if (!have_header) throw IoError("missing header line");
    if (!have_base && !times.empty()) {
        traj.t0 = times.front();
        if (times.size() > 1) traj.dt_sample = (times.back() - times.front()) / static_cast<double>(times.size() - 1);
    }
    if (!(traj.dt_sample > 0.0)) throw IoError("non-increasing time column");
    return traj;
}

inline void write_series(const std::string& path, const MeanTrajectory& traj) {
    const std::string text = format_series(traj);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

inline MeanTrajectory read_series(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_series(ss.str());
}

/// Writes `text` to `path`; throws IoError on failure.
inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write failed: " + path);
}

}  // namespace fdiff
