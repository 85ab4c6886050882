#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fdiff/errors.hpp"
#include "fdiff/phase.hpp"
#include "fdiff/table.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

enum class MarkerShape { filled_circle, open_circle, open_square, diamond };

struct PlotMarker {
    double x = 0.0;
    double y = 0.0;
    std::string label;
    MarkerShape shape = MarkerShape::filled_circle;
    std::string css_class = "marker";
};

/// Straight segment in data coordinates, used for direction fields.
struct PlotSegment {
    double x0, y0, x1, y1;
};

struct Plot {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool logx = false;
    bool logy = false;
    std::optional<std::array<double, 2>> xrange;
    std::optional<std::array<double, 2>> yrange;
    std::vector<PlotSeries> series;
    std::vector<PlotMarker> markers;
    std::vector<PlotSegment> segments;
};

namespace detail {

inline constexpr double kSvgWidth = 640.0;
inline constexpr double kSvgHeight = 480.0;
inline constexpr double kMarginLeft = 72.0, kMarginRight = 140.0, kMarginTop = 36.0, kMarginBottom = 52.0;
inline constexpr std::array<const char*, 8> kPalette = {"#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad",
                                                        "#d35400", "#16a085", "#7f8c8d", "#b7950b"};

inline std::string num(double v, const char* fmt = "%.2f") {
    char buf[48];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

inline std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Axis {
    double lo = 0.0, hi = 1.0;
    bool log = false;

    double transform(double v) const { return log ? std::log10(v) : v; }
    bool usable(double v) const { return std::isfinite(v) && (!log || v > 0.0); }
};

inline Axis fit_axis(const std::vector<double>& values, bool log, std::optional<std::array<double, 2>> fixed) {
    Axis a;
    a.log = log;
    if (fixed) {
        a.lo = a.transform((*fixed)[0]);
        a.hi = a.transform((*fixed)[1]);
        if (!(a.hi > a.lo)) throw ValidationError("plot range must be increasing");
        return a;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values) {
        if (!a.usable(v)) continue;
        lo = std::min(lo, a.transform(v));
        hi = std::max(hi, a.transform(v));
    }
    if (!(lo <= hi)) {
        lo = 0.0;
        hi = 1.0;
    } else if (hi - lo < 1e-12 * (1.0 + std::abs(lo))) {
        const double pad = std::max(0.5, 0.1 * std::abs(lo));
        lo -= pad;
        hi += pad;
    } else {
        const double pad = 0.04 * (hi - lo);
        lo -= pad;
        hi += pad;
    }
    a.lo = lo;
    a.hi = hi;
    return a;
}

inline std::vector<double> ticks(const Axis& a) {
    const double raw = (a.hi - a.lo) / 5.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0}) {
        step = m * mag;
        if (step >= raw) break;
    }
    if (a.log) step = std::max(step, 1.0);
    std::vector<double> out;
    for (double t = std::ceil(a.lo / step) * step; t <= a.hi + 1e-9 * step; t += step) {
        out.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
    }
    return out;
}

}  // namespace detail

/// Deterministic static SVG. A plot without data still gets both axes.
inline std::string render_svg(const Plot& plot) {
    using namespace detail;
    std::vector<double> xs, ys;
    for (const auto& s : plot.series) {
        if (s.x.size() != s.y.size()) throw ValidationError("series '" + s.label + "' has mismatched x/y lengths");
        xs.insert(xs.end(), s.x.begin(), s.x.end());
        ys.insert(ys.end(), s.y.begin(), s.y.end());
    }
    for (const auto& m : plot.markers) {
        xs.push_back(m.x);
        ys.push_back(m.y);
    }
    for (const auto& g : plot.segments) {
        xs.insert(xs.end(), {g.x0, g.x1});
        ys.insert(ys.end(), {g.y0, g.y1});
    }
    const Axis ax = fit_axis(xs, plot.logx, plot.xrange);
    const Axis ay = fit_axis(ys, plot.logy, plot.yrange);

    const double left = kMarginLeft, right = kSvgWidth - kMarginRight;
    const double top = kMarginTop, bottom = kSvgHeight - kMarginBottom;
    auto px = [&](double v) { return left + (ax.transform(v) - ax.lo) / (ax.hi - ax.lo) * (right - left); };
    auto py = [&](double v) { return bottom - (ay.transform(v) - ay.lo) / (ay.hi - ay.lo) * (bottom - top); };
    auto inside = [&](double x, double y) {
        if (!ax.usable(x) || !ay.usable(y)) return false;
        const double tx = ax.transform(x), ty = ay.transform(y);
        return tx >= ax.lo && tx <= ax.hi && ty >= ay.lo && ty <= ay.hi;
    };

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(kSvgWidth, "%.0f") + "\" height=\"" +
         num(kSvgHeight, "%.0f") + "\" viewBox=\"0 0 " + num(kSvgWidth, "%.0f") + " " + num(kSvgHeight, "%.0f") + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!plot.title.empty()) {
        s += "<text x=\"" + num(0.5 * (left + right)) + "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"15\">" + xml_escape(plot.title) + "</text>\n";
    }

    // Axes box, ticks and labels.
    s += "<g class=\"axes\" stroke=\"black\" stroke-width=\"1\" fill=\"none\">\n";
    s += "<rect x=\"" + num(left) + "\" y=\"" + num(top) + "\" width=\"" + num(right - left) + "\" height=\"" +
         num(bottom - top) + "\"/>\n";
    s += "</g>\n<g class=\"ticks\" font-family=\"sans-serif\" font-size=\"11\">\n";
    for (double t : ticks(ax)) {
        const double x = left + (t - ax.lo) / (ax.hi - ax.lo) * (right - left);
        const double label = ax.log ? std::pow(10.0, t) : t;
        s += "<line x1=\"" + num(x) + "\" y1=\"" + num(bottom) + "\" x2=\"" + num(x) + "\" y2=\"" + num(bottom + 5) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(x) + "\" y=\"" + num(bottom + 18) + "\" text-anchor=\"middle\">" + num(label, "%.4g") +
             "</text>\n";
    }
    for (double t : ticks(ay)) {
        const double y = bottom - (t - ay.lo) / (ay.hi - ay.lo) * (bottom - top);
        const double label = ay.log ? std::pow(10.0, t) : t;
        s += "<line x1=\"" + num(left - 5) + "\" y1=\"" + num(y) + "\" x2=\"" + num(left) + "\" y2=\"" + num(y) +
             "\" stroke=\"black\"/>\n";
        s += "<text x=\"" + num(left - 8) + "\" y=\"" + num(y + 4) + "\" text-anchor=\"end\">" + num(label, "%.4g") +
             "</text>\n";
    }
    s += "</g>\n";
    if (!plot.xlabel.empty()) {
        s += "<text x=\"" + num(0.5 * (left + right)) + "\" y=\"" + num(kSvgHeight - 12) +
             "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(plot.xlabel) + "</text>\n";
    }
    if (!plot.ylabel.empty()) {
        const double cy = 0.5 * (top + bottom);
        s += "<text x=\"18\" y=\"" + num(cy) + "\" transform=\"rotate(-90 18 " + num(cy) +
             ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + xml_escape(plot.ylabel) + "</text>\n";
    }

    if (!plot.segments.empty()) {
        s += "<g class=\"field\" stroke=\"#9aa5b1\" stroke-width=\"0.8\">\n";
        for (const auto& g : plot.segments) {
            if (!inside(g.x0, g.y0) || !inside(g.x1, g.y1)) continue;
            s += "<line x1=\"" + num(px(g.x0)) + "\" y1=\"" + num(py(g.y0)) + "\" x2=\"" + num(px(g.x1)) + "\" y2=\"" +
                 num(py(g.y1)) + "\"/>\n";
        }
        s += "</g>\n";
    }

    for (std::size_t k = 0; k < plot.series.size(); ++k) {
        const auto& ser = plot.series[k];
        const char* color = kPalette[k % kPalette.size()];
        s += "<g class=\"series\" fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.3\">\n";
        // Non-finite or out-of-range points split the line.
        std::string pts;
        auto flush = [&] {
            if (!pts.empty()) s += "<polyline points=\"" + pts + "\"/>\n";
            pts.clear();
        };
        for (std::size_t i = 0; i < ser.x.size(); ++i) {
            if (!inside(ser.x[i], ser.y[i])) {
                flush();
                continue;
            }
            if (!pts.empty()) pts += ' ';
            pts += num(px(ser.x[i])) + "," + num(py(ser.y[i]));
        }
        flush();
        s += "</g>\n";
        if (!ser.label.empty()) {
            const double ly = top + 14.0 + 16.0 * static_cast<double>(k);
            s += "<line x1=\"" + num(right + 10) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" + num(right + 28) + "\" y2=\"" +
                 num(ly - 4) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
            s += "<text x=\"" + num(right + 32) + "\" y=\"" + num(ly) +
                 "\" font-family=\"sans-serif\" font-size=\"11\">" + xml_escape(ser.label) + "</text>\n";
        }
    }

    for (const auto& m : plot.markers) {
        if (!ax.usable(m.x) || !ay.usable(m.y)) continue;
        const double x = px(m.x), y = py(m.y);
        s += "<g class=\"" + xml_escape(m.css_class) + "\">";
        if (!m.label.empty()) s += "<title>" + xml_escape(m.label) + "</title>";
        switch (m.shape) {
            case MarkerShape::filled_circle:
                s += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"5\" fill=\"black\"/>";
                break;
            case MarkerShape::open_circle:
                s += "<circle cx=\"" + num(x) + "\" cy=\"" + num(y) + "\" r=\"5\" fill=\"white\" stroke=\"black\"/>";
                break;
            case MarkerShape::open_square:
                s += "<rect x=\"" + num(x - 5) + "\" y=\"" + num(y - 5) +
                     "\" width=\"10\" height=\"10\" fill=\"white\" stroke=\"black\"/>";
                break;
            case MarkerShape::diamond:
                s += "<polygon points=\"" + num(x) + "," + num(y - 6) + " " + num(x + 6) + "," + num(y) + " " + num(x) +
                     "," + num(y + 6) + " " + num(x - 6) + "," + num(y) + "\" fill=\"gray\" stroke=\"black\"/>";
                break;
        }
        s += "</g>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Stable points filled, saddles as squares, unstable points open,
/// degenerate ones as diamonds.
inline MarkerShape marker_for(EquilibriumKind k) {
    switch (k) {
        case EquilibriumKind::stable_node:
        case EquilibriumKind::stable_spiral: return MarkerShape::filled_circle;
        case EquilibriumKind::saddle: return MarkerShape::open_square;
        case EquilibriumKind::unstable_node:
        case EquilibriumKind::unstable_spiral: return MarkerShape::open_circle;
        default: return MarkerShape::diamond;
    }
}

/// Phase plane of the planar field: one marker per equilibrium of `rep`,
/// a direction field on `res` x `res` points and the given trajectories.
inline Plot phase_plane_plot(const EquilibriumReport& rep, const std::vector<MeanTrajectory>& paths,
                             std::array<double, 2> window = {-2.0, 2.0}, std::size_t res = 20) {
    Plot plot;
    plot.title = "phase plane A=" + detail::num(rep.A, "%g") + " B=" + detail::num(rep.B, "%g");
    plot.xlabel = "m1";
    plot.ylabel = "m2";
    plot.xrange = window;
    plot.yrange = window;
    if (res >= 2) {
        const FieldSample f = sample_field(rep.A, rep.B, window[0], window[1], window[0], window[1], res);
        const double len = 0.4 * (window[1] - window[0]) / static_cast<double>(res);
        for (std::size_t i = 0; i < f.x.size(); ++i) {
            if (!(f.magnitude[i] > 0.0)) continue;
            const double ux = f.dx[i] / std::hypot(f.dx[i], f.dy[i]), uy = f.dy[i] / std::hypot(f.dx[i], f.dy[i]);
            plot.segments.push_back({f.x[i] - len * ux, f.y[i] - len * uy, f.x[i] + len * ux, f.y[i] + len * uy});
        }
    }
    for (std::size_t k = 0; k < paths.size(); ++k) {
        PlotSeries s;
        s.label = paths.size() > 1 ? "path " + std::to_string(k + 1) : "path";
        s.x = paths[k].m1;
        s.y = paths[k].m2;
        plot.series.push_back(std::move(s));
    }
    for (const auto& e : rep.equilibria) {
        PlotMarker m;
        m.x = e.x;
        m.y = e.y;
        m.shape = marker_for(e.kind);
        m.css_class = "equilibrium";
        m.label = to_string(e.kind) + " (" + detail::num(e.x, "%.4f") + ", " + detail::num(e.y, "%.4f") + ")";
        plot.markers.push_back(std::move(m));
    }
    return plot;
}

enum class PlotKind { lines, series, phase, spectrum, hopf, loglog, density };

inline PlotKind parse_plot_kind(const std::string& s) {
    if (s == "lines") return PlotKind::lines;
    if (s == "series") return PlotKind::series;
    if (s == "phase") return PlotKind::phase;
    if (s == "spectrum") return PlotKind::spectrum;
    if (s == "hopf") return PlotKind::hopf;
    if (s == "loglog") return PlotKind::loglog;
    if (s == "density") return PlotKind::density;
    throw ValidationError("unknown plot kind '" + s + "'");
}

struct PlotRequest {
    PlotKind kind = PlotKind::lines;
    std::string title;
    // Phase plots mark the equilibria of (A, B) when both are given.
    std::optional<double> A;
    std::optional<double> B;
};

/// Builds the plot for one or more CSV tables. The first column is the
/// abscissa (m1 for phase plots); every other column becomes a series.
inline Plot plot_from_tables(const std::vector<Table>& tables, const PlotRequest& req) {
    Plot plot;
    plot.title = req.title;
    auto add_columns = [&](const Table& t, std::size_t xcol, const std::string& prefix) {
        for (std::size_t c = 0; c < t.names.size(); ++c) {
            if (c == xcol) continue;
            plot.series.push_back({prefix + t.names[c], t.columns[xcol], t.columns[c]});
        }
    };
    const bool many = tables.size() > 1;
    for (std::size_t k = 0; k < tables.size(); ++k) {
        const Table& t = tables[k];
        if (t.names.empty()) throw IoError("table without columns");
        const std::string prefix = many ? std::to_string(k + 1) + ":" : "";
        switch (req.kind) {
            case PlotKind::phase:
                plot.series.push_back({many ? "path " + std::to_string(k + 1) : "path", t.column("m1"), t.column("m2")});
                break;
            case PlotKind::series: {
                const std::size_t tc = t.find("t");
                if (tc >= t.names.size()) throw IoError("series plot needs a 't' column");
                add_columns(t, tc, prefix);
                break;
            }
            case PlotKind::hopf: {
                const std::size_t sc = t.find("sigma");
                if (sc >= t.names.size()) throw IoError("hopf plot needs a 'sigma' column");
                for (const char* name : {"re_l1", "re_l2", "l3", "l4"}) {
                    if (t.find(name) < t.names.size()) plot.series.push_back({prefix + name, t.columns[sc], t.column(name)});
                }
                break;
            }
            case PlotKind::loglog:
                if (t.names.size() < 2) throw IoError("loglog plot needs two columns");
                plot.series.push_back({prefix + t.names[1], t.columns[0], t.columns[1]});
                break;
            default:
                add_columns(t, 0, prefix);
        }
    }
    const std::string xname = tables.empty() || tables[0].names.empty() ? "" : tables[0].names[0];
    switch (req.kind) {
        case PlotKind::phase: {
            plot.xlabel = "m1";
            plot.ylabel = "m2";
            if (req.A && req.B) {
                const EquilibriumReport rep = find_equilibria(*req.A, *req.B);
                Plot pp = phase_plane_plot(rep, {}, {-2.0, 2.0}, 0);
                plot.markers = std::move(pp.markers);
            }
            break;
        }
        case PlotKind::series: plot.xlabel = "t"; break;
        case PlotKind::spectrum:
            plot.xlabel = "frequency";
            plot.ylabel = "power";
            break;
        case PlotKind::hopf:
            plot.xlabel = "sigma";
            plot.ylabel = "eigenvalue";
            break;
        case PlotKind::loglog:
            plot.logx = plot.logy = true;
            plot.xlabel = xname;
            plot.ylabel = tables.empty() || tables[0].names.size() < 2 ? "" : tables[0].names[1];
            break;
        case PlotKind::density:
            plot.xlabel = "x";
            plot.ylabel = "density";
            break;
        case PlotKind::lines: plot.xlabel = xname; break;
    }
    return plot;
}

}  // namespace fdiff
