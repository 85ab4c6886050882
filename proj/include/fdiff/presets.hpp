#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fftw3.h>
#include <json.hpp>

#include "fdiff/errors.hpp"
#include "fdiff/fokker_planck.hpp"
#include "fdiff/limiting.hpp"
#include "fdiff/moments.hpp"
#include "fdiff/params.hpp"
#include "fdiff/particles.hpp"
#include "fdiff/phase.hpp"
#include "fdiff/rhythm.hpp"
#include "fdiff/svg.hpp"
#include "fdiff/table.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

inline constexpr const char* kVersion = "0.1.0";

enum class Scale { desk, full };

inline Scale parse_scale(const std::string& s) {
    if (s == "desk") return Scale::desk;
    if (s == "full") return Scale::full;
    throw ValidationError("scale must be 'desk' or 'full', got '" + s + "'");
}

inline std::string to_string(Scale s) { return s == Scale::desk ? "desk" : "full"; }

/// One pass/fail verdict tied to a numbered acceptance criterion.
struct CriterionCheck {
    int criterion = 0;
    std::string name;
    bool passed = false;
    std::string detail;
};

struct OutputFile {
    std::string name;
    std::string content;
};

struct PresetResult {
    std::string name;
    std::uint64_t seed = 1;
    Scale scale = Scale::desk;
    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    nlohmann::ordered_json summary = nlohmann::ordered_json::object();
    std::vector<CriterionCheck> checks;
    std::vector<OutputFile> files;
    double wall_seconds = 0.0;

    void add_params(const std::string& label, const ModelParams& p) {
        params.push_back({{"label", label}, {"n1", p.n1}, {"n2", p.n2}, {"alpha", p.alpha}, {"theta11", p.theta11},
                          {"theta22", p.theta22}, {"theta12", p.theta12}, {"theta21", p.theta21}, {"A", p.A()},
                          {"B", p.B()}, {"sigma", p.sigma}, {"dt", p.dt}, {"steps", p.steps}, {"seed", p.seed}});
    }
    void add_file(std::string file, std::string content) { files.push_back({std::move(file), std::move(content)}); }
    void check(int criterion, std::string label, bool ok, std::string detail) {
        checks.push_back({criterion, std::move(label), ok, std::move(detail)});
    }
};

struct PresetContext {
    std::uint64_t seed = 1;
    Scale scale = Scale::desk;
    bool desk() const noexcept { return scale == Scale::desk; }
};

/// A named, fully determined experiment: the pipeline reads nothing but
/// the context, so name + seed + scale reproduce every output.
struct ExperimentPreset {
    std::string name;
    std::string description;
    std::vector<int> criteria;
    std::function<void(const PresetContext&, PresetResult&)> pipeline;
};

/// The three coupling regimes and their reference numbers.
struct RegimeReference {
    double A, B, sigma;
    double poincare_period;
    double dft_period;
    double sigma_c;
};

inline constexpr std::array<RegimeReference, 3> kRegimes = {{
    {2.0, 2.5, 0.5, 19.35, 19.31, 1.65},
    {2.0, 4.0, 0.1, 29.34, 28.90, 2.00},
    {2.0, 7.0, 0.6, 6.45, 6.45, 2.45},
}};

namespace detail {

inline std::string fmt(double v, const char* f = "%.6g") { return num(v, f); }

inline std::string tag(double B) { return "b" + fmt(B, "%g"); }

inline bool within_rel(double value, double ref, double rel) { return std::abs(value - ref) <= rel * std::abs(ref); }

inline Plot series_plot(const std::string& title, const std::vector<std::pair<std::string, const MeanTrajectory*>>& runs,
                        bool m1_only = false) {
    Plot plot;
    plot.title = title;
    plot.xlabel = "t";
    plot.ylabel = m1_only ? "m1" : "mean";
    for (const auto& [label, tr] : runs) {
        std::vector<double> t(tr->size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = tr->time(i);
        plot.series.push_back({m1_only ? label : label + " m1", t, tr->m1});
        if (!m1_only) plot.series.push_back({label + " m2", t, tr->m2});
    }
    return plot;
}

inline MeanTrajectory tail(const MeanTrajectory& tr, double from) {
    MeanTrajectory out;
    out.dt_sample = tr.dt_sample;
    const std::size_t i0 = burn_in_index(tr, from);
    out.t0 = tr.time(i0);
    for (std::size_t i = i0; i < tr.size(); ++i) out.push_back(tr.m1[i], tr.m2[i]);
    return out;
}

// ---------------------------------------------------------------- periods

/// Period spacing between the peak bin and its lower neighbour.
inline double bin_width_in_period(const SpectrumReport& s) {
    const double k = std::round(s.peak_frequency / s.bin_width);
    if (k <= 1.0) return std::numeric_limits<double>::infinity();
    return 1.0 / (s.bin_width * (k - 1.0)) - 1.0 / (s.bin_width * k);
}

inline void table1_row(std::size_t row, const PresetContext& ctx, PresetResult& out) {
    const RegimeReference& r = kRegimes[row];
    const std::size_t burn_steps = 20000;
    const std::size_t record_steps = ctx.desk() ? 200000 : 1000000;
    const std::size_t replicas = ctx.desk() ? 10 : 50;
    const std::size_t poincare_runs = ctx.desk() ? 5 : replicas;
    const std::size_t stride = 20;

    ModelParams p = coupled_params(r.A, r.B, r.sigma);
    p.seed = ctx.seed;
    p.steps = burn_steps + record_steps;
    out.add_params("particles", p);
    const double burn = p.dt * static_cast<double>(burn_steps);

    const std::vector<MeanTrajectory> reps = simulate_replicas(p, InitialCondition{}, replicas, stride);
    const std::vector<MeanTrajectory> seeds(reps.begin(), reps.begin() + static_cast<std::ptrdiff_t>(poincare_runs));
    const PoincareSummary poincare = poincare_summary(seeds, burn);
    const PoincareSummary all = poincare_summary(reps, burn);
    const auto [spec, dft] = dft_period(reps, burn);
    const double bin = bin_width_in_period(spec);

    Table periods({"replica", "poincare_mean", "poincare_std", "crossings", "dft_peak_period"});
    for (std::size_t i = 0; i < reps.size(); ++i) {
        periods.add_row({static_cast<double>(i), all.runs[i].mean_period, all.runs[i].std_period,
                         static_cast<double>(all.runs[i].n_events), 1.0 / spec.replica_peaks[i]});
    }
    Table power({"freq", "power"});
    for (std::size_t i = 0; i < spec.frequencies.size(); ++i) power.add_row({spec.frequencies[i], spec.power[i]});

    out.summary = {{"A", r.A},
                   {"B", r.B},
                   {"sigma", r.sigma},
                   {"burn_in_time", burn},
                   {"replicas", replicas},
                   {"poincare_runs", poincare_runs},
                   {"poincare_mean", poincare.mean_period},
                   {"poincare_std_of_run_means", poincare.std_run_means},
                   {"poincare_pooled_std", poincare.pooled_std},
                   {"poincare_mean_all_replicas", all.mean_period},
                   {"dft_period", dft.mean_period},
                   {"dft_replica_std", dft.std_period},
                   {"dft_bin_width_period", bin},
                   {"reference_poincare", r.poincare_period},
                   {"reference_dft", r.dft_period}};

    out.check(1, "poincare period A=2 B=" + fmt(r.B, "%g"), within_rel(poincare.mean_period, r.poincare_period, 0.05),
              "mean " + fmt(poincare.mean_period) + " vs " + fmt(r.poincare_period) + " (5%)");
    const double gap = std::abs(dft.mean_period - all.mean_period);
    const bool dft_ok = within_rel(dft.mean_period, r.dft_period, 0.05) && gap <= std::max(0.5, bin);
    out.check(2, "dft period A=2 B=" + fmt(r.B, "%g"), dft_ok,
              "peak " + fmt(dft.mean_period) + " vs " + fmt(r.dft_period) + " (5%), |dft-poincare| " + fmt(gap) +
                  " <= " + fmt(std::max(0.5, bin)));

    out.add_file("periods.csv", format_table(periods));
    out.add_file("spectrum.csv", format_table(power));
    out.add_file("means_r0.csv", format_series(reps[0]));
    out.add_file("means_r0.svg", render_svg(series_plot("particle means, replica 0", {{"", &reps[0]}})));
    Plot sp = plot_from_tables({power}, {PlotKind::spectrum, "averaged spectrum", {}, {}});
    sp.xrange = std::array<double, 2>{0.0, 1.0};
    out.add_file("spectrum.svg", render_svg(sp));
    out.add_file("phase.svg", render_svg(phase_plane_plot(find_equilibria(r.A, r.B), {tail(reps[0], burn)})));
}

// ---------------------------------------------------------------- regimes

inline void fig2(const PresetContext& ctx, PresetResult& out) {
    const std::size_t steps = ctx.desk() ? 100000 : 200000;
    Table regimes({"A", "B", "sigma", "returns", "mean_interval", "std_interval"});
    for (const auto& r : kRegimes) {
        const std::array<double, 3> sigmas = {0.0, r.sigma, 5.0};
        std::array<MeanTrajectory, 3> runs;
        std::array<std::size_t, 3> returns{};
        std::array<double, 3> mean_iv{}, std_iv{};
        for (std::size_t k = 0; k < 3; ++k) {
            ModelParams p = coupled_params(r.A, r.B, sigmas[k]);
            p.seed = ctx.seed;
            p.steps = steps;
            out.add_params(tag(r.B) + " sigma=" + fmt(sigmas[k], "%g"), p);
            runs[k] = simulate_particles(p, InitialCondition{}, 20).means;
            const auto t = poincare_crossings(runs[k], 0.1 * p.horizon());
            returns[k] = t.size();
            std::vector<double> d;
            for (std::size_t i = 0; i + 1 < t.size(); ++i) d.push_back(t[i + 1] - t[i]);
            mean_iv[k] = d.empty() ? 0.0 : plain_mean(d);
            std_iv[k] = d.size() < 2 ? 0.0 : sample_std(d, mean_iv[k]);
            regimes.add_row({r.A, r.B, sigmas[k], static_cast<double>(returns[k]), mean_iv[k], std_iv[k]});
            out.add_file("means_" + tag(r.B) + "_s" + fmt(sigmas[k], "%g") + ".csv", format_series(runs[k]));
        }
        const bool silent = returns[0] < 2;
        const bool rhythm = returns[1] >= 10;
        const bool broken = returns[2] < 2 || std_iv[2] > 0.5 * mean_iv[2];
        out.check(3, "noise regimes A=2 B=" + fmt(r.B, "%g"), silent && rhythm && broken,
                  "returns sigma=0: " + std::to_string(returns[0]) + ", sigma=" + fmt(r.sigma, "%g") + ": " +
                      std::to_string(returns[1]) + ", sigma=5: " + std::to_string(returns[2]) + " (interval std/mean " +
                      fmt(mean_iv[2] > 0.0 ? std_iv[2] / mean_iv[2] : 0.0) + ")");
        out.add_file("means_" + tag(r.B) + ".svg",
                     render_svg(series_plot("m1 at A=2 B=" + fmt(r.B, "%g"),
                                            {{"sigma=0", &runs[0]}, {"sigma=" + fmt(r.sigma, "%g"), &runs[1]}, {"sigma=5", &runs[2]}},
                                            true)));
    }
    out.add_file("regimes.csv", format_table(regimes));
    out.summary = {{"steps", steps}, {"burn_in_fraction", 0.1}};
}

// ---------------------------------------------------------------- equilibria

inline std::string equilibria_csv(const std::vector<EquilibriumReport>& reps) {
    std::string s = "A,B,x,y,re_l1,im_l1,re_l2,im_l2,kind\n";
    for (const auto& rep : reps) {
        for (const auto& e : rep.equilibria) {
            s += fmt(rep.A, "%.17g") + "," + fmt(rep.B, "%.17g") + "," + fmt(e.x, "%.17g") + "," + fmt(e.y, "%.17g");
            for (const auto& l : e.eigenvalues) s += "," + fmt(l.real(), "%.17g") + "," + fmt(l.imag(), "%.17g");
            s += "," + to_string(e.kind) + "\n";
        }
    }
    return s;
}

/// True when both +(x, y) and -(x, y) carry an equilibrium of `kind`.
inline bool has_pair(const EquilibriumReport& rep, double x, double y, double tol, EquilibriumKind kind) {
    auto one = [&](double sx, double sy) {
        for (const auto& e : rep.equilibria) {
            if (e.kind == kind && std::abs(e.x - sx) <= tol && std::abs(e.y - sy) <= tol) return true;
        }
        return false;
    };
    return one(x, y) && one(-x, -y);
}

inline void fig3(const PresetContext&, PresetResult& out) {
    std::vector<EquilibriumReport> reps;
    for (const auto& r : kRegimes) {
        out.add_params(tag(r.B), coupled_params(r.A, r.B, 0.0));
        const EquilibriumReport rep = find_equilibria(r.A, r.B);
        reps.push_back(rep);
        std::vector<MeanTrajectory> paths;
        for (int k = 0; k < 12; ++k) {
            const double a = 2.0 * std::numbers::pi * (k + 0.5) / 12.0;
            paths.push_back(planar_trajectory(1.9 * std::cos(a), 1.9 * std::sin(a), r.A, r.B, 20.0, 0.01, 5));
        }
        const FieldSample f = sample_field(r.A, r.B, -2.0, 2.0, -2.0, 2.0, 40);
        Table field({"x", "y", "dx", "dy", "magnitude"});
        for (std::size_t i = 0; i < f.x.size(); ++i) field.add_row({f.x[i], f.y[i], f.dx[i], f.dy[i], f.magnitude[i]});
        out.add_file("field_" + tag(r.B) + ".csv", format_table(field));
        out.add_file("phase_" + tag(r.B) + ".svg", render_svg(phase_plane_plot(rep, paths)));
    }
    out.add_file("equilibria.csv", equilibria_csv(reps));
    out.summary = {{"window", {-2.0, 2.0}}, {"field_resolution", 40}, {"path_T", 20.0}};

    const bool row1 = has_pair(reps[0], 0.78, 0.63, 0.01, EquilibriumKind::saddle) &&
                      has_pair(reps[0], 1.0, 1.0, 1e-9, EquilibriumKind::stable_node);
    out.check(4, "equilibria A=2 B=2.5", row1, "saddles near +-(0.78, 0.63), stable nodes at +-(1, 1)");

    bool row2 = false;
    std::string d2 = "no equilibrium at (1, 1)";
    for (const auto& e : reps[1].equilibria) {
        if (std::abs(e.x - 1.0) > 1e-9 || std::abs(e.y - 1.0) > 1e-9) continue;
        const double a = std::abs(e.eigenvalues[0]), b = std::abs(e.eigenvalues[1]);
        const double small = std::min(a, b);
        const auto big = a < b ? e.eigenvalues[1] : e.eigenvalues[0];
        row2 = small < 1e-9 && std::abs(big - std::complex<double>(-2.0, 0.0)) < 1e-9 &&
               has_pair(reps[1], 1.0, 1.0, 1e-9, e.kind);
        d2 = "eigenvalues at (1, 1): " + fmt(big.real()) + " and |l2| = " + fmt(small, "%.3g");
    }
    out.check(4, "equilibria A=2 B=4", row2, d2);

    const bool row3 = has_pair(reps[2], 1.24, 1.58, 0.01, EquilibriumKind::stable_spiral);
    out.check(4, "equilibria A=2 B=7", row3, "stable spirals near +-(1.24, 1.58)");
}

// ---------------------------------------------------------------- moments

inline void fig8(const PresetContext& ctx, PresetResult& out) {
    const std::size_t points = ctx.desk() ? 50 : 200;
    Table crit({"A", "B", "sigma_c"});
    for (const auto& r : kRegimes) {
        const ModelParams p = coupled_params(r.A, r.B, 0.0);
        out.add_params(tag(r.B), p);
        const HopfReport scan = hopf_scan(p, 0.05, 3.0, points);
        const double sc = find_sigma_c(p, 0.5, 3.0, 1e-9);
        Table t({"sigma", "re_l1", "im_l1", "re_l2", "im_l2", "l3", "l4"});
        bool stable_variances = true;
        for (const auto& e : scan.eigen_table) {
            t.add_row({e.sigma, e.lambda[0].real(), e.lambda[0].imag(), e.lambda[1].real(), e.lambda[1].imag(),
                       e.lambda[2].real(), e.lambda[3].real()});
            stable_variances = stable_variances && e.lambda[2].real() < 0.0 && e.lambda[3].real() < 0.0;
        }
        crit.add_row({r.A, r.B, sc});
        out.check(5, "sigma_c A=2 B=" + fmt(r.B, "%g"), std::abs(sc - r.sigma_c) <= 0.05 && stable_variances,
                  "sigma_c " + fmt(sc) + " vs " + fmt(r.sigma_c) + " (+-0.05); l3, l4 < 0 on " +
                      std::to_string(points) + " points: " + (stable_variances ? "yes" : "no"));
        out.add_file("hopf_" + tag(r.B) + ".csv", format_table(t));
        out.add_file("hopf_" + tag(r.B) + ".svg",
                     render_svg(plot_from_tables({t}, {PlotKind::hopf, "eigenvalues B=" + fmt(r.B, "%g"), {}, {}})));
    }
    out.add_file("sigma_c.csv", format_table(crit));
    out.summary = {{"grid", {0.05, 3.0}}, {"points", points}};
}

inline void fig5(const PresetContext& ctx, PresetResult& out) {
    const double T = ctx.desk() ? 500.0 : 1000.0;
    for (const auto& r : kRegimes) {
        const ModelParams p = coupled_params(r.A, r.B, r.sigma);
        out.add_params(tag(r.B), p);
        const MeanTrajectory tr = integrate_moments({0.8, 0.8, 0.0, 0.0}, p, T, 0.001, 100);
        out.add_file("moments_" + tag(r.B) + ".csv", format_series(tr));
        Table t({"t", "m2", "v2"});
        for (std::size_t i = 0; i < tr.size(); ++i) t.add_row({tr.time(i), tr.m2[i], tr.v2[i]});
        out.add_file("moments_" + tag(r.B) + ".svg",
                     render_svg(plot_from_tables({t}, {PlotKind::series, "closure A=2 B=" + fmt(r.B, "%g"), {}, {}})));
    }
    out.summary = {{"T", T}, {"dt_ode", 0.001}};
}

inline void fig6(const PresetContext& ctx, PresetResult& out) {
    const double T = ctx.desk() ? 500.0 : 1000.0;
    const double burn = 0.1 * T;
    Table verdicts({"A", "B", "sigma", "returns", "mean_period", "std_period", "late_amplitude", "rhs_norm"});
    for (const auto& r : kRegimes) {
        const std::array<double, 3> sigmas = {r.sigma, 0.0, 5.0};
        std::array<CycleVerdict, 3> v;
        std::array<double, 3> rest{};
        std::vector<MeanTrajectory> paths;
        for (std::size_t k = 0; k < 3; ++k) {
            const ModelParams p = coupled_params(r.A, r.B, sigmas[k]);
            out.add_params(tag(r.B) + " sigma=" + fmt(sigmas[k], "%g"), p);
            const MeanTrajectory tr = integrate_moments({0.8, 0.8, 0.0, 0.0}, p, T, 0.001, 100);
            v[k] = detect_cycle(tr, burn);
            const std::size_t e = tr.size() - 1;
            const MomentState f = moment_rhs({tr.m1[e], tr.m2[e], tr.v1[e], tr.v2[e]}, p);
            rest[k] = std::max({std::abs(f.m1), std::abs(f.m2), std::abs(f.v1), std::abs(f.v2)});
            verdicts.add_row({r.A, r.B, sigmas[k], static_cast<double>(v[k].returns), v[k].mean_period, v[k].std_period,
                              v[k].late_amplitude, rest[k]});
            out.add_file("moments_" + tag(r.B) + "_s" + fmt(sigmas[k], "%g") + ".csv", format_series(tr));
            paths.push_back(tail(tr, burn));
        }
        // At rest means the closed system stopped moving, not just lost its rhythm.
        const bool settles = !v[1].sustained && rest[1] < 1e-6;
        out.check(6, "closure cycles A=2 B=" + fmt(r.B, "%g"), v[0].sustained && settles && !v[2].sustained,
                  "sigma=" + fmt(r.sigma, "%g") + ": " + std::to_string(v[0].returns) + " returns, std/mean " +
                      fmt(v[0].mean_period > 0 ? v[0].std_period / v[0].mean_period : 0.0) + "; sigma=0 |rhs| " +
                      fmt(rest[1], "%.3g") + "; sigma=5 sustained: " + (v[2].sustained ? "yes" : "no"));
        out.add_file("projection_" + tag(r.B) + ".svg", render_svg(phase_plane_plot(find_equilibria(r.A, r.B), paths)));
    }
    out.add_file("cycles.csv", format_table(verdicts));
    out.summary = {{"T", T}, {"burn_in", burn}, {"dt_ode", 0.001}};
}

// ---------------------------------------------------------------- limits

inline void chaos(const PresetContext& ctx, PresetResult& out) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5);
    p.seed = ctx.seed;
    const std::vector<std::size_t> ns = {10, 40, 160, 640};
    const std::size_t replicas = ctx.desk() ? 200 : 1000;
    out.add_params("base", p);
    const ChaosReport rep = chaos_error(p, ns, replicas, 1.0);
    Table t({"N", "mean_error", "stderr"});
    for (std::size_t i = 0; i < ns.size(); ++i) t.add_row({static_cast<double>(ns[i]), rep.errors[i], rep.stderrs[i]});
    out.add_file("chaos.csv", format_table(t));
    out.add_file("chaos.svg", render_svg(plot_from_tables({t}, {PlotKind::loglog, "coupled-path error", {}, {}})));
    out.summary = {{"T", 1.0}, {"replicas", replicas}, {"slope", rep.fitted_slope}};
    out.check(7, "chaos slope", std::abs(rep.fitted_slope + 0.5) <= 0.15,
              "slope " + fmt(rep.fitted_slope) + " vs -0.5 (+-0.15)");
}

inline void tilde(const PresetContext& ctx, PresetResult& out) {
    ModelParams p = coupled_params(2.0, 2.5, 0.5);
    p.seed = ctx.seed;
    const std::vector<double> sigmas = {0.025, 0.05, 0.1, 0.2};
    TildeErrorOptions opt;
    opt.replicas = ctx.desk() ? 1000 : 10000;
    out.add_params("base", p);
    const TildeErrorReport rep = tilde_error(p, sigmas, opt);
    Table t({"sigma", "mean_error", "stderr"});
    for (std::size_t i = 0; i < sigmas.size(); ++i) t.add_row({sigmas[i], rep.errors[i], rep.stderrs[i]});
    out.add_file("tilde.csv", format_table(t));
    out.add_file("tilde.svg", render_svg(plot_from_tables({t}, {PlotKind::loglog, "gaussian approximation error", {}, {}})));
    out.summary = {{"T", opt.T}, {"replicas", opt.replicas}, {"slope", rep.fitted_slope}};
    out.check(8, "tilde slope", std::abs(rep.fitted_slope - 2.0) <= 0.3, "slope " + fmt(rep.fitted_slope) + " vs 2 (+-0.3)");
}

// ---------------------------------------------------------------- densities

/// L1 distance between the final densities of an uncoupled run and the
/// normalized exp(-2 V / sigma^2) with V(x) = x^4/4 - x^2/2.
inline double gibbs_l1(const FpResult& r, double sigma) {
    const FpGrid& g = r.final_state.grid;
    std::vector<double> w(g.M);
    double z = 0.0;
    for (std::size_t i = 0; i < g.M; ++i) {
        const double x = g.center(i);
        w[i] = std::exp(-2.0 * (0.25 * x * x * x * x - 0.5 * x * x) / (sigma * sigma));
        z += w[i] * g.h();
    }
    double worst = 0.0;
    for (const auto* q : {&r.final_state.q1, &r.final_state.q2}) {
        double l1 = 0.0;
        for (std::size_t i = 0; i < g.M; ++i) l1 += std::abs((*q)[i] - w[i] / z) * g.h();
        worst = std::max(worst, l1);
    }
    return worst;
}

inline void fig4(const PresetContext& ctx, PresetResult& out) {
    const double T = 150.0;
    FpOptions opt;
    opt.grid.M = ctx.desk() ? 800 : 1600;
    opt.snapshot_every = 10.0;
    const ModelParams p = coupled_params(2.0, 2.5, 0.5);
    out.add_params("coupled", p);
    const FpResult fp = solve_fp(p, FpInitial{}, T, opt);
    const std::size_t returns = poincare_crossings(fp.means, 0.1 * T).size();

    const double gibbs_sigma = 1.0;
    const ModelParams free = coupled_params(0.0, 0.0, gibbs_sigma, 1000, 0.0);
    out.add_params("uncoupled", free);
    FpOptions gopt;
    gopt.grid.M = opt.grid.M;
    gopt.sample_dt = 1.0;
    const double l1 = gibbs_l1(solve_fp(free, FpInitial{0.8, -0.3, 0.05, 0.4}, 30.0, gopt), gibbs_sigma);

    out.add_file("fp_means.csv", format_series(fp.means));
    out.add_file("fp_means.svg", render_svg(series_plot("density means", {{"", &fp.means}})));
    Plot dens;
    dens.title = "population 1 density";
    dens.xlabel = "x";
    dens.ylabel = "q1";
    for (const auto& snap : fp.snapshots) {
        const std::string name = "density_t" + fmt(std::round(snap.t), "%03.0f");
        out.add_file(name + ".csv", format_snapshot(snap));
        std::vector<double> x(snap.grid.M);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = snap.grid.center(i);
        dens.series.push_back({"t=" + fmt(std::round(snap.t), "%g"), x, snap.q1});
    }
    out.add_file("densities.svg", render_svg(dens));
    out.summary = {{"T", T},
                   {"cells", opt.grid.M},
                   {"L", opt.grid.L},
                   {"max_mass_error", fp.max_mass_error},
                   {"min_density", fp.min_density},
                   {"returns_after_burn_in", returns},
                   {"gibbs_l1", l1},
                   {"steps", fp.steps}};
    const bool ok = fp.max_mass_error <= 1e-8 && returns >= 3 && l1 <= 1e-3;
    out.check(9, "fokker-planck", ok,
              "max |mass-1| " + fmt(fp.max_mass_error, "%.3g") + " over T=150, returns " + std::to_string(returns) +
                  ", Gibbs L1 " + fmt(l1, "%.3g"));
}

// ---------------------------------------------------------------- closure

/// Probabilists' Gauss-Hermite rule: sum w_i f(z_i) = E f(Z), Z ~ N(0, 1),
/// exact for polynomials of degree below 2n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_hermite(std::size_t n) {
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t k = 1; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(k));
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    std::vector<double> z(n), w(n);
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        z[k] = es.eigenvalues()(i);
        w[k] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    }
    return {z, w};
}

/// Mean and variance rates of the mean-field system when both marginals
/// are the Gaussians N(m, v): E b(X) and 2 E[(X - m) b(X)] + sigma^2.
inline MomentState gaussian_hierarchy(const MomentState& s, const ModelParams& p) {
    static const auto rule = gauss_hermite(8);
    const auto& [z, w] = rule;
    const double c21 = p.alpha * p.theta21;
    MomentState r;
    for (std::size_t k = 0; k < z.size(); ++k) {
        const double x = s.m1 + std::sqrt(s.v1) * z[k];
        const double y = s.m2 + std::sqrt(s.v2) * z[k];
        const double bx = -x * x * x + x - p.intra1() * (x - s.m1) - p.A() * (x - s.m2);
        const double by = -y * y * y + y - c21 * (y - s.m1) - p.intra2() * (y - s.m2);
        r.m1 += w[k] * bx;
        r.m2 += w[k] * by;
        r.v1 += w[k] * 2.0 * (x - s.m1) * bx;
        r.v2 += w[k] * 2.0 * (y - s.m2) * by;
    }
    r.v1 += p.sigma * p.sigma;
    r.v2 += p.sigma * p.sigma;
    return r;
}

inline void closure(const PresetContext& ctx, PresetResult& out) {
    for (const auto& r : kRegimes) out.add_params(tag(r.B), coupled_params(r.A, r.B, r.sigma));
    // Identity on random states.
    const RngStream u(derive_seed(ctx.seed, {7}), 0);
    double worst = 0.0;
    Table states({"regime", "m1", "m2", "v1", "v2", "max_abs_diff"});
    for (std::size_t i = 0; i < 100; ++i) {
        const RegimeReference& r = kRegimes[i % 3];
        const ModelParams p = coupled_params(r.A, r.B, r.sigma);
        const MomentState s{-1.5 + 3.0 * u.uniform(4 * i), -1.5 + 3.0 * u.uniform(4 * i + 1), u.uniform(4 * i + 2),
                            u.uniform(4 * i + 3)};
        const MomentState a = moment_rhs(s, p), b = gaussian_hierarchy(s, p);
        const double d = std::max({std::abs(a.m1 - b.m1), std::abs(a.m2 - b.m2), std::abs(a.v1 - b.v1), std::abs(a.v2 - b.v2)});
        worst = std::max(worst, d);
        states.add_row({static_cast<double>(i % 3), s.m1, s.m2, s.v1, s.v2, d});
    }
    out.add_file("identity.csv", format_table(states));
    out.check(10, "closure identity", worst <= 1e-12, "max difference " + fmt(worst, "%.3g") + " on 100 states");

    // Closed-form versus numeric eigenvalues.
    double eig_gap = 0.0;
    Table eig({"B", "sigma", "max_abs_diff"});
    for (const auto& r : kRegimes) {
        const ModelParams p = coupled_params(r.A, r.B, 0.0);
        for (std::size_t k = 0; k < 50; ++k) {
            const double sigma = 0.05 + (3.0 - 0.05) * static_cast<double>(k) / 49.0;
            ModelParams q = p;
            q.sigma = sigma;
            const auto v = hopf_equilibrium(q, sigma);
            const Eigen::Matrix4d J = moment_jacobian({0.0, 0.0, v[0], v[1]}, q);
            const Eigen::EigenSolver<Eigen::Matrix4d> es(J, false);
            std::vector<std::complex<double>> numeric(4);
            for (int i = 0; i < 4; ++i) numeric[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
            double gap = 0.0;
            for (const auto& c : hopf_closed_form_eigenvalues(r.A, r.B, sigma)) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& n : numeric) best = std::min(best, std::abs(c - n));
                gap = std::max(gap, best);
            }
            eig_gap = std::max(eig_gap, gap);
            eig.add_row({r.B, sigma, gap});
        }
    }
    out.add_file("eigen_check.csv", format_table(eig));
    out.check(10, "closed-form eigenvalues", eig_gap <= 1e-8, "max difference " + fmt(eig_gap, "%.3g") + " on 3 x 50 points");

    // Noiseless closure against the planar flow.
    double planar_gap = 0.0;
    for (const auto& r : kRegimes) {
        const ModelParams p = coupled_params(r.A, r.B, 0.0);
        const MeanTrajectory a = integrate_moments({0.3, -0.5, 0.0, 0.0}, p, 20.0, 0.001, 10);
        const MeanTrajectory b = planar_trajectory(0.3, -0.5, r.A, r.B, 20.0, 0.001, 10);
        for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
            planar_gap = std::max({planar_gap, std::abs(a.m1[i] - b.m1[i]), std::abs(a.m2[i] - b.m2[i])});
        }
        if (a.size() != b.size()) planar_gap = std::numeric_limits<double>::infinity();
    }
    out.check(10, "noiseless closure equals planar flow", planar_gap <= 1e-9,
              "max difference " + fmt(planar_gap, "%.3g") + " on [0, 20]");
    out.summary = {{"identity_max_diff", worst}, {"eigen_max_diff", eig_gap}, {"planar_max_diff", planar_gap}};
}

}  // namespace detail

inline const std::vector<ExperimentPreset>& presets() {
    static const std::vector<ExperimentPreset> all = {
        {"table1-row1", "particle periods, A=2 B=2.5 sigma=0.5", {1, 2},
         [](const PresetContext& c, PresetResult& r) { detail::table1_row(0, c, r); }},
        {"table1-row2", "particle periods, A=2 B=4 sigma=0.1", {1, 2},
         [](const PresetContext& c, PresetResult& r) { detail::table1_row(1, c, r); }},
        {"table1-row3", "particle periods, A=2 B=7 sigma=0.6", {1, 2},
         [](const PresetContext& c, PresetResult& r) { detail::table1_row(2, c, r); }},
        {"fig2", "particle means at zero, moderate and strong noise", {3}, detail::fig2},
        {"fig3", "planar equilibria and phase portraits", {4}, detail::fig3},
        {"fig4", "Fokker-Planck densities and Gibbs check", {9}, detail::fig4},
        {"fig5", "closure means and variances over time", {}, detail::fig5},
        {"fig6", "closure cycles, rest states and collapse", {6}, detail::fig6},
        {"fig8", "closure eigenvalues against noise and critical sigma", {5}, detail::fig8},
        {"chaos", "coupled-path error against system size", {7}, detail::chaos},
        {"tilde", "gaussian approximation error against sigma", {8}, detail::tilde},
        {"closure", "closure identity, closed-form eigenvalues, noiseless limit", {10}, detail::closure},
    };
    return all;
}

inline const ExperimentPreset& find_preset(const std::string& name) {
    for (const auto& p : presets()) {
        if (p.name == name) return p;
    }
    std::string known;
    for (const auto& p : presets()) known += (known.empty() ? "" : ", ") + p.name;
    throw ValidationError("unknown preset '" + name + "' (known: " + known + ")");
}

/// Writes every output file and manifest.json into `dir`.
inline void write_bundle(const PresetResult& r, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : r.files) {
        write_text((fs::path(dir) / f.name).string(), f.content);
        files.push_back({{"name", f.name}, {"bytes", f.content.size()}});
    }
    nlohmann::ordered_json checks = nlohmann::ordered_json::array();
    for (const auto& c : r.checks) {
        checks.push_back({{"criterion", c.criterion}, {"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    const nlohmann::ordered_json manifest = {
        {"preset", r.name},
        {"seed", r.seed},
        {"scale", to_string(r.scale)},
        {"rerun", "frustrated-diffusions preset " + r.name + " --seed " + std::to_string(r.seed) + " --scale " +
                      to_string(r.scale)},
        {"versions",
         {{"frustrated-diffusions", kVersion},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"fftw", std::string(fftw_version)}}},
        {"wall_time_s", r.wall_seconds},
        {"params", r.params},
        {"summary", r.summary},
        {"checks", checks},
        {"files", files},
    };
    write_text((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

/// Runs the named pipeline; when `out_dir` is non-empty the bundle goes to
/// out_dir/<name>. Library errors are rethrown with the preset name.
inline PresetResult run_preset(const std::string& name, std::uint64_t seed, Scale scale, const std::string& out_dir = "") {
    const ExperimentPreset& preset = find_preset(name);
    PresetResult r;
    r.name = name;
    r.seed = seed;
    r.scale = scale;
    const auto start = std::chrono::steady_clock::now();
    const std::string where = "preset " + name + ": ";
    try {
        preset.pipeline(PresetContext{seed, scale}, r);
    } catch (const ValidationError& e) {
        throw ValidationError(where + e.what());
    } catch (const DivergenceError& e) {
        throw DivergenceError(where + e.what(), e.step(), e.time());
    } catch (const AnalysisError& e) {
        throw AnalysisError(where + e.what());
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(where + e.what(), e.residual());
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) write_bundle(r, (std::filesystem::path(out_dir) / name).string());
    return r;
}

}  // namespace fdiff
