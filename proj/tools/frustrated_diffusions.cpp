// frustrated-diffusions: command-line front end for the simulators,
// analyses and reproduction presets.

#include <glob.h>

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdiff/fokker_planck.hpp"
#include "fdiff/limiting.hpp"
#include "fdiff/moments.hpp"
#include "fdiff/parallel.hpp"
#include "fdiff/params.hpp"
#include "fdiff/particles.hpp"
#include "fdiff/phase.hpp"
#include "fdiff/presets.hpp"
#include "fdiff/rhythm.hpp"
#include "fdiff/svg.hpp"
#include "fdiff/table.hpp"
#include "fdiff/trajectory.hpp"

namespace fs = std::filesystem;
using namespace fdiff;

namespace {

enum ExitCode { kOk = 0, kValidation = 2, kDivergence = 3, kAnalysis = 4 };

std::string output_root() {
    const char* env = std::getenv("FDIFF_OUTPUT_ROOT");
    return env && *env ? env : "fdiff-out";
}

/// Writes to `path`, or stdout when the path is empty or "-".
void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
    write_text(path, text);
}

std::string default_path(const std::string& out, const std::string& sub, const std::string& file) {
    return out.empty() ? (fs::path(output_root()) / sub / file).string() : out;
}

/// Model flags shared by the stochastic subcommands. Precedence: built-in
/// defaults, then --config, then explicit flags.
struct ModelFlags {
    std::string config;
    std::optional<double> A, B, sigma, dt, alpha;
    std::optional<std::size_t> n, steps;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App* app) {
        app->add_option("--config", config, "key=value parameter file")->check(CLI::ExistingFile);
        app->add_option("--A", A, "coupling pull of population 1 toward population 2");
        app->add_option("--B", B, "coupling push of population 2 away from population 1");
        app->add_option("--sigma", sigma, "noise intensity");
        app->add_option("--dt", dt, "time step");
        app->add_option("--alpha", alpha, "fraction of particles in population 1");
        app->add_option("--n", n, "total particle count");
        app->add_option("--steps", steps, "number of time steps");
        app->add_option("--seed", seed, "random seed");
    }

    ModelParams resolve() const {
        ModelParams p = coupled_params(2.0, 2.5, 0.5);
        p.steps = 20000;
        if (!config.empty()) p = load_config(config, p);
        if (alpha) p.alpha = *alpha;
        if (n) {
            const auto n1 = static_cast<std::size_t>(std::llround(p.alpha * static_cast<double>(*n)));
            p.n1 = n1;
            p.n2 = *n - n1;
        }
        if (A || B) p.set_coupling(A.value_or(p.A()), B.value_or(p.B()));
        if (sigma) p.sigma = *sigma;
        if (dt) p.dt = *dt;
        if (steps) p.steps = *steps;
        if (seed) p.seed = *seed;
        return validate_params(p);
    }
};

std::vector<double> parse_pair(const std::string& s) {
    const Table t = parse_table("a,b\n" + s + "\n");
    return {t.columns[0][0], t.columns[1][0]};
}

std::vector<std::string> expand_glob(const std::string& pattern) {
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    std::vector<std::string> out;
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no files match '" + pattern + "'");
    return out;
}

std::string json_equilibria(const EquilibriumReport& rep) {
    nlohmann::ordered_json j = {{"A", rep.A},
                                {"B", rep.B},
                                {"gamma", rep.gamma},
                                {"regime", to_string(rep.regime)},
                                {"hypothesis_holds", rep.hypothesis_holds},
                                {"equilibria", nlohmann::ordered_json::array()}};
    for (const auto& e : rep.equilibria) {
        nlohmann::ordered_json ev = nlohmann::ordered_json::array();
        for (const auto& l : e.eigenvalues) ev.push_back({{"re", l.real()}, {"im", l.imag()}});
        nlohmann::ordered_json item = {{"x", e.x}, {"y", e.y}, {"kind", to_string(e.kind)}, {"eigenvalues", ev}};
        if (e.beta) item["beta"] = *e.beta;
        j["equilibria"].push_back(item);
    }
    return j.dump(2) + "\n";
}

std::string text_equilibria(const EquilibriumReport& rep) {
    std::string s = "A=" + detail::fmt(rep.A) + " B=" + detail::fmt(rep.B) + " regime=" + to_string(rep.regime) + "\n";
    for (const auto& e : rep.equilibria) {
        s += "  (" + detail::fmt(e.x, "%+.6f") + ", " + detail::fmt(e.y, "%+.6f") + ")  " + to_string(e.kind) + "  eig ";
        for (const auto& l : e.eigenvalues) s += detail::fmt(l.real(), "%+.6f") + detail::fmt(l.imag(), "%+.6f") + "i ";
        s += "\n";
    }
    return s;
}

int run(int argc, char** argv) {
    CLI::App app{"Mean-field simulations of two frustrated populations of diffusions"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "cap on worker threads (0 = all cores)");
    app.set_version_flag("--version", kVersion);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Euler-Maruyama particle run; writes t,m1,m2");
    ModelFlags sim_model;
    sim_model.attach(sim);
    std::size_t stride = 20, replicas = 1;
    double x0 = 0.8, y0 = 0.8;
    std::string sim_out;
    sim->add_option("--stride", stride, "record every k-th step")->check(CLI::PositiveNumber);
    sim->add_option("--replicas", replicas, "independent replicas (files suffixed _rK)")->check(CLI::PositiveNumber);
    sim->add_option("--x0", x0, "initial value of population 1");
    sim->add_option("--y0", y0, "initial value of population 2");
    sim->add_option("--out", sim_out, "output CSV ('-' for stdout)");

    // fixed-points
    auto* fixed = app.add_subcommand("fixed-points", "equilibria of the noiseless planar flow");
    double fa = 2.0, fb = 2.5;
    bool as_json = false;
    std::string fixed_out = "-";
    fixed->add_option("--A", fa);
    fixed->add_option("--B", fb);
    fixed->add_flag("--json", as_json, "JSON report");
    fixed->add_option("--out", fixed_out);

    // phase-portrait
    auto* portrait = app.add_subcommand("phase-portrait", "direction field, trajectories and equilibria as SVG");
    double pa = 2.0, pb = 2.5;
    std::string window = "-2,2", portrait_out, field_out;
    std::size_t res = 40, n_paths = 12;
    double path_T = 20.0;
    portrait->add_option("--A", pa);
    portrait->add_option("--B", pb);
    portrait->add_option("--window", window, "lo,hi for both axes");
    portrait->add_option("--res", res, "field points per axis")->check(CLI::PositiveNumber);
    portrait->add_option("--paths", n_paths, "trajectories started on a circle");
    portrait->add_option("--T", path_T, "trajectory length");
    portrait->add_option("--out", portrait_out, "SVG path");
    portrait->add_option("--field-csv", field_out, "also write x,y,dx,dy,magnitude");

    // fp
    auto* fpc = app.add_subcommand("fp", "finite-volume solve of the two limiting densities");
    ModelFlags fp_model;
    fp_model.attach(fpc);
    FpOptions fp_opt;
    FpInitial fp_ic;
    double fp_T = 150.0;
    double snap_every = 10.0;
    std::string fp_out;
    fpc->add_option("--L", fp_opt.grid.L, "half-width of [-L, L]");
    fpc->add_option("--cells", fp_opt.grid.M, "cells")->check(CLI::PositiveNumber);
    fpc->add_option("--T", fp_T, "horizon");
    fpc->add_option("--sample-dt", fp_opt.sample_dt, "spacing of the mean series");
    fpc->add_option("--snapshots", snap_every, "density snapshot interval (0 disables)");
    fpc->add_option("--mean1", fp_ic.mean1);
    fpc->add_option("--mean2", fp_ic.mean2);
    fpc->add_option("--sd1", fp_ic.sd1);
    fpc->add_option("--sd2", fp_ic.sd2);
    fpc->add_option("--out", fp_out, "output directory");

    // moments
    auto* mom = app.add_subcommand("moments", "Gaussian closure for means and variances");
    ModelFlags mom_model;
    mom_model.attach(mom);
    MomentState s0{0.8, 0.8, 0.0, 0.0};
    double mom_T = 500.0, dt_ode = 0.001;
    std::size_t mom_stride = 100;
    std::string scheme = "rk4", mom_out;
    mom->add_option("--m1", s0.m1);
    mom->add_option("--m2", s0.m2);
    mom->add_option("--v1", s0.v1);
    mom->add_option("--v2", s0.v2);
    mom->add_option("--T", mom_T);
    mom->add_option("--dt-ode", dt_ode);
    mom->add_option("--stride", mom_stride)->check(CLI::PositiveNumber);
    mom->add_option("--scheme", scheme)->check(CLI::IsMember({"rk4", "euler"}));
    mom->add_option("--out", mom_out, "output CSV ('-' for stdout)");

    // hopf
    auto* hopf = app.add_subcommand("hopf", "closure eigenvalues at the symmetric rest state against sigma");
    double ha = 2.0, hb = 2.5, lo = 0.05, hi = 3.0;
    std::size_t points = 50;
    std::string hopf_out = "-";
    hopf->add_option("--A", ha);
    hopf->add_option("--B", hb);
    hopf->add_option("--lo", lo);
    hopf->add_option("--hi", hi);
    hopf->add_option("--points", points)->check(CLI::Range(2, 1000000));
    hopf->add_option("--out", hopf_out);

    // tilde-error
    auto* tilde = app.add_subcommand("tilde-error", "shared-path error of the Gaussian approximation");
    ModelFlags tilde_model;
    tilde_model.attach(tilde);
    std::vector<double> sigmas = {0.025, 0.05, 0.1, 0.2};
    TildeErrorOptions topt;
    std::string tilde_out = "-";
    tilde->add_option("--sigmas", sigmas)->delimiter(',');
    tilde->add_option("--replicas", topt.replicas)->check(CLI::PositiveNumber);
    tilde->add_option("--T", topt.T);
    tilde->add_option("--out", tilde_out);

    // chaos
    auto* chaos = app.add_subcommand("chaos", "coupled-path error of a tagged particle against N");
    ModelFlags chaos_model;
    chaos_model.attach(chaos);
    std::vector<std::size_t> n_list = {10, 40, 160, 640};
    std::size_t chaos_reps = 200;
    double chaos_T = 1.0;
    std::string chaos_out = "-";
    chaos->add_option("--n-list", n_list)->delimiter(',');
    chaos->add_option("--replicas", chaos_reps)->check(CLI::PositiveNumber);
    chaos->add_option("--T", chaos_T);
    chaos->add_option("--out", chaos_out);

    // period
    auto* period = app.add_subcommand("period", "oscillation period of recorded means");
    std::vector<std::string> period_in;
    std::string method = "poincare";
    double burn_frac = 0.1;
    period->add_option("--in", period_in, "series CSV files")->required()->check(CLI::ExistingFile);
    period->add_option("--method", method)->check(CLI::IsMember({"poincare", "dft"}));
    period->add_option("--burn-in", burn_frac, "discarded fraction of each record")->check(CLI::Range(0.0, 0.99));

    // spectrum
    auto* spec = app.add_subcommand("spectrum", "replica-averaged DFT modulus of m2");
    std::string pattern, spec_out = "-";
    double spec_burn = 0.1;
    spec->add_option("--glob", pattern, "series CSV files, shell pattern")->required();
    spec->add_option("--burn-in", spec_burn)->check(CLI::Range(0.0, 0.99));
    spec->add_option("--out", spec_out);

    // preset
    auto* pre = app.add_subcommand("preset", "run a named reproduction preset");
    std::string preset_name, scale = "desk", preset_out;
    std::uint64_t preset_seed = 1;
    bool list = false;
    pre->add_option("name", preset_name, "preset name");
    pre->add_option("--seed", preset_seed);
    pre->add_option("--scale", scale)->check(CLI::IsMember({"desk", "full"}));
    pre->add_option("--out", preset_out, "output root (default from FDIFF_OUTPUT_ROOT)");
    pre->add_flag("--list", list, "list presets");

    // plot
    auto* plot = app.add_subcommand("plot", "render CSV files as a static SVG");
    std::vector<std::string> plot_in;
    std::string kind = "lines", plot_out, title;
    std::optional<double> plot_a, plot_b;
    plot->add_option("--in", plot_in, "CSV inputs")->check(CLI::ExistingFile);
    plot->add_option("--kind", kind)->check(CLI::IsMember({"lines", "series", "phase", "spectrum", "hopf", "loglog", "density"}));
    plot->add_option("--title", title);
    plot->add_option("--A", plot_a, "mark the equilibria of (A, B) on phase plots");
    plot->add_option("--B", plot_b);
    plot->add_option("--out", plot_out, "SVG path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }
    set_max_threads(threads);

    if (*sim) {
        const ModelParams p = sim_model.resolve();
        const auto ic = InitialCondition::uniform_value(x0, y0);
        if (replicas == 1) {
            emit(default_path(sim_out, "simulate", "means.csv"), format_series(simulate_particles(p, ic, stride).means));
        } else {
            const std::string base = default_path(sim_out, "simulate", "means.csv");
            if (base == "-") throw ValidationError("--replicas needs a file --out");
            const auto reps = simulate_replicas(p, ic, replicas, stride);
            const fs::path bp(base);
            for (std::size_t r = 0; r < reps.size(); ++r) {
                const fs::path file = bp.parent_path() / (bp.stem().string() + "_r" + std::to_string(r) + bp.extension().string());
                emit(file.string(), format_series(reps[r]));
            }
        }
    } else if (*fixed) {
        const EquilibriumReport rep = find_equilibria(fa, fb);
        emit(fixed_out, as_json ? json_equilibria(rep) : text_equilibria(rep));
    } else if (*portrait) {
        const auto w = parse_pair(window);
        if (!(w[1] > w[0])) throw ValidationError("--window needs lo < hi");
        const EquilibriumReport rep = find_equilibria(pa, pb);
        std::vector<MeanTrajectory> paths;
        const double radius = 0.95 * 0.5 * (w[1] - w[0]), centre = 0.5 * (w[0] + w[1]);
        for (std::size_t k = 0; k < n_paths; ++k) {
            const double a = 2.0 * std::numbers::pi * (static_cast<double>(k) + 0.5) / static_cast<double>(n_paths);
            paths.push_back(planar_trajectory(centre + radius * std::cos(a), centre + radius * std::sin(a), pa, pb, path_T, 0.01, 5));
        }
        emit(default_path(portrait_out, "phase-portrait", "phase.svg"), render_svg(phase_plane_plot(rep, paths, {w[0], w[1]}, res)));
        if (!field_out.empty()) {
            const FieldSample f = sample_field(pa, pb, w[0], w[1], w[0], w[1], res);
            Table t({"x", "y", "dx", "dy", "magnitude"});
            for (std::size_t i = 0; i < f.x.size(); ++i) t.add_row({f.x[i], f.y[i], f.dx[i], f.dy[i], f.magnitude[i]});
            emit(field_out, format_table(t));
        }
    } else if (*fpc) {
        const ModelParams p = fp_model.resolve();
        fp_opt.snapshot_every = snap_every;
        const FpResult r = solve_fp(p, fp_ic, fp_T, fp_opt);
        const fs::path dir = fp_out.empty() ? fs::path(output_root()) / "fp" : fs::path(fp_out);
        fs::create_directories(dir);
        write_text((dir / "fp_means.csv").string(), format_series(r.means));
        for (const auto& snap : r.snapshots) {
            write_text((dir / ("density_t" + detail::fmt(snap.t, "%07.2f") + ".csv")).string(), format_snapshot(snap));
        }
        std::cerr << "steps " << r.steps << ", max |mass-1| " << r.max_mass_error << ", min density " << r.min_density
                  << "\n";
    } else if (*mom) {
        const ModelParams p = mom_model.resolve();
        const MeanTrajectory tr =
            integrate_moments(s0, p, mom_T, dt_ode, mom_stride, scheme == "rk4" ? OdeScheme::rk4 : OdeScheme::euler);
        emit(default_path(mom_out, "moments", "moments.csv"), format_series(tr));
        const CycleVerdict v = detect_cycle(tr, 0.1 * mom_T);
        std::cerr << "returns " << v.returns << ", period " << v.mean_period << " +- " << v.std_period << ", sustained "
                  << (v.sustained ? "yes" : "no") << "\n";
    } else if (*hopf) {
        ModelParams p = coupled_params(ha, hb, 0.0);
        const HopfReport rep = hopf_scan(p, lo, hi, points);
        Table t({"sigma", "re_l1", "im_l1", "re_l2", "im_l2", "l3", "l4"});
        for (const auto& e : rep.eigen_table) {
            t.add_row({e.sigma, e.lambda[0].real(), e.lambda[0].imag(), e.lambda[1].real(), e.lambda[1].imag(),
                       e.lambda[2].real(), e.lambda[3].real()});
        }
        std::string text = format_table(t);
        if (rep.sigma_c) text = "# sigma_c=" + detail::fmt(*rep.sigma_c, "%.10g") + "\n" + text;
        emit(hopf_out, text);
    } else if (*tilde) {
        const ModelParams p = tilde_model.resolve();
        const TildeErrorReport rep = tilde_error(p, sigmas, topt);
        Table t({"sigma", "mean_error", "stderr"});
        for (std::size_t i = 0; i < rep.sigmas.size(); ++i) t.add_row({rep.sigmas[i], rep.errors[i], rep.stderrs[i]});
        emit(tilde_out, format_table(t));
        if (rep.sigmas.size() >= 2) std::cerr << "slope " << rep.fitted_slope << "\n";
    } else if (*chaos) {
        const ModelParams p = chaos_model.resolve();
        const ChaosReport rep = chaos_error(p, n_list, chaos_reps, chaos_T);
        Table t({"N", "mean_error", "stderr"});
        for (std::size_t i = 0; i < n_list.size(); ++i) t.add_row({static_cast<double>(n_list[i]), rep.errors[i], rep.stderrs[i]});
        emit(chaos_out, format_table(t));
        if (n_list.size() >= 2) std::cerr << "slope " << rep.fitted_slope << "\n";
    } else if (*period) {
        std::vector<MeanTrajectory> trajs;
        for (const auto& f : period_in) trajs.push_back(read_series(f));
        const double burn = burn_frac * (trajs[0].end_time() - trajs[0].t0);
        if (method == "poincare") {
            const PoincareSummary s = poincare_summary(trajs, burn);
            std::cout << "method=poincare period=" << detail::fmt(s.mean_period) << " std_run_means="
                      << detail::fmt(s.std_run_means) << " pooled_std=" << detail::fmt(s.pooled_std)
                      << " runs=" << s.runs.size() << "\n";
        } else {
            const auto [sr, e] = dft_period(trajs, burn);
            std::cout << "method=dft period=" << detail::fmt(e.mean_period) << " replica_std=" << detail::fmt(e.std_period)
                      << " bin_width=" << detail::fmt(sr.bin_width) << " replicas=" << e.n_replicas << "\n";
        }
    } else if (*spec) {
        std::vector<MeanTrajectory> trajs;
        for (const auto& f : expand_glob(pattern)) trajs.push_back(read_series(f));
        const SpectrumReport s = spectrum(trajs, spec_burn * (trajs[0].end_time() - trajs[0].t0));
        Table t({"freq", "power"});
        for (std::size_t i = 0; i < s.frequencies.size(); ++i) t.add_row({s.frequencies[i], s.power[i]});
        emit(spec_out, format_table(t));
    } else if (*pre) {
        if (list || preset_name.empty()) {
            for (const auto& p : presets()) {
                std::string crit;
                for (int c : p.criteria) crit += (crit.empty() ? "" : ",") + std::to_string(c);
                std::cout << p.name << "  " << p.description << (crit.empty() ? "" : "  [criteria " + crit + "]") << "\n";
            }
            return preset_name.empty() && !list ? kValidation : kOk;
        }
        const std::string root = preset_out.empty() ? output_root() : preset_out;
        const PresetResult r = run_preset(preset_name, preset_seed, parse_scale(scale), root);
        bool all = true;
        for (const auto& c : r.checks) {
            std::cout << (c.passed ? "PASS" : "FAIL") << "  " << c.criterion << "  " << c.name << ": " << c.detail << "\n";
            all = all && c.passed;
        }
        std::cout << "wrote " << (fs::path(root) / preset_name).string() << " in " << detail::fmt(r.wall_seconds, "%.1f")
                  << " s\n";
        if (!all) return kAnalysis;
    } else if (*plot) {
        std::vector<Table> tables;
        for (const auto& f : plot_in) tables.push_back(read_table(f));
        PlotRequest req;
        req.kind = parse_plot_kind(kind);
        req.title = title;
        req.A = plot_a;
        req.B = plot_b;
        emit(plot_out, render_svg(plot_from_tables(tables, req)));
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const DivergenceError& e) {
        std::cerr << "diverged: " << e.what() << "\n";
        return kDivergence;
    } catch (const AnalysisError& e) {
        std::cerr << "analysis failed: " << e.what() << "\n";
        return kAnalysis;
    } catch (const ConvergenceError& e) {
        std::cerr << "analysis failed: " << e.what() << "\n";
        return kAnalysis;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
