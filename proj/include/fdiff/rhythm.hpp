#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <mutex>
#include <numeric>
#include <string>
#include <vector>

#include <fftw3.h>

#include "fdiff/errors.hpp"
#include "fdiff/parallel.hpp"
#include "fdiff/trajectory.hpp"

namespace fdiff {

enum class PeriodMethod { poincare, dft };

inline std::string to_string(PeriodMethod m) { return m == PeriodMethod::poincare ? "poincare" : "dft"; }

struct PeriodEstimate {
    PeriodMethod method = PeriodMethod::poincare;
    double mean_period = 0.0;
    double std_period = 0.0;
    std::size_t n_events = 0;    // crossings used (poincare)
    std::size_t n_replicas = 1;  // trajectories used
};

namespace detail {

inline double sample_std(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double plain_mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline std::size_t burn_in_index(const MeanTrajectory& traj, double burn_in) {
    if (!(burn_in >= 0.0)) throw ValidationError("burn-in must be non-negative");
    const double s = std::ceil(burn_in / traj.dt_sample - 1e-9);
    return static_cast<std::size_t>(std::max(0.0, s));
}

}  // namespace detail

/// Times at which m2 passes from positive to non-positive while m1 > 0,
/// refined by linear interpolation, keeping those at or after t0 + burn_in.
inline std::vector<double> poincare_crossings(const MeanTrajectory& traj, double burn_in = 0.0) {
    traj.check();
    std::vector<double> out;
    const double t_min = traj.t0 + burn_in;
    for (std::size_t i = 0; i + 1 < traj.size(); ++i) {
        const double a = traj.m2[i], b = traj.m2[i + 1];
        if (!(a > 0.0 && b <= 0.0)) continue;
        const double w = a / (a - b);
        const double m1 = traj.m1[i] + w * (traj.m1[i + 1] - traj.m1[i]);
        if (!(m1 > 0.0)) continue;
        const double t = traj.time(i) + w * traj.dt_sample;
        if (t >= t_min) out.push_back(t);
    }
    return out;
}

/// Mean and sample standard deviation of consecutive return intervals.
inline PeriodEstimate poincare_periods(const MeanTrajectory& traj, double burn_in = 0.0) {
    if (traj.end_time() <= traj.t0 + burn_in) throw ValidationError("trajectory is not longer than the burn-in");
    const auto t = poincare_crossings(traj, burn_in);
    if (t.size() < 2) throw AnalysisError("no rhythm detected (" + std::to_string(t.size()) + " crossings)");
    std::vector<double> d(t.size() - 1);
    for (std::size_t i = 0; i + 1 < t.size(); ++i) d[i] = t[i + 1] - t[i];
    PeriodEstimate e;
    e.method = PeriodMethod::poincare;
    e.mean_period = detail::plain_mean(d);
    e.std_period = detail::sample_std(d, e.mean_period);
    e.n_events = t.size();
    return e;
}

/// Poincare statistics over several runs. The spread of per-run means and
/// the pooled interval spread are both reported.
struct PoincareSummary {
    std::vector<PeriodEstimate> runs;
    double mean_period = 0.0;   // mean of per-run means
    double std_run_means = 0.0;
    double pooled_mean = 0.0;   // over all intervals of all runs
    double pooled_std = 0.0;
};

inline PoincareSummary poincare_summary(const std::vector<MeanTrajectory>& trajs, double burn_in) {
    if (trajs.empty()) throw ValidationError("no trajectories");
    PoincareSummary s;
    std::vector<double> means, pooled;
    for (const auto& tr : trajs) {
        s.runs.push_back(poincare_periods(tr, burn_in));
        means.push_back(s.runs.back().mean_period);
        const auto t = poincare_crossings(tr, burn_in);
        for (std::size_t i = 0; i + 1 < t.size(); ++i) pooled.push_back(t[i + 1] - t[i]);
    }
    s.mean_period = detail::plain_mean(means);
    s.std_run_means = detail::sample_std(means, s.mean_period);
    s.pooled_mean = detail::plain_mean(pooled);
    s.pooled_std = detail::sample_std(pooled, s.pooled_mean);
    return s;
}

struct SpectrumReport {
    std::vector<double> frequencies;  // k / (n dt), k = 0 .. n/2
    std::vector<double> power;        // replica-averaged |DFT| / n
    double peak_frequency = 0.0;
    double bin_width = 0.0;
    std::vector<double> replica_peaks;  // per-replica peak frequencies
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// |DFT| / n of the mean-removed signal at bins 0 .. n/2.
inline std::vector<double> dft_modulus(const std::vector<double>& signal) {
    const std::size_t n = signal.size();
    const std::size_t nb = n / 2 + 1;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(nb);
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
    }
    const double mean = std::accumulate(signal.begin(), signal.end(), 0.0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) in[i] = signal[i] - mean;
    fftw_execute(plan);
    std::vector<double> mod(nb);
    for (std::size_t k = 0; k < nb; ++k) mod[k] = std::hypot(out[k][0], out[k][1]) / static_cast<double>(n);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    fftw_free(in);
    fftw_free(out);
    return mod;
}

inline std::size_t peak_bin(const std::vector<double>& p) {
    std::size_t best = 1;
    for (std::size_t k = 2; k < p.size(); ++k) {
        if (p[k] > p[best]) best = k;
    }
    return best;
}

}  // namespace detail

/// Replica-averaged modulus spectrum of the m2 channel after burn-in
/// (rectangular window, mean removed).
inline SpectrumReport spectrum(const std::vector<MeanTrajectory>& trajs, double burn_in = 0.0) {
    if (trajs.empty()) throw ValidationError("no trajectories");
    const MeanTrajectory& ref = trajs.front();
    for (const auto& tr : trajs) {
        tr.check();
        if (tr.size() != ref.size() || std::abs(tr.dt_sample - ref.dt_sample) > 1e-12 * ref.dt_sample) {
            throw ValidationError("trajectories differ in length or sampling");
        }
    }
    const std::size_t i0 = detail::burn_in_index(ref, burn_in);
    if (i0 + 4 > ref.size()) throw ValidationError("trajectory is not longer than the burn-in");
    const std::size_t n = ref.size() - i0;

    std::vector<std::vector<double>> mods(trajs.size());
    parallel_for(trajs.size(), [&](std::size_t r) {
        mods[r] = detail::dft_modulus(std::vector<double>(trajs[r].m2.begin() + static_cast<std::ptrdiff_t>(i0), trajs[r].m2.end()));
    });

    SpectrumReport rep;
    const std::size_t nb = n / 2 + 1;
    rep.bin_width = 1.0 / (static_cast<double>(n) * ref.dt_sample);
    rep.frequencies.resize(nb);
    rep.power.assign(nb, 0.0);
    for (std::size_t k = 0; k < nb; ++k) rep.frequencies[k] = static_cast<double>(k) * rep.bin_width;
    for (const auto& m : mods) {
        for (std::size_t k = 0; k < nb; ++k) rep.power[k] += m[k];
        rep.replica_peaks.push_back(rep.frequencies[detail::peak_bin(m)]);
    }
    for (double& v : rep.power) v /= static_cast<double>(trajs.size());
    double top = 0.0;
    for (std::size_t k = 1; k < nb; ++k) top = std::max(top, rep.power[k]);
    if (!(top > 0.0)) throw AnalysisError("degenerate (flat) signal");
    rep.peak_frequency = rep.frequencies[detail::peak_bin(rep.power)];
    return rep;
}

/// Period 1 / peak frequency of the averaged spectrum; the spread is that of
/// the per-replica peak periods.
inline std::pair<SpectrumReport, PeriodEstimate> dft_period(const std::vector<MeanTrajectory>& trajs, double burn_in = 0.0) {
    SpectrumReport s = spectrum(trajs, burn_in);
    PeriodEstimate e;
    e.method = PeriodMethod::dft;
    e.mean_period = 1.0 / s.peak_frequency;
    std::vector<double> per;
    for (double f : s.replica_peaks) per.push_back(1.0 / f);
    e.std_period = detail::sample_std(per, detail::plain_mean(per));
    e.n_replicas = trajs.size();
    return {std::move(s), e};
}

/// Verdict on whether a trajectory settles on a sustained cycle.
struct CycleVerdict {
    std::size_t returns = 0;  // crossings after burn-in
    double mean_period = 0.0;
    double std_period = 0.0;
    double late_amplitude = 0.0;  // max |m2| over the last tenth of the record
    bool sustained = false;
};

struct CycleCriteria {
    std::size_t min_returns = 10;
    double max_relative_std = 0.05;
    // A spiral decaying into a focus also returns regularly; requiring a
    // non-vanishing late amplitude separates it from a cycle.
    double min_late_amplitude = 1e-3;
};

inline CycleVerdict detect_cycle(const MeanTrajectory& traj, double burn_in = 0.0, const CycleCriteria& c = {}) {
    traj.check();
    CycleVerdict v;
    const auto t = poincare_crossings(traj, burn_in);
    v.returns = t.size();
    if (t.size() >= 2) {
        std::vector<double> d(t.size() - 1);
        for (std::size_t i = 0; i + 1 < t.size(); ++i) d[i] = t[i + 1] - t[i];
        v.mean_period = detail::plain_mean(d);
        v.std_period = detail::sample_std(d, v.mean_period);
    }
    const std::size_t from = traj.size() - traj.size() / 10;
    for (std::size_t i = from; i < traj.size(); ++i) v.late_amplitude = std::max(v.late_amplitude, std::abs(traj.m2[i]));
    v.sustained = v.returns >= c.min_returns && v.mean_period > 0.0 &&
                  v.std_period < c.max_relative_std * v.mean_period && v.late_amplitude >= c.min_late_amplitude;
    return v;
}

}  // namespace fdiff
