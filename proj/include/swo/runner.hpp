#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "swo/metrics.hpp"
#include "swo/model.hpp"
#include "swo/observers.hpp"
#include "swo/scenario.hpp"
#include "swo/switching.hpp"
#include "swo/types.hpp"

namespace swo {

/// Derives an independent 64-bit stream seed from a master seed
/// (splitmix64 finalizer); stream identity, not call order, fixes the value.
inline std::uint64_t seed_mix(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Stream ids for per-run RNG derivation: plant = 0, observer j = 1 + j.
constexpr std::uint64_t kPlantStream = 0;
constexpr std::uint64_t kObserverStreamBase = 1;

/// Everything one run produces: plant truth, per-observer series, the
/// switching log, the switched series, and the score sheet.
struct RunResult {
    Scenario scenario;
    PlantTrajectory traj;
    std::vector<std::string> state_vars;
    std::vector<std::string> output_vars;

    std::array<bool, kBankSize> masked{};              // excluded before the run
    std::array<std::string, kBankSize> mask_reason{};  // why, when masked
    std::array<int, kBankSize> failed_at{};            // step of mid-run failure, -1 otherwise
    std::array<Mat, kBankSize> x_hat;                  // n x M, NaN after a failure
    std::array<Mat, kBankSize> y_hat;                  // p x M
    std::array<Mat, kBankSize> e;                      // p x M, y_noisy - y_hat
    std::array<double, kBankSize> wall_seconds{};      // cumulative per observer

    Mat swo_x;                  // n x M switched estimate
    Mat swo_y;                  // p x M
    Mat swo_e;                  // p x M
    std::vector<SwitchDecision> log;  // one entry per step
    double switching_overhead_seconds = 0.0;

    MetricTable metrics;

    bool ran(int j) const { return !masked[static_cast<size_t>(j)]; }
    bool completed(int j) const { return ran(j) && failed_at[static_cast<size_t>(j)] < 0; }
};

namespace detail {

inline MetricTable score_run(const RunResult& r) {
    const int n = state_dim(r.scenario.cse);
    const int p = output_dim(r.scenario.cse);
    const int rows = kBankSize + 1;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    MetricTable m;
    m.cse = r.scenario.cse;
    m.seed = r.scenario.seed;
    m.dt = r.scenario.dt;
    m.horizon = r.scenario.horizon;
    m.state_vars = r.state_vars;
    m.output_vars = r.output_vars;
    m.mse_table = Mat::Constant(rows, n, nan);
    m.l2_table = Mat::Constant(rows, p, nan);
    m.linf_table = Mat::Constant(rows, p, nan);
    m.wall_seconds = Vec::Constant(rows, nan);

    double bank_wall = 0.0;
    for (int j = 0; j < kBankSize; ++j) {
        m.rows.push_back(observer_name(static_cast<ObserverKind>(j)));
        m.available.push_back(r.completed(j));
        if (r.ran(j)) bank_wall += r.wall_seconds[static_cast<size_t>(j)];
        if (!r.completed(j)) continue;
        for (int i = 0; i < n; ++i)
            m.mse_table(j, i) = mse(r.traj.X.row(i).transpose(),
                                    r.x_hat[static_cast<size_t>(j)].row(i).transpose());
        for (int i = 0; i < p; ++i) {
            m.l2_table(j, i) = l2_metric(r.e[static_cast<size_t>(j)].row(i));
            m.linf_table(j, i) = linf_metric(r.e[static_cast<size_t>(j)].row(i));
        }
        m.wall_seconds[j] = r.wall_seconds[static_cast<size_t>(j)];
    }

    m.rows.push_back("SWO");
    m.available.push_back(true);
    const int s = kBankSize;
    for (int i = 0; i < n; ++i)
        m.mse_table(s, i) = mse(r.traj.X.row(i).transpose(), r.swo_x.row(i).transpose());
    for (int i = 0; i < p; ++i) {
        m.l2_table(s, i) = l2_metric(r.swo_e.row(i));
        m.linf_table(s, i) = linf_metric(r.swo_e.row(i));
    }
    m.wall_seconds[s] = bank_wall + r.switching_overhead_seconds;
    return m;
}

}  // namespace detail

/// Full single run: simulate the plant, feed every sample through the
/// observer bank, switch, and score. `parallel_bank` steps the bank members
/// concurrently with a barrier before the switching decision; results are
/// identical either way (each observer owns its RNG).
inline RunResult run_case(const Scenario& sc, bool parallel_bank = false) {
    sc.validate();
    const CaseId c = sc.cse;
    const int n = state_dim(c);
    const int p = output_dim(c);
    const int M = sc.samples();
    const double nan = std::numeric_limits<double>::quiet_NaN();

    RunResult r;
    r.scenario = sc;
    r.state_vars = state_names(c);
    r.output_vars = output_names(c);
    r.failed_at.fill(-1);

    const PlantParams& plant_params = sc.plant_override ? *sc.plant_override : sc.params;
    const Vec u = input_vector(c, sc.params);

    LinearModel lin;
    const LinearModel* linp = nullptr;
    DiscreteModel model;
    if (c == CaseId::SpecialCase) {
        lin = linearize(sc.sc_x_op, u, sc.params);
        linp = &lin;
        model = DiscreteModel::from_linear(lin, sc.params, sc.dt);
    } else {
        model = DiscreteModel::from_nonlinear(c, sc.params, sc.dt);
    }

    r.traj = simulate_plant(c, plant_params, sc.x0, sc.dt, M, sc.q_diag, sc.r_diag,
                            seed_mix(sc.seed, kPlantStream), linp);

    std::array<std::unique_ptr<Estimator>, kBankSize> bank;
    for (int j = 0; j < kBankSize; ++j) {
        const auto kind = static_cast<ObserverKind>(j);
        if (sc.mask[static_cast<size_t>(j)]) {
            r.masked[static_cast<size_t>(j)] = true;
            r.mask_reason[static_cast<size_t>(j)] = "masked by scenario";
            continue;
        }
        try {
            bank[static_cast<size_t>(j)] = make_estimator(kind, model, sc.observer, sc.x0, u,
                                                          seed_mix(sc.seed, kObserverStreamBase + j));
        } catch (const capacity_error& ex) {
            r.masked[static_cast<size_t>(j)] = true;
            r.mask_reason[static_cast<size_t>(j)] = ex.what();
        }
    }

    for (int j = 0; j < kBankSize; ++j) {
        if (!r.ran(j)) continue;
        r.x_hat[static_cast<size_t>(j)] = Mat::Constant(n, M, nan);
        r.y_hat[static_cast<size_t>(j)] = Mat::Constant(p, M, nan);
        r.e[static_cast<size_t>(j)] = Mat::Constant(p, M, nan);
    }
    r.swo_x.resize(n, M);
    r.swo_y.resize(p, M);
    r.swo_e.resize(p, M);
    r.log.reserve(static_cast<size_t>(M));

    std::vector<std::optional<EstimatorRecord>> records(kBankSize);
    for (int k = 0; k < M; ++k) {
        const Vec y = r.traj.Y_noisy.col(k);
        const bool first = k == 0;

        auto step_one = [&](int j) -> std::optional<EstimatorRecord> {
            return bank[static_cast<size_t>(j)]->step(u, y, first);
        };
        if (parallel_bank) {
            std::array<std::future<std::optional<EstimatorRecord>>, kBankSize> futs;
            for (int j = 0; j < kBankSize; ++j)
                if (bank[static_cast<size_t>(j)])
                    futs[static_cast<size_t>(j)] = std::async(std::launch::async, step_one, j);
            for (int j = 0; j < kBankSize; ++j) {
                records[static_cast<size_t>(j)].reset();
                if (!futs[static_cast<size_t>(j)].valid()) continue;
                try {
                    records[static_cast<size_t>(j)] = futs[static_cast<size_t>(j)].get();
                } catch (const numeric_error& ex) {
                    bank[static_cast<size_t>(j)].reset();
                    r.failed_at[static_cast<size_t>(j)] = k;
                    r.mask_reason[static_cast<size_t>(j)] = ex.what();
                }
            }
        } else {
            for (int j = 0; j < kBankSize; ++j) {
                records[static_cast<size_t>(j)].reset();
                if (!bank[static_cast<size_t>(j)]) continue;
                try {
                    records[static_cast<size_t>(j)] = step_one(j);
                } catch (const numeric_error& ex) {
                    bank[static_cast<size_t>(j)].reset();
                    r.failed_at[static_cast<size_t>(j)] = k;
                    r.mask_reason[static_cast<size_t>(j)] = ex.what();
                }
            }
        }

        for (int j = 0; j < kBankSize; ++j) {
            if (!records[static_cast<size_t>(j)]) continue;
            const auto& rec = *records[static_cast<size_t>(j)];
            r.x_hat[static_cast<size_t>(j)].col(k) = rec.x_hat;
            r.y_hat[static_cast<size_t>(j)].col(k) = rec.y_hat;
            r.e[static_cast<size_t>(j)].col(k) = rec.e;
            r.wall_seconds[static_cast<size_t>(j)] += rec.wall_seconds;
        }

        const Vec x_true = r.traj.X.col(k);
        const auto t0 = std::chrono::steady_clock::now();
        SwitchDecision d = swo_step(records, y, &x_true, sc.mode, k);
        r.switching_overhead_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        r.swo_x.col(k) = d.x_hat;
        r.swo_y.col(k) = model.h(d.x_hat);
        r.swo_e.col(k) = y - r.swo_y.col(k);
        r.log.push_back(std::move(d));
    }

    r.metrics = detail::score_run(r);
    return r;
}

/// Parametric-uncertainty draw: additive offsets on [k0, E, UA, dH],
/// applied to the plant's first two reactors only.
struct PerturbationSpec {
    int trials = 100;
    double lo = -1000.0;
    double hi = 1000.0;
    bool independent_per_reactor = true;  // false = reactors share one draw
    bool force_zero = false;              // degenerate draw for testing
    bool mask_qkf = true;                 // the study excludes the quadrature filter
};

/// Per-step 5/50/95 percentile bands of the reactor-1 concentrations across
/// trials, for the true state, each completed observer, and the SWO.
struct MonteCarloResult {
    Scenario nominal;
    int trials = 0;
    int failures = 0;
    std::vector<std::string> failure_reasons;  // one per failed trial

    std::vector<std::string> series;  // "x", observer names (lowercase), "swo"
    std::vector<std::string> vars;    // tracked variable names
    std::vector<int> var_state_idx;   // indices into the state vector
    Vec t;                            // sample times
    // bands[s][v] is a 3 x M matrix with rows = 5%, 50%, 95%.
    std::vector<std::vector<Mat>> bands;

    std::vector<MetricTable> trial_metrics;  // successful trials only
    std::vector<int> trial_index;            // originating trial of each entry
};

namespace detail {

/// Linear-interpolation percentile of an unsorted sample (q in [0, 100]).
inline double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw contract_error("percentile: empty sample");
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

inline double draw_offset(std::mt19937_64& rng, const PerturbationSpec& ps) {
    if (ps.force_zero) return 0.0;
    return std::uniform_real_distribution<double>(ps.lo, ps.hi)(rng);
}

}  // namespace detail

/// Draws one plant-parameter perturbation. Offsets that would make k0 or E
/// nonpositive are resampled.
inline PlantParams perturb_params(const PlantParams& nominal, const PerturbationSpec& ps,
                                  std::mt19937_64& rng, int reactors) {
    PlantParams p = nominal;
    const int hit = std::min(reactors, 2);  // reactors 1 and 2 only
    double shared_k0 = 0.0, shared_E = 0.0, shared_UA = 0.0, shared_dH = 0.0;
    for (int i = 0; i < hit; ++i) {
        if (ps.independent_per_reactor || i == 0) {
            shared_k0 = detail::draw_offset(rng, ps);
            while (!(nominal.k0 + shared_k0 > 0.0)) shared_k0 = detail::draw_offset(rng, ps);
            shared_E = detail::draw_offset(rng, ps);
            while (!(nominal.E + shared_E > 0.0)) shared_E = detail::draw_offset(rng, ps);
            shared_UA = detail::draw_offset(rng, ps);
            shared_dH = detail::draw_offset(rng, ps);
        }
        p.d_k0[static_cast<size_t>(i)] = shared_k0;
        p.d_E[static_cast<size_t>(i)] = shared_E;
        p.d_UA[static_cast<size_t>(i)] = shared_UA;
        p.d_dH[static_cast<size_t>(i)] = shared_dH;
    }
    return p;
}

// Stream id offset separating trial seeds from within-run streams.
constexpr std::uint64_t kTrialStreamBase = 0x7472ULL << 16;

/// Robustness study: repeated runs with perturbed plant parameters while the
/// observers keep the nominal model. Individual trial failures are recorded,
/// not fatal. Trial results depend only on (master seed, trial index).
inline MonteCarloResult monte_carlo(const Scenario& nominal, const PerturbationSpec& ps) {
    if (ps.trials < 1) throw contract_error("monte_carlo: trials must be >= 1");
    if (nominal.cse == CaseId::SpecialCase)
        throw contract_error("monte_carlo: the robustness study targets the nonlinear cases");
    nominal.validate();

    const int M = nominal.samples();
    MonteCarloResult out;
    out.nominal = nominal;
    out.trials = ps.trials;
    out.vars = {"CA1", "CB1", "CC1"};
    out.var_state_idx = {0, 1, 2};
    out.t = Vec::LinSpaced(M, 0.0, (M - 1) * nominal.dt);

    Scenario base = nominal;
    if (ps.mask_qkf) base.mask[static_cast<size_t>(static_cast<int>(ObserverKind::QKF))] = true;

    // series index 0 = truth, 1..kBankSize = observers, last = SWO
    const int n_series = kBankSize + 2;
    const auto n_vars = out.vars.size();
    // samples[s][v](trial, step); trials that fail leave NaN rows, dropped
    // per-step during aggregation.
    std::vector<std::vector<Mat>> samples(
        static_cast<size_t>(n_series),
        std::vector<Mat>(n_vars, Mat::Constant(ps.trials, M, std::numeric_limits<double>::quiet_NaN())));
    std::vector<bool> series_present(static_cast<size_t>(n_series), false);
    series_present[0] = true;
    series_present[static_cast<size_t>(n_series - 1)] = true;

    for (int trial = 0; trial < ps.trials; ++trial) {
        Scenario sc = base;
        sc.seed = seed_mix(nominal.seed, kTrialStreamBase + static_cast<std::uint64_t>(trial));
        std::mt19937_64 rng(seed_mix(sc.seed, 0x70657274ULL));
        sc.plant_override = perturb_params(nominal.params, ps, rng, reactor_count(nominal.cse));

        try {
            RunResult r = run_case(sc);
            for (size_t v = 0; v < n_vars; ++v) {
                const int si = out.var_state_idx[v];
                samples[0][v].row(trial) = r.traj.X.row(si);
                for (int j = 0; j < kBankSize; ++j) {
                    if (!r.completed(j)) continue;
                    series_present[static_cast<size_t>(1 + j)] = true;
                    samples[static_cast<size_t>(1 + j)][v].row(trial) =
                        r.x_hat[static_cast<size_t>(j)].row(si);
                }
                samples[static_cast<size_t>(n_series - 1)][v].row(trial) = r.swo_x.row(si);
            }
            out.trial_metrics.push_back(r.metrics);
            out.trial_index.push_back(trial);
        } catch (const std::exception& ex) {
            ++out.failures;
            out.failure_reasons.push_back("trial " + std::to_string(trial) + ": " + ex.what());
        }
    }

    for (int s = 0; s < n_series; ++s) {
        if (!series_present[static_cast<size_t>(s)]) continue;
        if (s == 0)
            out.series.push_back("x");
        else if (s == n_series - 1)
            out.series.push_back("swo");
        else {
            std::string nm = observer_name(static_cast<ObserverKind>(s - 1));
            for (auto& ch : nm) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
            out.series.push_back(nm);
        }
        std::vector<Mat> var_bands;
        for (size_t v = 0; v < n_vars; ++v) {
            Mat b(3, M);
            for (int k = 0; k < M; ++k) {
                std::vector<double> col;
                col.reserve(static_cast<size_t>(ps.trials));
                for (int trial = 0; trial < ps.trials; ++trial) {
                    const double val = samples[static_cast<size_t>(s)][v](trial, k);
                    if (std::isfinite(val)) col.push_back(val);
                }
                if (col.empty()) {
                    b.col(k).setConstant(std::numeric_limits<double>::quiet_NaN());
                } else {
                    b(0, k) = detail::percentile(col, 5.0);
                    b(1, k) = detail::percentile(col, 50.0);
                    b(2, k) = detail::percentile(col, 95.0);
                }
            }
            var_bands.push_back(std::move(b));
        }
        out.bands.push_back(std::move(var_bands));
    }
    return out;
}

}  // namespace swo
