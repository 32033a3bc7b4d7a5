// Command-line front end: single runs, the Monte Carlo robustness study,
// observability rank reports, and per-observer timing rows.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "swo/swo.hpp"

namespace {

swo::Scenario build_scenario(const std::string& config, const std::string& case_str, double dt,
                             double horizon, std::uint64_t seed, const std::string& mode,
                             const std::vector<std::string>& mask, bool have_dt, bool have_horizon,
                             bool have_seed, bool have_mode) {
    const swo::CaseId c = swo::parse_case(case_str);
    swo::Scenario sc = config.empty() ? swo::Scenario::defaults(c) : swo::load_scenario(config, c);
    if (have_dt) sc.dt = dt;
    if (have_horizon) sc.horizon = horizon;
    if (have_seed) sc.seed = seed;
    if (have_mode) sc.mode = swo::parse_switch_mode(mode);
    for (const auto& m : mask)
        sc.mask[static_cast<size_t>(static_cast<int>(swo::parse_observer(m)))] = true;
    sc.validate();
    return sc;
}

void print_masks(const swo::RunResult& r) {
    for (int j = 0; j < swo::kBankSize; ++j) {
        if (!r.masked[static_cast<size_t>(j)]) continue;
        std::cout << swo::observer_name(static_cast<swo::ObserverKind>(j))
                  << " excluded: " << r.mask_reason[static_cast<size_t>(j)] << "\n";
    }
    for (int j = 0; j < swo::kBankSize; ++j) {
        if (r.failed_at[static_cast<size_t>(j)] < 0) continue;
        std::cout << swo::observer_name(static_cast<swo::ObserverKind>(j)) << " failed at step "
                  << r.failed_at[static_cast<size_t>(j)] << ": "
                  << r.mask_reason[static_cast<size_t>(j)] << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cascaded-CSTR switched-observer simulator"};
    app.require_subcommand(1);

    std::string case_str = "1", out_dir, config, mode = "measurement";
    std::vector<std::string> mask;
    double dt = 0.01, horizon = 40.0, tol = 1e-9;
    std::uint64_t seed = 1;
    int trials = 100, order = -1;
    bool parallel_bank = false, include_qkf = false, shared_draws = false;

    auto* run = app.add_subcommand("run", "Simulate one case and export results");
    run->add_option("--case", case_str, "Case id (sc|1|2|3)")->required();
    auto* opt_dt = run->add_option("--dt", dt, "Step size, minutes");
    auto* opt_hz = run->add_option("--horizon", horizon, "Horizon, minutes");
    auto* opt_seed = run->add_option("--seed", seed, "Master seed");
    auto* opt_mode = run->add_option("--mode", mode, "Switching mode (measurement|truestate)");
    run->add_option("--mask", mask, "Observers to exclude (ELO,EKF,UKF,QKF,PF)")->delimiter(',');
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--config", config, "Scenario JSON file");
    run->add_flag("--parallel-bank", parallel_bank, "Step the observer bank concurrently");

    auto* mc = app.add_subcommand("montecarlo", "Parametric-uncertainty study");
    mc->add_option("--case", case_str, "Case id (1|2|3)")->required();
    mc->add_option("--trials", trials, "Number of trials")->required();
    auto* mc_seed = mc->add_option("--seed", seed, "Master seed");
    mc->add_option("--out", out_dir, "Output directory")->required();
    mc->add_option("--config", config, "Scenario JSON file");
    mc->add_flag("--include-qkf", include_qkf, "Keep the quadrature filter in the bank");
    mc->add_flag("--shared-draws", shared_draws, "Same perturbation draw for both reactors");

    auto* obs = app.add_subcommand("observability", "Rank report for a case");
    obs->add_option("--case", case_str, "Case id (sc|1|2|3)")->required();
    obs->add_option("--order", order, "Max derivative order to stack");
    obs->add_option("--tol", tol, "Relative singular-value threshold");

    auto* bench = app.add_subcommand("bench", "Per-observer timing row for one run");
    bench->add_option("--case", case_str, "Case id (1|2|3)")->required();
    auto* bench_seed = bench->add_option("--seed", seed, "Master seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            swo::Scenario sc = build_scenario(config, case_str, dt, horizon, seed, mode, mask,
                                              opt_dt->count() > 0, opt_hz->count() > 0,
                                              opt_seed->count() > 0, opt_mode->count() > 0);
            std::filesystem::create_directories(out_dir);
            swo::RunResult r = swo::run_case(sc, parallel_bank);
            print_masks(r);
            swo::export_results(r, out_dir);
            std::cout << "wrote " << out_dir << "/{trajectory.csv,metrics.json,switchlog.csv}\n";
        } else if (mc->parsed()) {
            const swo::CaseId c = swo::parse_case(case_str);
            if (c == swo::CaseId::SpecialCase)
                throw swo::contract_error("montecarlo: case must be 1, 2, or 3");
            swo::Scenario sc = config.empty() ? swo::Scenario::defaults(c)
                                              : swo::load_scenario(config, c);
            if (mc_seed->count() > 0) sc.seed = seed;
            swo::PerturbationSpec ps;
            ps.trials = trials;
            ps.mask_qkf = !include_qkf;
            ps.independent_per_reactor = !shared_draws;
            std::filesystem::create_directories(out_dir);
            swo::MonteCarloResult res = swo::monte_carlo(sc, ps);
            swo::export_montecarlo_bands_csv(res, out_dir + "/montecarlo_bands.csv");
            std::cout << res.trials - res.failures << "/" << res.trials << " trials succeeded\n";
            for (const auto& f : res.failure_reasons) std::cout << f << "\n";
            std::cout << "wrote " << out_dir << "/montecarlo_bands.csv\n";
        } else if (obs->parsed()) {
            const swo::CaseId c = swo::parse_case(case_str);
            const swo::Scenario sc = swo::Scenario::defaults(c);
            swo::ObservabilityReport rep;
            if (c == swo::CaseId::SpecialCase) {
                const swo::LinearModel lin =
                    swo::linearize(sc.sc_x_op, swo::input_vector(c, sc.params), sc.params);
                rep = swo::linear_observability(lin.A, lin.C, tol);
                rep.cse = c;
            } else {
                swo::LieOptions opt;
                opt.order = order;
                opt.tol = tol;
                rep = swo::nonlinear_observability(c, sc.x0, swo::input_vector(c, sc.params),
                                                   sc.params, opt);
            }
            std::cout << "case " << case_str << ": rank " << rep.rank << " of " << rep.state_dim
                      << (rep.fully_observable ? " (fully observable)" : " (rank-deficient)")
                      << ", tol " << swo::dtos(rep.tol) << ", max order " << rep.order_used << "\n";
        } else if (bench->parsed()) {
            const swo::CaseId c = swo::parse_case(case_str);
            if (c == swo::CaseId::SpecialCase)
                throw swo::contract_error("bench: case must be 1, 2, or 3");
            swo::Scenario sc = swo::Scenario::defaults(c);
            if (bench_seed->count() > 0) sc.seed = seed;
            swo::RunResult r = swo::run_case(sc);
            print_masks(r);
            std::cout << "observer,wall_seconds\n";
            const auto& m = r.metrics;
            for (size_t i = 0; i < m.rows.size(); ++i)
                std::cout << m.rows[i] << ","
                          << (m.available[i] ? swo::dtos(m.wall_seconds[static_cast<int>(i)]) : "n/a")
                          << "\n";
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
