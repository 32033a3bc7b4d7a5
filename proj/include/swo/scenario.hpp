#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "swo/observers.hpp"
#include "swo/switching.hpp"
#include "swo/types.hpp"

namespace swo {

inline double default_q_value(CaseId c) {
    return (c == CaseId::SpecialCase || c == CaseId::Case1) ? 4.2e-8 : 4.2e-6;
}

inline double default_r_value(CaseId c) {
    return (c == CaseId::SpecialCase || c == CaseId::Case1) ? 3.5e-8 : 3.5e-6;
}

/// Everything one reproducible run needs: case, grid, parameters, noise,
/// observer settings, switching mode, and the master seed.
struct Scenario {
    CaseId cse = CaseId::Case1;
    double dt = 0.01;        // min
    double horizon = 40.0;   // min
    std::uint64_t seed = 1;  // deterministic default, never wall-clock seeded
    PlantParams params;
    Vec x0;      // defaults per case
    Vec q_diag;  // process noise covariance diagonal
    Vec r_diag;  // measurement noise covariance diagonal
    ObserverConfig observer;
    SwitchMode mode = SwitchMode::MeasurementBased;
    std::array<bool, kBankSize> mask{};  // true = excluded from the bank
    Vec sc_x_op;  // special-case linearization operating point (3 entries)

    // Plant-only parameter override for the robustness study; observers
    // always run on `params`. Not part of the serialized scenario.
    std::optional<PlantParams> plant_override;

    int samples() const { return static_cast<int>(std::llround(horizon / dt)); }

    static Scenario defaults(CaseId c) {
        Scenario s;
        s.cse = c;
        s.x0 = default_initial_state(c);
        s.q_diag = Vec::Constant(state_dim(c), default_q_value(c));
        s.r_diag = Vec::Constant(output_dim(c), default_r_value(c));
        s.sc_x_op = Vec(3);
        s.sc_x_op << s.params.CA0, s.params.CB0, 0.0;
        s.sync_observer_noise();
        return s;
    }

    void sync_observer_noise() {
        observer.q_diag = q_diag;
        observer.r_diag = r_diag;
    }

    void validate() const {
        if (!(dt > 0.0)) throw contract_error("Scenario: dt must be positive");
        if (!(horizon >= dt)) throw contract_error("Scenario: horizon must be at least dt");
        params.validate();
        if (x0.size() != state_dim(cse)) throw contract_error("Scenario: x0 dimension mismatch");
        if (q_diag.size() != state_dim(cse)) throw contract_error("Scenario: q dimension mismatch");
        if (r_diag.size() != output_dim(cse)) throw contract_error("Scenario: r dimension mismatch");
        if ((q_diag.array() < 0.0).any() || (r_diag.array() < 0.0).any())
            throw contract_error("Scenario: noise variances must be nonnegative");
        if (sc_x_op.size() != 3) throw contract_error("Scenario: sc_operating_point needs 3 entries");
        bool any = false;
        for (bool m : mask) any = any || !m;
        if (!any) throw contract_error("Scenario: all observers are masked");
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& ctx) {
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw contract_error("scenario: unknown key '" + item.key() + "' in " + ctx);
}

inline Vec json_to_vec(const nlohmann::json& j, int expected, const std::string& ctx) {
    if (j.is_number()) return Vec::Constant(expected, j.get<double>());
    if (!j.is_array()) throw contract_error("scenario: " + ctx + " must be a number or array");
    Vec v(static_cast<int>(j.size()));
    for (int i = 0; i < v.size(); ++i) v[i] = j[static_cast<size_t>(i)].get<double>();
    if (expected >= 0 && v.size() != expected)
        throw contract_error("scenario: " + ctx + " has wrong length");
    return v;
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario& s) {
    nlohmann::json j;
    j["case"] = case_name(s.cse);
    j["dt"] = s.dt;
    j["horizon_min"] = s.horizon;
    j["seed"] = s.seed;
    j["mode"] = switch_mode_name(s.mode);
    nlohmann::json mask = nlohmann::json::array();
    for (int i = 0; i < kBankSize; ++i)
        if (s.mask[static_cast<size_t>(i)]) mask.push_back(observer_name(static_cast<ObserverKind>(i)));
    j["mask"] = mask;
    const PlantParams& p = s.params;
    j["params"] = {{"F0", p.F0},   {"Fi", p.Fi},   {"Fj", p.Fj},     {"V", p.V},
                   {"Vj", p.Vj},   {"k0", p.k0},   {"E", p.E},       {"Rg", p.Rg},
                   {"dH", p.dH},   {"rho", p.rho}, {"rho_j", p.rho_j}, {"cp", p.cp},
                   {"cpj", p.cpj}, {"UA", p.UA},   {"T_in", p.T_in}, {"Tj_in", p.Tj_in},
                   {"CA0", p.CA0}, {"CB0", p.CB0}};
    j["x0"] = std::vector<double>(s.x0.data(), s.x0.data() + s.x0.size());
    j["q"] = std::vector<double>(s.q_diag.data(), s.q_diag.data() + s.q_diag.size());
    j["r"] = std::vector<double>(s.r_diag.data(), s.r_diag.data() + s.r_diag.size());
    j["observers"] = {{"init_std", s.observer.init_std},
                      {"ukf_alpha", s.observer.ukf_alpha},
                      {"ukf_beta", s.observer.ukf_beta},
                      {"ukf_kappa", s.observer.ukf_kappa},
                      {"qkf_points_per_axis", s.observer.qkf_points_per_axis},
                      {"qkf_point_budget", s.observer.qkf_point_budget},
                      {"pf_particles", s.observer.pf_particles},
                      {"fd_rel_step", s.observer.fd_rel_step}};
    j["sc_operating_point"] =
        std::vector<double>(s.sc_x_op.data(), s.sc_x_op.data() + s.sc_x_op.size());
    return j;
}

/// Parses a scenario from JSON; absent fields fall back to the case defaults,
/// unknown keys are rejected.
inline Scenario scenario_from_json(const nlohmann::json& j, std::optional<CaseId> cli_case = {}) {
    detail::check_keys(j,
                       {"case", "dt", "horizon_min", "seed", "mode", "mask", "params", "x0", "q",
                        "r", "observers", "sc_operating_point"},
                       "top level");
    CaseId c = cli_case.value_or(CaseId::Case1);
    if (j.contains("case")) c = parse_case(j.at("case").get<std::string>());
    if (cli_case) c = *cli_case;

    Scenario s = Scenario::defaults(c);
    if (j.contains("dt")) s.dt = j.at("dt").get<double>();
    if (j.contains("horizon_min")) s.horizon = j.at("horizon_min").get<double>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mode")) s.mode = parse_switch_mode(j.at("mode").get<std::string>());
    if (j.contains("mask"))
        for (const auto& m : j.at("mask"))
            s.mask[static_cast<size_t>(static_cast<int>(parse_observer(m.get<std::string>())))] = true;

    if (j.contains("params")) {
        const auto& jp = j.at("params");
        detail::check_keys(jp,
                           {"F0", "Fi", "Fj", "V", "Vj", "k0", "E", "Rg", "dH", "rho", "rho_j",
                            "cp", "cpj", "UA", "T_in", "Tj_in", "CA0", "CB0"},
                           "params");
        auto get = [&](const char* k, double& dst) {
            if (jp.contains(k)) dst = jp.at(k).get<double>();
        };
        PlantParams& p = s.params;
        get("F0", p.F0); get("Fi", p.Fi); get("Fj", p.Fj); get("V", p.V); get("Vj", p.Vj);
        get("k0", p.k0); get("E", p.E); get("Rg", p.Rg); get("dH", p.dH); get("rho", p.rho);
        get("rho_j", p.rho_j); get("cp", p.cp); get("cpj", p.cpj); get("UA", p.UA);
        get("T_in", p.T_in); get("Tj_in", p.Tj_in); get("CA0", p.CA0); get("CB0", p.CB0);
        // Feed-dependent defaults follow the overridden parameters.
        if (!j.contains("sc_operating_point")) s.sc_x_op << p.CA0, p.CB0, 0.0;
    }
    if (j.contains("x0")) s.x0 = detail::json_to_vec(j.at("x0"), state_dim(c), "x0");
    if (j.contains("q")) s.q_diag = detail::json_to_vec(j.at("q"), state_dim(c), "q");
    if (j.contains("r")) s.r_diag = detail::json_to_vec(j.at("r"), output_dim(c), "r");
    if (j.contains("observers")) {
        const auto& jo = j.at("observers");
        detail::check_keys(jo,
                           {"init_std", "ukf_alpha", "ukf_beta", "ukf_kappa",
                            "qkf_points_per_axis", "qkf_point_budget", "pf_particles",
                            "fd_rel_step"},
                           "observers");
        auto get = [&](const char* k, auto& dst) {
            if (jo.contains(k)) dst = jo.at(k).get<std::decay_t<decltype(dst)>>();
        };
        get("init_std", s.observer.init_std);
        get("ukf_alpha", s.observer.ukf_alpha);
        get("ukf_beta", s.observer.ukf_beta);
        get("ukf_kappa", s.observer.ukf_kappa);
        get("qkf_points_per_axis", s.observer.qkf_points_per_axis);
        get("qkf_point_budget", s.observer.qkf_point_budget);
        get("pf_particles", s.observer.pf_particles);
        get("fd_rel_step", s.observer.fd_rel_step);
    }
    if (j.contains("sc_operating_point"))
        s.sc_x_op = detail::json_to_vec(j.at("sc_operating_point"), 3, "sc_operating_point");

    s.sync_observer_noise();
    s.validate();
    return s;
}

inline Scenario load_scenario(const std::string& path, std::optional<CaseId> cli_case = {}) {
    std::ifstream in(path);
    if (!in) throw contract_error("load_scenario: cannot open " + path);
    nlohmann::json j;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.find_first_not_of(" \t\r\n") == std::string::npos) {
        j = nlohmann::json::object();
    } else {
        try {
            j = nlohmann::json::parse(content);
        } catch (const nlohmann::json::parse_error& e) {
            throw contract_error("load_scenario: parse error in " + path + ": " + e.what());
        }
    }
    return scenario_from_json(j, cli_case);
}

inline void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw contract_error("save_scenario: cannot open " + path);
    out << scenario_to_json(s).dump(2) << "\n";
}

}  // namespace swo
