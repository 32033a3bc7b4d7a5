#pragma once

#include <Eigen/Dense>

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace swo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Violation of an interface contract (dimension mismatch, bad argument).
struct contract_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure at runtime (divergence, degenerate covariance, ...).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A requested computation exceeds its configured resource budget.
struct capacity_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class CaseId { SpecialCase, Case1, Case2, Case3 };

inline int reactor_count(CaseId c) {
    switch (c) {
        case CaseId::SpecialCase:
        case CaseId::Case1: return 1;
        case CaseId::Case2: return 2;
        case CaseId::Case3: return 3;
    }
    throw contract_error("unknown case id");
}

inline int state_dim(CaseId c) {
    return c == CaseId::SpecialCase ? 3 : 5 * reactor_count(c);
}

inline int output_dim(CaseId c) {
    switch (c) {
        case CaseId::SpecialCase: return 1;
        case CaseId::Case1: return 3;
        case CaseId::Case2: return 7;
        case CaseId::Case3: return 9;
    }
    throw contract_error("unknown case id");
}

inline std::string case_name(CaseId c) {
    switch (c) {
        case CaseId::SpecialCase: return "sc";
        case CaseId::Case1: return "1";
        case CaseId::Case2: return "2";
        case CaseId::Case3: return "3";
    }
    throw contract_error("unknown case id");
}

inline CaseId parse_case(std::string_view s) {
    if (s == "sc" || s == "SC" || s == "special") return CaseId::SpecialCase;
    if (s == "1") return CaseId::Case1;
    if (s == "2") return CaseId::Case2;
    if (s == "3") return CaseId::Case3;
    throw contract_error("unknown case '" + std::string(s) + "' (expected sc|1|2|3)");
}

/// State component names in layout order, e.g. CA1, CB1, CC1, T1, Tj1, CA2, ...
inline std::vector<std::string> state_names(CaseId c) {
    if (c == CaseId::SpecialCase) return {"CA1", "CB1", "CC1"};
    std::vector<std::string> out;
    for (int i = 1; i <= reactor_count(c); ++i) {
        const std::string r = std::to_string(i);
        out.push_back("CA" + r);
        out.push_back("CB" + r);
        out.push_back("CC" + r);
        out.push_back("T" + r);
        out.push_back("Tj" + r);
    }
    return out;
}

/// Indices into the state vector that are measured, in output order.
inline std::vector<int> measured_indices(CaseId c) {
    switch (c) {
        case CaseId::SpecialCase: return {2};
        case CaseId::Case1: return {2, 3, 4};
        case CaseId::Case2: return {3, 4, 5, 6, 7, 8, 9};
        case CaseId::Case3: return {3, 4, 8, 9, 10, 11, 12, 13, 14};
    }
    throw contract_error("unknown case id");
}

inline std::vector<std::string> output_names(CaseId c) {
    const auto names = state_names(c);
    std::vector<std::string> out;
    for (int i : measured_indices(c)) out.push_back(names[static_cast<size_t>(i)]);
    return out;
}

/// Physical constants of the reactor train plus inlet conditions.
///
/// The per-reactor offsets d_* exist for the parametric-uncertainty study:
/// the plant can carry perturbed kinetics per reactor while every observer
/// keeps the nominal values.
struct PlantParams {
    double F0 = 6.0;       // feed flow, L/min
    double Fi = 12.0;      // reactor outlet flow, L/min (shared by reactors 1-3)
    double Fj = 30.0;      // jacket flow, L/min
    double V = 100.0;      // reactor volume, L
    double Vj = 50.0;      // jacket volume, L
    double k0 = 5.0e5;     // pre-exponential factor, L/(mol*min)
    double E = 1.0e4;      // activation energy, cal/mol
    double Rg = 1.987;     // gas constant, cal/(mol*K)
    double dH = -4.0e4;    // reaction enthalpy, cal/mol
    double rho = 1.0e3;    // reactor density, g/L
    double rho_j = 1.0e3;  // jacket density, g/L
    double cp = 4.18;      // reactor specific heat, cal/(g*K)
    double cpj = 4.18;     // jacket specific heat, cal/(g*K)
    double UA = 1.0e5;     // heat-transfer coefficient, cal/(min*K)
    double T_in = 300.0;   // reactor-1 feed temperature, K
    double Tj_in = 370.0;  // jacket inlet temperature, K
    double CA0 = 1.0;      // feed concentration of A, mol/L
    double CB0 = 0.8;      // feed concentration of B, mol/L

    // Additive per-reactor perturbations (index 0 = reactor 1).
    std::array<double, 3> d_k0{}, d_E{}, d_UA{}, d_dH{};

    double k0_r(int i) const { return k0 + d_k0[static_cast<size_t>(i)]; }
    double E_r(int i) const { return E + d_E[static_cast<size_t>(i)]; }
    double UA_r(int i) const { return UA + d_UA[static_cast<size_t>(i)]; }
    double dH_r(int i) const { return dH + d_dH[static_cast<size_t>(i)]; }

    void validate() const {
        auto pos = [](double v, const char* name) {
            if (!(v > 0.0))
                throw contract_error(std::string("PlantParams: ") + name + " must be strictly positive");
        };
        pos(V, "V");
        pos(Vj, "Vj");
        pos(rho, "rho");
        pos(rho_j, "rho_j");
        pos(cp, "cp");
        pos(cpj, "cpj");
        pos(Rg, "Rg");
        if (F0 < 0.0 || Fi < 0.0 || Fj < 0.0)
            throw contract_error("PlantParams: flows must be nonnegative");
        for (int i = 0; i < 3; ++i) {
            if (!(k0_r(i) > 0.0)) throw contract_error("PlantParams: perturbed k0 must stay positive");
            if (!(E_r(i) > 0.0)) throw contract_error("PlantParams: perturbed E must stay positive");
        }
    }
};

/// Default initial state of the plant per case.
inline Vec default_initial_state(CaseId c) {
    if (c == CaseId::SpecialCase) {
        Vec x(3);
        x << 1.0, 1.0, 0.0;
        return x;
    }
    const int q = reactor_count(c);
    Vec x(5 * q);
    const double t_r[3] = {300.0, 325.0, 350.0};
    for (int i = 0; i < q; ++i) {
        x[5 * i + 0] = (i == 0) ? 1.0 : 0.0;
        x[5 * i + 1] = (i == 0) ? 1.0 : 0.0;
        x[5 * i + 2] = 0.0;
        x[5 * i + 3] = t_r[i];
        x[5 * i + 4] = 370.0;
    }
    return x;
}

/// Input vector u: [F0, CA0, CB0, T_in, Tj_in] for the nonlinear cases,
/// [F0, CA0, CB0] for the special (linear) case.
inline Vec input_vector(CaseId c, const PlantParams& p) {
    if (c == CaseId::SpecialCase) {
        Vec u(3);
        u << p.F0, p.CA0, p.CB0;
        return u;
    }
    Vec u(5);
    u << p.F0, p.CA0, p.CB0, p.T_in, p.Tj_in;
    return u;
}

}  // namespace swo
