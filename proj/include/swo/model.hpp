#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "swo/types.hpp"

namespace swo {

/// Reaction rate constant k = k0 * exp(-E / (Rg * T)).
inline double arrhenius_rate(double T, const PlantParams& p, int reactor = 0) {
    if (!(T > 0.0)) throw std::domain_error("arrhenius_rate: temperature must be positive");
    return p.k0_r(reactor) * std::exp(-p.E_r(reactor) / (p.Rg * T));
}

/// Continuous-time derivatives for a batch of states (columns of X).
///
/// The batch form exists so the point-set filters can propagate tens of
/// thousands of states per step through vectorized row expressions.
inline Mat nonlinear_dynamics_batch(const Mat& X, const Vec& u, const PlantParams& p, CaseId c) {
    if (c == CaseId::SpecialCase)
        throw contract_error("nonlinear_dynamics: not defined for the special (linear) case");
    const int n = state_dim(c);
    if (X.rows() != n) throw contract_error("nonlinear_dynamics: state dimension mismatch");
    if (u.size() != 5) throw contract_error("nonlinear_dynamics: input vector must have 5 entries");

    using RowA = Eigen::Array<double, 1, Eigen::Dynamic>;
    const auto m = X.cols();
    Mat dX(n, m);
    const double F0 = u[0], CA0 = u[1], CB0 = u[2], Tin = u[3], Tjin = u[4];
    const double FiV = p.Fi / p.V;

    for (int r = 0; r < reactor_count(c); ++r) {
        const int b = 5 * r;
        RowA CA = X.row(b + 0).array();
        RowA CB = X.row(b + 1).array();
        RowA CC = X.row(b + 2).array();
        RowA T = X.row(b + 3).array();
        RowA Tj = X.row(b + 4).array();
        RowA rate = p.k0_r(r) * (-p.E_r(r) / (p.Rg * T)).exp() * CA * CB;
        const double heat_rx = p.dH_r(r) / (p.rho * p.cp);
        const double heat_jk = p.UA_r(r) / (p.rho * p.cp * p.V);

        if (r == 0) {
            dX.row(0) = (F0 * CA0 / p.V - FiV * CA - rate).matrix();
            dX.row(1) = (F0 * CB0 / p.V - FiV * CB - rate).matrix();
            dX.row(2) = (rate - FiV * CC).matrix();
            dX.row(3) = (FiV * (Tin - T) - heat_rx * rate + heat_jk * (Tj - T)).matrix();
        } else {
            RowA CAp = X.row(b - 5).array();
            RowA CBp = X.row(b - 4).array();
            RowA Tp = X.row(b - 2).array();
            dX.row(b + 0) = (FiV * (CAp - CA) - rate).matrix();
            dX.row(b + 1) = (FiV * (CBp - CB) - rate).matrix();
            dX.row(b + 2) = (rate - FiV * CC).matrix();
            dX.row(b + 3) = (FiV * (Tp - T) - heat_rx * rate + heat_jk * (Tj - T)).matrix();
        }
        dX.row(b + 4) = (p.Fj / p.Vj * (Tjin - Tj) -
                         p.UA_r(r) / (p.rho_j * p.cpj * p.Vj) * (Tj - T))
                            .matrix();
    }
    return dX;
}

inline Vec nonlinear_dynamics(const Vec& x, const Vec& u, const PlantParams& p, CaseId c) {
    return nonlinear_dynamics_batch(x, u, p, c).col(0);
}

/// Linearization of the reactor-1 concentration subsystem (A, B, C) around
/// an operating point, with temperatures held fixed.
struct LinearModel {
    Mat A;  // 3x3, 1/min
    Mat B;  // 3x3
    Mat C;  // 1x3 selection
    Vec x_op;
    Vec u_op;
};

inline LinearModel linearize(const Vec& x_op, const Vec& u_op, const PlantParams& p,
                             double T_fixed = 0.0) {
    if (x_op.size() != 3 || u_op.size() != 3)
        throw contract_error("linearize: expects the 3-state concentration subsystem");
    const double T1 = T_fixed > 0.0 ? T_fixed : p.T_in;
    const double k1 = arrhenius_rate(T1, p, 0);
    const double CA1 = x_op[0], CB1 = x_op[1];
    const double F0 = u_op[0], CA0 = u_op[1], CB0 = u_op[2];
    const double F1V = p.Fi / p.V;

    LinearModel m;
    m.A.setZero(3, 3);
    m.A << -(F1V + k1 * CB1), -k1 * CA1, 0.0,
        -k1 * CB1, -(F1V + k1 * CA1), 0.0,
        k1 * CB1, k1 * CA1, -F1V;
    m.B.setZero(3, 3);
    m.B << CA0 / p.V, F0 / p.V, 0.0,
        CB0 / p.V, 0.0, F0 / p.V,
        0.0, 0.0, 0.0;
    m.C.setZero(1, 3);
    m.C(0, 2) = 1.0;
    m.x_op = x_op;
    m.u_op = u_op;
    return m;
}

inline Vec linear_dynamics(const Vec& x, const Vec& u, const LinearModel& m) {
    if (x.size() != m.A.rows() || u.size() != m.B.cols())
        throw contract_error("linear_dynamics: dimension mismatch");
    return m.A * x + m.B * u;
}

/// Output selection matrix (p x n) for a case.
inline Mat measurement_matrix(CaseId c) {
    const auto idx = measured_indices(c);
    Mat H = Mat::Zero(static_cast<int>(idx.size()), state_dim(c));
    for (int i = 0; i < static_cast<int>(idx.size()); ++i) H(i, idx[static_cast<size_t>(i)]) = 1.0;
    return H;
}

inline Vec measurement(const Vec& x, CaseId c) {
    if (x.size() != state_dim(c)) throw contract_error("measurement: state dimension mismatch");
    const auto idx = measured_indices(c);
    Vec y(static_cast<int>(idx.size()));
    for (int i = 0; i < y.size(); ++i) y[i] = x[idx[static_cast<size_t>(i)]];
    return y;
}

namespace detail {
inline void check_finite(const Vec& x, CaseId c, const char* what) {
    if (x.allFinite()) return;
    const auto names = state_names(c);
    for (int i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]))
            throw numeric_error(std::string(what) + ": nonfinite value in component " +
                                names[static_cast<size_t>(i)]);
}
}  // namespace detail

/// Forward Euler step of the nonlinear dynamics.
inline Vec euler_step(const Vec& x, const Vec& u, double dt, const PlantParams& p, CaseId c) {
    if (!(dt >= 0.0)) throw contract_error("euler_step: dt must be nonnegative");
    Vec xn = x + dt * nonlinear_dynamics(x, u, p, c);
    detail::check_finite(xn, c, "euler_step: integration diverged");
    return xn;
}

/// Forward Euler step of the linearized special-case model.
inline Vec euler_step(const Vec& x, const Vec& u, double dt, const LinearModel& m) {
    if (!(dt >= 0.0)) throw contract_error("euler_step: dt must be nonnegative");
    Vec xn = x + dt * linear_dynamics(x, u, m);
    detail::check_finite(xn, CaseId::SpecialCase, "euler_step: integration diverged");
    return xn;
}

/// Numeric Jacobian by central finite differences, step scaled per component.
template <class F>
Mat jacobian_fd(F&& f, const Vec& x, double rel_step = 1e-6) {
    Vec f0 = f(x);
    Mat J(f0.size(), x.size());
    Vec xp = x, xm = x;
    for (int m = 0; m < x.size(); ++m) {
        const double h = rel_step * std::max(1.0, std::abs(x[m]));
        xp[m] = x[m] + h;
        xm[m] = x[m] - h;
        J.col(m) = (f(xp) - f(xm)) / (2.0 * h);
        xp[m] = x[m];
        xm[m] = x[m];
    }
    return J;
}

/// Euler-discretized model shared by plant-matched observers.
struct DiscreteModel {
    CaseId cse = CaseId::Case1;
    bool is_linear = false;
    PlantParams params;
    LinearModel lin;
    double dt = 0.01;
    int n = 0;
    int p = 0;
    Mat H;  // constant output selection matrix

    static DiscreteModel from_nonlinear(CaseId c, const PlantParams& params, double dt) {
        DiscreteModel m;
        m.cse = c;
        m.params = params;
        m.dt = dt;
        m.n = state_dim(c);
        m.p = output_dim(c);
        m.H = measurement_matrix(c);
        return m;
    }

    static DiscreteModel from_linear(const LinearModel& lin, const PlantParams& params, double dt) {
        DiscreteModel m;
        m.cse = CaseId::SpecialCase;
        m.is_linear = true;
        m.params = params;
        m.lin = lin;
        m.dt = dt;
        m.n = 3;
        m.p = 1;
        m.H = lin.C;
        return m;
    }

    Vec f(const Vec& x, const Vec& u) const {
        if (is_linear) return x + dt * (lin.A * x + lin.B * u);
        return x + dt * nonlinear_dynamics(x, u, params, cse);
    }

    Mat f_batch(const Mat& X, const Vec& u) const {
        if (is_linear) return X + dt * (lin.A * X + (lin.B * u).replicate(1, X.cols()));
        return X + dt * nonlinear_dynamics_batch(X, u, params, cse);
    }

    Vec h(const Vec& x) const { return H * x; }
    Mat h_batch(const Mat& X) const { return H * X; }

    /// Discrete transition Jacobian F = df/dx by central differences.
    Mat transition_jacobian(const Vec& x, const Vec& u, double rel_step = 1e-6) const {
        if (is_linear) return Mat::Identity(n, n) + dt * lin.A;
        return jacobian_fd([&](const Vec& xx) { return f(xx, u); }, x, rel_step);
    }
};

/// True states plus clean and noisy outputs of one seeded plant rollout.
struct PlantTrajectory {
    Vec t;        // sample times, min
    Mat X;        // n x M true states
    Mat Y_clean;  // p x M
    Mat Y_noisy;  // p x M
};

/// Fixed-step Euler rollout with additive discrete-time Gaussian process and
/// measurement noise. Physical concentrations are clamped at zero after each
/// step; observers never see this clamp through their own models.
inline PlantTrajectory simulate_plant(CaseId c, const PlantParams& p, const Vec& x0, double dt,
                                      int samples, const Vec& q_diag, const Vec& r_diag,
                                      std::uint64_t seed, const LinearModel* lin = nullptr) {
    const int n = state_dim(c);
    const int pd = output_dim(c);
    if (x0.size() != n) throw contract_error("simulate_plant: x0 dimension mismatch");
    if (q_diag.size() != n || r_diag.size() != pd)
        throw contract_error("simulate_plant: noise diagonal dimension mismatch");
    if (samples < 1) throw contract_error("simulate_plant: need at least one sample");
    if (c == CaseId::SpecialCase && lin == nullptr)
        throw contract_error("simulate_plant: special case requires a linear model");

    const Vec u = input_vector(c, p);
    const Vec q_std = q_diag.cwiseMax(0.0).cwiseSqrt();
    const Vec r_std = r_diag.cwiseMax(0.0).cwiseSqrt();

    std::vector<int> conc_idx;
    if (c == CaseId::SpecialCase) {
        conc_idx = {0, 1, 2};
    } else {
        for (int r = 0; r < reactor_count(c); ++r)
            for (int j = 0; j < 3; ++j) conc_idx.push_back(5 * r + j);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    PlantTrajectory traj;
    traj.t.resize(samples);
    traj.X.resize(n, samples);
    traj.Y_clean.resize(pd, samples);
    traj.Y_noisy.resize(pd, samples);

    Vec x = x0;
    for (int k = 0; k < samples; ++k) {
        traj.t[k] = k * dt;
        traj.X.col(k) = x;
        Vec y = c == CaseId::SpecialCase ? Vec(lin->C * x) : measurement(x, c);
        traj.Y_clean.col(k) = y;
        for (int i = 0; i < pd; ++i) y[i] += r_std[i] * gauss(rng);
        traj.Y_noisy.col(k) = y;

        if (k + 1 < samples) {
            x = c == CaseId::SpecialCase ? euler_step(x, u, dt, *lin) : euler_step(x, u, dt, p, c);
            for (int i = 0; i < n; ++i) x[i] += q_std[i] * gauss(rng);
            for (int i : conc_idx) x[i] = std::max(x[i], 0.0);
        }
    }
    return traj;
}

}  // namespace swo
