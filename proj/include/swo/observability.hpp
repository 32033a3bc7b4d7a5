#pragma once

#include <cmath>
#include <functional>

#include "swo/model.hpp"
#include "swo/types.hpp"

namespace swo {

struct ObservabilityReport {
    CaseId cse = CaseId::SpecialCase;
    int state_dim = 0;
    int rank = 0;
    bool fully_observable = false;
    Vec singular_values;  // descending, of the row-normalized stacked matrix
    double tol = 1e-9;
    int order_used = 0;  // highest Lie-derivative order that contributed rows
};

namespace detail {

/// Rank of O by singular values, after scaling each row to unit norm so that
/// concentration-scale and temperature-scale rows compete fairly.
inline int normalized_rank(const Mat& O, double tol, Vec* sv_out = nullptr) {
    Mat N = O;
    for (int r = 0; r < N.rows(); ++r) {
        const double nrm = N.row(r).norm();
        if (nrm > 0.0) N.row(r) /= nrm;
    }
    Eigen::JacobiSVD<Mat> svd(N);
    const Vec sv = svd.singularValues();
    if (sv_out) *sv_out = sv;
    if (sv.size() == 0 || sv[0] <= 0.0) return 0;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * sv[0]) ++rank;
    return rank;
}

}  // namespace detail

/// Rank test of the stacked linear observability matrix [C; CA; ...; CA^{n-1}].
inline ObservabilityReport linear_observability(const Mat& A, const Mat& C, double tol = 1e-9) {
    if (A.rows() != A.cols()) throw contract_error("linear_observability: A must be square");
    if (C.cols() != A.rows()) throw contract_error("linear_observability: C/A dimension mismatch");
    const int n = static_cast<int>(A.rows());
    const int p = static_cast<int>(C.rows());

    Mat O(n * p, n);
    Mat block = C;
    for (int j = 0; j < n; ++j) {
        O.middleRows(j * p, p) = block;
        block = block * A;
    }

    ObservabilityReport rep;
    rep.state_dim = n;
    rep.tol = tol;
    rep.order_used = n - 1;
    rep.rank = detail::normalized_rank(O, tol, &rep.singular_values);
    rep.fully_observable = rep.rank == n;
    return rep;
}

namespace detail {

/// Value of the j-th repeated Lie derivative of h along f at x, evaluated by
/// nested central differences with per-component relative steps.
template <class F, class H>
Vec lie_value(int j, const Vec& x, const F& f, const H& h, double rel_step) {
    if (j == 0) return h(x);
    const Vec fx = f(x);
    Vec acc;
    Vec xp = x, xm = x;
    for (int m = 0; m < x.size(); ++m) {
        const double step = rel_step * std::max(1.0, std::abs(x[m]));
        xp[m] = x[m] + step;
        xm[m] = x[m] - step;
        const Vec g = (lie_value(j - 1, xp, f, h, rel_step) - lie_value(j - 1, xm, f, h, rel_step)) /
                      (2.0 * step);
        if (m == 0)
            acc = g * fx[m];
        else
            acc += g * fx[m];
        xp[m] = x[m];
        xm[m] = x[m];
    }
    if (!acc.allFinite()) throw numeric_error("lie_value: nonfinite Lie derivative");
    return acc;
}

}  // namespace detail

struct LieOptions {
    int order = -1;           // max Lie-derivative orders to stack; -1 means state dimension
    double tol = 1e-9;        // singular-value threshold relative to sigma_max
    // Nested central differencing amplifies rounding noise by 1/(2h) per
    // nesting level, so the step is kept much larger than a single-level
    // Jacobian would use; central differences stay exact for affine maps, and
    // rank detection tolerates the ~h^2 truncation on nonlinear rows.
    double rel_step = 1e-2;
    double eval_budget = 2e7; // cap on dynamics evaluations per stacked order
};

/// Numeric nonlinear observability rank at a single evaluation point.
///
/// Rows are stacked order by order; stacking stops early once the rank has
/// saturated (no increase over two consecutive orders), reached n, or the
/// next order would exceed the evaluation budget. Rank is monotone in the
/// order, so early stopping never lowers the result.
template <class F, class H>
ObservabilityReport lie_observability_at(const F& f, const H& h, const Vec& x, int n,
                                         const LieOptions& opt = {}) {
    const int p = static_cast<int>(h(x).size());
    const int max_order = opt.order > 0 ? opt.order : n;

    Mat O(0, n);
    ObservabilityReport rep;
    rep.state_dim = n;
    rep.tol = opt.tol;

    int stale = 0;
    for (int j = 0; j < max_order; ++j) {
        // Cost of the Jacobian of L_f^j h: (2n)^(j+1) dynamics evaluations.
        if (std::pow(2.0 * n, j + 1) > opt.eval_budget) break;
        Mat rows = jacobian_fd(
            [&](const Vec& xx) { return detail::lie_value(j, xx, f, h, opt.rel_step); }, x,
            opt.rel_step);
        O.conservativeResize(O.rows() + p, n);
        O.bottomRows(p) = rows;
        rep.order_used = j;

        const int rank = detail::normalized_rank(O, opt.tol, &rep.singular_values);
        stale = rank > rep.rank ? 0 : stale + 1;
        rep.rank = std::max(rep.rank, rank);
        if (rep.rank == n || stale >= 2) break;
    }
    rep.fully_observable = rep.rank == n;
    return rep;
}

/// Nonlinear observability of a case, evaluated at the initial condition and
/// at five points along the noiseless trajectory; reports the maximum rank.
inline ObservabilityReport nonlinear_observability(CaseId c, const Vec& x0, const Vec& u0,
                                                   const PlantParams& params,
                                                   const LieOptions& opt = {}) {
    const int n = state_dim(c);
    if (x0.size() != n) throw contract_error("nonlinear_observability: x0 dimension mismatch");

    const double dt = 0.01;
    const int samples = 4000;
    LinearModel lin;
    const LinearModel* linp = nullptr;
    if (c == CaseId::SpecialCase) {
        lin = linearize(x0, u0, params);
        linp = &lin;
    }
    const PlantTrajectory traj = simulate_plant(c, params, x0, dt, samples, Vec::Zero(n),
                                                Vec::Zero(output_dim(c)), 0, linp);

    auto f = [&](const Vec& x) {
        return c == CaseId::SpecialCase ? linear_dynamics(x, u0, lin)
                                        : nonlinear_dynamics(x, u0, params, c);
    };
    auto h = [&](const Vec& x) {
        return c == CaseId::SpecialCase ? Vec(lin.C * x) : measurement(x, c);
    };

    ObservabilityReport best;
    const int points[] = {0, samples / 5, 2 * samples / 5, 3 * samples / 5, 4 * samples / 5,
                          samples - 1};
    for (int k : points) {
        ObservabilityReport rep = lie_observability_at(f, h, Vec(traj.X.col(k)), n, opt);
        if (rep.rank > best.rank) best = rep;
        if (best.rank == n) break;
    }
    best.cse = c;
    best.state_dim = n;
    best.tol = opt.tol;
    best.fully_observable = best.rank == n;
    return best;
}

}  // namespace swo
