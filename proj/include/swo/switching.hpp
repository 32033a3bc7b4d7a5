#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "swo/observers.hpp"
#include "swo/types.hpp"

namespace swo {

/// Reference signal the per-sample cost is computed against.
/// MeasurementBased compares estimated outputs with the noisy measurement;
/// TrueStateBased compares estimated states with the simulated true state
/// (simulation-only, the true state is unavailable in practice).
enum class SwitchMode { MeasurementBased, TrueStateBased };

inline SwitchMode parse_switch_mode(std::string_view s) {
    if (s == "measurement") return SwitchMode::MeasurementBased;
    if (s == "truestate") return SwitchMode::TrueStateBased;
    throw contract_error("unknown switching mode '" + std::string(s) +
                         "' (expected measurement|truestate)");
}

inline std::string switch_mode_name(SwitchMode m) {
    return m == SwitchMode::MeasurementBased ? "measurement" : "truestate";
}

inline double l1_error(const Vec& e) { return e.cwiseAbs().sum(); }

/// Weighted-log mismatch between reference and estimated magnitudes:
/// sum_i |y_i| * log(|y_i| / max(|yhat_i|, eps)); terms with |y_i| < eps
/// contribute zero.
inline double kl_error(const Vec& y, const Vec& y_hat, double eps = 1e-12) {
    if (y.size() != y_hat.size()) throw contract_error("kl_error: length mismatch");
    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
        const double a = std::abs(y[i]);
        if (a < eps) continue;
        acc += a * std::log(a / std::max(std::abs(y_hat[i]), eps));
    }
    return acc;
}

/// J_j = l1_j / max_l(l1_l) + kl_j / max_l(kl_l); a zero maximum makes the
/// corresponding term vanish for every observer.
inline Vec switching_cost(const Vec& l1, const Vec& kl) {
    if (l1.size() != kl.size() || l1.size() < 1)
        throw contract_error("switching_cost: per-observer lists must match and be nonempty");
    for (int i = 0; i < l1.size(); ++i)
        if (!std::isfinite(l1[i]) || !std::isfinite(kl[i]) || l1[i] < 0.0 || kl[i] < 0.0)
            throw contract_error("switching_cost: entries must be finite and nonnegative");
    const double l1_max = l1.maxCoeff();
    const double kl_max = kl.maxCoeff();
    Vec J = Vec::Zero(l1.size());
    if (l1_max > 0.0) J += l1 / l1_max;
    if (kl_max > 0.0) J += kl / kl_max;
    return J;
}

/// Argmin over available observers; ties break toward the lower id.
inline int select(const Vec& J, const std::vector<bool>& available) {
    if (J.size() != static_cast<int>(available.size()))
        throw contract_error("select: cost/availability length mismatch");
    int best = -1;
    for (int j = 0; j < J.size(); ++j) {
        if (!available[static_cast<size_t>(j)]) continue;
        if (best < 0 || J[j] < J[best]) best = j;
    }
    if (best < 0) throw numeric_error("select: no available observer");
    return best;
}

struct SwitchDecision {
    int step = 0;
    Vec l1;    // per observer, 0 for unavailable slots
    Vec kl;    // negative raw values floored at 0 before normalization
    Vec cost;  // J per observer
    std::vector<bool> available;
    int selected = -1;
    Vec x_hat;  // the switched estimate (copied from the selected observer)
};

/// One switching decision over the bank's records for the current sample.
/// `records[j]` is empty for masked/failed observers.
inline SwitchDecision swo_step(const std::vector<std::optional<EstimatorRecord>>& records,
                               const Vec& y, const Vec* x_true, SwitchMode mode, int step = 0,
                               double eps = 1e-12) {
    const int q = static_cast<int>(records.size());
    if (q < 1) throw contract_error("swo_step: empty observer bank");
    if (mode == SwitchMode::TrueStateBased && x_true == nullptr)
        throw contract_error("swo_step: true-state mode requires the true state");

    SwitchDecision d;
    d.step = step;
    d.l1 = Vec::Zero(q);
    d.kl = Vec::Zero(q);
    d.available.assign(static_cast<size_t>(q), false);

    for (int j = 0; j < q; ++j) {
        if (!records[static_cast<size_t>(j)]) continue;
        const auto& rec = *records[static_cast<size_t>(j)];
        d.available[static_cast<size_t>(j)] = true;
        if (mode == SwitchMode::MeasurementBased) {
            d.l1[j] = l1_error(rec.e);
            d.kl[j] = std::max(kl_error(y, rec.y_hat, eps), 0.0);
        } else {
            d.l1[j] = l1_error(*x_true - rec.x_hat);
            d.kl[j] = std::max(kl_error(*x_true, rec.x_hat, eps), 0.0);
        }
    }

    // Normalize over available observers only; masked slots stay at zero and
    // must not shrink the maxima of the others.
    Vec l1a = d.l1, kla = d.kl;
    d.cost = switching_cost(l1a, kla);
    for (int j = 0; j < q; ++j)
        if (!d.available[static_cast<size_t>(j)])
            d.cost[j] = std::numeric_limits<double>::infinity();

    d.selected = select(d.cost, d.available);
    d.x_hat = records[static_cast<size_t>(d.selected)]->x_hat;
    return d;
}

}  // namespace swo
