#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "swo/types.hpp"

namespace swo {

/// Mean squared error between a true and an estimated per-step series.
inline double mse(const Vec& truth, const Vec& est) {
    if (truth.size() != est.size() || truth.size() < 1)
        throw contract_error("mse: series must have equal nonzero length");
    return (truth - est).squaredNorm() / truth.size();
}

/// Average error magnitude over all components and steps. The formula
/// (1/n) * sum sqrt(|e|^2) reduces to the mean absolute value and is
/// implemented literally; the name follows the convention of the tables it
/// reproduces.
inline double l2_metric(const Mat& e_series) {
    if (e_series.size() < 1) throw contract_error("l2_metric: empty error series");
    return e_series.cwiseAbs().mean();
}

/// Worst-case error over all components and steps.
inline double linf_metric(const Mat& e_series) {
    if (e_series.size() < 1) throw contract_error("linf_metric: empty error series");
    return e_series.cwiseAbs().maxCoeff();
}

/// Post-run score sheet: one row per bank member plus the switched observer.
struct MetricTable {
    CaseId cse = CaseId::Case1;
    std::uint64_t seed = 0;
    double dt = 0.0;
    double horizon = 0.0;

    std::vector<std::string> rows;         // observer names, last row "SWO"
    std::vector<bool> available;           // ran for the full horizon
    std::vector<std::string> state_vars;   // column names for mse_table
    std::vector<std::string> output_vars;  // column names for l2/linf tables
    Mat mse_table;                         // rows x n, NaN when unavailable
    Mat l2_table;                          // rows x p
    Mat linf_table;                        // rows x p
    Vec wall_seconds;                      // SWO row = whole-bank time + switching overhead
};

}  // namespace swo
