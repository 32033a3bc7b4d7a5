#pragma once

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "swo/runner.hpp"
#include "swo/types.hpp"

namespace swo {

/// Shortest decimal representation that round-trips to the same double.
inline std::string dtos(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw numeric_error("dtos: conversion failed");
    return std::string(buf, res.ptr);
}

inline double stod_strict(std::string_view s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && s.front() == '+') ++first;  // from_chars rejects a leading '+'
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last)
        throw contract_error("CSV: malformed number '" + std::string(s) + "'");
    return v;
}

namespace detail {

inline std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // fixed '\n' line endings on every platform
    if (!out) throw contract_error("export: cannot open " + path + " for writing");
    return out;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace detail

/// Serializes the score sheet; unavailable entries become null.
inline nlohmann::json metric_table_to_json(const MetricTable& m) {
    auto cell = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return nullptr;
    };
    nlohmann::json j;
    j["case"] = case_name(m.cse);
    j["seed"] = m.seed;
    j["dt"] = m.dt;
    j["horizon_min"] = m.horizon;
    j["state_vars"] = m.state_vars;
    j["output_vars"] = m.output_vars;
    nlohmann::json rows = nlohmann::json::array();
    for (size_t r = 0; r < m.rows.size(); ++r) {
        nlohmann::json row;
        row["observer"] = m.rows[r];
        row["available"] = m.available[r];
        nlohmann::json msej = nlohmann::json::array(), l2j = nlohmann::json::array(),
                       linfj = nlohmann::json::array();
        for (int i = 0; i < m.mse_table.cols(); ++i) msej.push_back(cell(m.mse_table(static_cast<int>(r), i)));
        for (int i = 0; i < m.l2_table.cols(); ++i) {
            l2j.push_back(cell(m.l2_table(static_cast<int>(r), i)));
            linfj.push_back(cell(m.linf_table(static_cast<int>(r), i)));
        }
        row["mse"] = msej;
        row["l2"] = l2j;
        row["linf"] = linfj;
        row["wall_seconds"] = cell(m.wall_seconds[static_cast<int>(r)]);
        rows.push_back(row);
    }
    j["rows"] = rows;
    return j;
}

inline void export_trajectory_csv(const RunResult& r, const std::string& path) {
    auto out = detail::open_out(path);
    const int n = static_cast<int>(r.state_vars.size());
    const int p = static_cast<int>(r.output_vars.size());
    const int M = static_cast<int>(r.traj.t.size());

    out << "t";
    for (const auto& s : r.state_vars) out << ",x." << s;
    for (const auto& s : r.output_vars) out << ",y." << s;
    std::vector<int> obs;
    for (int j = 0; j < kBankSize; ++j) {
        if (!r.ran(j)) continue;
        obs.push_back(j);
        const std::string pfx = detail::lower(observer_name(static_cast<ObserverKind>(j)));
        for (const auto& s : r.state_vars) out << "," << pfx << "." << s;
    }
    for (const auto& s : r.state_vars) out << ",swo." << s;
    out << ",swo.selected\n";

    for (int k = 0; k < M; ++k) {
        out << dtos(r.traj.t[k]);
        for (int i = 0; i < n; ++i) out << ',' << dtos(r.traj.X(i, k));
        for (int i = 0; i < p; ++i) out << ',' << dtos(r.traj.Y_noisy(i, k));
        for (int j : obs)
            for (int i = 0; i < n; ++i) out << ',' << dtos(r.x_hat[static_cast<size_t>(j)](i, k));
        for (int i = 0; i < n; ++i) out << ',' << dtos(r.swo_x(i, k));
        out << ',' << observer_name(static_cast<ObserverKind>(r.log[static_cast<size_t>(k)].selected))
            << '\n';
    }
}

inline void export_switchlog_csv(const RunResult& r, const std::string& path) {
    auto out = detail::open_out(path);
    out << "step";
    for (int j = 0; j < kBankSize; ++j)
        out << ",J." << observer_name(static_cast<ObserverKind>(j));
    out << ",selected\n";
    for (const auto& d : r.log) {
        out << d.step;
        for (int j = 0; j < kBankSize; ++j) out << ',' << dtos(d.cost[j]);
        out << ',' << observer_name(static_cast<ObserverKind>(d.selected)) << '\n';
    }
}

inline void export_metrics_json(const MetricTable& m, const std::string& path) {
    auto out = detail::open_out(path);
    out << metric_table_to_json(m).dump(2) << '\n';
}

inline void export_montecarlo_bands_csv(const MonteCarloResult& mc, const std::string& path) {
    auto out = detail::open_out(path);
    out << "t";
    for (size_t s = 0; s < mc.series.size(); ++s)
        for (const auto& v : mc.vars)
            out << ',' << mc.series[s] << '.' << v << ".p5"
                << ',' << mc.series[s] << '.' << v << ".p50"
                << ',' << mc.series[s] << '.' << v << ".p95";
    out << '\n';
    const int M = static_cast<int>(mc.t.size());
    for (int k = 0; k < M; ++k) {
        out << dtos(mc.t[k]);
        for (size_t s = 0; s < mc.series.size(); ++s)
            for (size_t v = 0; v < mc.vars.size(); ++v)
                out << ',' << dtos(mc.bands[s][v](0, k)) << ',' << dtos(mc.bands[s][v](1, k))
                    << ',' << dtos(mc.bands[s][v](2, k));
        out << '\n';
    }
}

/// Writes trajectory.csv, metrics.json, and switchlog.csv into `dir`.
inline void export_results(const RunResult& r, const std::string& dir) {
    export_trajectory_csv(r, dir + "/trajectory.csv");
    export_metrics_json(r.metrics, dir + "/metrics.json");
    export_switchlog_csv(r, dir + "/switchlog.csv");
}

/// In-memory image of an exported CSV (numbers only in the body except for
/// trailing name columns, which are kept as strings).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> raw_rows;

    int col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        throw contract_error("CSV: no column named '" + name + "'");
    }
    double num(size_t row, int c) const { return stod_strict(raw_rows[row][static_cast<size_t>(c)]); }
};

inline CsvTable import_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw contract_error("import_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw contract_error("import_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = detail::split_csv_line(line);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != t.header.size())
            throw contract_error("import_csv: ragged row in " + path);
        t.raw_rows.push_back(std::move(fields));
    }
    return t;
}

}  // namespace swo
