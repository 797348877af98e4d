#pragma once

// Report serialization.
//
// CSV run schema:        step,loss,base_loss,variant,seed
// CSV comparison schema: variant,seed,steps_to_target,savings_pct,final_loss
// CSV simulation schema: mu,gamma,awd
// CSV awd sweep schema:  gamma,seed,awd,loss_auc,failed
// Reals are written with 17 significant digits; JSON uses the shortest
// round-trip representation. Wall-clock time is only written on request so
// that repeated runs produce byte-identical files.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "overshoot/config.hpp"
#include "overshoot/runner.hpp"
#include "overshoot/simulate.hpp"

namespace overshoot {

enum class ReportFormat { csv, json };

inline ReportFormat parse_report_format(const std::string& s) {
    if (s == "csv") return ReportFormat::csv;
    if (s == "json") return ReportFormat::json;
    throw ConfigError("format", "expected csv or json, got '" + s + "'");
}

inline std::string format_real(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

inline json real_to_json(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
inline double real_from_json(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
template <class T>
json optional_to_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}
template <class T>
std::optional<T> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RunReport

inline json run_report_to_json(const RunReport& r, bool include_timing = false) {
    json metrics = json::object();
    metrics["awd"] = detail::optional_to_json(r.metrics.awd);
    metrics["update_cosine_mean"] = detail::optional_to_json(r.metrics.update_cosine_mean);
    metrics["lookahead"] = r.metrics.lookahead ? json{{"lhs", r.metrics.lookahead->lhs}, {"rhs", r.metrics.lookahead->rhs}}
                                               : json(nullptr);
    json j{{"format_version", r.format_version},
           {"variant", r.config.variant_name()},
           {"config", spec_to_json(r.config)},
           {"seed", r.seed},
           {"executed_steps", r.executed_steps},
           {"failed", r.failed},
           {"failure", r.failure},
           {"steps", r.steps},
           {"loss", r.loss},
           {"base_loss", r.base_loss},
           {"final_loss", detail::real_to_json(r.final_loss)},
           {"final_overshoot_loss", detail::real_to_json(r.final_overshoot_loss)},
           {"final_params", r.final_params},
           {"metrics", metrics}};
    if (include_timing) j["wall_clock_seconds"] = r.wall_clock_seconds;
    return j;
}

inline RunReport run_report_from_json(const json& j) {
    RunReport r;
    r.format_version = j.at("format_version").get<int>();
    if (r.format_version != kFormatVersion) {
        throw std::runtime_error("unsupported report format version " + std::to_string(r.format_version));
    }
    // The echo is complete, so defaults never leak in; seeds etc. are validated again.
    r.config = spec_from_json(j.at("config"));
    r.seed = j.at("seed").get<std::uint64_t>();
    r.executed_steps = j.at("executed_steps").get<std::uint64_t>();
    r.failed = j.at("failed").get<bool>();
    r.failure = j.at("failure").get<std::string>();
    r.steps = j.at("steps").get<std::vector<std::uint64_t>>();
    r.loss = j.at("loss").get<std::vector<double>>();
    r.base_loss = j.at("base_loss").get<std::vector<double>>();
    r.final_loss = detail::real_from_json(j.at("final_loss"));
    r.final_overshoot_loss = detail::real_from_json(j.at("final_overshoot_loss"));
    r.final_params = j.at("final_params").get<ParamVector>();
    const json& m = j.at("metrics");
    r.metrics.awd = detail::optional_from_json<double>(m.at("awd"));
    r.metrics.update_cosine_mean = detail::optional_from_json<double>(m.at("update_cosine_mean"));
    if (!m.at("lookahead").is_null()) {
        r.metrics.lookahead = LookaheadResult{m["lookahead"].at("lhs").get<double>(), m["lookahead"].at("rhs").get<double>()};
    }
    if (j.contains("wall_clock_seconds")) r.wall_clock_seconds = j["wall_clock_seconds"].get<double>();
    return r;
}

inline void write_runs_csv(std::ostream& os, const std::vector<RunReport>& runs) {
    os << "step,loss,base_loss,variant,seed\n";
    for (const auto& r : runs) {
        const std::string variant = r.config.variant_name();
        for (std::size_t k = 0; k < r.loss.size(); ++k) {
            os << r.steps[k] << ',' << format_real(r.loss[k]) << ',' << format_real(r.base_loss[k]) << ',' << variant
               << ',' << r.seed << '\n';
        }
    }
}

inline void write_runs_json(std::ostream& os, const std::vector<RunReport>& runs, bool include_timing = false) {
    json arr = json::array();
    for (const auto& r : runs) arr.push_back(run_report_to_json(r, include_timing));
    os << json{{"format_version", kFormatVersion}, {"runs", arr}}.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// ComparisonReport

inline json comparison_to_json(const ComparisonReport& c) {
    json variants = json::array();
    for (const auto& v : c.variants) variants.push_back(spec_to_json(v));
    json cells = json::array();
    for (const auto& cell : c.cells) {
        cells.push_back({{"variant", cell.variant},
                         {"seed", cell.seed},
                         {"failed", cell.failed},
                         {"steps_to_target", detail::optional_to_json(cell.steps_to_target)},
                         {"savings_pct", detail::optional_to_json(cell.savings_pct)},
                         {"final_loss", detail::real_to_json(cell.final_loss)}});
    }
    json summaries = json::array();
    for (const auto& s : c.summaries) {
        summaries.push_back({{"name", s.name},
                             {"baseline", s.baseline},
                             {"mean_steps_to_target", detail::optional_to_json(s.mean_steps_to_target)},
                             {"mean_savings_pct", detail::optional_to_json(s.mean_savings_pct)},
                             {"ci95_low", detail::optional_to_json(s.ci_low)},
                             {"ci95_high", detail::optional_to_json(s.ci_high)},
                             {"seeds_used", s.seeds_used},
                             {"seeds_omitted", s.seeds_omitted},
                             {"mean_loss_curve", s.mean_loss_curve}});
    }
    return json{{"format_version", c.format_version},
                {"seeds", c.seeds},
                {"baseline", c.variants.at(c.baseline_index).variant_name()},
                {"fraction", c.fraction},
                {"smooth_window", c.smooth_window},
                {"variants", variants},
                {"cells", cells},
                {"summaries", summaries}};
}

inline void write_comparison_csv(std::ostream& os, const ComparisonReport& c) {
    os << "variant,seed,steps_to_target,savings_pct,final_loss\n";
    for (const auto& cell : c.cells) {
        os << cell.variant << ',' << cell.seed << ','
           << (cell.steps_to_target ? std::to_string(*cell.steps_to_target) : std::string("never")) << ','
           << (cell.savings_pct ? format_real(*cell.savings_pct) : std::string("nan")) << ','
           << format_real(cell.final_loss) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Simulation and sweeps

struct SimulationResult {
    double mu = 0.0;
    GammaEstimate estimate;
};

inline void write_simulation_csv(std::ostream& os, const std::vector<SimulationResult>& results) {
    os << "mu,gamma,awd\n";
    for (const auto& r : results) {
        for (const auto& [g, a] : r.estimate.awd_curve) os << format_real(r.mu) << ',' << format_real(g) << ',' << format_real(a) << '\n';
    }
}

inline json simulation_to_json(const SimulationSpec& spec, const std::vector<SimulationResult>& results) {
    json arr = json::array();
    for (const auto& r : results) {
        json curve = json::array();
        for (const auto& [g, a] : r.estimate.awd_curve) curve.push_back({g, a});
        arr.push_back({{"mu", r.mu}, {"gamma_star", r.estimate.gamma_star}, {"awd_curve", curve}});
    }
    return json{{"format_version", kFormatVersion}, {"spec", simulation_spec_to_json(spec)}, {"results", arr}};
}

inline void write_awd_sweep_csv(std::ostream& os, const std::vector<AwdSweepRow>& rows) {
    os << "gamma,seed,awd,loss_auc,failed\n";
    for (const auto& r : rows) {
        os << format_real(r.gamma) << ',' << r.seed << ',' << (r.awd ? format_real(*r.awd) : std::string("nan")) << ','
           << format_real(r.loss_auc) << ',' << (r.failed ? 1 : 0) << '\n';
    }
}

inline json awd_sweep_to_json(const ExperimentSpec& spec, const std::vector<AwdSweepRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        arr.push_back({{"gamma", r.gamma},
                       {"seed", r.seed},
                       {"awd", detail::optional_to_json(r.awd)},
                       {"loss_auc", detail::real_to_json(r.loss_auc)},
                       {"failed", r.failed}});
    }
    return json{{"format_version", kFormatVersion}, {"config", spec_to_json(spec)}, {"rows", arr}};
}

inline void write_gradcheck_csv(std::ostream& os, const std::vector<GradcheckRow>& rows) {
    os << "objective,point,rel_error\n";
    for (const auto& r : rows) os << r.objective << ',' << r.point << ',' << format_real(r.rel_error) << '\n';
}

// ---------------------------------------------------------------------------
// Output

/// Writes `content` to path, or stdout when path is empty or "-".
inline void write_output(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
    out << content;
    out.close();
    if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline void emit_report(const std::vector<RunReport>& runs, ReportFormat format, const std::string& path,
                        bool include_timing = false) {
    std::ostringstream os;
    if (format == ReportFormat::csv) write_runs_csv(os, runs);
    else write_runs_json(os, runs, include_timing);
    write_output(path, os.str());
}

inline void emit_report(const ComparisonReport& report, ReportFormat format, const std::string& path) {
    std::ostringstream os;
    if (format == ReportFormat::csv) write_comparison_csv(os, report);
    else os << comparison_to_json(report).dump(2) << '\n';
    write_output(path, os.str());
}

}  // namespace overshoot
