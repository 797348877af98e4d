// Command-line front end: run, compare, simulate, awd, gradcheck.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime or numeric failure.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "overshoot/overshoot.hpp"

namespace {

using namespace overshoot;

std::string brief(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitRuntime = 2;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> seeds;
    std::string out;
    std::string format = "csv";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_path, "Config file (JSON or key: value lines)");
    cmd->add_option("--seed", o.seed, "Single seed, or first seed when combined with --seeds");
    cmd->add_option("--seeds", o.seeds, "Number of consecutive seeds");
    cmd->add_option("--out", o.out, "Output path (default: stdout)");
    cmd->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

std::string read_config(const std::string& path) {
    if (path.empty()) return {};
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config", "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::uint64_t> resolve_seeds(const CommonOptions& o, const std::vector<std::uint64_t>& fallback) {
    if (o.seeds) {
        if (*o.seeds == 0) throw ConfigError("seeds", "must be >= 1");
        std::vector<std::uint64_t> out;
        for (std::uint64_t k = 0; k < *o.seeds; ++k) out.push_back(o.seed.value_or(0) + k);
        return out;
    }
    if (o.seed) return {*o.seed};
    if (fallback.empty()) throw ConfigError("seeds", "no seeds configured");
    return fallback;
}

int cmd_run(const CommonOptions& o, bool timing) {
    const ExperimentSpec spec = parse_config(read_config(o.config_path));
    const auto seeds = resolve_seeds(o, spec.seeds);
    std::vector<RunReport> runs(seeds.size());
    parallel_for(seeds.size(), [&](std::size_t i) { runs[i] = run_experiment(spec, seeds[i]); });
    emit_report(runs, parse_report_format(o.format), o.out, timing);
    int code = kExitOk;
    for (const auto& r : runs) {
        if (r.failed) {
            std::cerr << "run failed (variant " << r.config.variant_name() << ", seed " << r.seed << "): " << r.failure
                      << '\n';
            code = kExitRuntime;
        }
    }
    return code;
}

int cmd_compare(const CommonOptions& o) {
    const ComparisonSpec cmp = parse_comparison_config(read_config(o.config_path));
    const auto seeds = resolve_seeds(o, cmp.base.seeds);
    const ComparisonReport report = compare(cmp.variants, seeds);
    emit_report(report, parse_report_format(o.format), o.out);
    for (const auto& s : report.summaries) {
        std::cerr << s.name << (s.baseline ? " (baseline)" : "") << ": savings "
                  << (s.mean_savings_pct ? brief(*s.mean_savings_pct) : "n/a") << "% [95% CI "
                  << (s.ci_low ? brief(*s.ci_low) : "n/a") << ", " << (s.ci_high ? brief(*s.ci_high) : "n/a")
                  << "], seeds used " << s.seeds_used << ", omitted " << s.seeds_omitted << '\n';
    }
    for (const auto& c : report.cells) {
        if (c.failed) return kExitRuntime;
    }
    return kExitOk;
}

int cmd_simulate(const CommonOptions& o) {
    SimulationSpec spec = parse_simulation_config(read_config(o.config_path));
    if (o.seed) spec.seed = *o.seed;
    std::vector<SimulationResult> results(spec.mu_grid.size());
    parallel_for(results.size(), [&](std::size_t i) {
        const double mu = spec.mu_grid[i];
        results[i] = {mu, estimate_argmin_gamma(mu, spec, WeightingScheme{WeightingKind::sgd_momentum, mu})};
    });
    std::ostringstream os;
    if (parse_report_format(o.format) == ReportFormat::csv) write_simulation_csv(os, results);
    else os << simulation_to_json(spec, results).dump(2) << '\n';
    write_output(o.out, os.str());
    for (const auto& r : results) {
        std::cerr << "mu=" << brief(r.mu) << " gamma_star=" << brief(r.estimate.gamma_star) << '\n';
    }
    return kExitOk;
}

int cmd_awd(const CommonOptions& o, std::vector<double> gammas) {
    const ExperimentSpec spec = parse_config(read_config(o.config_path));
    const auto seeds = resolve_seeds(o, spec.seeds);
    if (gammas.empty()) {
        for (int g = 0; g <= 15; ++g) gammas.push_back(g);
    }
    const auto rows = awd_sweep(spec, gammas, seeds);
    std::ostringstream os;
    if (parse_report_format(o.format) == ReportFormat::csv) write_awd_sweep_csv(os, rows);
    else os << awd_sweep_to_json(spec, rows).dump(2) << '\n';
    write_output(o.out, os.str());
    for (const auto& r : rows) {
        if (r.failed) return kExitRuntime;
    }
    return kExitOk;
}

int cmd_gradcheck(const CommonOptions& o, std::size_t points, double tolerance, double h) {
    const auto rows = gradcheck_suite(points, o.seed.value_or(0), h);
    std::ostringstream os;
    if (parse_report_format(o.format) == ReportFormat::csv) {
        write_gradcheck_csv(os, rows);
    } else {
        json arr = json::array();
        for (const auto& r : rows) arr.push_back({{"objective", r.objective}, {"point", r.point}, {"rel_error", r.rel_error}});
        os << json{{"format_version", kFormatVersion}, {"h", h}, {"tolerance", tolerance}, {"rows", arr}}.dump(2) << '\n';
    }
    write_output(o.out, os.str());
    int code = kExitOk;
    for (const auto& r : rows) {
        if (!(r.rel_error < tolerance)) {
            std::cerr << "gradcheck failed: " << r.objective << " point " << r.point << " rel_error "
                      << format_real(r.rel_error) << '\n';
            code = kExitRuntime;
        }
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Overshoot optimizer experiments"};
    app.require_subcommand(1);

    CommonOptions run_opts, cmp_opts, sim_opts, awd_opts, grad_opts;
    bool timing = false;
    auto* run = app.add_subcommand("run", "Train one configuration over one or more seeds");
    add_common(run, run_opts);
    run->add_flag("--timing", timing, "Include wall-clock time in JSON output");

    auto* cmp = app.add_subcommand("compare", "Compare variants against a baseline over seeds");
    add_common(cmp, cmp_opts);

    auto* sim = app.add_subcommand("simulate", "Random-gradient SGDO paths: overshoot factor minimizing distance");
    add_common(sim, sim_opts);

    std::vector<double> gammas;
    auto* awd_cmd = app.add_subcommand("awd", "Sweep the overshoot factor and report distance and loss");
    add_common(awd_cmd, awd_opts);
    awd_cmd->add_option("--gammas", gammas, "Overshoot factors (default 0..15)")->delimiter(',');

    std::size_t points = 10;
    double tolerance = 1e-5;
    double h = 1e-5;
    auto* grad = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
    add_common(grad, grad_opts);
    grad->add_option("--points", points, "Random points per objective");
    grad->add_option("--tolerance", tolerance, "Maximum relative error");
    grad->add_option("--fd-step", h, "Finite-difference step");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (*run) return cmd_run(run_opts, timing);
        if (*cmp) return cmd_compare(cmp_opts);
        if (*sim) return cmd_simulate(sim_opts);
        if (*awd_cmd) return cmd_awd(awd_opts, gammas);
        if (*grad) return cmd_gradcheck(grad_opts, points, tolerance, h);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}
