#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <gtest/gtest.h>

#include "overshoot/overshoot.hpp"

using namespace overshoot;

namespace {

ExperimentSpec quadratic_spec(OptimizerKind opt, std::uint64_t steps = 200) {
    ExperimentSpec s;
    s.objective = ObjectiveKind::quadratic;
    s.dim = 10;
    s.optimizer = opt;
    s.lr = 0.01;
    s.steps = steps;
    return s;
}

std::string key_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<none>";
}

std::string csv_of(const std::vector<RunReport>& runs) {
    std::ostringstream os;
    write_runs_csv(os, runs);
    return os.str();
}

struct CliResult {
    int code;
    std::string err;
};

CliResult run_cli(const std::string& args) {
    const auto dir = std::filesystem::temp_directory_path();
    const auto err = dir / "overshoot_harness_stderr.txt";
    const std::string cmd = std::string(OVERSHOOT_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream(path) << content;
    return path.string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

TEST(Config, EmptyGivesDefaults) {
    const ExperimentSpec s = parse_config("");
    EXPECT_EQ(s, ExperimentSpec{});
    EXPECT_EQ(s.lr, 0.001);
    EXPECT_EQ(s.mu, 0.9);
    EXPECT_EQ(s.batch_size, 64u);
    EXPECT_EQ(s.beta1, 0.9);
    EXPECT_EQ(s.beta2, 0.999);
    EXPECT_EQ(s.eps, 1e-8);
    EXPECT_EQ(s.weight_decay, 0.0);
    EXPECT_EQ(s.gamma, 5.0);
    EXPECT_EQ(s.tau, 50u);
    EXPECT_EQ(s.seeds.size(), 10u);
}

TEST(Config, FlatAndJsonFormsAgree) {
    const auto a = parse_config("optimizer: sgdo, mu: 0.95\n# comment\ngamma = 3\nhidden_layers: [16, 8]");
    const auto b = parse_config(R"({"optimizer": "sgdo", "mu": 0.95, "gamma": 3, "hidden_layers": [16, 8]})");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.optimizer, OptimizerKind::sgdo);
    EXPECT_EQ(a.hidden_layers, (std::vector<std::size_t>{16, 8}));
}

TEST(Config, FlatCommentsAndBareLists) {
    const auto a = parse_config("# a, b, c\noptimizer: sgdo  # trailing, with commas\nmetrics: [awd, update_cosine]");
    const auto b = parse_config(R"({"optimizer": "sgdo", "metrics": ["awd", "update_cosine"]})");
    EXPECT_EQ(a, b);
}

TEST(Config, ErrorsNameTheKey) {
    EXPECT_EQ(key_of("gamma: -1"), "gamma");
    EXPECT_EQ(key_of("optimizer: sgdo, mu: 0"), "mu");
    EXPECT_EQ(key_of("bogus: 1"), "bogus");
    EXPECT_EQ(key_of("lr: fast"), "lr");
    EXPECT_EQ(key_of("steps: -3"), "steps");
    EXPECT_EQ(key_of("steps: 2.5"), "steps");
    EXPECT_EQ(key_of("optimizer: lbfgs"), "optimizer");
    EXPECT_EQ(key_of("lr: 0"), "lr");
    EXPECT_EQ(key_of("beta2: 1"), "beta2");
    EXPECT_EQ(key_of("loss: cross_entropy"), "loss");
    EXPECT_EQ(key_of("metrics: [speed]"), "metrics");
    EXPECT_EQ(key_of("lr: 0.1, lr: 0.2"), "lr");
    EXPECT_EQ(key_of("variants: []"), "variants");
    EXPECT_EQ(key_of("optimizer: overshoot_wrap, inner: sgd_cm, mu: 0"), "mu");
    EXPECT_EQ(key_of("optimizer: sgd_cm, mu: 0"), "<none>");
    try {
        parse_config("gamma: -1");
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("gamma"), std::string::npos);
    }
}

TEST(Config, SpecJsonRoundTrip) {
    auto s = parse_config("optimizer: adamo, gamma: 3, tau: 10, metrics: [awd], name: x, seeds: [4, 5]");
    EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
}

TEST(Config, ComparisonVariants) {
    const auto c = parse_comparison_config(R"({"steps": 50, "variants": [
        {"optimizer": "sgd_cm", "baseline": true}, {"optimizer": "sgdo", "gamma": 5}]})");
    ASSERT_EQ(c.variants.size(), 2u);
    EXPECT_EQ(c.variants[1].steps, 50u);
    EXPECT_TRUE(c.variants[0].baseline);
    EXPECT_THROW(parse_comparison_config(R"({"variants": [{"optimizer": "adam"}]})"), ConfigError);
}

TEST(Config, Simulation) {
    const auto s = parse_simulation_config("steps: 1000, mu_grid: [0.5], gamma_grid: [0, 1], window: 10, stride: 10");
    EXPECT_EQ(s.steps, 1000u);
    EXPECT_THROW(parse_simulation_config("steps: 10"), ConfigError);
    EXPECT_THROW(parse_simulation_config("foo: 1"), ConfigError);
}

// ---------------------------------------------------------------------------
// run_experiment

TEST(Run, ZeroSteps) {
    const auto r = run_experiment(quadratic_spec(OptimizerKind::sgd_cm, 0), 1);
    EXPECT_TRUE(r.loss.empty());
    EXPECT_EQ(r.executed_steps, 0u);
    EXPECT_FALSE(r.failed);
    EXPECT_EQ(r.config.steps, 0u);
}

TEST(Run, SeriesLengthEqualsSteps) {
    const auto r = run_experiment(quadratic_spec(OptimizerKind::adam, 123), 1);
    EXPECT_EQ(r.loss.size(), 123u);
    EXPECT_EQ(r.steps.front(), 1u);
    EXPECT_EQ(r.steps.back(), 123u);
}

TEST(Run, SgdoGammaZeroEqualsCm) {
    auto so = quadratic_spec(OptimizerKind::sgdo);
    so.gamma = 0.0;
    const auto a = run_experiment(so, 3);
    const auto b = run_experiment(quadratic_spec(OptimizerKind::sgd_cm), 3);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_EQ(a.base_loss, b.base_loss);
}

TEST(Run, OvershootReportsBaseWeights) {
    auto so = quadratic_spec(OptimizerKind::sgdo, 100);
    auto wrap = so;
    wrap.optimizer = OptimizerKind::overshoot_wrap;
    const auto a = run_experiment(so, 2);
    const auto b = run_experiment(wrap, 2);
    EXPECT_LT(max_abs_diff(a.final_params, b.final_params), 1e-10);
    // The overshoot loss differs from the base loss once overshoot starts.
    EXPECT_NE(a.loss.back(), a.base_loss.back());
    EXPECT_EQ(a.final_loss, a.base_loss.back());
    EXPECT_EQ(a.final_overshoot_loss, a.loss.back());
}

TEST(Run, AllOptimizersOnAllObjectives) {
    for (auto obj : {ObjectiveKind::quadratic, ObjectiveKind::rosenbrock, ObjectiveKind::mlp}) {
        for (auto opt : {OptimizerKind::sgd_cm, OptimizerKind::nag, OptimizerKind::sgd_vanilla, OptimizerKind::sgdo,
                         OptimizerKind::adam, OptimizerKind::nadam, OptimizerKind::adamo, OptimizerKind::overshoot_wrap}) {
            ExperimentSpec s;
            s.objective = obj;
            s.dim = 6;
            s.init_scale = 0.5;
            s.hidden_layers = {8};
            s.n_samples = 64;
            s.optimizer = opt;
            s.lr = obj == ObjectiveKind::rosenbrock ? 1e-4 : 0.01;
            s.steps = 60;
            s.metrics = {"update_cosine", "awd", "lookahead"};
            s.awd_window = 5;
            s.awd_stride = 5;
            const auto r = run_experiment(s, 0);
            EXPECT_FALSE(r.failed) << s.variant_name() << " " << r.failure;
            EXPECT_TRUE(r.metrics.awd) << s.variant_name();
            EXPECT_TRUE(r.metrics.update_cosine_mean);
            EXPECT_TRUE(r.metrics.lookahead);
            EXPECT_LT(r.final_loss, r.base_loss.front()) << s.variant_name();
        }
    }
}

TEST(Run, DivergenceMarksFailure) {
    ExperimentSpec s;
    s.objective = ObjectiveKind::rosenbrock;
    s.lr = 10.0;
    s.steps = 1000;
    const auto r = run_experiment(s, 0);
    EXPECT_TRUE(r.failed);
    EXPECT_FALSE(r.failure.empty());
    EXPECT_LT(r.executed_steps, 1000u);
    EXPECT_TRUE(all_finite(r.final_params));
}

TEST(Run, Deterministic) {
    auto s = quadratic_spec(OptimizerKind::adamo, 150);
    s.metrics = {"awd"};
    const auto a = run_experiment(s, 9);
    const auto b = run_experiment(s, 9);
    EXPECT_EQ(run_report_to_json(a).dump(), run_report_to_json(b).dump());
    EXPECT_NE(run_report_to_json(a).dump(), run_report_to_json(run_experiment(s, 10)).dump());
}

TEST(Run, NagMatchesSgdoAtGammaMu) {
    auto nag = quadratic_spec(OptimizerKind::nag, 300);
    auto so = nag;
    so.optimizer = OptimizerKind::sgdo;
    so.gamma = so.mu;
    const auto a = run_experiment(nag, 4);
    const auto b = run_experiment(so, 4);
    EXPECT_LT(max_abs_diff(a.final_params, b.final_params), 1e-10);
    for (std::size_t k = 0; k < a.loss.size(); ++k) EXPECT_NEAR(a.loss[k], b.loss[k], 1e-10);
}

// ---------------------------------------------------------------------------
// compare

TEST(Compare, SelfComparisonIsZero) {
    auto s = quadratic_spec(OptimizerKind::sgd_cm, 300);
    s.baseline = true;
    s.smooth_window = 20;
    const auto r = compare({s}, {0});
    ASSERT_EQ(r.summaries.size(), 1u);
    EXPECT_EQ(*r.summaries[0].mean_savings_pct, 0.0);
    EXPECT_EQ(*r.summaries[0].ci_low, *r.summaries[0].ci_high);
}

TEST(Compare, IdenticalVariantsStraddleZero) {
    auto s = quadratic_spec(OptimizerKind::sgd_cm, 300);
    s.baseline = true;
    s.smooth_window = 20;
    auto t = s;
    t.baseline = false;
    t.name = "copy";
    const auto r = compare({s, t}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    EXPECT_EQ(*r.summaries[1].mean_savings_pct, 0.0);
    EXPECT_LE(*r.summaries[1].ci_low, 0.0);
    EXPECT_GE(*r.summaries[1].ci_high, 0.0);
    EXPECT_EQ(r.summaries[1].seeds_used, 10u);
}

TEST(Compare, FailedCellsAreFlagged) {
    ExperimentSpec base;
    base.objective = ObjectiveKind::rosenbrock;
    base.lr = 1e-4;
    base.steps = 200;
    base.smooth_window = 10;
    base.baseline = true;
    auto bad = base;
    bad.baseline = false;
    bad.lr = 10.0;
    bad.name = "diverges";
    const auto r = compare({base, bad}, {0, 1});
    EXPECT_TRUE(r.cells[2].failed);
    EXPECT_TRUE(r.cells[3].failed);
    EXPECT_EQ(r.summaries[1].seeds_omitted, 2u);
    EXPECT_FALSE(r.summaries[1].mean_savings_pct);
}

TEST(Compare, RequiresBaseline) {
    EXPECT_THROW(compare({quadratic_spec(OptimizerKind::sgd_cm)}, {0}), ConfigError);
}

TEST(MeanCi, NormalApproximation) {
    const std::vector<double> x{1, 2, 3, 4};
    const auto ci = mean_confidence_interval(x);
    EXPECT_DOUBLE_EQ(ci.mean, 2.5);
    const double sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 3.0);
    EXPECT_NEAR(ci.high - ci.mean, 1.96 * sd / 2.0, 1e-14);
}

// ---------------------------------------------------------------------------
// Reports

TEST(Report, JsonRoundTrip) {
    auto s = quadratic_spec(OptimizerKind::sgdo, 80);
    s.metrics = {"awd", "update_cosine", "lookahead"};
    s.awd_window = 10;
    s.awd_stride = 10;
    const auto r = run_experiment(s, 1);
    const auto back = run_report_from_json(json::parse(run_report_to_json(r).dump()));
    EXPECT_EQ(back.config, r.config);
    EXPECT_EQ(back.loss, r.loss);
    EXPECT_EQ(back.base_loss, r.base_loss);
    EXPECT_EQ(back.final_params, r.final_params);
    EXPECT_EQ(back.metrics, r.metrics);
    EXPECT_EQ(run_report_to_json(back).dump(), run_report_to_json(r).dump());
}

TEST(Report, JsonExcludesTimingUnlessRequested) {
    const auto r = run_experiment(quadratic_spec(OptimizerKind::sgd_cm, 5), 1);
    EXPECT_FALSE(run_report_to_json(r).contains("wall_clock_seconds"));
    EXPECT_TRUE(run_report_to_json(r, true).contains("wall_clock_seconds"));
    EXPECT_EQ(run_report_to_json(r)["format_version"], kFormatVersion);
}

TEST(Report, CsvSchemaAndPrecision) {
    const auto r = run_experiment(quadratic_spec(OptimizerKind::sgd_cm, 7), 2);
    const std::string csv = csv_of({r});
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,loss,base_loss,variant,seed");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++rows;
        std::stringstream ls(line);
        std::string step, loss, base, variant, seed;
        std::getline(ls, step, ',');
        std::getline(ls, loss, ',');
        std::getline(ls, base, ',');
        std::getline(ls, variant, ',');
        std::getline(ls, seed, ',');
        EXPECT_EQ(std::stoul(step), rows);
        EXPECT_EQ(std::stod(loss), r.loss[rows - 1]);
        EXPECT_EQ(variant, "sgd_cm");
        EXPECT_EQ(seed, "2");
    }
    EXPECT_EQ(rows, 7u);
    EXPECT_EQ(format_real(0.1), "0.10000000000000001");
}

TEST(Report, ComparisonCsv) {
    auto s = quadratic_spec(OptimizerKind::sgd_cm, 100);
    s.baseline = true;
    s.smooth_window = 10;
    std::ostringstream os;
    write_comparison_csv(os, compare({s}, {0, 1}));
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "variant,seed,steps_to_target,savings_pct,final_loss");
    const std::string out = os.str();
    EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 3);
}

TEST(Report, UnwritablePathNamesPath) {
    try {
        write_output("/nonexistent-dir/out.csv", "x");
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/out.csv"), std::string::npos);
    }
}

// ---------------------------------------------------------------------------
// Gradient check suite

TEST(Gradcheck, SuitePasses) {
    const auto rows = gradcheck_suite(10, 0);
    EXPECT_EQ(rows.size(), 40u);
    for (const auto& r : rows) EXPECT_LT(r.rel_error, 1e-5) << r.objective << " " << r.point;
}

// ---------------------------------------------------------------------------
// CLI

TEST(Cli, ExitCodes) {
    const auto ok = write_temp("ovs_ok.cfg", "objective: quadratic, dim: 5, steps: 20, lr: 0.01");
    EXPECT_EQ(run_cli("run --config " + ok + " --seed 1").code, 0);

    const auto neg = write_temp("ovs_neg.cfg", "gamma: -1");
    auto r = run_cli("run --config " + neg);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("gamma"), std::string::npos);

    const auto diverge = write_temp("ovs_div.cfg", R"({"objective": "rosenbrock", "lr": 10})");
    EXPECT_EQ(run_cli("run --config " + diverge + " --seed 0").code, 2);

    EXPECT_EQ(run_cli("run --config /nonexistent.cfg").code, 1);
    EXPECT_EQ(run_cli("run --format xml").code, 1);
    EXPECT_EQ(run_cli("frobnicate").code, 1);
}

TEST(Cli, GradcheckSubcommand) { EXPECT_EQ(run_cli("gradcheck --points 3").code, 0); }
