// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "overshoot/overshoot.hpp"

using namespace overshoot;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(double x, const char* spec = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, x);
    return buf;
}

QuadraticObjective noisy_quadratic() { return QuadraticObjective(make_quadratic_spec(50, 10.0, 0.1)); }

ParamVector start_point(std::size_t dim) {
    CounterRng rng(0, Stream::init);
    ParamVector p(dim);
    for (auto& x : p) x = rng.normal();
    return p;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------

Outcome equivalence_suite() {
    const auto obj = noisy_quadratic();
    const double lr = 0.01, mu = 0.9;
    const ParamVector init = start_point(50);
    const std::uint64_t steps = 1000, seed = 1;

    SgdState cm = make_sgd_state(50, {lr, mu, 0.0}), s0 = make_sgd_state(50, {lr, mu, 0.0});
    SgdState nag = make_sgd_state(50, {lr, mu, 0.0}), snag = make_sgd_state(50, {lr, mu, mu});
    SgdState van = make_sgd_state(50, {lr / (1 - mu), 0.0, 0.0}), svan = make_sgd_state(50, {lr, mu, mu / (1 - mu)});
    SgdState s5 = make_sgd_state(50, {lr, mu, 5.0});
    auto wrap = make_overshoot_wrap(init, make_sgd_state(50, {lr, mu, 0.0}));
    ParamVector p_cm = init, p_s0 = init, p_nag = init, p_snag = init, p_van = init, p_svan = init, p_s5 = init;
    double d_a = 0, d_b = 0, d_c = 0, d_d = 0;

    auto advance = [&](ParamVector& p, SgdState& s, bool overshoot, std::uint64_t t) {
        auto r = overshoot ? sgdo_step(p, s, obj.evaluate(p, {seed, t}).grad) : sgd_cm_step(p, s, obj.evaluate(p, {seed, t}).grad);
        p = std::move(r.params);
        s = std::move(r.state);
    };
    for (std::uint64_t t = 1; t <= steps; ++t) {
        advance(p_cm, cm, false, t);
        advance(p_s0, s0, true, t);
        auto rn = nag_step(p_nag, nag, obj, {seed, t});
        p_nag = rn.params, nag = rn.state;
        advance(p_snag, snag, true, t);
        advance(p_van, van, false, t);
        advance(p_svan, svan, true, t);
        advance(p_s5, s5, true, t);
        wrap = overshoot_wrap_step(wrap, obj, NoiseDraw{seed, t}, lr, 5.0, &sgd_cm_step);

        d_a = std::max(d_a, max_abs_diff(p_s0, p_cm));
        d_b = std::max({d_b, max_abs_diff(p_snag, nag_lookahead(p_nag, nag)), max_abs_diff(sgdo_base_recovery(p_snag, snag), p_nag)});
        d_c = std::max(d_c, max_abs_diff(p_svan, p_van));
        d_d = std::max({d_d, max_abs_diff(wrap.overshoot, p_s5), max_abs_diff(wrap.base, sgdo_base_recovery(p_s5, s5))});
    }
    const bool pass = d_a < 1e-12 && d_b < 1e-10 && d_c < 1e-10 && d_d < 1e-10;
    return {pass, "max diffs: cm " + fmt(d_a) + " (<1e-12), nag " + fmt(d_b) + ", vanilla " + fmt(d_c) + ", wrapper " +
                      fmt(d_d) + " (<1e-10)"};
}

Outcome adamo_delay() {
    const auto obj = noisy_quadratic();
    AdamState a = make_adam_state(50, {0.01, 0.9, 0.999, 1e-8, 0.0, 5.0, 50}), o = a;
    ParamVector pa = start_point(50), po = pa;
    double worst = 0.0;
    for (std::uint64_t t = 1; t <= 50; ++t) {
        auto ra = adam_step(pa, a, obj.evaluate(pa, {2, t}).grad);
        auto ro = adamo_step(po, o, obj.evaluate(po, {2, t}).grad);
        pa = ra.params, a = ra.state, po = ro.params, o = ro.state;
        worst = std::max(worst, max_abs_diff(pa, po));
    }
    return {worst < 1e-14, "max diff over t <= 50: " + fmt(worst) + " (<1e-14)"};
}

Outcome adamo_approx() {
    // Small MLP regression task, driven by wrapper(Adam); AdamO receives the
    // same gradient at every step and its update is compared with the
    // wrapper's overshoot-weight update.
    ExperimentSpec s;
    s.hidden_layers = {16, 16};
    s.n_samples = 256;
    s.batch_size = 32;
    const Problem prob = make_problem(s, 0);
    const double lr = 0.001, gamma = 5.0;
    const AdamHyper hyper{lr, 0.9, 0.999, 1e-8, 0.0, 0.0, 50};
    auto wrap = make_overshoot_wrap(prob.init, make_adam_state(prob.init.size(), hyper));
    AdamHyper oh = hyper;
    oh.gamma = gamma;
    AdamState adamo = make_adam_state(prob.init.size(), oh);
    ParamVector po = prob.init;

    std::vector<double> early, late;
    for (std::uint64_t t = 1; t <= 1000; ++t) {
        const ParamVector before = wrap.overshoot;
        const auto g = prob.objective->evaluate(wrap.overshoot, {0, t}).grad;
        wrap = overshoot_wrap_step(wrap, g, lr, gamma, &adam_step);
        auto r = adamo_step(po, adamo, g);
        ParamVector du(g.size()), dw(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
            du[i] = r.params[i] - po[i];
            dw[i] = wrap.overshoot[i] - before[i];
        }
        po = std::move(r.params);
        adamo = std::move(r.state);
        const double rel = distance2(du, dw) / norm2(dw);
        if (t >= 60 && t <= 100) early.push_back(rel);
        if (t >= 500) late.push_back(rel);
    }
    const double me = median(early), ml = median(late);
    return {ml < 5e-2 && ml < me, "median relative update difference: steps 500-1000 " + fmt(ml) +
                                      " (<5e-2), steps 60-100 " + fmt(me)};
}

Outcome gradient_oracle() {
    const auto rows = gradcheck_suite(10, 0, 1e-5);
    double worst = 0.0;
    std::map<std::string, int> count;
    for (const auto& r : rows) {
        worst = std::max(worst, r.rel_error);
        ++count[r.objective];
    }
    bool enough = count.size() == 4;
    for (const auto& [k, n] : count) enough = enough && n >= 10;
    return {enough && worst < 1e-5, std::to_string(rows.size()) + " points over " + std::to_string(count.size()) +
                                        " objectives, worst relative error " + fmt(worst) + " (<1e-5)"};
}

Outcome convergence_direction(const std::string& config_dir) {
    auto load = [&](const std::string& name) {
        std::ifstream in(config_dir + "/" + name);
        if (!in) throw std::runtime_error("missing config " + name);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_comparison_config(ss.str());
    };
    const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::string detail;
    bool pass = true;
    for (const char* name : {"compare_sgd.json", "compare_adam.json"}) {
        const auto cmp = load(name);
        const auto report = compare(cmp.variants, seeds);
        for (const auto& s : report.summaries) {
            if (s.baseline) continue;
            const double mean = s.mean_savings_pct.value_or(-1e9);
            pass = pass && s.seeds_used == seeds.size() && mean > 5.0;
            detail += s.name + " " + fmt(mean, "%.2f") + "% [" + fmt(s.ci_low.value_or(0), "%.2f") + ", " +
                      fmt(s.ci_high.value_or(0), "%.2f") + "] over " + std::to_string(s.seeds_used) + " seeds; ";
        }
    }
    return {pass, detail + "bound > 5%"};
}

Outcome simulation_positivity() {
    SimulationSpec spec;
    const auto e = estimate_argmin_gamma(0.9, spec, {WeightingKind::sgd_momentum, 0.9});
    std::string curve;
    for (const auto& [g, a] : e.awd_curve) curve += fmt(g, "%.1f") + ":" + fmt(a, "%.4g") + " ";
    return {e.gamma_star > 0.0, "mu=0.9 gamma_star=" + fmt(e.gamma_star, "%.1f") + "; curve " + curve};
}

Outcome awd_sanity() {
    const auto obj = noisy_quadratic();
    auto record = [&](double gamma) {
        SgdState s = make_sgd_state(50, {0.01, 0.9, gamma});
        ParamVector p = start_point(50);
        Trajectory traj;
        for (std::uint64_t t = 1; t <= 1000; ++t) {
            auto r = sgdo_step(p, s, obj.evaluate(p, {3, t}).grad);
            p = r.params, s = r.state;
            traj.push({t, 0.0, sgdo_base_recovery(p, s), p, std::nullopt});
        }
        return traj;
    };
    const WeightingScheme w{WeightingKind::sgd_momentum, 0.9};
    const double zero = awd(record(0.0), w, 1, 1);
    const Trajectory t5 = record(5.0);
    ParamVector shift = start_point(50);
    for (auto& x : shift) x *= 3.0;
    const double a = awd(t5, w, 50, 50), b = awd(t5.translated(shift), w, 50, 50);
    return {zero == 0.0 && std::abs(a - b) < 1e-12,
            "gamma=0 window=1 awd " + fmt(zero) + "; translation diff " + fmt(std::abs(a - b)) + " (<1e-12)"};
}

Outcome cosine_positivity() {
    ExperimentSpec s;
    s.objective = ObjectiveKind::quadratic;
    s.optimizer = OptimizerKind::sgd_cm;
    s.mu = 0.9;
    s.lr = 0.01;
    s.steps = 1000;
    s.metrics = {"update_cosine"};
    double sum = 0.0, lo = 1.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const double c = run_experiment(s, seed).metrics.update_cosine_mean.value_or(-1.0);
        sum += c;
        lo = std::min(lo, c);
    }
    const double mean = sum / 10.0;
    return {mean > 0.0, "mean cosine over 10 seeds " + fmt(mean) + " (min per seed " + fmt(lo) + ")"};
}

struct CliResult {
    int code;
    std::string err;
};

CliResult cli(const std::string& args) {
    const auto err = std::filesystem::temp_directory_path() / "overshoot_acceptance_stderr.txt";
    const std::string cmd = std::string(OVERSHOOT_CLI_PATH) + " " + args + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    std::ifstream in(err);
    std::stringstream ss;
    ss << in.rdbuf();
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path temp_file(const std::string& name, const std::string& content = "") {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::ofstream(p) << content;
    return p;
}

Outcome determinism() {
    const auto cfg = temp_file("acc_det.cfg", "optimizer: adamo, hidden_layers: [16, 8], steps: 300, n_samples: 256");
    const auto a = temp_file("acc_det_a.csv"), b = temp_file("acc_det_b.csv");
    const int ca = cli("run --config " + cfg.string() + " --seed 7 --out " + a.string()).code;
    const int cb = cli("run --config " + cfg.string() + " --seed 7 --out " + b.string()).code;
    const std::string sa = slurp(a), sb = slurp(b);
    const bool pass = ca == 0 && cb == 0 && !sa.empty() && sa == sb;
    return {pass, "exit codes " + std::to_string(ca) + "/" + std::to_string(cb) + ", " + std::to_string(sa.size()) +
                      " bytes, identical: " + (sa == sb ? "yes" : "no")};
}

Outcome cli_contract() {
    bool pass = true;
    std::string detail;
    const std::vector<std::pair<std::string, std::string>> invalid{{"gamma: -1", "gamma"},
                                                                   {"optimizer: sgdo, mu: 0", "mu"}};
    for (const auto& [text, key] : invalid) {
        const auto cfg = temp_file("acc_invalid.cfg", text);
        const auto r = cli("run --config " + cfg.string() + " > /dev/null");
        const bool named = r.err.find(key) != std::string::npos;
        pass = pass && r.code == 1 && named;
        detail += "'" + text + "' -> exit " + std::to_string(r.code) + (named ? " naming " + key : " (key missing)") + "; ";
    }
    const auto cfg = temp_file("acc_diverge.cfg", R"({"objective": "rosenbrock", "lr": 10})");
    const auto out = temp_file("acc_diverge.json");
    const auto r = cli("run --config " + cfg.string() + " --seed 0 --format json --out " + out.string());
    bool flagged = false;
    try {
        const json j = json::parse(slurp(out));
        flagged = j.at("runs").at(0).at("failed").get<bool>();
    } catch (const std::exception&) {
    }
    pass = pass && r.code == 2 && flagged;
    detail += "rosenbrock lr=10 -> exit " + std::to_string(r.code) + (flagged ? ", report flagged failed" : ", report not flagged");
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::string config_dir = argc > 1 ? argv[1] : OVERSHOOT_CONFIG_DIR;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 equivalence suite", equivalence_suite},
        {"2 adamo delay", adamo_delay},
        {"3 adamo approximation", adamo_approx},
        {"4 gradient oracle", gradient_oracle},
        {"5 convergence direction", [&] { return convergence_direction(config_dir); }},
        {"6 simulation positivity", simulation_positivity},
        {"7 awd sanity", awd_sanity},
        {"8 cosine positivity", cosine_positivity},
        {"9 determinism", determinism},
        {"10 cli contract", cli_contract},
    };
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto started = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " (" << fmt(secs, "%.1f") << " s): " << o.detail << std::endl;
        if (!o.pass) ++failures;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
