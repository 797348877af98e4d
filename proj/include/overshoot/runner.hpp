#pragma once

// Seeded experiment execution and multi-variant comparison.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "overshoot/config.hpp"
#include "overshoot/metrics.hpp"
#include "overshoot/objectives.hpp"
#include "overshoot/optim.hpp"

namespace overshoot {

// ---------------------------------------------------------------------------
// Problem construction

struct Problem {
    std::shared_ptr<const Objective> objective;
    ParamVector init;
};

inline std::vector<std::size_t> mlp_layer_sizes(const ExperimentSpec& s) {
    std::vector<std::size_t> sizes{s.n_features};
    sizes.insert(sizes.end(), s.hidden_layers.begin(), s.hidden_layers.end());
    sizes.push_back(s.loss == LossKind::mse ? 1 : s.classes);
    return sizes;
}

/// The objective depends only on the spec (dataset from data_seed); the
/// initial parameters depend on the run seed.
inline Problem make_problem(const ExperimentSpec& s, std::uint64_t seed) {
    Problem p;
    switch (s.objective) {
        case ObjectiveKind::quadratic:
            p.objective = std::make_shared<QuadraticObjective>(make_quadratic_spec(s.dim, s.condition_number, s.noise_scale));
            break;
        case ObjectiveKind::rosenbrock:
            p.objective = std::make_shared<RosenbrockObjective>(s.dim, RosenbrockSpec{s.noise_scale});
            break;
        case ObjectiveKind::mlp: {
            DatasetSpec ds{s.dataset, s.n_samples, s.n_features, s.classes, s.data_noise, s.data_seed};
            MlpSpec mlp{mlp_layer_sizes(s), s.activation, s.loss,
                        std::make_shared<const SyntheticDataset>(make_synthetic_dataset(ds)), s.batch_size};
            p.init = mlp_init(mlp.layer_sizes, seed, s.init_scale);
            p.objective = std::make_shared<MlpObjective>(std::move(mlp));
            return p;
        }
    }
    CounterRng rng(seed, Stream::init);
    p.init.resize(p.objective->dimension());
    for (auto& x : p.init) x = s.init_scale * rng.normal();
    return p;
}

// ---------------------------------------------------------------------------
// Optimizer drivers: uniform interface over the step functions.

class Driver {
public:
    virtual ~Driver() = default;
    /// Point where the next gradient is evaluated.
    virtual ParamVector eval_point() const = 0;
    /// Base weights for the current state.
    virtual ParamVector base() const = 0;
    /// Weights the optimizer tracks (overshoot weights for overshoot variants).
    virtual const ParamVector& tracked() const = 0;
    virtual void apply(std::span<const double> grad) = 0;
};

namespace detail {

class SgdDriver final : public Driver {
public:
    SgdDriver(OptimizerKind kind, ParamVector init, SgdHyper hyper)
        : kind_(kind), params_(std::move(init)), state_(make_sgd_state(params_.size(), hyper)) {}

    ParamVector eval_point() const override {
        return kind_ == OptimizerKind::nag ? nag_lookahead(params_, state_) : params_;
    }
    ParamVector base() const override {
        return kind_ == OptimizerKind::sgdo ? sgdo_base_recovery(params_, state_) : params_;
    }
    const ParamVector& tracked() const override { return params_; }
    void apply(std::span<const double> grad) override {
        auto next = kind_ == OptimizerKind::sgdo ? sgdo_step(params_, state_, grad) : sgd_cm_step(params_, state_, grad);
        params_ = std::move(next.params);
        state_ = std::move(next.state);
    }

private:
    OptimizerKind kind_;
    ParamVector params_;
    SgdState state_;
};

class AdamDriver final : public Driver {
public:
    AdamDriver(OptimizerKind kind, ParamVector init, AdamHyper hyper)
        : kind_(kind), params_(std::move(init)), state_(make_adam_state(params_.size(), hyper)) {}

    ParamVector eval_point() const override { return params_; }
    ParamVector base() const override {
        return kind_ == OptimizerKind::adamo ? adamo_base_recovery(params_, state_) : params_;
    }
    const ParamVector& tracked() const override { return params_; }
    void apply(std::span<const double> grad) override {
        auto next = kind_ == OptimizerKind::adamo   ? adamo_step(params_, state_, grad)
                    : kind_ == OptimizerKind::nadam ? nadam_step(params_, state_, grad)
                                                    : adam_step(params_, state_, grad);
        params_ = std::move(next.params);
        state_ = std::move(next.state);
    }

private:
    OptimizerKind kind_;
    ParamVector params_;
    AdamState state_;
};

template <class State, class Step>
class WrapDriver final : public Driver {
public:
    WrapDriver(ParamVector init, State inner, double lr, double gamma, Step step)
        : wrap_(make_overshoot_wrap(std::move(init), inner)), lr_(lr), gamma_(gamma), step_(step) {}

    ParamVector eval_point() const override { return wrap_.overshoot; }
    ParamVector base() const override { return wrap_.base; }
    const ParamVector& tracked() const override { return wrap_.overshoot; }
    void apply(std::span<const double> grad) override { wrap_ = overshoot_wrap_step(wrap_, grad, lr_, gamma_, step_); }

private:
    WrapState<State> wrap_;
    double lr_;
    double gamma_;
    Step step_;
};

}  // namespace detail

inline std::unique_ptr<Driver> make_driver(const ExperimentSpec& s, ParamVector init) {
    const AdamHyper adam{s.lr, s.beta1, s.beta2, s.eps, s.weight_decay, s.gamma, s.tau};
    switch (s.optimizer) {
        case OptimizerKind::sgd_cm:
        case OptimizerKind::nag:
            return std::make_unique<detail::SgdDriver>(s.optimizer, std::move(init), SgdHyper{s.lr, s.mu, 0.0});
        case OptimizerKind::sgd_vanilla:
            return std::make_unique<detail::SgdDriver>(s.optimizer, std::move(init), SgdHyper{s.lr, 0.0, 0.0});
        case OptimizerKind::sgdo:
            return std::make_unique<detail::SgdDriver>(s.optimizer, std::move(init), SgdHyper{s.lr, s.mu, s.gamma});
        case OptimizerKind::adam:
        case OptimizerKind::nadam:
        case OptimizerKind::adamo:
            return std::make_unique<detail::AdamDriver>(s.optimizer, std::move(init), adam);
        case OptimizerKind::overshoot_wrap: {
            const std::size_t dim = init.size();
            if (s.inner == InnerKind::sgd_cm) {
                using Step = decltype(&sgd_cm_step);
                return std::make_unique<detail::WrapDriver<SgdState, Step>>(
                    std::move(init), make_sgd_state(dim, SgdHyper{s.lr, s.mu, 0.0}), s.lr, s.gamma, &sgd_cm_step);
            }
            using Step = decltype(&adam_step);
            AdamHyper inner = adam;
            inner.gamma = 0.0;
            return std::make_unique<detail::WrapDriver<AdamState, Step>>(std::move(init), make_adam_state(dim, inner),
                                                                         s.lr, s.gamma, &adam_step);
        }
    }
    throw ConfigError("optimizer", "unsupported optimizer");
}

inline WeightingScheme weighting_for(const ExperimentSpec& s) {
    return s.is_adam_family() ? WeightingScheme{WeightingKind::adam_momentum, s.beta1}
                              : WeightingScheme{WeightingKind::sgd_momentum, s.mu};
}

// ---------------------------------------------------------------------------
// Single run

struct LookaheadResult {
    double lhs = 0.0;
    double rhs = 0.0;
    friend bool operator==(const LookaheadResult&, const LookaheadResult&) = default;
};

struct RunMetrics {
    std::optional<double> awd;
    std::optional<double> update_cosine_mean;
    std::optional<LookaheadResult> lookahead;
    friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct RunReport {
    int format_version = kFormatVersion;
    ExperimentSpec config;
    std::uint64_t seed = 0;
    std::uint64_t executed_steps = 0;
    bool failed = false;
    std::string failure;

    std::vector<std::uint64_t> steps;  // step index of each series entry
    std::vector<double> loss;          // at the gradient evaluation point
    std::vector<double> base_loss;     // at the base weights, same draw

    double final_loss = std::numeric_limits<double>::quiet_NaN();            // last base_loss
    double final_overshoot_loss = std::numeric_limits<double>::quiet_NaN();  // last loss
    ParamVector final_params;  // base weights after the last accepted step
    RunMetrics metrics;
    double wall_clock_seconds = 0.0;  // not serialized unless requested
};

/// Trains spec on its objective with the given seed. Entry k of the loss
/// series is the minibatch loss observed during step k + 1 (draw {seed, k+1}),
/// recorded at multiples of snapshot_stride. Numeric failures mark the report
/// as failed and stop the run; they are not rethrown.
inline RunReport run_experiment(const ExperimentSpec& spec, std::uint64_t seed) {
    validate(spec);
    const auto started = std::chrono::steady_clock::now();
    RunReport report;
    report.config = spec;
    report.seed = seed;

    const Problem problem = make_problem(spec, seed);
    const Objective& objective = *problem.objective;
    auto driver = make_driver(spec, problem.init);

    const bool rec_update = spec.wants("update_cosine") || spec.wants("lookahead");
    const bool rec_base_every = spec.wants("lookahead");
    const bool rec_awd = spec.wants("awd");
    const bool recording = rec_update || rec_awd;
    Trajectory traj(spec.snapshot_stride);

    ParamVector base_before = driver->base();
    try {
        for (std::uint64_t t = 1; t <= spec.steps; ++t) {
            const NoiseDraw draw{seed, t};
            const ParamVector at = driver->eval_point();
            const Evaluation ev = objective.evaluate(at, draw);
            if (!std::isfinite(ev.loss)) throw NumericError("non-finite loss at step " + std::to_string(t));

            if (t % spec.snapshot_stride == 0) {
                const double base_loss = base_before == at ? ev.loss : objective.loss(base_before, draw);
                if (!std::isfinite(base_loss)) throw NumericError("non-finite base loss at step " + std::to_string(t));
                report.steps.push_back(t);
                report.loss.push_back(ev.loss);
                report.base_loss.push_back(base_loss);
            }

            driver->apply(ev.grad);
            ++report.executed_steps;
            ParamVector base_after = driver->base();

            if (recording) {
                TrajectoryRecord rec;
                rec.t = t;
                rec.loss = ev.loss;
                if (rec_update) {
                    ParamVector u(base_after.size());
                    for (std::size_t i = 0; i < u.size(); ++i) u[i] = base_after[i] - base_before[i];
                    rec.update = std::move(u);
                }
                if (rec_base_every || (rec_awd && t % spec.awd_stride == 0)) rec.base = base_after;
                if (rec_awd) rec.overshoot = driver->tracked();
                traj.push(std::move(rec));
            }
            base_before = std::move(base_after);
        }
    } catch (const NumericError& e) {
        report.failed = true;
        report.failure = e.what();
    }

    if (!report.loss.empty()) {
        report.final_loss = report.base_loss.back();
        report.final_overshoot_loss = report.loss.back();
    }
    report.final_params = base_before;

    // Metrics on a truncated (failed) trajectory may lack the required history.
    auto guarded = [](auto fn) -> decltype(std::optional{fn()}) {
        try {
            return fn();
        } catch (const std::invalid_argument&) {
            return std::nullopt;
        }
    };
    if (spec.wants("awd")) {
        report.metrics.awd = guarded([&] { return awd(traj, weighting_for(spec), spec.awd_window, spec.awd_stride); });
    }
    if (spec.wants("update_cosine")) report.metrics.update_cosine_mean = mean_defined(update_cosine_series(traj));
    if (spec.wants("lookahead")) {
        report.metrics.lookahead = guarded([&] {
            const auto r = lookahead_distance_check(traj, spec.lookahead_s);
            return LookaheadResult{r.lhs, r.rhs};
        });
    }
    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// ---------------------------------------------------------------------------
// Parallel helpers

/// Runs fn(i) for i in [0, n) on up to hardware_concurrency threads. Results
/// are written by index, so output order does not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers = std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        }
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// ---------------------------------------------------------------------------
// Comparison

struct ComparisonCell {
    std::string variant;
    std::uint64_t seed = 0;
    bool failed = false;
    std::optional<std::size_t> steps_to_target;  // nullopt: never reached (or no data)
    std::optional<double> savings_pct;
    double final_loss = std::numeric_limits<double>::quiet_NaN();
};

struct VariantSummary {
    std::string name;
    bool baseline = false;
    std::vector<double> mean_loss_curve;  // mean base loss over surviving seeds
    std::optional<double> mean_steps_to_target;
    std::optional<double> mean_savings_pct;
    std::optional<double> ci_low;
    std::optional<double> ci_high;
    std::size_t seeds_used = 0;
    std::size_t seeds_omitted = 0;  // failed cells or undefined savings
};

struct ComparisonReport {
    int format_version = kFormatVersion;
    std::vector<ExperimentSpec> variants;
    std::vector<std::uint64_t> seeds;
    std::size_t baseline_index = 0;
    double fraction = 0.95;
    std::size_t smooth_window = 400;
    std::vector<ComparisonCell> cells;  // variant-major, then seed order
    std::vector<VariantSummary> summaries;
    std::vector<RunReport> runs;  // same order as cells
};

struct MeanCi {
    double mean = 0.0;
    double low = 0.0;
    double high = 0.0;
};

/// Mean with a normal-approximation 95% interval (1.96 standard errors).
inline MeanCi mean_confidence_interval(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("mean_confidence_interval: empty sample");
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    if (xs.size() == 1) return {mean, mean, mean};
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    const double half = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
    return {mean, mean - half, mean + half};
}

/// Runs every (variant, seed) cell and measures steps-to-target of each
/// variant against the first baseline-flagged variant on the same seed. The
/// fraction and smoothing window come from the baseline's spec.
inline ComparisonReport compare(const std::vector<ExperimentSpec>& variants, const std::vector<std::uint64_t>& seeds) {
    if (variants.empty()) throw ConfigError("variants", "no variants to compare");
    if (seeds.empty()) throw ConfigError("seeds", "no seeds");
    const auto it = std::find_if(variants.begin(), variants.end(), [](const auto& v) { return v.baseline; });
    if (it == variants.end()) throw ConfigError("baseline", "no variant is flagged as baseline");
    for (const auto& v : variants) validate(v);

    ComparisonReport out;
    out.variants = variants;
    out.seeds = seeds;
    out.baseline_index = static_cast<std::size_t>(it - variants.begin());
    out.fraction = it->fraction;
    out.smooth_window = it->smooth_window;

    const std::size_t nv = variants.size(), ns = seeds.size();
    out.runs.resize(nv * ns);
    parallel_for(nv * ns, [&](std::size_t i) { out.runs[i] = run_experiment(variants[i / ns], seeds[i % ns]); });

    for (std::size_t v = 0; v < nv; ++v) {
        VariantSummary summary;
        summary.name = variants[v].variant_name();
        summary.baseline = v == out.baseline_index;
        std::vector<double> savings, steps;
        std::vector<const RunReport*> surviving;
        for (std::size_t k = 0; k < ns; ++k) {
            const RunReport& run = out.runs[v * ns + k];
            const RunReport& base = out.runs[out.baseline_index * ns + k];
            ComparisonCell cell;
            cell.variant = summary.name;
            cell.seed = seeds[k];
            cell.failed = run.failed;
            cell.final_loss = run.final_loss;
            if (!run.failed && !base.failed && !run.base_loss.empty() && !base.base_loss.empty()) {
                const auto st = steps_to_fraction(run.base_loss, base.base_loss, out.fraction, out.smooth_window);
                cell.steps_to_target = st.candidate;
                if (st.candidate && st.baseline) {
                    cell.savings_pct = savings_percentage(*st.candidate, *st.baseline);
                }
            }
            if (!run.failed) surviving.push_back(&run);
            if (cell.savings_pct) {
                savings.push_back(*cell.savings_pct);
                steps.push_back(static_cast<double>(*cell.steps_to_target));
            } else {
                ++summary.seeds_omitted;
            }
            out.cells.push_back(std::move(cell));
        }
        summary.seeds_used = savings.size();
        if (!savings.empty()) {
            const MeanCi ci = mean_confidence_interval(savings);
            summary.mean_savings_pct = ci.mean;
            summary.ci_low = ci.low;
            summary.ci_high = ci.high;
            summary.mean_steps_to_target = mean_confidence_interval(steps).mean;
        }
        if (!surviving.empty()) {
            std::size_t len = std::numeric_limits<std::size_t>::max();
            for (const auto* r : surviving) len = std::min(len, r->base_loss.size());
            summary.mean_loss_curve.assign(len, 0.0);
            for (const auto* r : surviving) {
                for (std::size_t i = 0; i < len; ++i) summary.mean_loss_curve[i] += r->base_loss[i];
            }
            for (auto& x : summary.mean_loss_curve) x /= static_cast<double>(surviving.size());
        }
        out.summaries.push_back(std::move(summary));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Overshoot-factor sweep with distance and loss

struct AwdSweepRow {
    double gamma = 0.0;
    std::uint64_t seed = 0;
    bool failed = false;
    std::optional<double> awd;
    double loss_auc = std::numeric_limits<double>::quiet_NaN();  // mean base loss over the run
};

inline std::vector<AwdSweepRow> awd_sweep(ExperimentSpec spec, const std::vector<double>& gammas,
                                          const std::vector<std::uint64_t>& seeds) {
    if (!spec.is_overshoot()) throw ConfigError("optimizer", "awd sweep needs sgdo, adamo or overshoot_wrap");
    if (!spec.wants("awd")) spec.metrics.push_back("awd");
    std::vector<ExperimentSpec> cells;
    for (double g : gammas) {
        ExperimentSpec s = spec;
        s.gamma = g;
        validate(s);
        cells.push_back(std::move(s));
    }
    std::vector<AwdSweepRow> rows(cells.size() * seeds.size());
    parallel_for(rows.size(), [&](std::size_t i) {
        const auto& s = cells[i / seeds.size()];
        const RunReport r = run_experiment(s, seeds[i % seeds.size()]);
        AwdSweepRow row{s.gamma, r.seed, r.failed, r.metrics.awd};
        if (!r.base_loss.empty()) {
            double sum = 0.0;
            for (double x : r.base_loss) sum += x;
            row.loss_auc = sum / static_cast<double>(r.base_loss.size());
        }
        rows[i] = row;
    });
    return rows;
}

// ---------------------------------------------------------------------------
// Finite-difference suite

struct GradcheckRow {
    std::string objective;
    std::size_t point = 0;
    double rel_error = 0.0;
};

/// Named objectives used by the gradient check, each with a sampler of
/// random evaluation points.
struct GradcheckCase {
    std::string name;
    std::shared_ptr<const Objective> objective;
    std::function<ParamVector(CounterRng&)> sample;
};

inline std::vector<GradcheckCase> gradcheck_cases() {
    std::vector<GradcheckCase> cases;
    auto normal_point = [](std::size_t dim, double scale) {
        return [dim, scale](CounterRng& rng) {
            ParamVector p(dim);
            for (auto& x : p) x = scale * rng.normal();
            return p;
        };
    };
    cases.push_back({"quadratic", std::make_shared<QuadraticObjective>(make_quadratic_spec(10, 10.0, 0.1)),
                     normal_point(10, 1.0)});
    cases.push_back({"rosenbrock", std::make_shared<RosenbrockObjective>(6, RosenbrockSpec{0.1}), normal_point(6, 1.0)});

    auto mlp_case = [&](const std::string& name, DatasetKind kind, LossKind loss, std::size_t out) {
        DatasetSpec ds{kind, 64, 4, 3, 0.5, 7};
        MlpSpec spec{{4, 8, 6, out}, Activation::tanh, loss,
                     std::make_shared<const SyntheticDataset>(make_synthetic_dataset(ds)), 16};
        const std::size_t dim = mlp_parameter_count(spec.layer_sizes);
        // Inputs of the blobs dataset are O(10); smaller weights keep tanh out of saturation.
        const double scale = kind == DatasetKind::blobs ? 0.1 : 0.5;
        cases.push_back({name, std::make_shared<MlpObjective>(spec), normal_point(dim, scale)});
    };
    mlp_case("mlp_mse", DatasetKind::regression, LossKind::mse, 1);
    mlp_case("mlp_cross_entropy", DatasetKind::blobs, LossKind::cross_entropy, 3);
    return cases;
}

inline std::vector<GradcheckRow> gradcheck_suite(std::size_t points, std::uint64_t seed, double h = 1e-5) {
    std::vector<GradcheckRow> rows;
    const auto cases = gradcheck_cases();
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        const auto& c = cases[ci];
        CounterRng rng(seed, Stream::gradcheck, ci);
        for (std::size_t k = 0; k < points; ++k) {
            const ParamVector p = c.sample(rng);
            const NoiseDraw draw{seed, k + 1};
            const Evaluation ev = c.objective->evaluate(p, draw);
            const ParamVector fd = finite_diff_grad(*c.objective, p, draw, h);
            rows.push_back({c.name, k, relative_error(ev.grad, fd)});
        }
    }
    return rows;
}

}  // namespace overshoot
