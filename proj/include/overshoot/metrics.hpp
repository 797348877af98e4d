#pragma once

// Diagnostics over recorded trajectories and loss series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overshoot/params.hpp"

namespace overshoot {

// ---------------------------------------------------------------------------
// Trajectory

struct TrajectoryRecord {
    std::uint64_t t = 0;  // step after which the record was taken
    double loss = 0.0;
    std::optional<ParamVector> base;       // theta_t
    std::optional<ParamVector> overshoot;  // theta'_t
    std::optional<ParamVector> update;     // theta_t - theta_{t-1}
};

class Trajectory {
public:
    Trajectory() = default;
    explicit Trajectory(std::uint64_t snapshot_stride) : snapshot_stride_(snapshot_stride) {}

    /// Appends a record; t must be strictly increasing.
    void push(TrajectoryRecord record) {
        if (!records_.empty() && record.t <= records_.back().t) {
            throw std::invalid_argument("Trajectory::push: step indices must be strictly increasing");
        }
        records_.push_back(std::move(record));
    }

    const std::vector<TrajectoryRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::uint64_t snapshot_stride() const noexcept { return snapshot_stride_; }

    const TrajectoryRecord* find(std::uint64_t t) const {
        auto it = std::lower_bound(records_.begin(), records_.end(), t,
                                   [](const TrajectoryRecord& r, std::uint64_t key) { return r.t < key; });
        return it != records_.end() && it->t == t ? &*it : nullptr;
    }

    /// Returns a copy with `shift` added to every base and overshoot snapshot.
    Trajectory translated(std::span<const double> shift) const {
        Trajectory out(snapshot_stride_);
        for (TrajectoryRecord r : records_) {
            for (auto* snap : {&r.base, &r.overshoot}) {
                if (!*snap) continue;
                require_same_size(**snap, shift, "Trajectory::translated");
                for (std::size_t i = 0; i < shift.size(); ++i) (**snap)[i] += shift[i];
            }
            out.push(std::move(r));
        }
        return out;
    }

private:
    std::vector<TrajectoryRecord> records_;
    std::uint64_t snapshot_stride_ = 1;
};

// ---------------------------------------------------------------------------
// Average weighted distance

enum class WeightingKind { sgd_momentum, adam_momentum };

/// Weight of a gradient `lag` steps old: mu^lag (SGD) or (1 - beta1) beta1^lag (Adam).
struct WeightingScheme {
    WeightingKind kind = WeightingKind::sgd_momentum;
    double coefficient = 0.9;

    double weight(std::uint64_t lag) const {
        const double decay = std::pow(coefficient, static_cast<double>(lag));
        return kind == WeightingKind::sgd_momentum ? decay : (1.0 - coefficient) * decay;
    }

    double weight(std::uint64_t i, std::uint64_t j) const {
        if (j > i) throw std::invalid_argument("WeightingScheme::weight: requires j <= i");
        return weight(i - j);
    }

    void validate() const {
        if (!(coefficient > 0.0 && coefficient < 1.0)) {
            throw std::invalid_argument("WeightingScheme: coefficient must be in (0, 1)");
        }
    }
};

/// Fraction of the total (infinite-horizon) weight mass carried by the
/// most recent `window` lags. Equals 1 - c^window for both schemes.
inline double weight_coverage(const WeightingScheme& w, std::uint64_t window) {
    w.validate();
    double covered = 0.0;
    for (std::uint64_t k = 0; k < window; ++k) covered += w.weight(k);
    const double total = w.kind == WeightingKind::sgd_momentum ? 1.0 / (1.0 - w.coefficient) : 1.0;
    return covered / total;
}

/// Average weighted distance between base weights theta_i and the overshoot
/// weights theta'_j whose gradients momentum still carries:
///
///   (1/N) sum_i sum_{j = i-window+1}^{i} ||theta_i - theta'_j|| w(i, j)
///
/// i ranges over steps that are multiples of `stride` (N of them) and j over
/// the `window` most recent steps, truncated at step 1. stride = 1 with a
/// window covering the whole run gives the untruncated measure.
inline double awd(const Trajectory& traj, const WeightingScheme& w, std::uint64_t window, std::uint64_t stride) {
    if (window == 0 || stride == 0) throw std::invalid_argument("awd: window and stride must be positive");
    w.validate();
    double total = 0.0;
    std::size_t n = 0;
    for (const auto& rec : traj.records()) {
        if (rec.t == 0 || rec.t % stride != 0) continue;
        if (!rec.base) throw std::invalid_argument("awd: missing base snapshot at step " + std::to_string(rec.t));
        const std::uint64_t first = rec.t >= window ? rec.t - window + 1 : 1;
        double inner = 0.0;
        for (std::uint64_t j = rec.t + 1; j-- > first;) {
            const TrajectoryRecord* past = traj.find(j);
            if (past == nullptr || !past->overshoot) {
                throw std::invalid_argument("awd: missing overshoot snapshot at step " + std::to_string(j));
            }
            inner += distance2(*rec.base, *past->overshoot) * w.weight(rec.t, j);
        }
        total += inner;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("awd: no base snapshots at the requested stride");
    return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Update direction diagnostics

/// Cosine similarity of consecutive update vectors. Pairs involving a
/// zero-norm (or unrecorded) update are std::nullopt.
inline std::vector<std::optional<double>> update_cosine_series(const Trajectory& traj) {
    std::vector<std::optional<double>> out;
    const auto& recs = traj.records();
    for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
        const auto& a = recs[k].update;
        const auto& b = recs[k + 1].update;
        if (!a || !b) {
            out.emplace_back(std::nullopt);
            continue;
        }
        const double na = norm2(*a), nb = norm2(*b);
        if (na == 0.0 || nb == 0.0) {
            out.emplace_back(std::nullopt);
            continue;
        }
        out.emplace_back(std::clamp(dot(*a, *b) / (na * nb), -1.0, 1.0));
    }
    return out;
}

/// Mean over defined entries; nullopt if none are defined.
inline std::optional<double> mean_defined(std::span<const std::optional<double>> values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : values) {
        if (v) {
            sum += *v;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

struct LookaheadDistance {
    double lhs = 0.0;  // sum_i ||(theta_t + s u_t) - theta_{t+i}||
    double rhs = 0.0;  // sum_i ||theta_t - theta_{t+i}||
    std::size_t samples = 0;
};

/// Checks whether shifting theta_t by s times its latest update lands closer to
/// the next 2s+1 iterates than theta_t itself. Sums over i = 0..2s, averaged
/// over every t whose horizon is fully recorded.
inline LookaheadDistance lookahead_distance_check(const Trajectory& traj, std::uint64_t s) {
    if (s == 0) throw std::invalid_argument("lookahead_distance_check: s must be positive");
    LookaheadDistance out;
    const auto& recs = traj.records();
    for (std::size_t k = 0; k < recs.size(); ++k) {
        const auto& rec = recs[k];
        if (!rec.base || !rec.update) continue;
        if (k + 2 * s >= recs.size()) break;
        bool complete = true;
        for (std::uint64_t i = 0; i <= 2 * s; ++i) {
            const auto& fut = recs[k + i];
            if (fut.t != rec.t + i || !fut.base) {
                complete = false;
                break;
            }
        }
        if (!complete) continue;
        ParamVector shifted = *rec.base;
        for (std::size_t d = 0; d < shifted.size(); ++d) shifted[d] += static_cast<double>(s) * (*rec.update)[d];
        for (std::uint64_t i = 0; i <= 2 * s; ++i) {
            out.lhs += distance2(shifted, *recs[k + i].base);
            out.rhs += distance2(*rec.base, *recs[k + i].base);
        }
        ++out.samples;
    }
    if (out.samples == 0) {
        throw std::invalid_argument("lookahead_distance_check: trajectory shorter than the 2s+1 horizon");
    }
    out.lhs /= static_cast<double>(out.samples);
    out.rhs /= static_cast<double>(out.samples);
    return out;
}

// ---------------------------------------------------------------------------
// Loss-series measures

enum class SmoothKind { mean_window, gaussian };

/// Centered smoothing with truncate-and-renormalize edges.
///   mean_window: moving average over `width` samples.
///   gaussian: sigma = width, kernel cut at 4 sigma.
/// Each output is x_c + weighted mean of (x_k - x_c), so constant series map
/// to themselves exactly.
inline std::vector<double> smooth_series(std::span<const double> values, SmoothKind kind, std::size_t width) {
    if (width == 0) throw std::invalid_argument("smooth_series: width must be >= 1");
    const std::size_t n = values.size();
    std::vector<double> out(n);
    if (kind == SmoothKind::mean_window) {
        const std::size_t left = (width - 1) / 2;
        const std::size_t right = width - 1 - left;
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t lo = c >= left ? c - left : 0;
            const std::size_t hi = std::min(n - 1, c + right);
            double acc = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) acc += values[k] - values[c];
            out[c] = values[c] + acc / static_cast<double>(hi - lo + 1);
        }
        return out;
    }
    const double sigma = static_cast<double>(width);
    const auto radius = static_cast<std::size_t>(4.0 * sigma + 0.5);
    std::vector<double> kernel(radius + 1);
    for (std::size_t k = 0; k <= radius; ++k) {
        const double x = static_cast<double>(k) / sigma;
        kernel[k] = std::exp(-0.5 * x * x);
    }
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t lo = c >= radius ? c - radius : 0;
        const std::size_t hi = std::min(n - 1, c + radius);
        double acc = 0.0, mass = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) {
            const double wk = kernel[k > c ? k - c : c - k];
            acc += wk * (values[k] - values[c]);
            mass += wk;
        }
        out[c] = values[c] + acc / mass;
    }
    return out;
}

struct StepsToTarget {
    std::optional<std::size_t> candidate;  // nullopt: never reached
    std::optional<std::size_t> baseline;
    double target = 0.0;
};

/// Steps until each smoothed series first reaches
///   B_0 - fraction (B_0 - min B)
/// computed on the smoothed baseline. Entry k of a series is the loss at step
/// k + 1, so a crossing at index k counts as k + 1 steps.
inline StepsToTarget steps_to_fraction(std::span<const double> losses, std::span<const double> baseline, double fraction,
                                       std::size_t smooth_window) {
    if (losses.empty() || baseline.empty()) throw std::invalid_argument("steps_to_fraction: empty series");
    if (!(fraction > 0.0 && fraction < 1.0)) throw std::invalid_argument("steps_to_fraction: fraction must be in (0, 1)");
    const auto cand = smooth_series(losses, SmoothKind::mean_window, smooth_window);
    const auto base = smooth_series(baseline, SmoothKind::mean_window, smooth_window);
    const double b0 = base.front();
    const double bmin = *std::min_element(base.begin(), base.end());
    StepsToTarget out;
    out.target = b0 - fraction * (b0 - bmin);
    auto first_crossing = [&](const std::vector<double>& s) -> std::optional<std::size_t> {
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (s[k] <= out.target) return k + 1;
        }
        return std::nullopt;
    };
    out.candidate = first_crossing(cand);
    out.baseline = first_crossing(base);
    return out;
}

/// (baseline - candidate) / baseline * 100.
inline double savings_percentage(std::size_t steps_candidate, std::size_t steps_baseline) {
    if (steps_baseline == 0) throw std::invalid_argument("savings_percentage: baseline steps must be positive");
    return (static_cast<double>(steps_baseline) - static_cast<double>(steps_candidate)) /
           static_cast<double>(steps_baseline) * 100.0;
}

}  // namespace overshoot
