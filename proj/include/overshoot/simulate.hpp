#pragma once

// Random-gradient SGDO paths and the overshoot factor that minimizes the
// average weighted distance for a given momentum.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "overshoot/metrics.hpp"
#include "overshoot/optim.hpp"
#include "overshoot/params.hpp"
#include "overshoot/rng.hpp"

namespace overshoot {

struct SimulationSpec {
    std::size_t dim = 20;
    std::uint64_t steps = 30000;
    std::vector<double> mu_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95};
    std::vector<double> gamma_grid;  // empty: 0, 0.5, ..., 10
    double lr = 1.0;
    std::uint64_t seed = 0;
    std::uint64_t window = 50;
    std::uint64_t stride = 50;

    std::vector<double> gammas() const {
        if (!gamma_grid.empty()) return gamma_grid;
        std::vector<double> g;
        for (int k = 0; k <= 20; ++k) g.push_back(0.5 * k);
        return g;
    }

    void validate() const {
        if (dim == 0) throw std::invalid_argument("simulation: dim must be >= 1");
        if (window == 0 || stride == 0) throw std::invalid_argument("simulation: window and stride must be positive");
        if (steps < window * stride) throw std::invalid_argument("simulation: steps must be >= window * stride");
        if (!(lr > 0.0)) throw std::invalid_argument("simulation: lr must be positive");
        const auto g = gammas();
        if (!std::is_sorted(g.begin(), g.end())) throw std::invalid_argument("simulation: gamma grid must be ascending");
        for (double mu : mu_grid) {
            if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("simulation: momentum grid must lie in (0, 1]");
        }
    }
};

/// Gradient for step t: a standard normal vector normalized to unit length,
/// i.e. uniform on the sphere. Shared across all (mu, gamma) cells of a seed.
inline ParamVector unit_gradient(std::uint64_t seed, std::uint64_t t, std::size_t dim) {
    CounterRng rng(seed, Stream::simulation, t);
    ParamVector g(dim);
    double n = 0.0;
    do {
        for (auto& x : g) x = rng.normal();
        n = norm2(g);
    } while (n == 0.0);
    for (auto& x : g) x /= n;
    return g;
}

/// Runs SGDO from the origin on random unit gradients. Overshoot weights are
/// recorded at every step (the distance window needs them); recovered base
/// weights at multiples of spec.stride.
inline Trajectory simulate_sgdo_path(double momentum, double gamma, const SimulationSpec& spec) {
    spec.validate();
    SgdState state = make_sgd_state(spec.dim, SgdHyper{spec.lr, momentum, gamma});
    ParamVector params(spec.dim, 0.0);
    Trajectory traj(spec.stride);
    for (std::uint64_t t = 1; t <= spec.steps; ++t) {
        const ParamVector g = unit_gradient(spec.seed, t, spec.dim);
        auto next = sgdo_step(params, state, g);
        params = std::move(next.params);
        state = std::move(next.state);
        TrajectoryRecord rec;
        rec.t = t;
        rec.overshoot = params;
        if (t % spec.stride == 0) rec.base = sgdo_base_recovery(params, state);
        traj.push(std::move(rec));
    }
    return traj;
}

struct GammaEstimate {
    double gamma_star = 0.0;
    std::vector<std::pair<double, double>> awd_curve;  // (gamma, awd)
};

/// Grid argmin of awd over spec's gamma grid; ties resolve to the smallest gamma.
inline GammaEstimate estimate_argmin_gamma(double momentum, const SimulationSpec& spec, const WeightingScheme& w) {
    spec.validate();
    GammaEstimate out;
    double best = std::numeric_limits<double>::infinity();
    for (double gamma : spec.gammas()) {
        const Trajectory traj = simulate_sgdo_path(momentum, gamma, spec);
        const double value = awd(traj, w, spec.window, spec.stride);
        out.awd_curve.emplace_back(gamma, value);
        if (value < best) {
            best = value;
            out.gamma_star = gamma;
        }
    }
    return out;
}

}  // namespace overshoot
