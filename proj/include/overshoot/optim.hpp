#pragma once

// Optimizer update rules as pure state transitions:
//   (params, state, grad) -> (params', state')
// Nothing here keeps hidden state; calling a step twice with the same inputs
// yields the same outputs.
//
// Overshoot variants (sgdo_step, adamo_step) track the overshoot weights, i.e.
// the point where the next gradient is evaluated. The matching *_base_recovery
// functions map them back to the base weights.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>

#include "overshoot/errors.hpp"
#include "overshoot/objective.hpp"
#include "overshoot/params.hpp"

namespace overshoot {

struct SgdHyper {
    double lr = 0.001;
    double momentum = 0.9;
    double gamma = 0.0;  // overshoot factor; only read by sgdo_step / sgdo_base_recovery
};

struct SgdState {
    ParamVector m;
    std::uint64_t t = 0;
    SgdHyper hyper;
};

struct AdamHyper {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // decoupled
    double gamma = 0.0;
    std::uint64_t delay = 50;   // overshoot delay tau
};

struct AdamState {
    ParamVector m;
    ParamVector v;
    std::uint64_t t = 0;
    double prev_gamma = 0.0;  // delayed gamma of the last completed step
    AdamHyper hyper;
};

template <class State>
struct StepResult {
    ParamVector params;
    State state;
};

struct UpdateCoefficients {
    double momentum;  // m_c
    double gradient;  // g_c
};

inline SgdState make_sgd_state(std::size_t dim, const SgdHyper& hyper) {
    return SgdState{ParamVector(dim, 0.0), 0, hyper};
}

inline AdamState make_adam_state(std::size_t dim, const AdamHyper& hyper) {
    return AdamState{ParamVector(dim, 0.0), ParamVector(dim, 0.0), 0, 0.0, hyper};
}

namespace detail {

inline void check_sgd_hyper(const SgdHyper& h) {
    if (!(h.lr >= 0.0) || !std::isfinite(h.lr)) throw ConfigurationError("lr must be finite and non-negative");
    if (!(h.momentum >= 0.0 && h.momentum <= 1.0)) throw ConfigurationError("momentum must be in [0, 1]");
    if (!(h.gamma >= 0.0) || !std::isfinite(h.gamma)) throw ConfigurationError("gamma must be finite and non-negative");
}

inline void check_adam_hyper(const AdamHyper& h) {
    if (!(h.lr >= 0.0) || !std::isfinite(h.lr)) throw ConfigurationError("lr must be finite and non-negative");
    if (!(h.beta1 >= 0.0 && h.beta1 < 1.0)) throw ConfigurationError("beta1 must be in [0, 1)");
    if (!(h.beta2 > 0.0 && h.beta2 < 1.0)) throw ConfigurationError("beta2 must be in (0, 1)");
    if (!(h.eps > 0.0)) throw ConfigurationError("eps must be positive");
    if (!(h.weight_decay >= 0.0)) throw ConfigurationError("weight_decay must be non-negative");
    if (!(h.gamma >= 0.0) || !std::isfinite(h.gamma)) throw ConfigurationError("gamma must be finite and non-negative");
}

template <class State>
void check_buffers(std::span<const double> params, const State& state, std::span<const double> grad,
                   const char* what) {
    require_same_size(params, grad, what);
    require_same_size(params, state.m, what);
    if constexpr (requires { state.v; }) require_same_size(params, state.v, what);
    require_finite(grad, what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SGD family

/// Classical (heavy-ball) momentum: m' = mu m + g, theta' = theta - lr m'.
/// With momentum = 0 this is vanilla SGD.
inline StepResult<SgdState> sgd_cm_step(std::span<const double> params, const SgdState& state,
                                        std::span<const double> grad) {
    detail::check_sgd_hyper(state.hyper);
    detail::check_buffers(params, state, grad, "sgd_cm_step");
    const auto& h = state.hyper;
    StepResult<SgdState> out{ParamVector(params.size()), state};
    for (std::size_t i = 0; i < params.size(); ++i) {
        out.state.m[i] = h.momentum * state.m[i] + grad[i];
        out.params[i] = params[i] - h.lr * out.state.m[i];
    }
    out.state.t = state.t + 1;
    require_finite(out.params, "sgd_cm_step");
    return out;
}

/// Point where NAG evaluates its gradient: theta - lr mu m.
inline ParamVector nag_lookahead(std::span<const double> params, const SgdState& state) {
    require_same_size(params, state.m, "nag_lookahead");
    ParamVector ahead(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        ahead[i] = params[i] - state.hyper.lr * state.hyper.momentum * state.m[i];
    }
    return ahead;
}

/// NAG in momentum form. `grad` must have been evaluated at nag_lookahead(params, state);
/// the update itself is the classical-momentum one applied to params.
inline StepResult<SgdState> nag_apply(std::span<const double> params, const SgdState& state,
                                      std::span<const double> grad) {
    return sgd_cm_step(params, state, grad);
}

inline StepResult<SgdState> nag_step(std::span<const double> params, const SgdState& state,
                                     const Objective& objective, const NoiseDraw& draw) {
    const ParamVector ahead = nag_lookahead(params, state);
    const Evaluation ev = objective.evaluate(ahead, draw);
    return nag_apply(params, state, ev.grad);
}

/// m_c = gamma - gamma/mu + 1, g_c = gamma/mu.
inline UpdateCoefficients sgdo_coefficients(double momentum, double gamma) {
    if (gamma == 0.0) return {1.0, 0.0};
    if (!(momentum > 0.0)) {
        throw ConfigurationError("sgdo: momentum must be positive when gamma > 0 (gamma/momentum undefined)");
    }
    return {gamma - gamma / momentum + 1.0, gamma / momentum};
}

/// Efficient Overshoot for SGD. `params` are overshoot weights and `grad` is
/// the gradient evaluated at them.
inline StepResult<SgdState> sgdo_step(std::span<const double> params, const SgdState& state,
                                      std::span<const double> grad) {
    detail::check_sgd_hyper(state.hyper);
    detail::check_buffers(params, state, grad, "sgdo_step");
    const auto& h = state.hyper;
    const UpdateCoefficients c = sgdo_coefficients(h.momentum, h.gamma);
    StepResult<SgdState> out{ParamVector(params.size()), state};
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double m = h.momentum * state.m[i] + grad[i];
        out.state.m[i] = m;
        out.params[i] = params[i] - h.lr * (c.momentum * m + c.gradient * grad[i]);
    }
    out.state.t = state.t + 1;
    require_finite(out.params, "sgdo_step");
    return out;
}

/// Base weights from SGDO overshoot weights: theta' + lr gamma m.
inline ParamVector sgdo_base_recovery(std::span<const double> params, const SgdState& state) {
    require_same_size(params, state.m, "sgdo_base_recovery");
    ParamVector base(params.size());
    const double scale = state.hyper.lr * state.hyper.gamma;
    for (std::size_t i = 0; i < params.size(); ++i) base[i] = params[i] + scale * state.m[i];
    return base;
}

// ---------------------------------------------------------------------------
// Adam family

/// Overshoot factor after the delay ramp: max(0, min(gamma, t - tau)).
inline double delayed_gamma(std::uint64_t t, double gamma, std::uint64_t tau) {
    const double ramp = static_cast<double>(t) - static_cast<double>(tau);
    return std::max(0.0, std::min(gamma, ramp));
}

/// m_c = gamma_t - gamma_{t-1}/beta1 + 1, g_c = (1 - beta1) gamma_{t-1}/beta1.
inline UpdateCoefficients adamo_coefficients(double beta1, double gamma_t, double gamma_prev) {
    if (gamma_prev == 0.0) return {gamma_t + 1.0, 0.0};
    if (!(beta1 > 0.0)) throw ConfigurationError("adamo: beta1 must be positive when gamma > 0");
    return {gamma_t - gamma_prev / beta1 + 1.0, (1.0 - beta1) * gamma_prev / beta1};
}

namespace detail {

// Shared moment update and parameter write for the Adam variants. `numerator`
// receives (m', g, bias1) and returns the bias-corrected first-moment term.
template <class Numerator>
StepResult<AdamState> adam_like_step(std::span<const double> params, const AdamState& state,
                                     std::span<const double> grad, const char* what, Numerator&& numerator) {
    check_adam_hyper(state.hyper);
    check_buffers(params, state, grad, what);
    const auto& h = state.hyper;
    StepResult<AdamState> out{ParamVector(params.size()), state};
    const std::uint64_t t = state.t + 1;
    const double bias2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        const double m = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
        const double v = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
        out.state.m[i] = m;
        out.state.v[i] = v;
        const double m_hat = numerator(m, g, t);
        const double v_hat = v / bias2;
        double p = params[i] - h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        if (h.weight_decay > 0.0) p -= h.lr * h.weight_decay * p;
        out.params[i] = p;
    }
    out.state.t = t;
    require_finite(out.params, what);
    return out;
}

}  // namespace detail

inline StepResult<AdamState> adam_step(std::span<const double> params, const AdamState& state,
                                       std::span<const double> grad) {
    const double beta1 = state.hyper.beta1;
    const double bias1 = 1.0 - std::pow(beta1, static_cast<double>(state.t + 1));
    return detail::adam_like_step(params, state, grad, "adam_step",
                                  [bias1](double m, double, std::uint64_t) { return m / bias1; });
}

/// Nadam with a constant momentum coefficient:
///   beta1 m'/(1 - beta1^(t+1)) + (1 - beta1) g/(1 - beta1^t)
inline StepResult<AdamState> nadam_step(std::span<const double> params, const AdamState& state,
                                        std::span<const double> grad) {
    const double beta1 = state.hyper.beta1;
    const double t = static_cast<double>(state.t + 1);
    const double bias1_now = 1.0 - std::pow(beta1, t);
    const double bias1_next = 1.0 - std::pow(beta1, t + 1.0);
    return detail::adam_like_step(params, state, grad, "nadam_step", [=](double m, double g, std::uint64_t) {
        return beta1 * m / bias1_next + (1.0 - beta1) * g / bias1_now;
    });
}

/// Efficient Overshoot for Adam. Until the delay has elapsed the coefficients
/// are (1, 0) and the step coincides with adam_step.
inline StepResult<AdamState> adamo_step(std::span<const double> params, const AdamState& state,
                                        std::span<const double> grad) {
    const auto& h = state.hyper;
    const std::uint64_t t = state.t + 1;
    const double gamma_t = delayed_gamma(t, h.gamma, h.delay);
    const UpdateCoefficients c = adamo_coefficients(h.beta1, gamma_t, state.prev_gamma);
    const double bias1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
    auto out = detail::adam_like_step(params, state, grad, "adamo_step", [&](double m, double g, std::uint64_t) {
        return (c.momentum * m + c.gradient * g) / bias1;
    });
    out.state.prev_gamma = gamma_t;
    return out;
}

/// Base weights from AdamO overshoot weights: theta' + gamma lr m/(sqrt(v) + eps),
/// using the raw (not bias-corrected) moments.
inline ParamVector adamo_base_recovery(std::span<const double> params, const AdamState& state) {
    require_same_size(params, state.m, "adamo_base_recovery");
    require_same_size(params, state.v, "adamo_base_recovery");
    const auto& h = state.hyper;
    ParamVector base(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        base[i] = params[i] + h.gamma * h.lr * state.m[i] / (std::sqrt(state.v[i]) + h.eps);
    }
    return base;
}

// ---------------------------------------------------------------------------
// General Overshoot: wraps any momentum-based step with a shadow copy.

template <class State>
concept HasLearningRate = requires(State s) {
    { s.hyper.lr } -> std::convertible_to<double>;
};

template <class Step, class State>
concept InnerStep = requires(Step step, std::span<const double> p, const State& s) {
    { step(p, s, p) } -> std::same_as<StepResult<State>>;
};

template <class State>
struct WrapState {
    ParamVector base;       // theta_t
    ParamVector overshoot;  // theta'_t
    State inner;            // phi
    State shadow;           // phi', independent copy
};

/// theta'_0 = theta_0 and phi' = phi.
template <HasLearningRate State>
WrapState<State> make_overshoot_wrap(ParamVector init, const State& inner) {
    return WrapState<State>{init, init, inner, inner};
}

/// One step of the general method given the gradient at the overshoot weights:
///   theta_t  = phi (theta_{t-1}, g, lr)
///   theta'_t = phi'(theta_t,     g, gamma lr)
template <HasLearningRate State, InnerStep<State> Step>
WrapState<State> overshoot_wrap_step(const WrapState<State>& current, std::span<const double> grad, double lr,
                                     double gamma, Step&& step) {
    if (!(gamma >= 0.0)) throw ConfigurationError("overshoot_wrap_step: gamma must be non-negative");
    State inner = current.inner;
    inner.hyper.lr = lr;
    State shadow = current.shadow;
    shadow.hyper.lr = gamma * lr;

    auto base_step = step(std::span<const double>(current.base), inner, grad);
    auto shadow_step = step(std::span<const double>(base_step.params), shadow, grad);
    return WrapState<State>{std::move(base_step.params), std::move(shadow_step.params), std::move(base_step.state),
                            std::move(shadow_step.state)};
}

template <HasLearningRate State, InnerStep<State> Step>
WrapState<State> overshoot_wrap_step(const WrapState<State>& current, const Objective& objective,
                                     const NoiseDraw& draw, double lr, double gamma, Step&& step) {
    const Evaluation ev = objective.evaluate(current.overshoot, draw);
    return overshoot_wrap_step(current, ev.grad, lr, gamma, std::forward<Step>(step));
}

}  // namespace overshoot
