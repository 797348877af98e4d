#pragma once

#include <cstdint>
#include <span>

#include "overshoot/params.hpp"

namespace overshoot {

/// Identifies one stochastic evaluation: a minibatch or a gradient-noise vector.
/// Replaying the same draw reproduces the same (loss, gradient) bitwise.
struct NoiseDraw {
    std::uint64_t seed = 0;
    std::uint64_t step = 0;

    friend bool operator==(const NoiseDraw&, const NoiseDraw&) = default;
};

struct Evaluation {
    double loss = 0.0;
    ParamVector grad;
};

/// Stochastic objective f(theta; draw). Implementations are immutable after
/// construction and safe to evaluate concurrently.
class Objective {
public:
    virtual ~Objective() = default;

    virtual std::size_t dimension() const = 0;
    virtual Evaluation evaluate(std::span<const double> params, const NoiseDraw& draw) const = 0;

    /// Loss only. Override when the forward pass is cheaper than forward + backward.
    virtual double loss(std::span<const double> params, const NoiseDraw& draw) const {
        return evaluate(params, draw).loss;
    }
};

}  // namespace overshoot
