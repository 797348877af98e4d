#pragma once

// Desk-scale stochastic objectives with exact analytic gradients.
//
// Stochasticity for the analytic test functions is a Gaussian noise vector
// xi(draw) entering as a linear term sigma * <xi, theta>. The gradient noise is
// therefore additive (grad = grad_f + sigma * xi) and the loss stays consistent
// with its gradient for a fixed draw, so finite differences apply unchanged.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "overshoot/objective.hpp"
#include "overshoot/params.hpp"
#include "overshoot/rng.hpp"

namespace overshoot {

namespace detail {

inline ParamVector noise_vector(const NoiseDraw& draw, std::size_t dim) {
    CounterRng rng(draw.seed, Stream::gradient_noise, draw.step);
    ParamVector xi(dim);
    for (auto& x : xi) x = rng.normal();
    return xi;
}

inline void add_linear_noise(Evaluation& ev, std::span<const double> params, const NoiseDraw& draw, double sigma) {
    if (sigma == 0.0) return;
    const ParamVector xi = noise_vector(draw, params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        ev.loss += sigma * xi[i] * params[i];
        ev.grad[i] += sigma * xi[i];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Noisy quadratic

struct QuadraticSpec {
    ParamVector curvature;  // diagonal of A, entries >= 0
    double noise_scale = 0.0;
};

/// Diagonal curvatures spaced geometrically in [1, condition_number].
inline QuadraticSpec make_quadratic_spec(std::size_t dim, double condition_number, double noise_scale) {
    if (dim == 0) throw std::invalid_argument("quadratic: dim must be >= 1");
    if (!(condition_number >= 1.0)) throw std::invalid_argument("quadratic: condition_number must be >= 1");
    QuadraticSpec spec;
    spec.noise_scale = noise_scale;
    spec.curvature.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        const double frac = dim == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(dim - 1);
        spec.curvature[i] = std::pow(condition_number, frac);
    }
    return spec;
}

/// loss = 1/2 sum a_i theta_i^2 + sigma <xi, theta>; grad = A theta + sigma xi.
inline Evaluation quadratic_eval(std::span<const double> params, const NoiseDraw& draw, const QuadraticSpec& spec) {
    require_same_size(params, spec.curvature, "quadratic_eval");
    Evaluation ev{0.0, ParamVector(params.size())};
    for (std::size_t i = 0; i < params.size(); ++i) {
        ev.loss += 0.5 * spec.curvature[i] * params[i] * params[i];
        ev.grad[i] = spec.curvature[i] * params[i];
    }
    detail::add_linear_noise(ev, params, draw, spec.noise_scale);
    return ev;
}

// ---------------------------------------------------------------------------
// Chained Rosenbrock

struct RosenbrockSpec {
    double noise_scale = 0.0;
};

/// f = sum_{i=0}^{d-2} 100 (theta_{i+1} - theta_i^2)^2 + (1 - theta_i)^2, d >= 2.
inline Evaluation rosenbrock_eval(std::span<const double> params, const NoiseDraw& draw, const RosenbrockSpec& spec) {
    if (params.size() < 2) throw std::invalid_argument("rosenbrock_eval: dimension must be >= 2");
    Evaluation ev{0.0, ParamVector(params.size(), 0.0)};
    for (std::size_t i = 0; i + 1 < params.size(); ++i) {
        const double x = params[i];
        const double y = params[i + 1];
        const double r = y - x * x;
        const double s = 1.0 - x;
        ev.loss += 100.0 * r * r + s * s;
        ev.grad[i] += -400.0 * x * r - 2.0 * s;
        ev.grad[i + 1] += 200.0 * r;
    }
    detail::add_linear_noise(ev, params, draw, spec.noise_scale);
    return ev;
}

// ---------------------------------------------------------------------------
// Synthetic datasets

enum class DatasetKind { regression, blobs };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::regression;
    std::size_t n = 1024;
    std::size_t d = 8;
    std::size_t classes = 3;
    double noise = 0.1;
    std::uint64_t seed = 0;
};

struct SyntheticDataset {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> inputs;         // row-major n x d
    std::vector<double> targets;        // regression: n values
    std::vector<std::size_t> labels;    // blobs: n labels in [0, classes)
    std::size_t classes = 0;
    std::uint64_t generator_seed = 0;

    std::span<const double> row(std::size_t i) const { return {inputs.data() + i * d, d}; }
};

/// regression: x ~ N(0, I), y = <x, w*> + noise * N(0, 1) with w* ~ N(0, I/d).
/// blobs: class centers uniform in [-10, 10]^d, points N(center, noise^2 I),
/// labels assigned round-robin.
inline SyntheticDataset make_synthetic_dataset(const DatasetSpec& spec) {
    if (spec.n == 0 || spec.d == 0) throw std::invalid_argument("make_synthetic_dataset: n and d must be >= 1");
    if (spec.kind == DatasetKind::blobs && spec.classes < 2) {
        throw std::invalid_argument("make_synthetic_dataset: blobs need at least 2 classes");
    }
    if (!(spec.noise >= 0.0)) throw std::invalid_argument("make_synthetic_dataset: noise must be >= 0");

    SyntheticDataset ds;
    ds.n = spec.n;
    ds.d = spec.d;
    ds.generator_seed = spec.seed;
    ds.inputs.resize(spec.n * spec.d);
    CounterRng rng(spec.seed, Stream::dataset, static_cast<std::uint64_t>(spec.kind));

    if (spec.kind == DatasetKind::regression) {
        std::vector<double> w(spec.d);
        const double scale = 1.0 / std::sqrt(static_cast<double>(spec.d));
        for (auto& x : w) x = scale * rng.normal();
        ds.targets.resize(spec.n);
        for (std::size_t i = 0; i < spec.n; ++i) {
            double y = 0.0;
            for (std::size_t j = 0; j < spec.d; ++j) {
                const double x = rng.normal();
                ds.inputs[i * spec.d + j] = x;
                y += x * w[j];
            }
            ds.targets[i] = y + spec.noise * rng.normal();
        }
    } else {
        ds.classes = spec.classes;
        std::vector<double> centers(spec.classes * spec.d);
        for (auto& c : centers) c = rng.uniform(-10.0, 10.0);
        ds.labels.resize(spec.n);
        for (std::size_t i = 0; i < spec.n; ++i) {
            const std::size_t label = i % spec.classes;
            ds.labels[i] = label;
            for (std::size_t j = 0; j < spec.d; ++j) {
                ds.inputs[i * spec.d + j] = centers[label * spec.d + j] + spec.noise * rng.normal();
            }
        }
    }
    return ds;
}

/// Sample indices of the minibatch for draw.step. Samples are consumed from
/// an endless sequence of per-epoch permutations, each shuffled from
/// (seed, epoch), so every variant sharing a seed sees the same batches.
inline std::vector<std::size_t> minibatch_indices(std::size_t n, std::size_t batch_size, const NoiseDraw& draw) {
    std::vector<std::size_t> out;
    out.reserve(batch_size);
    std::uint64_t cached_epoch = std::numeric_limits<std::uint64_t>::max();
    std::vector<std::size_t> perm(n);
    const std::uint64_t first = draw.step * batch_size;
    for (std::size_t k = 0; k < batch_size; ++k) {
        const std::uint64_t pos = first + k;
        const std::uint64_t epoch = pos / n;
        if (epoch != cached_epoch) {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            CounterRng rng(draw.seed, Stream::minibatch, epoch);
            for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            cached_epoch = epoch;
        }
        out.push_back(perm[pos % n]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Multilayer perceptron

enum class Activation { tanh, relu };
enum class LossKind { mse, cross_entropy };

struct MlpSpec {
    std::vector<std::size_t> layer_sizes;  // input, hidden..., output
    Activation activation = Activation::tanh;
    LossKind loss = LossKind::mse;
    std::shared_ptr<const SyntheticDataset> dataset;
    std::size_t batch_size = 64;
};

/// Number of weights + biases. Layer l stores W (out x in, row-major) then b (out).
inline std::size_t mlp_parameter_count(std::span<const std::size_t> layer_sizes) {
    std::size_t count = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) count += layer_sizes[l + 1] * (layer_sizes[l] + 1);
    return count;
}

/// Numerically stable softmax. Output sums to 1 up to rounding.
inline std::vector<double> softmax(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (auto& x : p) x /= z;
    return p;
}

namespace detail {

inline void validate_mlp(const MlpSpec& spec) {
    if (spec.layer_sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output layer");
    if (!spec.dataset) throw std::invalid_argument("mlp: dataset missing");
    if (spec.layer_sizes.front() != spec.dataset->d) throw std::invalid_argument("mlp: input size != dataset features");
    if (spec.batch_size == 0) throw std::invalid_argument("mlp: batch_size must be >= 1");
    if (spec.loss == LossKind::mse && spec.dataset->targets.size() != spec.dataset->n) {
        throw std::invalid_argument("mlp: mse loss needs regression targets");
    }
    if (spec.loss == LossKind::mse && spec.layer_sizes.back() != 1) {
        throw std::invalid_argument("mlp: mse loss needs a single output");
    }
    if (spec.loss == LossKind::cross_entropy && spec.dataset->labels.size() != spec.dataset->n) {
        throw std::invalid_argument("mlp: cross_entropy loss needs class labels");
    }
}

inline double activate(Activation a, double z) { return a == Activation::tanh ? std::tanh(z) : std::max(0.0, z); }

// derivative expressed through the activation output h
inline double activate_grad(Activation a, double z, double h) {
    if (a == Activation::tanh) return 1.0 - h * h;
    return z > 0.0 ? 1.0 : 0.0;
}

// Forward + (optionally) backward for one minibatch.
inline Evaluation mlp_run(std::span<const double> params, const NoiseDraw& draw, const MlpSpec& spec,
                          bool want_grad) {
    validate_mlp(spec);
    const auto& sizes = spec.layer_sizes;
    const std::size_t layers = sizes.size() - 1;
    if (params.size() != mlp_parameter_count(sizes)) {
        throw std::invalid_argument("mlp_eval_grad: params length does not match architecture");
    }
    const SyntheticDataset& ds = *spec.dataset;

    std::vector<std::size_t> offset(layers);
    for (std::size_t l = 0, off = 0; l < layers; ++l) {
        offset[l] = off;
        off += sizes[l + 1] * (sizes[l] + 1);
    }

    const auto batch = minibatch_indices(ds.n, spec.batch_size, draw);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const std::size_t out_dim = sizes.back();

    Evaluation ev{0.0, want_grad ? ParamVector(params.size(), 0.0) : ParamVector{}};
    std::vector<std::vector<double>> pre(layers), act(layers + 1);
    std::vector<double> delta, delta_prev;

    for (std::size_t idx : batch) {
        const auto x = ds.row(idx);
        act[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes[l], out = sizes[l + 1];
            const double* W = params.data() + offset[l];
            const double* b = W + out * in;
            pre[l].resize(out);
            act[l + 1].resize(out);
            for (std::size_t o = 0; o < out; ++o) {
                double z = b[o];
                for (std::size_t i = 0; i < in; ++i) z += W[o * in + i] * act[l][i];
                pre[l][o] = z;
                act[l + 1][o] = l + 1 == layers ? z : activate(spec.activation, z);
            }
        }

        const auto& logits = act[layers];
        delta.assign(out_dim, 0.0);
        if (spec.loss == LossKind::mse) {
            const double r = logits[0] - ds.targets[idx];
            ev.loss += r * r * inv_batch;
            delta[0] = 2.0 * r * inv_batch;
        } else {
            const std::size_t label = ds.labels[idx];
            if (label >= out_dim) throw std::invalid_argument("mlp_eval_grad: label out of class range");
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double v : logits) z += std::exp(v - mx);
            const double lse = mx + std::log(z);
            ev.loss += (lse - logits[label]) * inv_batch;
            for (std::size_t k = 0; k < out_dim; ++k) {
                delta[k] = (std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0)) * inv_batch;
            }
        }
        if (!want_grad) continue;

        for (std::size_t l = layers; l-- > 0;) {
            const std::size_t in = sizes[l], out = sizes[l + 1];
            const double* W = params.data() + offset[l];
            double* gW = ev.grad.data() + offset[l];
            double* gb = gW + out * in;
            for (std::size_t o = 0; o < out; ++o) {
                gb[o] += delta[o];
                for (std::size_t i = 0; i < in; ++i) gW[o * in + i] += delta[o] * act[l][i];
            }
            if (l == 0) break;
            delta_prev.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                for (std::size_t i = 0; i < in; ++i) delta_prev[i] += W[o * in + i] * delta[o];
            }
            for (std::size_t i = 0; i < in; ++i) {
                delta_prev[i] *= activate_grad(spec.activation, pre[l - 1][i], act[l][i]);
            }
            std::swap(delta, delta_prev);
        }
    }
    return ev;
}

}  // namespace detail

/// Minibatch loss and exact gradient by manual reverse-mode backprop.
/// mse: mean over the batch of squared residuals. cross_entropy: mean negative
/// log-likelihood via log-sum-exp. Hidden layers use spec.activation; the
/// output layer is linear.
inline Evaluation mlp_eval_grad(std::span<const double> params, const NoiseDraw& draw, const MlpSpec& spec) {
    return detail::mlp_run(params, draw, spec, true);
}

inline double mlp_loss(std::span<const double> params, const NoiseDraw& draw, const MlpSpec& spec) {
    return detail::mlp_run(params, draw, spec, false).loss;
}

/// Glorot-uniform weights scaled by `scale`, zero biases.
inline ParamVector mlp_init(std::span<const std::size_t> layer_sizes, std::uint64_t seed, double scale = 1.0) {
    ParamVector p(mlp_parameter_count(layer_sizes), 0.0);
    CounterRng rng(seed, Stream::init);
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const std::size_t in = layer_sizes[l], out = layer_sizes[l + 1];
        const double limit = scale * std::sqrt(6.0 / static_cast<double>(in + out));
        for (std::size_t k = 0; k < in * out; ++k) p[off + k] = rng.uniform(-limit, limit);
        off += out * (in + 1);
    }
    return p;
}

/// Fraction of dataset samples classified correctly (argmax of logits).
inline double mlp_accuracy(std::span<const double> params, const MlpSpec& spec) {
    const SyntheticDataset& ds = *spec.dataset;
    std::size_t correct = 0;
    const auto& sizes = spec.layer_sizes;
    const std::size_t layers = sizes.size() - 1;
    for (std::size_t idx = 0; idx < ds.n; ++idx) {
        std::vector<double> a(ds.row(idx).begin(), ds.row(idx).end());
        std::size_t off = 0;
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = sizes[l], out = sizes[l + 1];
            std::vector<double> next(out);
            for (std::size_t o = 0; o < out; ++o) {
                double z = params[off + out * in + o];
                for (std::size_t i = 0; i < in; ++i) z += params[off + o * in + i] * a[i];
                next[o] = l + 1 == layers ? z : detail::activate(spec.activation, z);
            }
            off += out * (in + 1);
            a = std::move(next);
        }
        const auto pred = static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin());
        if (pred == ds.labels[idx]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(ds.n);
}

// ---------------------------------------------------------------------------
// Objective adapters

class QuadraticObjective final : public Objective {
public:
    explicit QuadraticObjective(QuadraticSpec spec) : spec_(std::move(spec)) {}
    std::size_t dimension() const override { return spec_.curvature.size(); }
    Evaluation evaluate(std::span<const double> p, const NoiseDraw& d) const override { return quadratic_eval(p, d, spec_); }
    const QuadraticSpec& spec() const { return spec_; }

private:
    QuadraticSpec spec_;
};

class RosenbrockObjective final : public Objective {
public:
    RosenbrockObjective(std::size_t dim, RosenbrockSpec spec) : dim_(dim), spec_(spec) {
        if (dim < 2) throw std::invalid_argument("rosenbrock: dim must be >= 2");
    }
    std::size_t dimension() const override { return dim_; }
    Evaluation evaluate(std::span<const double> p, const NoiseDraw& d) const override {
        if (p.size() != dim_) throw std::invalid_argument("rosenbrock: dimension mismatch");
        return rosenbrock_eval(p, d, spec_);
    }

private:
    std::size_t dim_;
    RosenbrockSpec spec_;
};

class MlpObjective final : public Objective {
public:
    explicit MlpObjective(MlpSpec spec) : spec_(std::move(spec)) { detail::validate_mlp(spec_); }
    std::size_t dimension() const override { return mlp_parameter_count(spec_.layer_sizes); }
    Evaluation evaluate(std::span<const double> p, const NoiseDraw& d) const override { return mlp_eval_grad(p, d, spec_); }
    double loss(std::span<const double> p, const NoiseDraw& d) const override { return mlp_loss(p, d, spec_); }
    const MlpSpec& spec() const { return spec_; }

private:
    MlpSpec spec_;
};

/// Adapts a callable (params, draw) -> Evaluation.
class FunctionObjective final : public Objective {
public:
    using Fn = std::function<Evaluation(std::span<const double>, const NoiseDraw&)>;
    FunctionObjective(std::size_t dim, Fn fn) : dim_(dim), fn_(std::move(fn)) {}
    std::size_t dimension() const override { return dim_; }
    Evaluation evaluate(std::span<const double> p, const NoiseDraw& d) const override { return fn_(p, d); }

private:
    std::size_t dim_;
    Fn fn_;
};

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h, same draw on both sides.
inline ParamVector finite_diff_grad(const Objective& objective, std::span<const double> params, const NoiseDraw& draw,
                                    double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    ParamVector probe(params.begin(), params.end());
    ParamVector grad(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double up = objective.loss(probe, draw);
        probe[i] = orig - h;
        const double down = objective.loss(probe, draw);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

/// ||a - b|| / max(||a||, ||b||), or the absolute difference when both are ~0.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    const double diff = distance2(a, b);
    const double scale = std::max(norm2(a), norm2(b));
    return scale > 1e-12 ? diff / scale : diff;
}

}  // namespace overshoot
