#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "overshoot/errors.hpp"

namespace overshoot {

/// Flat vector of model parameters. Length is fixed for the lifetime of a run.
using ParamVector = std::vector<double>;

inline void require_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                                    " vs " + std::to_string(b.size()) + ")");
    }
}

inline bool all_finite(std::span<const double> v) noexcept {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

inline void require_finite(std::span<const double> v, const char* what) {
    if (!all_finite(v)) throw NumericError(std::string(what) + ": non-finite value");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance2(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "distance2");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    require_same_size(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline ParamVector to_vector(std::span<const double> v) { return ParamVector(v.begin(), v.end()); }

}  // namespace overshoot
