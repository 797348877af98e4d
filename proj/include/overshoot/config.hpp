#pragma once

// Experiment configuration: defaults, parsing, validation.
//
// Accepted text formats:
//   * a JSON object, e.g. {"optimizer": "sgdo", "gamma": 5}
//   * flat "key: value" (or "key = value") pairs separated by newlines or
//     commas, e.g. "optimizer: sgdo, mu: 0.9". Values are read as JSON when
//     they parse as JSON and as bare strings otherwise. '#' starts a comment line.

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "overshoot/errors.hpp"
#include "overshoot/metrics.hpp"
#include "overshoot/objectives.hpp"
#include "overshoot/simulate.hpp"

namespace overshoot {

using json = nlohmann::json;

enum class ObjectiveKind { quadratic, rosenbrock, mlp };
enum class OptimizerKind { sgd_cm, nag, sgd_vanilla, sgdo, adam, nadam, adamo, overshoot_wrap };
enum class InnerKind { sgd_cm, adam };

NLOHMANN_JSON_SERIALIZE_ENUM(ObjectiveKind, {{ObjectiveKind::quadratic, "quadratic"},
                                             {ObjectiveKind::rosenbrock, "rosenbrock"},
                                             {ObjectiveKind::mlp, "mlp"}})
NLOHMANN_JSON_SERIALIZE_ENUM(OptimizerKind, {{OptimizerKind::sgd_cm, "sgd_cm"},
                                             {OptimizerKind::nag, "nag"},
                                             {OptimizerKind::sgd_vanilla, "sgd_vanilla"},
                                             {OptimizerKind::sgdo, "sgdo"},
                                             {OptimizerKind::adam, "adam"},
                                             {OptimizerKind::nadam, "nadam"},
                                             {OptimizerKind::adamo, "adamo"},
                                             {OptimizerKind::overshoot_wrap, "overshoot_wrap"}})
NLOHMANN_JSON_SERIALIZE_ENUM(InnerKind, {{InnerKind::sgd_cm, "sgd_cm"}, {InnerKind::adam, "adam"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Activation, {{Activation::tanh, "tanh"}, {Activation::relu, "relu"}})
NLOHMANN_JSON_SERIALIZE_ENUM(LossKind, {{LossKind::mse, "mse"}, {LossKind::cross_entropy, "cross_entropy"}})
NLOHMANN_JSON_SERIALIZE_ENUM(DatasetKind, {{DatasetKind::regression, "regression"}, {DatasetKind::blobs, "blobs"}})

inline constexpr int kFormatVersion = 1;

/// Every field defaults to the common optimizer defaults (B = 64, lr = 1e-3,
/// beta1 = 0.9, beta2 = 0.999, mu = 0.9, weight decay 0, eps = 1e-8) and the
/// AdamO defaults gamma = 5, tau = 50.
struct ExperimentSpec {
    std::string name;  // empty: optimizer name
    bool baseline = false;

    ObjectiveKind objective = ObjectiveKind::mlp;
    // quadratic / rosenbrock
    std::size_t dim = 50;
    double condition_number = 10.0;
    double noise_scale = 0.1;
    double init_scale = 1.0;
    // mlp
    std::vector<std::size_t> hidden_layers{64, 32};
    Activation activation = Activation::tanh;
    LossKind loss = LossKind::mse;
    DatasetKind dataset = DatasetKind::regression;
    std::size_t n_samples = 1024;
    std::size_t n_features = 8;
    std::size_t classes = 3;
    double data_noise = 0.1;
    std::uint64_t data_seed = 0;

    OptimizerKind optimizer = OptimizerKind::sgd_cm;
    InnerKind inner = InnerKind::sgd_cm;
    double lr = 0.001;
    double mu = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double gamma = 5.0;
    std::uint64_t tau = 50;

    std::uint64_t steps = 1000;
    std::size_t batch_size = 64;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::uint64_t snapshot_stride = 1;

    std::vector<std::string> metrics;  // subset of {update_cosine, awd, lookahead}
    std::uint64_t awd_window = 50;
    std::uint64_t awd_stride = 50;
    std::uint64_t lookahead_s = 3;

    double fraction = 0.95;
    std::size_t smooth_window = 400;

    std::string variant_name() const { return name.empty() ? json(optimizer).get<std::string>() : name; }
    bool wants(std::string_view metric) const {
        for (const auto& m : metrics) {
            if (m == metric) return true;
        }
        return false;
    }
    bool is_overshoot() const {
        return optimizer == OptimizerKind::sgdo || optimizer == OptimizerKind::adamo ||
               optimizer == OptimizerKind::overshoot_wrap;
    }
    bool is_adam_family() const {
        return optimizer == OptimizerKind::adam || optimizer == OptimizerKind::nadam ||
               optimizer == OptimizerKind::adamo ||
               (optimizer == OptimizerKind::overshoot_wrap && inner == InnerKind::adam);
    }

    friend bool operator==(const ExperimentSpec&, const ExperimentSpec&) = default;
};

struct ComparisonSpec {
    ExperimentSpec base;
    std::vector<ExperimentSpec> variants;
};

namespace detail {

template <class T>
T get_as(const std::string& key, const json& value) {
    try {
        if constexpr (std::is_same_v<T, double>) {
            if (!value.is_number()) throw ConfigError(key, "expected a number");
            return value.get<double>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!value.is_boolean()) throw ConfigError(key, "expected true or false");
            return value.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!value.is_string()) throw ConfigError(key, "expected a string");
            return value.get<std::string>();
        } else if constexpr (std::is_integral_v<T>) {
            if (value.is_number_unsigned()) return static_cast<T>(value.get<std::uint64_t>());
            if (value.is_number_integer()) {
                throw ConfigError(key, "expected a non-negative integer, got " + value.dump());
            }
            if (value.is_number_float()) {
                const double d = value.get<double>();
                if (d >= 0.0 && d == std::floor(d) && d < 1.8e19) return static_cast<T>(d);
            }
            throw ConfigError(key, "expected a non-negative integer, got " + value.dump());
        } else if constexpr (std::is_enum_v<T>) {
            if (!value.is_string()) throw ConfigError(key, "expected a string");
            const T parsed = value.get<T>();
            if (json(parsed) != value) throw ConfigError(key, "unknown value " + value.dump());
            return parsed;
        } else {
            static_assert(sizeof(T) == 0, "unsupported config type");
        }
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

template <class T>
std::vector<T> get_list(const std::string& key, const json& value) {
    if (!value.is_array()) throw ConfigError(key, "expected a list");
    std::vector<T> out;
    for (const auto& item : value) out.push_back(get_as<T>(key, item));
    return out;
}

inline std::string trim(std::string_view s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return std::string(s.substr(a, b - a));
}

// Splits "k: v, k2: [1, 2]\nk3 = x" at top-level commas and newlines.
// Bare words are kept as strings; bracketed lists of bare words become string lists.
inline json parse_scalar(const std::string& val) {
    json parsed = json::parse(val, nullptr, false);
    if (!parsed.is_discarded()) return parsed;
    if (val.size() >= 2 && val.front() == '[' && val.back() == ']') {
        json arr = json::array();
        std::string_view inner = std::string_view(val).substr(1, val.size() - 2);
        if (trim(inner).empty()) return arr;
        std::size_t start = 0;
        while (start <= inner.size()) {
            const auto comma = inner.find(',', start);
            const auto item = trim(inner.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
            json e = json::parse(item, nullptr, false);
            arr.push_back(e.is_discarded() ? json(item) : std::move(e));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return arr;
    }
    return json(val);
}

inline json parse_key_values(std::string_view text) {
    json obj = json::object();
    std::vector<std::string> pieces;
    std::string cur;
    int depth = 0;
    bool quoted = false;
    bool comment = false;
    for (char c : text) {
        if (comment && c != '\n') continue;
        comment = false;
        if (c == '#' && !quoted) {
            comment = true;
            continue;
        }
        if (c == '"') quoted = !quoted;
        if (!quoted) {
            if (c == '[' || c == '{') ++depth;
            if (c == ']' || c == '}') --depth;
            if ((c == ',' || c == '\n') && depth == 0) {
                pieces.push_back(cur);
                cur.clear();
                continue;
            }
        }
        cur.push_back(c);
    }
    pieces.push_back(cur);
    for (const auto& raw : pieces) {
        const std::string piece = trim(raw);
        if (piece.empty()) continue;
        const auto sep = piece.find_first_of(":=");
        if (sep == std::string::npos) throw ConfigError(piece, "expected 'key: value'");
        const std::string key = trim(std::string_view(piece).substr(0, sep));
        const std::string val = trim(std::string_view(piece).substr(sep + 1));
        if (key.empty()) throw ConfigError("", "empty key in '" + piece + "'");
        if (obj.contains(key)) throw ConfigError(key, "duplicate key");
        obj[key] = parse_scalar(val);
    }
    return obj;
}

inline json parse_text(std::string_view text) {
    const std::string t = trim(text);
    if (t.empty()) return json::object();
    if (t.front() == '{') {
        json j = json::parse(t, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ConfigError("", "malformed JSON config");
        return j;
    }
    return parse_key_values(t);
}

}  // namespace detail

/// Applies one key to the spec; throws ConfigError for unknown keys or type mismatches.
inline void apply_config_key(ExperimentSpec& s, const std::string& key, const json& v) {
    using detail::get_as;
    using detail::get_list;
    if (key == "name") s.name = get_as<std::string>(key, v);
    else if (key == "baseline") s.baseline = get_as<bool>(key, v);
    else if (key == "objective") s.objective = get_as<ObjectiveKind>(key, v);
    else if (key == "dim") s.dim = get_as<std::size_t>(key, v);
    else if (key == "condition_number") s.condition_number = get_as<double>(key, v);
    else if (key == "noise_scale") s.noise_scale = get_as<double>(key, v);
    else if (key == "init_scale") s.init_scale = get_as<double>(key, v);
    else if (key == "hidden_layers") s.hidden_layers = get_list<std::size_t>(key, v);
    else if (key == "activation") s.activation = get_as<Activation>(key, v);
    else if (key == "loss") s.loss = get_as<LossKind>(key, v);
    else if (key == "dataset") s.dataset = get_as<DatasetKind>(key, v);
    else if (key == "n_samples") s.n_samples = get_as<std::size_t>(key, v);
    else if (key == "n_features") s.n_features = get_as<std::size_t>(key, v);
    else if (key == "classes") s.classes = get_as<std::size_t>(key, v);
    else if (key == "data_noise") s.data_noise = get_as<double>(key, v);
    else if (key == "data_seed") s.data_seed = get_as<std::uint64_t>(key, v);
    else if (key == "optimizer") s.optimizer = get_as<OptimizerKind>(key, v);
    else if (key == "inner") s.inner = get_as<InnerKind>(key, v);
    else if (key == "lr") s.lr = get_as<double>(key, v);
    else if (key == "mu") s.mu = get_as<double>(key, v);
    else if (key == "beta1") s.beta1 = get_as<double>(key, v);
    else if (key == "beta2") s.beta2 = get_as<double>(key, v);
    else if (key == "eps") s.eps = get_as<double>(key, v);
    else if (key == "weight_decay") s.weight_decay = get_as<double>(key, v);
    else if (key == "gamma") s.gamma = get_as<double>(key, v);
    else if (key == "tau") s.tau = get_as<std::uint64_t>(key, v);
    else if (key == "steps") s.steps = get_as<std::uint64_t>(key, v);
    else if (key == "batch_size") s.batch_size = get_as<std::size_t>(key, v);
    else if (key == "seeds") s.seeds = get_list<std::uint64_t>(key, v);
    else if (key == "snapshot_stride") s.snapshot_stride = get_as<std::uint64_t>(key, v);
    else if (key == "metrics") s.metrics = get_list<std::string>(key, v);
    else if (key == "awd_window") s.awd_window = get_as<std::uint64_t>(key, v);
    else if (key == "awd_stride") s.awd_stride = get_as<std::uint64_t>(key, v);
    else if (key == "lookahead_s") s.lookahead_s = get_as<std::uint64_t>(key, v);
    else if (key == "fraction") s.fraction = get_as<double>(key, v);
    else if (key == "smooth_window") s.smooth_window = get_as<std::size_t>(key, v);
    else throw ConfigError(key, "unknown key");
}

/// Range and cross-field checks. Errors name the offending key.
inline void validate(const ExperimentSpec& s) {
    auto require = [](bool ok, const char* key, const std::string& msg) {
        if (!ok) throw ConfigError(key, msg);
    };
    auto finite = [](double x) { return std::isfinite(x); };

    require(finite(s.lr) && s.lr > 0.0, "lr", "must be > 0");
    require(finite(s.gamma) && s.gamma >= 0.0, "gamma", "must be >= 0");
    require(s.mu >= 0.0 && s.mu <= 1.0, "mu", "must be in [0, 1]");
    const bool sgd_overshoot = s.optimizer == OptimizerKind::sgdo ||
                               (s.optimizer == OptimizerKind::overshoot_wrap && s.inner == InnerKind::sgd_cm);
    require(!sgd_overshoot || s.mu > 0.0, "mu", "must be in (0, 1] for overshoot SGD");
    require(s.beta1 >= 0.0 && s.beta1 < 1.0, "beta1", "must be in [0, 1)");
    require(s.optimizer != OptimizerKind::adamo || s.gamma == 0.0 || s.beta1 > 0.0, "beta1",
            "must be in (0, 1) for adamo with gamma > 0");
    require(s.beta2 > 0.0 && s.beta2 < 1.0, "beta2", "must be in (0, 1)");
    require(finite(s.eps) && s.eps > 0.0, "eps", "must be > 0");
    require(finite(s.weight_decay) && s.weight_decay >= 0.0, "weight_decay", "must be >= 0");

    require(s.batch_size >= 1, "batch_size", "must be >= 1");
    require(s.snapshot_stride >= 1, "snapshot_stride", "must be >= 1");

    if (s.objective == ObjectiveKind::quadratic) {
        require(s.dim >= 1, "dim", "must be >= 1");
        require(finite(s.condition_number) && s.condition_number >= 1.0, "condition_number", "must be >= 1");
    }
    if (s.objective == ObjectiveKind::rosenbrock) require(s.dim >= 2, "dim", "must be >= 2 for rosenbrock");
    require(finite(s.noise_scale) && s.noise_scale >= 0.0, "noise_scale", "must be >= 0");
    require(finite(s.init_scale) && s.init_scale >= 0.0, "init_scale", "must be >= 0");
    if (s.objective == ObjectiveKind::mlp) {
        for (auto h : s.hidden_layers) require(h >= 1, "hidden_layers", "layer widths must be >= 1");
        require(s.n_samples >= 1, "n_samples", "must be >= 1");
        require(s.n_features >= 1, "n_features", "must be >= 1");
        require(finite(s.data_noise) && s.data_noise >= 0.0, "data_noise", "must be >= 0");
        require(s.dataset != DatasetKind::blobs || s.classes >= 2, "classes", "must be >= 2 for blobs");
        require(s.loss != LossKind::mse || s.dataset == DatasetKind::regression, "loss",
                "mse needs the regression dataset");
        require(s.loss != LossKind::cross_entropy || s.dataset == DatasetKind::blobs, "loss",
                "cross_entropy needs the blobs dataset");
    }

    for (const auto& m : s.metrics) {
        require(m == "update_cosine" || m == "awd" || m == "lookahead", "metrics", "unknown metric '" + m + "'");
    }
    require(s.awd_window >= 1, "awd_window", "must be >= 1");
    require(s.awd_stride >= 1, "awd_stride", "must be >= 1");
    require(s.lookahead_s >= 1, "lookahead_s", "must be >= 1");
    if (s.wants("awd")) {
        const double c = s.is_adam_family() ? s.beta1 : s.mu;
        require(c > 0.0 && c < 1.0, s.is_adam_family() ? "beta1" : "mu", "awd weighting needs a coefficient in (0, 1)");
    }
    require(s.fraction > 0.0 && s.fraction < 1.0, "fraction", "must be in (0, 1)");
    require(s.smooth_window >= 1, "smooth_window", "must be >= 1");
}

inline ExperimentSpec spec_from_json(const json& obj, ExperimentSpec base = {}) {
    if (!obj.is_object()) throw ConfigError("", "config must be an object");
    for (const auto& [key, value] : obj.items()) apply_config_key(base, key, value);
    validate(base);
    return base;
}

/// Parses a config into a fully defaulted, validated spec.
inline ExperimentSpec parse_config(std::string_view text) {
    const json obj = detail::parse_text(text);
    if (obj.contains("variants")) throw ConfigError("variants", "only valid in comparison configs");
    return spec_from_json(obj);
}

/// Comparison config: shared keys at top level plus "variants", a list of
/// objects overriding them. At least one variant must set "baseline": true.
inline ComparisonSpec parse_comparison_config(std::string_view text) {
    json obj = detail::parse_text(text);
    if (!obj.contains("variants")) throw ConfigError("variants", "missing");
    const json variants = obj["variants"];
    obj.erase("variants");
    if (!variants.is_array() || variants.empty()) throw ConfigError("variants", "expected a non-empty list");

    ComparisonSpec out;
    ExperimentSpec shared;
    for (const auto& [key, value] : obj.items()) apply_config_key(shared, key, value);
    out.base = shared;
    bool has_baseline = false;
    for (const auto& v : variants) {
        ExperimentSpec spec = spec_from_json(v, shared);
        has_baseline = has_baseline || spec.baseline;
        out.variants.push_back(std::move(spec));
    }
    if (!has_baseline) throw ConfigError("baseline", "no variant is flagged as baseline");
    return out;
}

inline json spec_to_json(const ExperimentSpec& s) {
    return json{{"name", s.name},
                {"baseline", s.baseline},
                {"objective", s.objective},
                {"dim", s.dim},
                {"condition_number", s.condition_number},
                {"noise_scale", s.noise_scale},
                {"init_scale", s.init_scale},
                {"hidden_layers", s.hidden_layers},
                {"activation", s.activation},
                {"loss", s.loss},
                {"dataset", s.dataset},
                {"n_samples", s.n_samples},
                {"n_features", s.n_features},
                {"classes", s.classes},
                {"data_noise", s.data_noise},
                {"data_seed", s.data_seed},
                {"optimizer", s.optimizer},
                {"inner", s.inner},
                {"lr", s.lr},
                {"mu", s.mu},
                {"beta1", s.beta1},
                {"beta2", s.beta2},
                {"eps", s.eps},
                {"weight_decay", s.weight_decay},
                {"gamma", s.gamma},
                {"tau", s.tau},
                {"steps", s.steps},
                {"batch_size", s.batch_size},
                {"seeds", s.seeds},
                {"snapshot_stride", s.snapshot_stride},
                {"metrics", s.metrics},
                {"awd_window", s.awd_window},
                {"awd_stride", s.awd_stride},
                {"lookahead_s", s.lookahead_s},
                {"fraction", s.fraction},
                {"smooth_window", s.smooth_window}};
}

// ---------------------------------------------------------------------------
// Simulation config

inline SimulationSpec parse_simulation_config(std::string_view text) {
    using detail::get_as;
    using detail::get_list;
    SimulationSpec s;
    const json obj = detail::parse_text(text);
    for (const auto& [key, v] : obj.items()) {
        if (key == "dim") s.dim = get_as<std::size_t>(key, v);
        else if (key == "steps") s.steps = get_as<std::uint64_t>(key, v);
        else if (key == "mu_grid") s.mu_grid = get_list<double>(key, v);
        else if (key == "gamma_grid") s.gamma_grid = get_list<double>(key, v);
        else if (key == "lr") s.lr = get_as<double>(key, v);
        else if (key == "seed") s.seed = get_as<std::uint64_t>(key, v);
        else if (key == "window") s.window = get_as<std::uint64_t>(key, v);
        else if (key == "stride") s.stride = get_as<std::uint64_t>(key, v);
        else throw ConfigError(key, "unknown key");
    }
    try {
        s.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("", e.what());
    }
    return s;
}

inline json simulation_spec_to_json(const SimulationSpec& s) {
    return json{{"dim", s.dim},         {"steps", s.steps},   {"mu_grid", s.mu_grid}, {"gamma_grid", s.gammas()},
                {"lr", s.lr},           {"seed", s.seed},     {"window", s.window},   {"stride", s.stride}};
}

}  // namespace overshoot
