#pragma once
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>
#include <nlohmann/json.hpp>
#include <mtlasso/datagen.hpp>
#include <mtlasso/solver.hpp>

namespace mtlasso {

/// "paper35": 3.5 sqrt(ln(p-s) ln s / n); otherwise a fixed value.
struct LambdaRule
{
    std::optional<double> fixed;

    double operator()(Index p, Index s, Index n) const { return fixed ? *fixed : lambda_rule(p, s, n); }
};

/// Sample sizes per curve: explicit, or `points` log-spaced theta values in
/// [theta_min, theta_max] mapped to n = round(theta * 2 psi ln(p - s)).
struct NGrid
{
    std::vector<Index> explicit_n;
    double theta_min = 0.25;
    double theta_max = 4.0;
    int points = 24;

    bool is_explicit() const { return !explicit_n.empty(); }

    std::vector<Index> resolve(double psi_val, Index p, Index s) const
    {
        if (is_explicit()) return explicit_n;
        const double base = 2.0 * psi_val * std::log(static_cast<double>(p - s));
        std::vector<Index> ns;
        for (int i = 0; i < points; ++i) {
            const double frac = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
            const double theta = theta_min * std::pow(theta_max / theta_min, frac);
            const Index n = std::max<Index>(1, static_cast<Index>(std::llround(theta * base)));
            if (ns.empty() || n != ns.back()) ns.push_back(n);
        }
        return ns;
    }
};

/**
 * Experiment configuration (JSON). Keys:
 *
 *   p                  int or list of ints
 *   K                  int or list of ints
 *   alpha | s          optional; alpha * p must be a positive integer
 *   coefficient_model  object or list of objects:
 *                        {"kind": "identical_uniform" | "varying_same_support" | "overlap_model",
 *                         "support_rule": "stride_8" | "stride_16_pair" | "disjoint_16" |
 *                                         "overlap_24" | "custom",
 *                         "perturbation": 0.0625, "scale": <default 1/sqrt(K)>,
 *                         "supports": [[0-based indices], ...]}   (custom only)
 *                      a bare string is shorthand for {"kind": <string>}
 *   covariance_model   "identity" | "tridiag_shared" | "tridiag_per_task" or
 *                      {"kind": ..., "shared_offdiag": 1, "odd_gain": 1, "even_gain": 0.8}
 *   sigma_w            number or per-task list (default 0.5)
 *   spd_floor          default 0.05
 *   lambda_rule        "paper35" | number | {"fixed": number}
 *   n_grid             list of ints, or {"theta_min", "theta_max", "points"}
 *   trials             default 100
 *   base_seed          default 1
 *   v                  threshold slack, default 0.1
 *   solver             {"tol": 1e-6, "max_iters": 10000}
 */
struct ExperimentConfig
{
    std::vector<Index> p_list{128};
    std::vector<Index> K_list{2};
    std::optional<double> alpha;
    std::optional<Index> s;
    std::vector<CoefficientModel> coefficient_models{CoefficientModel{}};
    CovarianceModel covariance_model{};
    std::vector<double> sigma_w{default_sigma_w};
    double spd_floor = default_spd_floor;
    LambdaRule lambda_rule{};
    NGrid n_grid{};
    int trials = 100;
    std::uint64_t base_seed = 1;
    double v = 0.1;
    SolverConfig solver{};

    NoiseSpec noise_for(Index K) const
    {
        if (sigma_w.size() == 1) return NoiseSpec::uniform(K, sigma_w.front());
        if (static_cast<Index>(sigma_w.size()) != K) {
            throw ConfigError("sigma_w has " + std::to_string(sigma_w.size()) + " entries but K=" +
                              std::to_string(K));
        }
        return NoiseSpec{sigma_w};
    }

    void validate() const
    {
        if (p_list.empty() || K_list.empty()) throw ConfigError("config: p and K must be nonempty");
        for (Index p : p_list) {
            if (p < 2) throw ConfigError("config: p must be >= 2");
            if (alpha) {
                const double sp = *alpha * static_cast<double>(p);
                if (!(sp >= 1.0) || std::abs(sp - std::round(sp)) > 1e-9) {
                    throw ConfigError("config: alpha * p must be a positive integer (p=" +
                                      std::to_string(p) + ")");
                }
            }
            if (s && (*s < 1 || *s >= p)) throw ConfigError("config: need 1 <= s < p");
        }
        for (Index K : K_list) {
            if (K < 1) throw ConfigError("config: K must be >= 1");
        }
        if (coefficient_models.empty()) throw ConfigError("config: no coefficient model");
        if (trials < 1) throw ConfigError("config: trials must be >= 1");
        if (!(spd_floor > 0.0)) throw ConfigError("config: spd_floor must be positive");
        for (double sw : sigma_w) {
            if (!(sw >= 0.0)) throw ConfigError("config: sigma_w must be >= 0");
        }
        if (lambda_rule.fixed && !(*lambda_rule.fixed > 0.0)) throw ConfigError("config: lambda must be > 0");
        if (n_grid.is_explicit()) {
            for (Index n : n_grid.explicit_n) {
                if (n < 1) throw ConfigError("config: n_grid entries must be >= 1");
            }
        } else if (!(n_grid.theta_min > 0.0 && n_grid.theta_max >= n_grid.theta_min && n_grid.points >= 1)) {
            throw ConfigError("config: bad theta grid");
        }
        if (!(v > 0.0 && v < 1.0)) throw ConfigError("config: v must be in (0, 1)");
        if (!(solver.tol > 0.0) || solver.max_iters < 1) throw ConfigError("config: bad solver settings");
    }
};

namespace detail {

using json = nlohmann::json;

inline std::vector<Index> int_or_list(const json& j, const char* key)
{
    if (j.is_number_integer()) return {j.get<Index>()};
    if (j.is_array()) return j.get<std::vector<Index>>();
    throw ConfigError(std::string("config: '") + key + "' must be an integer or a list");
}

inline CoefficientKind parse_coefficient_kind(const std::string& s)
{
    if (s == "identical_uniform") return CoefficientKind::identical_uniform;
    if (s == "varying_same_support") return CoefficientKind::varying_same_support;
    if (s == "overlap_model") return CoefficientKind::overlap_model;
    throw ConfigError("config: unknown coefficient model kind '" + s + "'");
}

inline SupportRule parse_support_rule(const std::string& s)
{
    if (s == "stride_8") return SupportRule::stride_8;
    if (s == "stride_16_pair") return SupportRule::stride_16_pair;
    if (s == "disjoint_16") return SupportRule::disjoint_16;
    if (s == "overlap_24") return SupportRule::overlap_24;
    if (s == "custom") return SupportRule::custom;
    throw ConfigError("config: unknown support rule '" + s + "'");
}

inline CovarianceKind parse_covariance_kind(const std::string& s)
{
    if (s == "identity") return CovarianceKind::identity;
    if (s == "tridiag_shared") return CovarianceKind::tridiag_shared;
    if (s == "tridiag_per_task") return CovarianceKind::tridiag_per_task;
    throw ConfigError("config: unknown covariance model '" + s + "'");
}

inline CoefficientModel parse_coefficient_model(const json& j)
{
    CoefficientModel m;
    if (j.is_string()) {
        m.kind = parse_coefficient_kind(j.get<std::string>());
        if (m.kind == CoefficientKind::varying_same_support) m.support_rule = SupportRule::stride_16_pair;
        return m;
    }
    m.kind = parse_coefficient_kind(j.at("kind").get<std::string>());
    if (m.kind == CoefficientKind::varying_same_support) m.support_rule = SupportRule::stride_16_pair;
    if (j.contains("support_rule")) m.support_rule = parse_support_rule(j["support_rule"].get<std::string>());
    if (j.contains("perturbation")) m.perturbation = j["perturbation"].get<double>();
    if (j.contains("scale")) m.scale = j["scale"].get<double>();
    if (j.contains("supports")) {
        for (const auto& s : j["supports"]) {
            IndexSet set = s.get<IndexSet>();
            m.custom_supports.push_back(std::move(set));
        }
    }
    return m;
}

} // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j)
{
    using detail::json;
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    static const std::vector<std::string> known{"p", "K", "alpha", "s", "coefficient_model", "covariance_model",
                                                "sigma_w", "spd_floor", "lambda_rule", "n_grid", "trials",
                                                "base_seed", "v", "solver", "description"};
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw ConfigError("config: unknown key '" + item.key() + "'");
        }
    }
    ExperimentConfig c;
    try {
        if (j.contains("p")) c.p_list = detail::int_or_list(j["p"], "p");
        if (j.contains("K")) c.K_list = detail::int_or_list(j["K"], "K");
        if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
        if (j.contains("s")) c.s = j["s"].get<Index>();
        if (j.contains("coefficient_model")) {
            c.coefficient_models.clear();
            const auto& cm = j["coefficient_model"];
            if (cm.is_array()) {
                for (const auto& m : cm) c.coefficient_models.push_back(detail::parse_coefficient_model(m));
            } else {
                c.coefficient_models.push_back(detail::parse_coefficient_model(cm));
            }
        }
        if (j.contains("covariance_model")) {
            const auto& cv = j["covariance_model"];
            if (cv.is_string()) {
                c.covariance_model.kind = detail::parse_covariance_kind(cv.get<std::string>());
            } else {
                c.covariance_model.kind = detail::parse_covariance_kind(cv.at("kind").get<std::string>());
                c.covariance_model.shared_offdiag = cv.value("shared_offdiag", c.covariance_model.shared_offdiag);
                c.covariance_model.odd_gain = cv.value("odd_gain", c.covariance_model.odd_gain);
                c.covariance_model.even_gain = cv.value("even_gain", c.covariance_model.even_gain);
            }
        }
        if (j.contains("sigma_w")) {
            const auto& sw = j["sigma_w"];
            c.sigma_w = sw.is_array() ? sw.get<std::vector<double>>() : std::vector<double>{sw.get<double>()};
        }
        if (j.contains("spd_floor")) c.spd_floor = j["spd_floor"].get<double>();
        if (j.contains("lambda_rule")) {
            const auto& lr = j["lambda_rule"];
            if (lr.is_string()) {
                if (lr.get<std::string>() != "paper35") throw ConfigError("config: unknown lambda_rule");
            } else if (lr.is_number()) {
                c.lambda_rule.fixed = lr.get<double>();
            } else {
                c.lambda_rule.fixed = lr.at("fixed").get<double>();
            }
        }
        if (j.contains("n_grid")) {
            const auto& g = j["n_grid"];
            if (g.is_array()) {
                c.n_grid.explicit_n = g.get<std::vector<Index>>();
            } else {
                c.n_grid.theta_min = g.value("theta_min", c.n_grid.theta_min);
                c.n_grid.theta_max = g.value("theta_max", c.n_grid.theta_max);
                c.n_grid.points = g.value("points", c.n_grid.points);
            }
        }
        if (j.contains("trials")) c.trials = j["trials"].get<int>();
        if (j.contains("base_seed")) c.base_seed = j["base_seed"].get<std::uint64_t>();
        if (j.contains("v")) c.v = j["v"].get<double>();
        if (j.contains("solver")) {
            c.solver.tol = j["solver"].value("tol", c.solver.tol);
            c.solver.max_iters = j["solver"].value("max_iters", c.solver.max_iters);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig parse_experiment_config(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return parse_experiment_config(j);
}

} // namespace mtlasso
