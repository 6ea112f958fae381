#pragma once
#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>
#include <nlohmann/json.hpp>
#include <mtlasso/config.hpp>
#include <mtlasso/datagen.hpp>
#include <mtlasso/io.hpp>
#include <mtlasso/model.hpp>
#include <mtlasso/random.hpp>
#include <mtlasso/solver.hpp>
#include <mtlasso/theory.hpp>

namespace mtlasso {

/// Theory values attached to one (p, K, model) curve.
struct ThresholdOverlay
{
    double psi = 0.0;
    double gamma = 0.0;
    double rho_u = 0.0;
    std::optional<double> rho_l;
    std::optional<double> n_achievability;
    std::optional<double> n_converse;
};

/// One (p, K, coefficient model) curve of a sweep, with its fixed truth and covariances.
struct Curve
{
    Index p = 0;
    Index K = 0;
    CoefficientModel coefficient_model;
    CovarianceModel covariance_model;
    GroundTruth truth;
    std::shared_ptr<const CovarianceSet> covariances;
    NoiseSpec noise;
    ThresholdOverlay overlay;
    std::vector<Index> n_values;
    std::optional<Index> declared_s;

    Index s() const { return truth.sparsity(); }
};

struct SweepRow
{
    std::size_t curve = 0;
    Index p = 0;
    Index K = 0;
    std::string coefficient_model;
    std::string support_rule;
    std::string covariance_model;
    Index s = 0;
    double psi = 0.0;
    Index n = 0;
    double lambda = 0.0;
    double theta_psi = 0.0;
    double theta_slog = 0.0;
    int trials = 0;
    int successes = 0;
    int nonconverged = 0;
    double success_prob = 0.0;
    double mean_linf_l2_error = 0.0;
    double mean_solve_iters = 0.0;
};

struct SweepResult
{
    std::vector<Curve> curves;
    std::vector<SweepRow> rows;
};

inline std::vector<Curve> build_curves(const ExperimentConfig& config)
{
    config.validate();
    std::vector<Curve> curves;
    for (Index p : config.p_list) {
        for (Index K : config.K_list) {
            auto covs = std::make_shared<const CovarianceSet>(
                build_covariance(config.covariance_model, p, K, config.spd_floor));
            for (const CoefficientModel& model : config.coefficient_models) {
                Curve c;
                c.p = p;
                c.K = K;
                c.coefficient_model = model;
                c.covariance_model = config.covariance_model;
                c.truth = build_truth(model, p, K);
                c.covariances = covs;
                c.noise = config.noise_for(K);
                if (config.s) {
                    c.declared_s = *config.s;
                } else if (config.alpha) {
                    c.declared_s = static_cast<Index>(std::llround(*config.alpha * static_cast<double>(p)));
                }
                const IndexSet& S = c.truth.support_union;
                if (c.s() >= p) throw ConfigError("sweep: support fills every feature (p=" + std::to_string(p) + ")");
                c.overlay.psi = theory::psi(c.truth.b_star.values, *covs, S);
                const auto irr = theory::irrepresentability(*covs, S);
                const auto rb = theory::rho_bounds(*covs, S);
                c.overlay.gamma = irr.gamma;
                c.overlay.rho_u = rb.rho_u;
                c.overlay.rho_l = rb.rho_l;
                if (irr.gamma > 0.0) {
                    const double rho_l = rb.rho_l.value_or(0.0);
                    const auto th = theory::thresholds(c.overlay.psi, p, c.s(), rb.rho_u, rho_l, irr.gamma, config.v);
                    c.overlay.n_achievability = th.n_achievability;
                    if (rb.rho_l) c.overlay.n_converse = th.n_converse;
                }
                c.n_values = config.n_grid.resolve(c.overlay.psi, p, c.s());
                curves.push_back(std::move(c));
            }
        }
    }
    return curves;
}

namespace detail {

struct TrialOutcome
{
    bool success = false;
    bool converged = false;
    double linf_error = 0.0;
    int iterations = 0;
};

inline double theta_psi_of(Index n, double psi_val, Index p, Index s)
{
    return static_cast<double>(n) / (2.0 * psi_val * std::log(static_cast<double>(p - s)));
}

inline double theta_slog_of(Index n, Index p, Index s)
{
    return static_cast<double>(n) / (static_cast<double>(s) * std::log(static_cast<double>(p - s)));
}

} // namespace detail

enum class AxisMode { theta_psi, theta_slog };

/// Fills theta_psi = n / (2 psi ln(p-s)) and theta_slog = n / (s ln(p-s)) on every row.
inline void rescale_axis(SweepResult& result)
{
    for (SweepRow& r : result.rows) {
        r.theta_psi = detail::theta_psi_of(r.n, r.psi, r.p, r.s);
        r.theta_slog = detail::theta_slog_of(r.n, r.p, r.s);
    }
}

inline double axis_value(const SweepRow& r, AxisMode mode)
{
    return mode == AxisMode::theta_psi ? r.theta_psi : r.theta_slog;
}

/**
 * Monte-Carlo sweep over every (curve, n) cell. Cells are numbered in curve
 * order, then n order; trial t of cell c uses derive_trial_seed(base_seed, c, t).
 * Trials run on `jobs` threads and are aggregated in index order, so the
 * result does not depend on `jobs`.
 */
inline SweepResult run_sweep(const ExperimentConfig& config, unsigned jobs = 1)
{
    SweepResult result;
    result.curves = build_curves(config);

    struct CellRef
    {
        std::size_t curve;
        Index n;
        double lambda;
    };
    std::vector<CellRef> cells;
    for (std::size_t ci = 0; ci < result.curves.size(); ++ci) {
        const Curve& c = result.curves[ci];
        for (Index n : c.n_values) cells.push_back({ci, n, config.lambda_rule(c.p, c.s(), n)});
    }

    const auto trials = static_cast<std::size_t>(config.trials);
    const std::size_t total = cells.size() * trials;
    std::vector<detail::TrialOutcome> outcomes(total);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= total) return;
            const std::size_t cell = idx / trials;
            const std::size_t trial = idx % trials;
            try {
                const CellRef& ref = cells[cell];
                const Curve& c = result.curves[ref.curve];
                const auto seed = derive_trial_seed(config.base_seed, cell, trial);
                const MvmrProblem problem = sample_problem(c.truth, *c.covariances, c.noise, ref.n, seed);
                const SolveReport rep = solve(problem, ref.lambda, config.solver);
                const RecoveryResult rec = recovery_check(rep.estimate.values, c.truth, 0.0);
                auto& out = outcomes[idx];
                out.converged = rep.converged;
                out.success = rep.converged && rec.support_match;
                out.linf_error = rec.linf_l2_error;
                out.iterations = rep.iterations;
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
            }
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(total, 1))));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    for (std::size_t cell = 0; cell < cells.size(); ++cell) {
        const CellRef& ref = cells[cell];
        const Curve& c = result.curves[ref.curve];
        SweepRow row;
        row.curve = ref.curve;
        row.p = c.p;
        row.K = c.K;
        row.coefficient_model = std::string(to_string(c.coefficient_model.kind));
        row.support_rule = std::string(to_string(c.coefficient_model.support_rule));
        row.covariance_model = std::string(to_string(c.covariance_model.kind));
        row.s = c.s();
        row.psi = c.overlay.psi;
        row.n = ref.n;
        row.lambda = ref.lambda;
        row.trials = config.trials;
        double err = 0.0;
        double iters = 0.0;
        for (std::size_t t = 0; t < trials; ++t) {
            const auto& o = outcomes[cell * trials + t];
            row.successes += o.success ? 1 : 0;
            row.nonconverged += o.converged ? 0 : 1;
            err += o.linf_error;
            iters += o.iterations;
        }
        row.success_prob = static_cast<double>(row.successes) / static_cast<double>(row.trials);
        row.mean_linf_l2_error = err / static_cast<double>(trials);
        row.mean_solve_iters = iters / static_cast<double>(trials);
        result.rows.push_back(std::move(row));
    }
    rescale_axis(result);
    return result;
}

struct Crossing
{
    bool defined = false;
    double n = 0.0;
    double theta_psi = 0.0;
    double theta_slog = 0.0;
    /// Binomial standard error of the crossing in n: sqrt(level(1-level)/trials) / slope.
    double n_stderr = 0.0;
    std::string reason;
};

/**
 * First upward crossing of `level` along a curve, by linear interpolation
 * between the last grid point below the level and the next one at or above it.
 * Undefined when the curve never reaches the level or starts at or above it.
 */
inline Crossing crossing_of(const std::vector<const SweepRow*>& rows, double level)
{
    if (!(level > 0.0 && level < 1.0)) throw DomainError("crossing_point: level must be in (0, 1)");
    Crossing c;
    if (rows.empty()) {
        c.reason = "empty curve";
        return c;
    }
    if (rows.front()->success_prob >= level) {
        c.reason = "curve starts at or above level";
        return c;
    }
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const SweepRow& a = *rows[i - 1];
        const SweepRow& b = *rows[i];
        if (a.success_prob < level && b.success_prob >= level) {
            const double w = (level - a.success_prob) / (b.success_prob - a.success_prob);
            c.defined = true;
            c.n = static_cast<double>(a.n) + w * static_cast<double>(b.n - a.n);
            c.theta_psi = a.theta_psi + w * (b.theta_psi - a.theta_psi);
            c.theta_slog = a.theta_slog + w * (b.theta_slog - a.theta_slog);
            const double slope = (b.success_prob - a.success_prob) / static_cast<double>(b.n - a.n);
            c.n_stderr = std::sqrt(level * (1.0 - level) / static_cast<double>(b.trials)) / slope;
            return c;
        }
    }
    c.reason = "curve never reaches level";
    return c;
}

/// One Crossing per curve, in curve order.
inline std::vector<Crossing> crossing_point(const SweepResult& result, double level)
{
    std::vector<Crossing> out;
    for (std::size_t ci = 0; ci < result.curves.size(); ++ci) {
        std::vector<const SweepRow*> rows;
        for (const SweepRow& r : result.rows) {
            if (r.curve == ci) rows.push_back(&r);
        }
        std::sort(rows.begin(), rows.end(), [](const SweepRow* a, const SweepRow* b) { return a->n < b->n; });
        out.push_back(crossing_of(rows, level));
    }
    return out;
}

inline constexpr const char* sweep_csv_header =
    "p,K,coefficient_model,support_rule,covariance_model,s,psi,n,lambda,theta_psi,theta_slog,trials,"
    "successes,nonconverged,success_prob,mean_linf_l2_error,mean_solve_iters";

inline std::string sweep_csv(const SweepResult& result)
{
    using io::format_double;
    std::string out = sweep_csv_header;
    out += '\n';
    for (const SweepRow& r : result.rows) {
        out += std::to_string(r.p) + ',' + std::to_string(r.K) + ',' + r.coefficient_model + ',' + r.support_rule +
               ',' + r.covariance_model + ',' + std::to_string(r.s) + ',' + format_double(r.psi) + ',' +
               std::to_string(r.n) + ',' + format_double(r.lambda) + ',' + format_double(r.theta_psi) + ',' +
               format_double(r.theta_slog) + ',' + std::to_string(r.trials) + ',' + std::to_string(r.successes) +
               ',' + std::to_string(r.nonconverged) + ',' + format_double(r.success_prob) + ',' +
               format_double(r.mean_linf_l2_error) + ',' + format_double(r.mean_solve_iters) + '\n';
    }
    return out;
}

inline nlohmann::json to_json(const ThresholdOverlay& o)
{
    return nlohmann::json{{"psi", o.psi},
                          {"gamma", o.gamma},
                          {"rho_u", o.rho_u},
                          {"rho_l", io::optional_json(o.rho_l)},
                          {"n_achievability", io::optional_json(o.n_achievability)},
                          {"n_converse", io::optional_json(o.n_converse)}};
}

inline nlohmann::json sweep_json(const SweepResult& result)
{
    nlohmann::json rows = nlohmann::json::array();
    for (const SweepRow& r : result.rows) {
        rows.push_back({{"p", r.p},
                        {"K", r.K},
                        {"coefficient_model", r.coefficient_model},
                        {"support_rule", r.support_rule},
                        {"covariance_model", r.covariance_model},
                        {"s", r.s},
                        {"psi", r.psi},
                        {"n", r.n},
                        {"lambda", r.lambda},
                        {"theta_psi", r.theta_psi},
                        {"theta_slog", r.theta_slog},
                        {"trials", r.trials},
                        {"successes", r.successes},
                        {"nonconverged", r.nonconverged},
                        {"success_prob", r.success_prob},
                        {"mean_linf_l2_error", r.mean_linf_l2_error},
                        {"mean_solve_iters", r.mean_solve_iters}});
    }
    nlohmann::json curves = nlohmann::json::array();
    for (const Curve& c : result.curves) {
        curves.push_back({{"p", c.p},
                          {"K", c.K},
                          {"coefficient_model", std::string(to_string(c.coefficient_model.kind))},
                          {"support_rule", std::string(to_string(c.coefficient_model.support_rule))},
                          {"covariance_model", std::string(to_string(c.covariance_model.kind))},
                          {"s", c.s()},
                          {"spd_shifts", c.covariances->shifts()},
                          {"threshold_overlay", to_json(c.overlay)}});
    }
    nlohmann::json columns = nlohmann::json::array();
    std::istringstream header(sweep_csv_header);
    for (std::string col; std::getline(header, col, ',');) columns.push_back(col);
    return nlohmann::json{{"columns", std::move(columns)},
                          {"rows", std::move(rows)},
                          {"curves", std::move(curves)}};
}

namespace detail {

inline std::string fmt(double v, int digits = 4)
{
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os.precision(digits);
    os << v;
    return os.str();
}

inline std::string fmt(const std::optional<double>& v, int digits = 4) { return v ? fmt(*v, digits) : "n/a"; }

inline std::string crossing_cell(const Crossing& c)
{
    if (!c.defined) return "undefined (" + c.reason + ")";
    return "n=" + fmt(c.n) + " +/- " + fmt(c.n_stderr, 3) + ", theta_psi=" + fmt(c.theta_psi) +
           ", theta_slog=" + fmt(c.theta_slog);
}

} // namespace detail

inline std::string sweep_report(const SweepResult& result, const ExperimentConfig& config)
{
    using detail::fmt;
    std::ostringstream os;
    os.imbue(std::locale::classic());
    os << "# Sweep report\n\n";
    os << "trials per cell: " << config.trials << ", base_seed: " << config.base_seed << ", v: " << fmt(config.v)
       << ", rng: " << NormalStream::algorithm_id << "\n\n";
    os << "## Threshold overlays\n\n";
    os << "| curve | p | K | coefficient model | support rule | covariance | s | psi | gamma | rho_u | rho_l | "
          "n_achievability | n_converse | SPD shift |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < result.curves.size(); ++i) {
        const Curve& c = result.curves[i];
        const auto& sh = c.covariances->shifts();
        const double max_shift = sh.empty() ? 0.0 : *std::max_element(sh.begin(), sh.end());
        os << "| " << i << " | " << c.p << " | " << c.K << " | " << to_string(c.coefficient_model.kind) << " | "
           << to_string(c.coefficient_model.support_rule) << " | " << to_string(c.covariance_model.kind) << " | "
           << c.s() << " | " << fmt(c.overlay.psi) << " | " << fmt(c.overlay.gamma) << " | "
           << fmt(c.overlay.rho_u) << " | " << fmt(c.overlay.rho_l) << " | " << fmt(c.overlay.n_achievability)
           << " | " << fmt(c.overlay.n_converse) << " | "
           << (c.covariances->shifted() ? "yes (max " + fmt(max_shift) + ")" : std::string("no")) << " |\n";
    }
    bool mismatch = false;
    for (const Curve& c : result.curves) mismatch = mismatch || (c.declared_s && *c.declared_s != c.s());
    if (mismatch) {
        os << "\nNote: the declared sparsity differs from the support rule for some curves; the rule's s is used:\n";
        for (std::size_t i = 0; i < result.curves.size(); ++i) {
            const Curve& c = result.curves[i];
            if (c.declared_s && *c.declared_s != c.s()) {
                os << "- curve " << i << ": declared s=" << *c.declared_s << ", rule gives s=" << c.s() << "\n";
            }
        }
    }
    for (double level : {0.5, 0.8}) {
        const auto cross = crossing_point(result, level);
        os << "\n## Crossings at success level " << fmt(level) << "\n\n";
        for (std::size_t i = 0; i < cross.size(); ++i) {
            os << "- curve " << i << ": " << detail::crossing_cell(cross[i]) << "\n";
        }
    }
    int nonconv = 0;
    for (const SweepRow& r : result.rows) nonconv += r.nonconverged;
    os << "\nNon-converged solves (counted as failures): " << nonconv << "\n";
    return os.str();
}

} // namespace mtlasso
