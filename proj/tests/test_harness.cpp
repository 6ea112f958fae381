#include <cmath>
#include <gtest/gtest.h>
#include <mtlasso/harness.hpp>

using namespace mtlasso;

namespace {

ExperimentConfig small_config(const std::string& extra = "")
{
    return parse_experiment_config(R"({"p": 32, "K": 2, "covariance_model": "identity",
        "coefficient_model": "identical_uniform", "n_grid": [8, 40, 120], "trials": 6, "base_seed": 7)" +
                                   extra + "}");
}

SweepRow row_at(Index n, double prob, double theta)
{
    SweepRow r;
    r.n = n;
    r.success_prob = prob;
    r.theta_psi = theta;
    r.theta_slog = 2 * theta;
    r.trials = 100;
    return r;
}

} // namespace

TEST(Config, DefaultsAndParsing)
{
    const auto c = parse_experiment_config(std::string("{}"));
    EXPECT_EQ(c.p_list, std::vector<Index>{128});
    EXPECT_EQ(c.trials, 100);
    EXPECT_DOUBLE_EQ(c.sigma_w.front(), 0.5);
    EXPECT_FALSE(c.lambda_rule.fixed.has_value());

    const auto d = parse_experiment_config(std::string(R"({"p": [64, 128], "K": [1, 2, 4], "alpha": 0.125,
        "coefficient_model": [{"kind": "overlap_model", "support_rule": "disjoint_16"}, "varying_same_support"],
        "covariance_model": {"kind": "tridiag_shared", "shared_offdiag": 0.5}, "lambda_rule": 0.3,
        "n_grid": {"theta_min": 1, "theta_max": 2, "points": 3}, "solver": {"tol": 1e-8}})"));
    EXPECT_EQ(d.K_list.size(), 3u);
    ASSERT_EQ(d.coefficient_models.size(), 2u);
    EXPECT_EQ(d.coefficient_models[0].support_rule, SupportRule::disjoint_16);
    EXPECT_EQ(d.coefficient_models[1].support_rule, SupportRule::stride_16_pair);
    EXPECT_EQ(d.covariance_model.shared_offdiag, 0.5);
    EXPECT_EQ(*d.lambda_rule.fixed, 0.3);
    EXPECT_EQ(d.lambda_rule(128, 16, 200), 0.3);
    EXPECT_EQ(d.solver.tol, 1e-8);
    EXPECT_EQ(d.n_grid.points, 3);
}

TEST(Config, Errors)
{
    const auto bad = [](const char* text) { return parse_experiment_config(std::string(text)); };
    EXPECT_THROW(bad(R"({"p": 100, "alpha": 0.125})"), ConfigError);
    EXPECT_THROW(bad(R"({"bogus": 1})"), ConfigError);
    EXPECT_THROW(bad(R"({"trials": 0})"), ConfigError);
    EXPECT_THROW(bad(R"({"covariance_model": "banded"})"), ConfigError);
    EXPECT_THROW(bad(R"({"coefficient_model": {"kind": "x"}})"), ConfigError);
    EXPECT_THROW(bad(R"({"p": "many"})"), ConfigError);
    EXPECT_THROW(bad(R"({"v": 1.5})"), ConfigError);
    EXPECT_THROW(bad(R"({"lambda_rule": "other"})"), ConfigError);
    EXPECT_THROW(bad("{not json"), ConfigError);
    EXPECT_THROW(bad("[1, 2]"), ConfigError);
    ExperimentConfig c;
    c.sigma_w = {0.1, 0.2, 0.3};
    EXPECT_THROW(c.noise_for(2), ConfigError);
}

TEST(NGrid, ResolveThetaGrid)
{
    NGrid g;
    g.theta_min = 1.0;
    g.theta_max = 4.0;
    g.points = 3;
    const double base = 2.0 * 8.0 * std::log(112.0);
    const auto ns = g.resolve(8.0, 128, 16);
    ASSERT_EQ(ns.size(), 3u);
    EXPECT_EQ(ns[0], std::llround(base));
    EXPECT_EQ(ns[1], std::llround(2 * base));
    EXPECT_EQ(ns[2], std::llround(4 * base));
    g.explicit_n = {5, 10};
    EXPECT_EQ(g.resolve(8.0, 128, 16), (std::vector<Index>{5, 10}));
}

TEST(RescaleAxis, Examples)
{
    SweepResult r;
    SweepRow row;
    row.n = 200;
    row.psi = 8;
    row.p = 128;
    row.s = 16;
    r.rows.push_back(row);
    rescale_axis(r);
    EXPECT_NEAR(r.rows[0].theta_psi, 200.0 / (16 * std::log(112.0)), 1e-14);
    EXPECT_NEAR(r.rows[0].theta_psi, 2.649, 1e-3);
    EXPECT_NEAR(r.rows[0].theta_slog, r.rows[0].theta_psi * 2 * 8 / 16, 1e-14);
    EXPECT_EQ(axis_value(r.rows[0], AxisMode::theta_slog), r.rows[0].theta_slog);
}

TEST(Crossing, Examples)
{
    std::vector<SweepRow> rows{row_at(100, 0.0, 1.0), row_at(200, 1.0, 2.0)};
    const auto c = crossing_of({&rows[0], &rows[1]}, 0.5);
    ASSERT_TRUE(c.defined);
    EXPECT_DOUBLE_EQ(c.n, 150.0);
    EXPECT_DOUBLE_EQ(c.theta_psi, 1.5);
    EXPECT_DOUBLE_EQ(c.theta_slog, 3.0);
    EXPECT_NEAR(c.n_stderr, std::sqrt(0.25 / 100) * 100, 1e-12);

    std::vector<SweepRow> zeros{row_at(100, 0.0, 1), row_at(200, 0.0, 2)};
    EXPECT_FALSE(crossing_of({&zeros[0], &zeros[1]}, 0.5).defined);
    std::vector<SweepRow> ones{row_at(100, 0.9, 1), row_at(200, 1.0, 2)};
    EXPECT_FALSE(crossing_of({&ones[0], &ones[1]}, 0.5).defined);
    EXPECT_FALSE(crossing_of({}, 0.5).defined);
    EXPECT_THROW(crossing_of({&rows[0]}, 1.0), DomainError);
}

TEST(Crossing, LogisticCurveMatchesInverse)
{
    const double mid = 300.0, scale = 40.0;
    std::vector<SweepRow> rows;
    for (Index n = 50; n <= 800; n += 10) {
        rows.push_back(row_at(n, 1.0 / (1.0 + std::exp(-(static_cast<double>(n) - mid) / scale)), 0.0));
    }
    std::vector<const SweepRow*> ptrs;
    for (const auto& r : rows) ptrs.push_back(&r);
    for (double level : {0.2, 0.5, 0.8, 0.95}) {
        const auto c = crossing_of(ptrs, level);
        ASSERT_TRUE(c.defined);
        const double exact = mid + scale * std::log(level / (1 - level));
        EXPECT_NEAR(c.n, exact, 10.0);
    }
}

TEST(Sweep, ShapeAndOverlay)
{
    const auto cfg = small_config();
    const auto res = run_sweep(cfg);
    ASSERT_EQ(res.curves.size(), 1u);
    ASSERT_EQ(res.rows.size(), 3u);
    const Curve& c = res.curves[0];
    EXPECT_EQ(c.s(), 4);
    EXPECT_NEAR(c.overlay.psi, 2.0, 1e-12);
    EXPECT_EQ(c.overlay.gamma, 1.0);
    EXPECT_NEAR(*c.overlay.n_achievability, 2 * 1.1 * 2 * std::log(28.0), 1e-12);
    for (const auto& r : res.rows) {
        EXPECT_EQ(r.trials, 6);
        EXPECT_DOUBLE_EQ(r.success_prob, r.successes / 6.0);
        EXPECT_DOUBLE_EQ(r.lambda, lambda_rule(32, 4, r.n));
    }
    const std::string csv = sweep_csv(res);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), sweep_csv_header);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    const auto j = sweep_json(res);
    EXPECT_EQ(j["rows"].size(), 3u);
    EXPECT_EQ(j["columns"].size(), 17u);
    EXPECT_TRUE(j["curves"][0]["threshold_overlay"]["n_converse"].is_number());
    const std::string report = sweep_report(res, cfg);
    EXPECT_NE(report.find("n_achievability"), std::string::npos);
}

TEST(Sweep, DeterministicAcrossJobs)
{
    const auto cfg = small_config();
    const auto a = run_sweep(cfg, 1);
    const auto b = run_sweep(cfg, 1);
    const auto c = run_sweep(cfg, 4);
    EXPECT_EQ(sweep_csv(a), sweep_csv(b));
    EXPECT_EQ(sweep_csv(a), sweep_csv(c));
    EXPECT_EQ(sweep_json(a).dump(), sweep_json(c).dump());
}

TEST(Sweep, DeepSuccessRegime)
{
    // Identity covariances, identical columns, n = 5 x n_achievability, one trial.
    auto cfg = parse_experiment_config(std::string(R"({"p": 128, "K": 2, "covariance_model": "identity",
        "coefficient_model": "identical_uniform", "trials": 1, "n_grid": [1]})"));
    const auto curves = build_curves(cfg);
    const Index n = static_cast<Index>(std::ceil(5 * *curves[0].overlay.n_achievability));
    cfg.n_grid.explicit_n = {n};
    const auto res = run_sweep(cfg);
    EXPECT_EQ(res.rows[0].success_prob, 1.0);
}

TEST(Sweep, UnderdeterminedOnSupport)
{
    auto cfg = small_config();
    cfg.n_grid.explicit_n = {2};
    cfg.trials = 50;
    const auto res = run_sweep(cfg);
    EXPECT_LE(res.rows[0].success_prob, 0.05);
}

TEST(Sweep, SuccessIncreasesWithN)
{
    auto cfg = small_config();
    cfg.n_grid.explicit_n = {10, 30, 60, 120, 240};
    cfg.trials = 40;
    const auto res = run_sweep(cfg);
    for (std::size_t i = 1; i < res.rows.size(); ++i) {
        // One-sided 3 binomial standard errors at p = 1/2.
        EXPECT_GE(res.rows[i].success_prob, res.rows[i - 1].success_prob - 3 * std::sqrt(0.25 / 40) * std::sqrt(2.0));
    }
    EXPECT_GT(res.rows.back().success_prob, res.rows.front().success_prob);
}

TEST(Sweep, SeedChangeGivesConsistentEstimates)
{
    auto cfg = small_config();
    cfg.n_grid.explicit_n = {40};
    cfg.trials = 60;
    const double a = run_sweep(cfg).rows[0].success_prob;
    cfg.base_seed = 12345;
    const double b = run_sweep(cfg).rows[0].success_prob;
    EXPECT_LE(std::abs(a - b), 4 * std::sqrt(0.5 / 60));
}

TEST(Sweep, ReportsSparsityMismatch)
{
    auto cfg = parse_experiment_config(std::string(R"({"p": 128, "K": 2, "s": 16, "coefficient_model":
        {"kind": "overlap_model", "support_rule": "overlap_24"}, "n_grid": [20], "trials": 1})"));
    const auto res = run_sweep(cfg);
    EXPECT_EQ(res.curves[0].s(), 18);
    EXPECT_NE(sweep_report(res, cfg).find("declared s=16"), std::string::npos);
}
