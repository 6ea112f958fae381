#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <mtlasso/config.hpp>
#include <mtlasso/harness.hpp>
#include <mtlasso/io.hpp>
#include <mtlasso/solver.hpp>
#include <mtlasso/theory.hpp>

namespace {

using namespace mtlasso;
using nlohmann::json;

ExperimentConfig load_config(const std::string& path)
{
    return parse_experiment_config(io::read_file(path));
}

int run_sweep_cmd(const std::string& config_path, const std::string& out_dir, unsigned jobs)
{
    const ExperimentConfig config = load_config(config_path);
    const SweepResult result = run_sweep(config, jobs);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    io::write_file((dir / "sweep.csv").string(), sweep_csv(result));
    io::write_file((dir / "sweep.json").string(), sweep_json(result).dump(2) + "\n");
    io::write_file((dir / "report.md").string(), sweep_report(result, config));
    std::cout << "wrote " << result.rows.size() << " rows to " << out_dir << "\n";
    return 0;
}

int run_gen_cmd(const std::string& config_path, std::uint64_t seed, const std::string& out, std::optional<Index> n,
                std::size_t curve_index)
{
    const ExperimentConfig config = load_config(config_path);
    const std::vector<Curve> curves = build_curves(config);
    if (curve_index >= curves.size()) {
        throw ConfigError("gen: curve index " + std::to_string(curve_index) + " out of range (" +
                          std::to_string(curves.size()) + " curves)");
    }
    const Curve& c = curves[curve_index];
    const Index samples = n ? *n : c.n_values.front();
    const MvmrProblem problem = sample_problem(c.truth, *c.covariances, c.noise, samples, seed);
    json j = io::to_json(problem, &c.truth, &c.noise);
    j["seed"] = seed;
    j["rng"] = NormalStream::algorithm_id;
    io::write_file(out, j.dump() + "\n");
    std::cout << "wrote problem p=" << c.p << " K=" << c.K << " n=" << samples << " to " << out << "\n";
    return 0;
}

int run_solve_cmd(const std::string& problem_path, double lambda, double tol, int max_iters,
                  const std::string& method, const std::string& out)
{
    json pj;
    try {
        pj = json::parse(io::read_file(problem_path));
    } catch (const json::exception& e) {
        throw DataError(std::string("solve: invalid problem JSON: ") + e.what());
    }
    MvmrProblem problem = [&] {
        try {
            return io::problem_from_json(pj);
        } catch (const json::exception& e) {
            throw DataError(std::string("solve: malformed problem: ") + e.what());
        }
    }();
    SolverConfig cfg;
    cfg.tol = tol;
    cfg.max_iters = max_iters;
    cfg.method = method == "pg" ? SolverMethod::proximal_gradient : SolverMethod::bcd;
    const SolveReport rep = solve(problem, lambda, cfg);
    json j = io::to_json(rep);
    j["lambda"] = lambda;
    j["method"] = method;
    if (pj.contains("truth") && pj["truth"].contains("b_star")) {
        const GroundTruth truth = make_ground_truth(io::matrix_from_json(pj["truth"]["b_star"]));
        const RecoveryResult rec = recovery_check(rep.estimate.values, truth, 0.0);
        j["recovery"] = {{"support_match", rec.support_match}, {"linf_l2_error", rec.linf_l2_error}};
    }
    const std::string text = j.dump(2) + "\n";
    if (out.empty() || out == "-") {
        std::cout << text;
    } else {
        io::write_file(out, text);
        std::cout << "iterations=" << rep.iterations << " kkt=" << rep.final_kkt_residual
                  << " converged=" << (rep.converged ? "yes" : "no") << "\n";
    }
    return rep.converged ? 0 : 3;
}

int run_theory_cmd(const std::string& config_path, double v, const theory::DeclaredBounds& declared,
                   const std::string& out, bool json_only)
{
    ExperimentConfig config = load_config(config_path);
    config.v = v;
    config.validate();
    const std::vector<Curve> curves = build_curves(config);
    json all = json::array();
    std::ostringstream table;
    table.imbue(std::locale::classic());
    table << "curve  p     K  coefficient_model      support_rule    s    psi        gamma      rho_u      rho_l"
             "      n_ach      n_conv     C1   C2   C3\n";
    auto flag = [](const std::optional<bool>& b) { return b ? (*b ? "yes" : "no") : "-"; };
    for (std::size_t i = 0; i < curves.size(); ++i) {
        const Curve& c = curves[i];
        const theory::ConditionReport rep = theory::condition_report(c.truth, *c.covariances, declared);
        json j = io::to_json(rep);
        j["p"] = c.p;
        j["K"] = c.K;
        j["s"] = c.s();
        j["b_min"] = c.truth.b_min;
        j["coefficient_model"] = std::string(to_string(c.coefficient_model.kind));
        j["support_rule"] = std::string(to_string(c.coefficient_model.support_rule));
        j["covariance_model"] = std::string(to_string(c.covariance_model.kind));
        j["spd_shifts"] = c.covariances->shifts();
        j["v"] = v;
        j["n_achievability"] = io::optional_json(c.overlay.n_achievability);
        j["n_converse"] = io::optional_json(c.overlay.n_converse);
        if (c.overlay.n_achievability && c.s() >= 2) {
            const auto n = static_cast<Index>(std::ceil(*c.overlay.n_achievability));
            const double lambda = config.lambda_rule(c.p, c.s(), n);
            const double rho = theory::rho_p2(n, c.s(), lambda, c.noise.sigma_max(), rep.c_min, rep.d_max);
            j["rho_p2_at_n_achievability"] = {{"n", n}, {"lambda", lambda}, {"rho", rho},
                                              {"rho_over_b_min", rho / c.truth.b_min}};
        }
        all.push_back(std::move(j));
        char line[512];
        std::snprintf(line, sizeof(line), "%-6zu %-5ld %-2ld %-22s %-15s %-4ld %-10.4g %-10.4g %-10.4g %-10s %-10s %-10s %-4s %-4s %-4s\n",
                      i, static_cast<long>(c.p), static_cast<long>(c.K),
                      std::string(to_string(c.coefficient_model.kind)).c_str(),
                      std::string(to_string(c.coefficient_model.support_rule)).c_str(), static_cast<long>(c.s()),
                      rep.psi, rep.gamma, rep.rho_u, detail::fmt(rep.rho_l).c_str(),
                      detail::fmt(c.overlay.n_achievability).c_str(), detail::fmt(c.overlay.n_converse).c_str(),
                      rep.c1_holds ? "yes" : "no", flag(rep.c2_holds), flag(rep.c3_holds));
        table << line;
    }
    const std::string text = all.dump(2) + "\n";
    if (!out.empty()) io::write_file(out, text);
    if (json_only) {
        std::cout << text;
    } else {
        std::cout << table.str();
        if (out.empty()) std::cout << text;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"l1/l2 multi-task Lasso: sweeps, data generation, solving and theory diagnostics"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out;

    auto* sweep = app.add_subcommand("sweep", "run a Monte-Carlo phase-transition sweep");
    unsigned jobs = 1;
    sweep->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sweep->add_option("--out", out, "output directory")->required();
    sweep->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);

    auto* gen = app.add_subcommand("gen", "sample one problem instance");
    std::uint64_t seed = 0;
    std::optional<Index> gen_n;
    std::size_t curve_index = 0;
    gen->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "trial seed")->required();
    gen->add_option("--out", out, "output problem JSON")->required();
    gen->add_option("--n", gen_n, "samples per task (default: first grid point)")->check(CLI::PositiveNumber);
    gen->add_option("--curve", curve_index, "curve index within the config (default 0)");

    auto* solve_cmd = app.add_subcommand("solve", "solve one problem instance");
    std::string problem_path;
    double lambda = 0.0;
    double tol = 1e-6;
    int max_iters = 10000;
    std::string method = "bcd";
    solve_cmd->add_option("--problem", problem_path, "problem JSON")->required()->check(CLI::ExistingFile);
    solve_cmd->add_option("--lambda", lambda, "regularization weight")->required()->check(CLI::PositiveNumber);
    solve_cmd->add_option("--tol", tol, "KKT tolerance")->check(CLI::PositiveNumber);
    solve_cmd->add_option("--max-iters", max_iters, "iteration cap")->check(CLI::PositiveNumber);
    solve_cmd->add_option("--method", method, "bcd or pg")->check(CLI::IsMember({"bcd", "pg"}));
    solve_cmd->add_option("--out", out, "output report JSON (default stdout)");

    auto* theory_cmd = app.add_subcommand("theory", "condition report and thresholds");
    double v = 0.1;
    std::optional<double> c_min, c_max, d_max;
    bool json_only = false;
    theory_cmd->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    theory_cmd->add_option("--v", v, "threshold slack in (0, 1)");
    theory_cmd->add_option("--c-min", c_min, "declared lower eigenvalue bound");
    theory_cmd->add_option("--c-max", c_max, "declared upper eigenvalue bound");
    theory_cmd->add_option("--d-max", d_max, "declared bound on ||inv(Sigma_SS)||_inf");
    theory_cmd->add_option("--out", out, "write the JSON report to this file");
    theory_cmd->add_flag("--json", json_only, "print only JSON");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sweep) return run_sweep_cmd(config_path, out, jobs);
        if (*gen) return run_gen_cmd(config_path, seed, out, gen_n, curve_index);
        if (*solve_cmd) return run_solve_cmd(problem_path, lambda, tol, max_iters, method, out);
        if (*theory_cmd) return run_theory_cmd(config_path, v, theory::DeclaredBounds{c_min, c_max, d_max}, out, json_only);
    } catch (const mtlasso::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
