#pragma once
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <nlohmann/json.hpp>
#include <mtlasso/model.hpp>
#include <mtlasso/solver.hpp>
#include <mtlasso/theory.hpp>

namespace mtlasso {
namespace io {

using json = nlohmann::json;

/// Shortest "%.17g"-equivalent text, independent of the C locale.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text)
{
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t')) {
        text.remove_suffix(1);
    }
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
        throw DataError("cannot parse number '" + std::string(text) + "'");
    }
    return v;
}

/// p lines of K comma-separated values, 17 significant digits, no header.
inline std::string to_csv(const Matrix& B)
{
    std::string out;
    for (Index i = 0; i < B.rows(); ++i) {
        for (Index k = 0; k < B.cols(); ++k) {
            if (k) out += ',';
            out += format_double(B(i, k));
        }
        out += '\n';
    }
    return out;
}

inline Matrix matrix_from_csv(const std::string& text)
{
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        std::vector<double> row;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            row.push_back(parse_double(std::string_view(line).substr(start, comma - start)));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DimensionError("matrix_from_csv: ragged rows");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DimensionError("matrix_from_csv: no rows");
    Matrix B(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < B.rows(); ++i) {
        for (Index k = 0; k < B.cols(); ++k) B(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return B;
}

/// {"p": p, "K": K, "entries": [row-major values]}
inline json to_json(const Matrix& B)
{
    json entries = json::array();
    for (Index i = 0; i < B.rows(); ++i) {
        for (Index k = 0; k < B.cols(); ++k) entries.push_back(B(i, k));
    }
    return json{{"p", B.rows()}, {"K", B.cols()}, {"entries", std::move(entries)}};
}

inline Matrix matrix_from_json(const json& j)
{
    const Index p = j.at("p").get<Index>();
    const Index K = j.at("K").get<Index>();
    const auto& e = j.at("entries");
    if (p < 1 || K < 1 || e.size() != static_cast<std::size_t>(p * K)) {
        throw DimensionError("matrix_from_json: entries do not match p x K");
    }
    Matrix B(p, K);
    for (Index i = 0; i < p; ++i) {
        for (Index k = 0; k < K; ++k) B(i, k) = e[static_cast<std::size_t>(i * K + k)].get<double>();
    }
    return B;
}

inline json to_json(const IndexSet& s)
{
    json a = json::array();
    for (Index i : s) a.push_back(i);
    return a;
}

inline constexpr const char* problem_format = "mtlasso.problem/v1";

/**
 * {"format", "p", "K", "n", "designs": [K arrays of n*p row-major values],
 *  "responses": [K arrays of n values], "truth"?: {"b_star": matrix, "sigma_w": [...]}}
 */
inline json to_json(const MvmrProblem& problem, const GroundTruth* truth = nullptr,
                    const NoiseSpec* noise = nullptr)
{
    json designs = json::array();
    json responses = json::array();
    for (Index k = 0; k < problem.num_tasks(); ++k) {
        const Matrix& X = problem.design(k);
        json d = json::array();
        for (Index r = 0; r < X.rows(); ++r) {
            for (Index c = 0; c < X.cols(); ++c) d.push_back(X(r, c));
        }
        designs.push_back(std::move(d));
        json y = json::array();
        for (Index r = 0; r < X.rows(); ++r) y.push_back(problem.response(k)(r));
        responses.push_back(std::move(y));
    }
    json j{{"format", problem_format},
           {"p", problem.dim()},
           {"K", problem.num_tasks()},
           {"n", problem.samples()},
           {"designs", std::move(designs)},
           {"responses", std::move(responses)}};
    if (truth) {
        j["truth"] = json{{"b_star", to_json(truth->b_star.values)},
                          {"support_union", to_json(truth->support_union)},
                          {"b_min", truth->b_min}};
        if (noise) j["truth"]["sigma_w"] = noise->sigma_w;
    }
    return j;
}

inline MvmrProblem problem_from_json(const json& j)
{
    const Index p = j.at("p").get<Index>();
    const Index K = j.at("K").get<Index>();
    const Index n = j.at("n").get<Index>();
    const auto& designs = j.at("designs");
    const auto& responses = j.at("responses");
    if (p < 1 || K < 1 || n < 1 || designs.size() != static_cast<std::size_t>(K) ||
        responses.size() != static_cast<std::size_t>(K)) {
        throw DimensionError("problem_from_json: inconsistent p, K, n");
    }
    std::vector<Matrix> xs;
    std::vector<Vector> ys;
    for (Index k = 0; k < K; ++k) {
        const auto& d = designs[static_cast<std::size_t>(k)];
        const auto& y = responses[static_cast<std::size_t>(k)];
        if (d.size() != static_cast<std::size_t>(n * p) || y.size() != static_cast<std::size_t>(n)) {
            throw DimensionError("problem_from_json: task " + std::to_string(k) + " has wrong sizes");
        }
        Matrix X(n, p);
        for (Index r = 0; r < n; ++r) {
            for (Index c = 0; c < p; ++c) X(r, c) = d[static_cast<std::size_t>(r * p + c)].get<double>();
        }
        Vector v(n);
        for (Index r = 0; r < n; ++r) v(r) = y[static_cast<std::size_t>(r)].get<double>();
        xs.push_back(std::move(X));
        ys.push_back(std::move(v));
    }
    return MvmrProblem(std::move(xs), std::move(ys));
}

inline json to_json(const SolveReport& rep)
{
    json j{{"iterations", rep.iterations},
           {"final_kkt_residual", rep.final_kkt_residual},
           {"objective_value", rep.objective_value},
           {"converged", rep.converged},
           {"support", to_json(support_of(rep.estimate.values))},
           {"estimate", to_json(rep.estimate.values)}};
    if (!rep.objective_trace.empty()) j["objective_trace"] = rep.objective_trace;
    return j;
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline json optional_json(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

inline json to_json(const theory::ConditionReport& r)
{
    return json{{"gamma", r.gamma},
                {"a_matrix_inf_norm", r.a_matrix_inf_norm},
                {"c_min", r.c_min},
                {"c_max", r.c_max},
                {"d_max", r.d_max},
                {"rho_u", r.rho_u},
                {"rho_l", optional_json(r.rho_l)},
                {"psi", r.psi},
                {"c1_holds", r.c1_holds},
                {"c2_holds", optional_json(r.c2_holds)},
                {"c3_holds", optional_json(r.c3_holds)}};
}

inline std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::string& contents)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path);
    out << contents;
    if (!out) throw ConfigError("write failed for " + path);
}

} // namespace io
} // namespace mtlasso
