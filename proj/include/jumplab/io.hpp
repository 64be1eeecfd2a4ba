#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumplab/conditions.hpp"
#include "jumplab/config.hpp"
#include "jumplab/ergodics.hpp"
#include "jumplab/integrator.hpp"
#include "jumplab/kolmogorov.hpp"
#include "jumplab/operators.hpp"

namespace jumplab {

inline constexpr int kSchemaVersion = 1;

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

/// JSON number, or a string for non-finite values (JSON has no inf/nan).
inline json num(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline json to_json(const Estimate& e) { return {{"value", num(e.value)}, {"se", num(e.se)}}; }

inline json to_json(const ConditionReport& r) {
    json fitted = json::object();
    for (const auto& [k, v] : r.fitted) fitted[k] = num(v);
    return {{"condition", std::string(to_string(r.condition))},
            {"samples", r.samples},
            {"min_gap", num(r.min_gap)},
            {"tolerance", num(r.tolerance)},
            {"fitted", fitted},
            {"nonfinite_states", r.nonfinite_states.size()},
            {"first_nonfinite_state",
             r.nonfinite_states.empty() ? json(nullptr) : json(r.nonfinite_states.front())},
            {"pass", r.pass}};
}

inline json to_json(const MomentReport& r) {
    return {{"status", std::string(to_string(r.status))},
            {"initial_moment", num(r.initial_moment)},
            {"gamma_hat", num(r.gamma_hat)},
            {"gamma_ls", num(r.gamma_ls)},
            {"gamma_se", num(r.gamma_se)},
            {"rate_clipped", r.rate_clipped},
            {"K_hat", num(r.K_hat)},
            {"K_se", num(r.K_se)},
            {"theory",
             {{"applicable", r.theory.applicable},
              {"gamma", num(r.theory.gamma)},
              {"C", num(r.theory.C)},
              {"K", num(r.theory.K)},
              {"eps", num(r.theory.eps)}}},
            {"worst_excess_se", num(r.worst_excess)},
            {"pass", r.pass}};
}

inline json to_json(const IntegrabilityReport& r) {
    return {{"m2", to_json(r.m2)}, {"mpv", to_json(r.mpv)}, {"finite", r.finite}};
}

inline json to_json(const PermutationTest& t) {
    return {{"statistic", num(t.statistic)},
            {"threshold_95", num(t.threshold)},
            {"p_value", num(t.p_value)},
            {"permutations", t.permutations},
            {"sample_size", t.sample_size},
            {"pass", t.pass}};
}

inline json to_json(const MixingReport& r) {
    json rows = json::array();
    for (std::size_t k = 0; k < r.times.size(); ++k)
        rows.push_back({{"t", num(r.times[k])},
                        {"msd", num(r.msd[k])},
                        {"se", num(r.se[k])},
                        {"envelope", num(r.envelope[k])}});
    return {{"alpha_hat", num(r.alpha_hat)},
            {"alpha_hat_raw", num(r.alpha_hat_raw)},
            {"alpha_se", num(r.alpha_se)},
            {"theory_alpha", num(r.theory_alpha)},
            {"theory_alpha_discrete", num(r.theory_alpha_discrete)},
            {"tol_alpha", num(r.tol_alpha)},
            {"pathwise_monotone", r.pathwise_monotone},
            {"pass", r.pass},
            {"curve", rows}};
}

inline json to_json(const FunctionalBoundReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"t", num(row.time)},
                        {"lhs", num(row.lhs)},
                        {"rhs", num(row.rhs)},
                        {"se", num(row.se)},
                        {"pass", row.pass}});
    return {{"phi_nu", to_json(r.phi_nu)},
            {"distance_to_nu", to_json(r.distance_to_nu)},
            {"rows", rows},
            {"pass", r.pass}};
}

inline json to_json(const CauchyTailReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows)
        rows.push_back({{"s1", num(row.s1)},
                        {"s2", num(row.s2)},
                        {"mean_d2", num(row.mean_d2)},
                        {"se", num(row.se)},
                        {"bound", num(row.bound)},
                        {"within_bound", row.within_bound}});
    return {{"certified_alpha", num(r.certified_alpha)},
            {"fitted_exponent", num(r.fitted_exponent)},
            {"fitted_se", num(r.fitted_se)},
            {"relative_error", num(r.relative_error)},
            {"rel_tolerance", num(r.rel_tolerance)},
            {"rows", rows},
            {"pass", r.pass}};
}

inline json to_json(const KolmogorovReport& r) {
    json j{{"kind", std::string(to_string(r.kind))},
           {"test_function", r.test_function},
           {"value", num(r.value)},
           {"se", num(r.se)},
           {"pass", r.pass}};
    if (r.ibp) {
        const auto& d = *r.ibp;
        j["ibp"] = {{"I1_f_Lf", to_json(d.i1)},
                    {"I2_gamma", to_json(d.i2)},
                    {"I3_L_f2", to_json(d.i3)},
                    {"gap_factor_1", to_json(d.full_gap)},
                    {"gap_factor_half", to_json(d.half_gap)},
                    {"factor_1_fits", d.full_fits},
                    {"factor_half_fits", d.half_fits},
                    {"I3_zero", d.i3_zero},
                    {"supported_factor", d.supported_factor},
                    {"factor_flag", d.factor_flag}};
    }
    return j;
}

inline json to_json(const RegularizationSweep& s) {
    json rows = json::array();
    for (const auto& r : s.rows)
        rows.push_back({{"eps", num(r.eps)},
                        {"error", num(r.error)},
                        {"growth_constant", num(r.growth_constant)}});
    return {{"rows", rows},
            {"exact_growth_constant", num(s.exact_growth_constant)},
            {"error_monotone", s.error_monotone},
            {"growth_uniform", s.growth_uniform},
            {"slack", num(s.slack)}};
}

inline json to_json(const StepStats& s) {
    return {{"max_iterations", s.iterations},
            {"max_residual", num(s.residual)},
            {"max_halvings", s.halvings}};
}

// ---------------------------------------------------------------------------
// Output directory
// ---------------------------------------------------------------------------

/// Writes run outputs below a root directory. Every file carries the config
/// hash: JSON files as a top-level field, CSV files as a leading comment.
class OutputWriter {
public:
    OutputWriter(std::filesystem::path root, std::string hash)
        : root_(std::move(root)), hash_(std::move(hash)) {
        std::filesystem::create_directories(root_);
    }

    const std::filesystem::path& root() const noexcept { return root_; }
    const std::string& hash() const noexcept { return hash_; }
    const std::vector<std::string>& files() const noexcept { return files_; }

    void write_json(const std::string& rel, json body) {
        json doc{{"schema_version", kSchemaVersion}, {"config_hash", hash_}};
        for (auto it = body.begin(); it != body.end(); ++it) doc[it.key()] = it.value();
        write_text(rel, doc.dump(2) + "\n");
    }

    void write_csv(const std::string& rel, const std::vector<std::string>& header,
                   const std::vector<std::vector<double>>& rows) {
        std::string out = "# config_hash=" + hash_ + "\n";
        for (std::size_t c = 0; c < header.size(); ++c) out += (c ? "," : "") + header[c];
        out += "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ",";
                out += format_double(row[c]);
            }
            out += "\n";
        }
        write_text(rel, out);
    }

    void write_text(const std::string& rel, const std::string& text) {
        const auto path = root_ / rel;
        std::filesystem::create_directories(path.parent_path());
        std::ofstream f(path, std::ios::binary);
        if (!f) throw Error("cannot write '" + path.string() + "'");
        f << text;
        files_.push_back(rel);
    }

private:
    std::filesystem::path root_;
    std::string hash_;
    std::vector<std::string> files_;
};

inline void write_trajectory(OutputWriter& out, const std::string& rel, const TrajectoryRecord& r) {
    std::vector<std::vector<double>> rows;
    rows.reserve(r.times.size());
    for (std::size_t k = 0; k < r.times.size(); ++k)
        rows.push_back({r.times[k], r.h_norms[k], r.v_norms[k], static_cast<double>(r.jump_marks[k])});
    out.write_csv(rel, {"time", "h_norm", "v_norm", "jump_mark"}, rows);
}

inline void write_ensemble(OutputWriter& out, const std::string& rel, const EnsembleSummary& e) {
    std::vector<std::string> header{"time", "h2_mean", "h2_se", "vp_mean", "vp_se"};
    for (const auto& o : e.observables) {
        header.push_back(o.name + "_mean");
        header.push_back(o.name + "_se");
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < e.times.size(); ++k) {
        std::vector<double> row{e.times[k], e.h2.mean[k], e.h2.se[k], e.vp.mean[k], e.vp.se[k]};
        for (const auto& o : e.observables) {
            row.push_back(o.mean[k]);
            row.push_back(o.se[k]);
        }
        rows.push_back(std::move(row));
    }
    out.write_csv(rel, header, rows);
}

// ---------------------------------------------------------------------------
// Empirical measures on disk
// ---------------------------------------------------------------------------

/// Atoms as CSV (atom, group, time, weight, x_0..x_{n-1}) plus JSON metadata
/// at the same stem.
inline void write_measure(OutputWriter& out, const std::string& stem, const EmpiricalMeasure& nu,
                          const GridSpace& space) {
    std::vector<std::string> header{"atom", "group", "time", "weight"};
    for (std::size_t i = 0; i < nu.dimension(); ++i) header.push_back("x_" + std::to_string(i));
    std::vector<std::vector<double>> rows;
    rows.reserve(nu.size());
    for (std::size_t a = 0; a < nu.size(); ++a) {
        const auto& atom = nu[a];
        std::vector<double> row{static_cast<double>(a), static_cast<double>(atom.group), atom.time,
                                atom.weight};
        row.insert(row.end(), atom.state.begin(), atom.state.end());
        rows.push_back(std::move(row));
    }
    out.write_csv(stem + ".csv", header, rows);
    const auto& prov = nu.provenance();
    out.write_json(stem + ".json", {{"atoms", nu.size()},
                                    {"dimension", nu.dimension()},
                                    {"space", {{"n", space.n()},
                                               {"p", space.p()},
                                               {"mode", std::string(to_string(space.mode()))}}},
                                    {"run_id", prov.run_id},
                                    {"burn_in", num(prov.burn_in)},
                                    {"stride", prov.stride}});
}

inline EmpiricalMeasure read_measure(const std::filesystem::path& csv) {
    std::ifstream in(csv);
    if (!in) throw ConfigError("cannot open measure '" + csv.string() + "'");
    std::string line;
    std::vector<Atom> atoms;
    bool header_seen = false;
    double total = 0.0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::stringstream ss(line);
        std::vector<double> cells;
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(std::stod(cell));
        if (cells.size() < 5) throw ConfigError("malformed measure row in '" + csv.string() + "'");
        Atom a;
        a.group = static_cast<std::size_t>(cells[1]);
        a.time = cells[2];
        a.weight = cells[3];
        a.state = StateVector(std::vector<double>(cells.begin() + 4, cells.end()));
        total += a.weight;
        atoms.push_back(std::move(a));
    }
    // Undo accumulated rounding of the printed weights.
    for (auto& a : atoms) a.weight /= total;
    return EmpiricalMeasure(std::move(atoms), {csv.stem().string(), 0.0, 1});
}

}  // namespace jumplab
