#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "jumplab/errors.hpp"
#include "jumplab/integrator.hpp"
#include "jumplab/noise.hpp"
#include "jumplab/operators.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

using json = nlohmann::json;

namespace detail {

inline void allow_keys(const json& j, const std::string& where, std::set<std::string> keys) {
    if (!j.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!keys.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in '" + where + "'");
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad value for '" + where + "." + key + "'");
    }
}

template <typename T>
T get_req(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("missing '" + where + "." + key + "'");
    return get_or<T>(j, key, T{}, where);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vector specifications (initial states, additive increments)
// ---------------------------------------------------------------------------

/// How a StateVector is specified in config:
///   {"kind": "zero"}
///   {"kind": "constant", "value": c}
///   {"kind": "values", "values": [...]}
///   {"kind": "file", "file": "g.csv"}            one value per line
///   {"kind": "eigen", "mode": k, "amplitude": a}  a sin(k pi x_i); e_k in euclidean mode
///   {"kind": "gaussian", "amplitude": a}         i.i.d. N(0, a^2) per node, drawn per member
struct VectorSpec {
    std::string kind = "zero";
    double value = 0.0;
    std::vector<double> values;
    std::string file;
    int mode = 1;
    double amplitude = 1.0;

    bool random() const { return kind == "gaussian"; }
};

inline VectorSpec vector_spec_from_json(const json& j, const std::string& where) {
    detail::allow_keys(j, where, {"kind", "value", "values", "file", "mode", "amplitude"});
    VectorSpec v;
    v.kind = detail::get_req<std::string>(j, "kind", where);
    if (v.kind == "constant") v.value = detail::get_req<double>(j, "value", where);
    else if (v.kind == "values") v.values = detail::get_req<std::vector<double>>(j, "values", where);
    else if (v.kind == "file") v.file = detail::get_req<std::string>(j, "file", where);
    else if (v.kind == "eigen") {
        v.mode = detail::get_or<int>(j, "mode", 1, where);
        v.amplitude = detail::get_or<double>(j, "amplitude", 1.0, where);
        if (v.mode < 1) throw ConfigError("'" + where + ".mode' must be >= 1");
    } else if (v.kind == "gaussian") {
        v.amplitude = detail::get_or<double>(j, "amplitude", 1.0, where);
    } else if (v.kind != "zero") {
        throw ConfigError("unknown vector kind '" + v.kind + "' in '" + where + "'");
    }
    return v;
}

inline json to_json(const VectorSpec& v) {
    json j{{"kind", v.kind}};
    if (v.kind == "constant") j["value"] = v.value;
    else if (v.kind == "values") j["values"] = v.values;
    else if (v.kind == "file") j["file"] = v.file;
    else if (v.kind == "eigen") {
        j["mode"] = v.mode;
        j["amplitude"] = v.amplitude;
    } else if (v.kind == "gaussian") j["amplitude"] = v.amplitude;
    return j;
}

inline std::vector<double> read_vector_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open vector file '" + path.string() + "'");
    std::vector<double> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) {
            try {
                out.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw ConfigError("non-numeric entry in '" + path.string() + "'");
            }
        }
    }
    return out;
}

/// Deterministic vector (everything except "gaussian").
inline StateVector build_vector(const GridSpace& space, const VectorSpec& v,
                                const std::filesystem::path& base_dir) {
    StateVector out(space.n());
    if (v.kind == "zero") return out;
    if (v.kind == "constant") {
        std::fill(out.begin(), out.end(), v.value);
        return out;
    }
    if (v.kind == "values" || v.kind == "file") {
        const auto vals = v.kind == "values" ? v.values : read_vector_csv(base_dir / v.file);
        if (vals.size() != space.n())
            throw ConfigError("vector has " + std::to_string(vals.size()) + " entries, grid has " +
                              std::to_string(space.n()));
        return StateVector(vals);
    }
    if (v.kind == "eigen") {
        if (space.has_geometry()) {
            out = laplacian_eigenvector(space, static_cast<std::size_t>(v.mode));
        } else {
            if (static_cast<std::size_t>(v.mode) > space.n())
                throw ConfigError("eigen mode exceeds dimension in euclidean mode");
            out[v.mode - 1] = 1.0;
        }
        out *= v.amplitude;
        return out;
    }
    throw ConfigError("vector kind '" + v.kind + "' is not deterministic here");
}

inline InitialSampler build_sampler(const GridSpace& space, const VectorSpec& v,
                                    const std::filesystem::path& base_dir) {
    if (v.kind == "gaussian") {
        const std::size_t n = space.n();
        const double a = v.amplitude;
        return [n, a](Rng& rng) {
            StateVector x(n);
            for (auto& e : x) e = a * rng.normal();
            return x;
        };
    }
    return fixed_initial(build_vector(space, v, base_dir));
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct SpaceSection {
    std::size_t n = 32;
    double p = 2.0;
    std::string mode = "sobolev";
};

struct OperatorSection {
    std::string kind = "linear_diffusion";
    std::string function;  // "family:scale[:exponent]"; exponent defaults to p
};

struct MarkSection {
    std::string id;
    double mass = 1.0;
    std::optional<double> sigma;
    std::optional<VectorSpec> g;
};

struct NoiseSection {
    std::string coupling = "additive";
    std::string profile;  // mult_lipschitz only
    std::vector<MarkSection> marks;
};

struct SimSection {
    double dt = 1e-2;
    double horizon = 1.0;
    double solver_tol = 1e-10;
    int solver_max_iter = 50;
    std::size_t checkpoint_stride = 1;
    int max_halvings = 10;
    std::size_t members = 1;
    std::size_t threads = 1;
};

struct RunConfig {
    SpaceSection space;
    OperatorSection op;
    NoiseSection noise;
    SimSection sim;
    VectorSpec initial;
    json experiment = json::object();
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::filesystem::path base_dir = ".";  // directory of the config file; not serialized
};

inline RunConfig run_config_from_json(const json& j, std::filesystem::path base_dir = ".") {
    detail::allow_keys(j, "config",
                       {"space", "operator", "noise", "sim", "initial", "experiment", "seed",
                        "output_dir"});
    RunConfig c;
    c.base_dir = std::move(base_dir);
    if (j.contains("space")) {
        const auto& s = j.at("space");
        detail::allow_keys(s, "space", {"n", "p", "mode"});
        c.space.n = detail::get_or<std::size_t>(s, "n", c.space.n, "space");
        c.space.p = detail::get_or<double>(s, "p", c.space.p, "space");
        c.space.mode = detail::get_or<std::string>(s, "mode", c.space.mode, "space");
    }
    if (j.contains("operator")) {
        const auto& o = j.at("operator");
        detail::allow_keys(o, "operator", {"kind", "function"});
        c.op.kind = detail::get_req<std::string>(o, "kind", "operator");
        c.op.function = detail::get_or<std::string>(o, "function", "", "operator");
    }
    if (j.contains("noise")) {
        const auto& n = j.at("noise");
        detail::allow_keys(n, "noise", {"coupling", "profile", "marks"});
        c.noise.coupling = detail::get_or<std::string>(n, "coupling", c.noise.coupling, "noise");
        c.noise.profile = detail::get_or<std::string>(n, "profile", "", "noise");
        if (n.contains("marks")) {
            if (!n.at("marks").is_array()) throw ConfigError("'noise.marks' must be an array");
            for (const auto& m : n.at("marks")) {
                detail::allow_keys(m, "noise.marks[]", {"id", "mass", "sigma", "g"});
                MarkSection ms;
                ms.id = detail::get_req<std::string>(m, "id", "noise.marks[]");
                ms.mass = detail::get_req<double>(m, "mass", "noise.marks[]");
                if (m.contains("sigma")) ms.sigma = detail::get_req<double>(m, "sigma", "noise.marks[]");
                if (m.contains("g")) ms.g = vector_spec_from_json(m.at("g"), "noise.marks[].g");
                c.noise.marks.push_back(std::move(ms));
            }
        }
    }
    if (j.contains("sim")) {
        const auto& s = j.at("sim");
        detail::allow_keys(s, "sim",
                           {"dt", "horizon", "solver_tol", "solver_max_iter", "checkpoint_stride",
                            "max_halvings", "members", "threads"});
        auto& d = c.sim;
        d.dt = detail::get_or<double>(s, "dt", d.dt, "sim");
        d.horizon = detail::get_or<double>(s, "horizon", d.horizon, "sim");
        d.solver_tol = detail::get_or<double>(s, "solver_tol", d.solver_tol, "sim");
        d.solver_max_iter = detail::get_or<int>(s, "solver_max_iter", d.solver_max_iter, "sim");
        d.checkpoint_stride =
            detail::get_or<std::size_t>(s, "checkpoint_stride", d.checkpoint_stride, "sim");
        d.max_halvings = detail::get_or<int>(s, "max_halvings", d.max_halvings, "sim");
        d.members = detail::get_or<std::size_t>(s, "members", d.members, "sim");
        d.threads = detail::get_or<std::size_t>(s, "threads", d.threads, "sim");
    }
    if (j.contains("initial")) c.initial = vector_spec_from_json(j.at("initial"), "initial");
    if (j.contains("experiment")) {
        if (!j.at("experiment").is_object()) throw ConfigError("'experiment' must be an object");
        c.experiment = j.at("experiment");
    }
    c.seed = detail::get_or<std::uint64_t>(j, "seed", 0, "config");
    c.output_dir = detail::get_or<std::string>(j, "output_dir", c.output_dir, "config");
    return c;
}

inline json to_json(const RunConfig& c) {
    json marks = json::array();
    for (const auto& m : c.noise.marks) {
        json mj{{"id", m.id}, {"mass", m.mass}};
        if (m.sigma) mj["sigma"] = *m.sigma;
        if (m.g) mj["g"] = to_json(*m.g);
        marks.push_back(mj);
    }
    json noise{{"coupling", c.noise.coupling}, {"marks", marks}};
    if (!c.noise.profile.empty()) noise["profile"] = c.noise.profile;
    json op{{"kind", c.op.kind}};
    if (!c.op.function.empty()) op["function"] = c.op.function;
    return json{
        {"space", {{"n", c.space.n}, {"p", c.space.p}, {"mode", c.space.mode}}},
        {"operator", op},
        {"noise", noise},
        {"sim",
         {{"dt", c.sim.dt},
          {"horizon", c.sim.horizon},
          {"solver_tol", c.sim.solver_tol},
          {"solver_max_iter", c.sim.solver_max_iter},
          {"checkpoint_stride", c.sim.checkpoint_stride},
          {"max_halvings", c.sim.max_halvings},
          {"members", c.sim.members},
          {"threads", c.sim.threads}}},
        {"initial", to_json(c.initial)},
        {"experiment", c.experiment},
        {"seed", c.seed},
        {"output_dir", c.output_dir}};
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return run_config_from_json(j, path.parent_path().empty() ? "." : path.parent_path());
}

/// 64-bit FNV-1a of a byte string.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

/// Hash of the canonical serialization, excluding output_dir so that the
/// same experiment written to different directories hashes identically.
inline std::string config_hash(const RunConfig& c) {
    json j = to_json(c);
    j.erase("output_dir");
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

inline GridSpace build_space(const RunConfig& c) {
    const SpaceMode mode = space_mode_from_string(c.space.mode);
    try {
        return GridSpace(c.space.n, c.space.p, mode);
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("space: ") + e.what());
    }
}

inline MonotoneOperator build_operator(const RunConfig& c, const GridSpace& space) {
    const OperatorKind kind = operator_kind_from_string(c.op.kind);
    if (kind == OperatorKind::LinearDiffusion) {
        if (!c.op.function.empty()) throw ConfigError("linear_diffusion takes no function");
        return MonotoneOperator::linear_diffusion(space);
    }
    const std::string spec = c.op.function.empty() ? "power:1" : c.op.function;
    const ScalarFunction f = ScalarFunction::parse(spec, space.p());
    switch (kind) {
        case OperatorKind::PLaplace: return MonotoneOperator::p_laplace(space, f);
        case OperatorKind::PorousMedia: return MonotoneOperator::porous_media(space, f);
        case OperatorKind::CustomFd: return MonotoneOperator::custom_fd(space, f);
        default: break;
    }
    throw ConfigError("unsupported operator kind");
}

inline MarkSpace build_marks(const RunConfig& c) {
    std::vector<Mark> marks;
    std::set<std::string> ids;
    for (const auto& m : c.noise.marks) {
        if (!ids.insert(m.id).second) throw ConfigError("duplicate mark id '" + m.id + "'");
        if (!(m.mass > 0.0) || !std::isfinite(m.mass))
            throw ConfigError("mark '" + m.id + "' needs finite positive mass");
        marks.push_back({m.id, m.mass});
    }
    return MarkSpace(std::move(marks));
}

inline JumpCoupling build_coupling(const RunConfig& c, const GridSpace& space) {
    const auto& nz = c.noise;
    if (nz.coupling == "additive") {
        std::vector<StateVector> g;
        for (const auto& m : nz.marks) {
            if (!m.g) throw ConfigError("additive mark '" + m.id + "' needs 'g'");
            if (m.sigma) throw ConfigError("additive mark '" + m.id + "' takes no 'sigma'");
            if (m.g->random()) throw ConfigError("mark increments must be deterministic");
            g.push_back(build_vector(space, *m.g, c.base_dir));
        }
        return JumpCoupling::additive(std::move(g));
    }
    std::vector<double> sigma;
    for (const auto& m : nz.marks) {
        if (!m.sigma) throw ConfigError("multiplicative mark '" + m.id + "' needs 'sigma'");
        if (m.g) throw ConfigError("multiplicative mark '" + m.id + "' takes no 'g'");
        sigma.push_back(*m.sigma);
    }
    if (nz.coupling == "mult_scalar") return JumpCoupling::mult_scalar(std::move(sigma));
    if (nz.coupling == "mult_lipschitz") {
        if (nz.profile.empty()) throw ConfigError("mult_lipschitz needs 'noise.profile'");
        const ScalarFunction phi = ScalarFunction::parse(nz.profile, 2.0);
        if (!std::isfinite(phi.lipschitz()))
            throw ConfigError("noise profile '" + nz.profile + "' is not globally Lipschitz");
        return JumpCoupling::mult_lipschitz(std::move(sigma), phi);
    }
    throw ConfigError("unknown coupling '" + nz.coupling + "'");
}

inline SimConfig build_sim(const RunConfig& c) {
    SimConfig s;
    s.dt_max = c.sim.dt;
    s.horizon = c.sim.horizon;
    s.solver_tol = c.sim.solver_tol;
    s.solver_max_iter = c.sim.solver_max_iter;
    s.seed = c.seed;
    s.checkpoint_stride = c.sim.checkpoint_stride;
    s.max_halvings = c.sim.max_halvings;
    try {
        s.validate();
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("sim: ") + e.what());
    }
    if (c.sim.members < 1) throw ConfigError("sim.members must be >= 1");
    if (c.sim.threads < 1) throw ConfigError("sim.threads must be >= 1");
    return s;
}

/// Everything a subcommand needs, built once from the config.
struct Model {
    GridSpace space;
    MonotoneOperator op;
    MarkSpace marks;
    JumpCoupling coupling;
    SimConfig sim;
};

inline Model build_model(const RunConfig& c) {
    GridSpace space = build_space(c);
    MonotoneOperator op = build_operator(c, space);
    MarkSpace marks = build_marks(c);
    JumpCoupling coupling = build_coupling(c, space);
    try {
        coupling.check(space, marks);
    } catch (const ContractViolation& e) {
        throw ConfigError(std::string("noise: ") + e.what());
    }
    return Model{space, std::move(op), std::move(marks), std::move(coupling), build_sim(c)};
}

}  // namespace jumplab
