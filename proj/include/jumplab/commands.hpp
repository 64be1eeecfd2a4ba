#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "jumplab/conditions.hpp"
#include "jumplab/config.hpp"
#include "jumplab/ergodics.hpp"
#include "jumplab/integrator.hpp"
#include "jumplab/io.hpp"
#include "jumplab/kolmogorov.hpp"

namespace jumplab {

enum ExitCode : int { kExitPass = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"check-operator", "simulate", "ergodicity",
                                                "mixing",         "kolmogorov", "regularize"};
    return names;
}

/// Section of `experiment` read by a command ("check-operator" -> "check_operator").
inline std::string experiment_key(std::string cmd) {
    std::replace(cmd.begin(), cmd.end(), '-', '_');
    return cmd;
}

struct Overrides {
    std::optional<std::string> output_dir;
    std::optional<std::uint64_t> seed;
};

namespace detail {

/// Seed of an auxiliary run, independent of the main run's member streams.
inline std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) {
    return splitmix64(seed ^ splitmix64(tag * 0xD1B54A32D192ED03ULL + 0x5851F42D4C957F2DULL));
}

inline json section(const RunConfig& c, const std::string& cmd,
                    const std::set<std::string>& keys) {
    const std::string key = experiment_key(cmd);
    json s = c.experiment.contains(key) ? c.experiment.at(key) : json::object();
    allow_keys(s, "experiment." + key, keys);
    return s;
}

template <typename T>
T opt(const json& s, const std::string& key, T fallback, const std::string& cmd) {
    return get_or<T>(s, key, fallback, "experiment." + experiment_key(cmd));
}

inline std::optional<VectorSpec> opt_vector(const json& s, const std::string& key,
                                            const std::string& cmd) {
    if (!s.contains(key)) return std::nullopt;
    return vector_spec_from_json(s.at(key), "experiment." + experiment_key(cmd) + "." + key);
}

inline void require_config(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

inline EnsembleSummary run_ensemble(const Model& m, const RunConfig& c, const InitialSampler& init,
                                    SimConfig sim, std::vector<NamedObservable> obs = {},
                                    bool keep = true) {
    EnsembleOptions o;
    o.members = c.sim.members;
    o.threads = c.sim.threads;
    o.keep_checkpoints = keep;
    o.observables = std::move(obs);
    return simulate_ensemble(m.op, m.coupling, m.marks, init, sim, o);
}

inline std::size_t pick_stride(const EnsembleSummary& e, double burn_in, std::size_t stride,
                               std::size_t max_atoms) {
    return stride > 0 ? stride : auto_stride(e.checkpoints, burn_in, max_atoms);
}

}  // namespace detail

/// What a command reports back to the driver.
struct CommandOutcome {
    bool pass = false;
    json summary = json::object();
    StepStats solver;
    std::size_t aborted = 0;
};

// ---------------------------------------------------------------------------
// check-operator
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_check_operator(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "check-operator";
    const json s = detail::section(c, cmd, {"conditions", "samples", "superlinear_delta"});
    const auto names = detail::opt<std::vector<std::string>>(
        s, "conditions", {"MONOTONE_2_1", "COERCIVE_2_2"}, cmd);
    const auto samples = detail::opt<std::size_t>(s, "samples", 1000, cmd);
    const double delta = detail::opt<double>(s, "superlinear_delta", -1.0, cmd);
    detail::require_config(!names.empty(), "check_operator.conditions is empty");
    detail::require_config(samples >= 1, "check_operator.samples must be >= 1");
    std::vector<Condition> conds;
    for (const auto& n : names) conds.push_back(condition_from_string(n));

    CommandOutcome r;
    r.pass = true;
    json list = json::array();
    const DriftSystem sys{m.op, m.coupling, m.marks};
    for (std::size_t i = 0; i < conds.size(); ++i) {
        const auto rep = check_condition(sys, conds[i], samples, detail::derived_seed(c.seed, i), delta);
        out.write_json("reports/" + std::string(to_string(conds[i])) + ".json", to_json(rep));
        list.push_back({{"condition", std::string(to_string(conds[i]))},
                        {"pass", rep.pass},
                        {"min_gap", num(rep.min_gap)}});
        r.pass = r.pass && rep.pass;
    }
    const auto v = validate(m.op);
    const double u3 = pairing_with_self(m.op, laplacian_eigenvector(m.op.space(), 1));
    out.write_json("reports/operator.json",
                   {{"operator", m.op.describe()},
                    {"flux_monotone", v.monotone},
                    {"growth_ok", v.growth_ok},
                    {"growth_constant", num(v.growth_constant)},
                    {"coercive_ok", v.coercive_ok},
                    {"coercivity_constant", num(v.coercivity_constant)},
                    {"pairing_first_eigenvector", num(u3)}});
    r.summary = {{"conditions", list}};
    return r;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_simulate(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "simulate";
    const json s = detail::section(c, cmd, {"paths"});
    const auto paths =
        std::min(detail::opt<std::size_t>(s, "paths", 1, cmd), c.sim.members);
    const auto init = build_sampler(m.space, c.initial, c.base_dir);

    CommandOutcome r;
    double worst_bookkeeping = 0.0;
    std::size_t path_jumps = 0;
    // Member i of the ensemble and path_i share their random streams.
    for (std::size_t i = 0; i < paths; ++i) {
        Rng ir = detail::member_rng(c.seed, i, detail::kInitPurpose);
        Rng jr = detail::member_rng(c.seed, i, detail::kJumpPurpose);
        const StateVector x0 = init(ir);
        const JumpStream stream = sample_stream(m.marks, m.sim.horizon, jr);
        const auto rec = simulate_with_stream(m.op, m.coupling, m.marks, x0, stream, 0.0,
                                              m.sim.horizon, m.sim);
        write_trajectory(out, "trajectories/path_" + std::to_string(i) + ".csv", rec);
        for (const auto& j : rec.jumps) worst_bookkeeping = std::max(worst_bookkeeping, j.bookkeeping_error);
        path_jumps += rec.jump_count;
        r.solver.absorb(rec.solver);
    }
    json ens_json = nullptr;
    if (c.sim.members > 1) {
        const auto ens = detail::run_ensemble(m, c, init, m.sim, {}, false);
        write_ensemble(out, "trajectories/ensemble.csv", ens);
        r.solver.absorb(ens.solver);
        r.aborted = ens.aborted;
        ens_json = {{"members", ens.members},
                    {"aborted", ens.aborted},
                    {"total_jumps", ens.total_jumps},
                    {"terminal_h2_mean", num(ens.h2.mean.back())},
                    {"terminal_h2_se", num(ens.h2.se.back())}};
    }
    r.pass = r.aborted == 0 && r.solver.residual <= c.sim.solver_tol;
    out.write_json("reports/simulate.json", {{"paths", paths},
                                             {"path_jumps", path_jumps},
                                             {"max_jump_bookkeeping_error", num(worst_bookkeeping)},
                                             {"solver", to_json(r.solver)},
                                             {"ensemble", ens_json},
                                             {"pass", r.pass}});
    r.summary = {{"paths", paths}, {"aborted", r.aborted}};
    return r;
}

// ---------------------------------------------------------------------------
// ergodicity
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_ergodicity(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "ergodicity";
    const json s = detail::section(c, cmd,
                                   {"burn_in", "stride", "max_atoms", "horizon_doubling",
                                    "initial_alt", "subsample", "permutations",
                                    "certificate_samples", "expected_m2", "moment_check"});
    const double burn_in = detail::opt<double>(s, "burn_in", 0.5 * c.sim.horizon, cmd);
    const auto stride = detail::opt<std::size_t>(s, "stride", 0, cmd);
    const auto max_atoms = detail::opt<std::size_t>(s, "max_atoms", 10000, cmd);
    const bool doubling = detail::opt<bool>(s, "horizon_doubling", false, cmd);
    const auto alt = detail::opt_vector(s, "initial_alt", cmd);
    const auto subsample = detail::opt<std::size_t>(s, "subsample", 300, cmd);
    const auto permutations = detail::opt<std::size_t>(s, "permutations", 199, cmd);
    const auto cert_samples = detail::opt<std::size_t>(s, "certificate_samples", 1000, cmd);
    const bool do_moment = detail::opt<bool>(s, "moment_check", true, cmd);
    std::optional<double> expected_m2;
    if (s.contains("expected_m2")) expected_m2 = detail::opt<double>(s, "expected_m2", 0.0, cmd);
    detail::require_config(burn_in >= 0.0 && burn_in < c.sim.horizon,
                           "ergodicity.burn_in must lie in [0, horizon)");
    detail::require_config(max_atoms >= 1, "ergodicity.max_atoms must be >= 1");

    CommandOutcome r;
    r.pass = true;
    json report = json::object();

    const auto init = build_sampler(m.space, c.initial, c.base_dir);
    const auto ens = detail::run_ensemble(m, c, init, m.sim);
    r.solver.absorb(ens.solver);
    r.aborted += ens.aborted;
    write_ensemble(out, "trajectories/ensemble.csv", ens);
    const auto nu = kb_average(ens.checkpoints, burn_in,
                               detail::pick_stride(ens, burn_in, stride, max_atoms), "main");
    write_measure(out, "measures/kb_average", nu, m.space);
    const auto integ = integrability_functional(nu, m.space);
    report["integrability"] = to_json(integ);
    r.pass = r.pass && integ.finite;

    if (expected_m2) {
        const bool ok = std::abs(integ.m2.value - *expected_m2) <= 3.0 * integ.m2.se;
        report["expected_m2"] = {{"expected", *expected_m2}, {"pass", ok}};
        r.pass = r.pass && ok;
    }

    if (do_moment) {
        const auto cert = check_condition({m.op, m.coupling, m.marks}, Condition::Coercive,
                                          cert_samples, detail::derived_seed(c.seed, 100));
        MomentReport mr;
        if (!cert.pass || m.space.mode() == SpaceMode::Negative) {
            mr.status = ReportStatus::NotApplicable;
        } else {
            const double emb = embedding_constant(m.space, 200, detail::derived_seed(c.seed, 101));
            mr = moment_check(ens, cert, emb, m.space.p());
        }
        report["moment"] = to_json(mr);
        report["coercivity_certificate"] = to_json(cert);
        r.pass = r.pass && mr.status != ReportStatus::Fail;
    }

    if (doubling) {
        SimConfig sim2 = m.sim;
        sim2.horizon *= 2.0;
        sim2.seed = detail::derived_seed(c.seed, 200);
        const auto ens2 = detail::run_ensemble(m, c, init, sim2);
        r.solver.absorb(ens2.solver);
        r.aborted += ens2.aborted;
        const double b2 = 2.0 * burn_in;
        const auto nu2 = kb_average(ens2.checkpoints, b2,
                                    detail::pick_stride(ens2, b2, stride, max_atoms), "doubled");
        write_measure(out, "measures/kb_average_doubled", nu2, m.space);
        const auto integ2 = integrability_functional(nu2, m.space);
        const bool ok = integ2.finite && consistent(integ.m2, integ2.m2) &&
                        consistent(integ.mpv, integ2.mpv);
        report["horizon_doubling"] = {{"integrability", to_json(integ2)}, {"stable", ok}};
        r.pass = r.pass && ok;
    }

    if (alt) {
        SimConfig sim3 = m.sim;
        sim3.seed = detail::derived_seed(c.seed, 300);
        const auto ens3 = detail::run_ensemble(m, c, build_sampler(m.space, *alt, c.base_dir), sim3);
        r.solver.absorb(ens3.solver);
        r.aborted += ens3.aborted;
        const auto nu3 = kb_average(ens3.checkpoints, burn_in,
                                    detail::pick_stride(ens3, burn_in, stride, max_atoms), "alt");
        write_measure(out, "measures/kb_average_alt", nu3, m.space);
        Rng prng(detail::derived_seed(c.seed, 301));
        const auto test = energy_permutation_test(m.space, nu, nu3, subsample, permutations, prng);
        report["alternate_initial"] = {{"integrability", to_json(integrability_functional(nu3, m.space))},
                                       {"energy_test", to_json(test)}};
        r.pass = r.pass && test.pass;
    }

    r.pass = r.pass && r.aborted == 0;
    report["atoms"] = nu.size();
    report["burn_in"] = num(burn_in);
    report["aborted_members"] = r.aborted;
    report["pass"] = r.pass;
    out.write_json("reports/ergodicity.json", report);
    r.summary = {{"m2", to_json(integ.m2)}, {"mpv", to_json(integ.mpv)}};
    return r;
}

// ---------------------------------------------------------------------------
// mixing
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_mixing(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "mixing";
    const json s = detail::section(c, cmd, {"pairs", "x0", "y0", "burn_in", "certificate_samples",
                                            "functional", "cauchy"});
    const auto pairs = detail::opt<std::size_t>(s, "pairs", c.sim.members, cmd);
    const auto x0 = detail::opt_vector(s, "x0", cmd).value_or(c.initial);
    const auto y0 = detail::opt_vector(s, "y0", cmd).value_or(VectorSpec{});
    const double burn_in = detail::opt<double>(s, "burn_in", 0.0, cmd);
    const auto cert_samples = detail::opt<std::size_t>(s, "certificate_samples", 1000, cmd);
    detail::require_config(pairs >= 1, "mixing.pairs must be >= 1");

    std::optional<json> fsec, csec;
    std::vector<double> f_times;
    VectorSpec f_y;
    double f_burn = 0.5 * c.sim.horizon;
    if (s.contains("functional")) {
        fsec = s.at("functional");
        detail::allow_keys(*fsec, "experiment.mixing.functional", {"times", "y", "burn_in"});
        f_times = detail::get_or<std::vector<double>>(*fsec, "times", {0.5, 1.0, 2.0, 4.0},
                                                      "experiment.mixing.functional");
        if (fsec->contains("y")) f_y = vector_spec_from_json(fsec->at("y"), "experiment.mixing.functional.y");
        else f_y = x0;
        f_burn = detail::get_or<double>(*fsec, "burn_in", f_burn, "experiment.mixing.functional");
        for (double t : f_times)
            detail::require_config(t >= 0.0 && t <= c.sim.horizon,
                                   "mixing.functional.times must lie in [0, horizon]");
        detail::require_config(f_burn >= 0.0 && f_burn < c.sim.horizon,
                               "mixing.functional.burn_in must lie in [0, horizon)");
    }
    std::vector<double> starts;
    std::size_t c_members = 0;
    double c_tol = 0.2;
    VectorSpec c_x = x0;
    if (s.contains("cauchy")) {
        csec = s.at("cauchy");
        const std::string w = "experiment.mixing.cauchy";
        detail::allow_keys(*csec, w, {"starts", "members", "rel_tol", "x"});
        starts = detail::get_or<std::vector<double>>(*csec, "starts", {-8.0, -4.0, -2.0, -1.0}, w);
        std::sort(starts.begin(), starts.end());
        c_members = detail::get_or<std::size_t>(*csec, "members", c.sim.members, w);
        c_tol = detail::get_or<double>(*csec, "rel_tol", 0.2, w);
        if (csec->contains("x")) c_x = vector_spec_from_json(csec->at("x"), w + ".x");
        detail::require_config(!starts.empty() && starts.back() < 0.0,
                               "mixing.cauchy.starts must be negative");
        detail::require_config(c_members >= 2, "mixing.cauchy.members must be >= 2");
    }

    CommandOutcome r;
    const auto cert = check_condition({m.op, m.coupling, m.marks}, Condition::Strict, cert_samples,
                                      detail::derived_seed(c.seed, 100));
    out.write_json("reports/STRICT_2_5.json", to_json(cert));
    require_strict_certificate(&cert);
    const double alpha = cert.constant("alpha");

    const auto coupled = simulate_coupled_ensemble(
        m.op, m.coupling, m.marks, build_sampler(m.space, x0, c.base_dir),
        build_sampler(m.space, y0, c.base_dir), m.sim, pairs, c.sim.threads);
    {
        std::vector<std::vector<double>> rows;
        for (std::size_t k = 0; k < coupled.times.size(); ++k)
            rows.push_back({coupled.times[k], coupled.msd.mean[k], coupled.msd.se[k]});
        out.write_csv("trajectories/coupled.csv", {"time", "msd_mean", "msd_se"}, rows);
    }
    const auto mix = mixing_rate(coupled, &cert, burn_in);
    json report{{"mixing", to_json(mix)},
                {"pairs", pairs},
                {"pathwise_monotone_violations", coupled.monotone_violations}};
    r.pass = mix.pass;

    if (fsec) {
        const auto nu_ens = detail::run_ensemble(m, c, build_sampler(m.space, c.initial, c.base_dir), m.sim);
        r.solver.absorb(nu_ens.solver);
        r.aborted += nu_ens.aborted;
        const auto nu = kb_average(nu_ens.checkpoints, f_burn,
                                   auto_stride(nu_ens.checkpoints, f_burn), "functional_nu");
        write_measure(out, "measures/functional_nu", nu, m.space);
        const GridSpace& sp = m.space;
        auto phi = [&sp](const StateVector& x) { return std::min(norm_h(sp, x), 1.0); };
        SimConfig sim2 = m.sim;
        sim2.seed = detail::derived_seed(c.seed, 400);
        const StateVector y = build_vector(m.space, f_y, c.base_dir);
        const auto yens = detail::run_ensemble(m, c, fixed_initial(y), sim2,
                                               {{"phi", phi}}, false);
        r.solver.absorb(yens.solver);
        r.aborted += yens.aborted;
        write_ensemble(out, "trajectories/functional.csv", yens);
        const auto fb = lipschitz_functional_check(m.space, phi, 1.0, y, nu, yens.times,
                                                   yens.observables[0], alpha, f_times);
        report["functional_bound"] = to_json(fb);
        r.pass = r.pass && fb.pass;
    }
    if (csec) {
        SimConfig sim3 = m.sim;
        sim3.seed = detail::derived_seed(c.seed, 500);
        const auto ct = cauchy_tail_check(m.op, m.coupling, m.marks,
                                          build_vector(m.space, c_x, c.base_dir), starts, sim3,
                                          c_members, &cert, c_tol);
        report["cauchy_tails"] = to_json(ct);
        r.pass = r.pass && ct.pass;
    }
    r.pass = r.pass && r.aborted == 0;
    report["pass"] = r.pass;
    out.write_json("reports/mixing.json", report);
    r.summary = {{"alpha_hat", num(mix.alpha_hat)}, {"alpha_se", num(mix.alpha_se)}};
    return r;
}

// ---------------------------------------------------------------------------
// kolmogorov
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_kolmogorov(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "kolmogorov";
    const json s = detail::section(c, cmd, {"burn_in", "stride", "max_atoms", "checks",
                                            "ibp_functions", "smoothing", "identity_tol",
                                            "identity_atoms"});
    const double burn_in = detail::opt<double>(s, "burn_in", 0.5 * c.sim.horizon, cmd);
    const auto stride = detail::opt<std::size_t>(s, "stride", 0, cmd);
    const auto max_atoms = detail::opt<std::size_t>(s, "max_atoms", 10000, cmd);
    const auto check_names =
        detail::opt<std::vector<std::string>>(s, "checks", {"INVARIANCE", "IBP"}, cmd);
    const auto ibp_names =
        detail::opt<std::vector<std::string>>(s, "ibp_functions", {"linear"}, cmd);
    const double smoothing = detail::opt<double>(s, "smoothing", 0.1, cmd);
    const double id_tol = detail::opt<double>(s, "identity_tol", 1e-9, cmd);
    const auto id_atoms = detail::opt<std::size_t>(s, "identity_atoms", 200, cmd);
    detail::require_config(burn_in >= 0.0 && burn_in < c.sim.horizon,
                           "kolmogorov.burn_in must lie in [0, horizon)");
    bool inv = false, dis = false, ibp = false;
    for (const auto& n : check_names) {
        if (n == "INVARIANCE") inv = true;
        else if (n == "DISSIPATIVITY") dis = true;
        else if (n == "IBP") ibp = true;
        else throw ConfigError("unknown kolmogorov check '" + n + "'");
    }
    if (!m.coupling.is_additive())
        throw Refused("the Kolmogorov operator is implemented for additive noise only");

    CommandOutcome r;
    r.pass = true;
    const auto ens = detail::run_ensemble(m, c, build_sampler(m.space, c.initial, c.base_dir), m.sim);
    r.solver.absorb(ens.solver);
    r.aborted = ens.aborted;
    const auto nu = kb_average(ens.checkpoints, burn_in,
                               detail::pick_stride(ens, burn_in, stride, max_atoms), "kolmogorov");
    write_measure(out, "measures/kb_average", nu, m.space);
    const auto battery = test_battery(m.space);
    for (const auto& n : ibp_names) {
        const bool known = std::any_of(battery.begin(), battery.end(),
                                       [&](const CylinderFunction& f) { return f.name() == n; });
        detail::require_config(known, "unknown battery function '" + n + "'");
    }

    // Pointwise L(f^2) = 2 f Lf + Gamma(f, f) on the first atoms.
    json identity = json::array();
    bool identity_ok = true;
    const std::size_t probes = std::min(id_atoms, nu.size());
    for (const auto& f : battery) {
        const auto f2 = f.square();
        double worst = 0.0;
        for (std::size_t a = 0; a < probes; ++a) {
            const auto& x = nu[a].state;
            const double lhs = apply_L(f2, m.op, m.coupling, m.marks, x);
            const double lf = apply_L(f, m.op, m.coupling, m.marks, x);
            const double rhs = 2.0 * f(x) * lf + carre_du_champ(f, f, m.coupling, m.marks, x);
            worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
        }
        const bool ok = worst <= id_tol;
        identity_ok = identity_ok && ok;
        identity.push_back({{"test_function", f.name()}, {"max_rel_error", num(worst)}, {"pass", ok}});
    }
    r.pass = r.pass && identity_ok;

    json checks = json::array();
    for (const auto& f : battery) {
        std::vector<KolmogorovReport> reps;
        if (inv) reps.push_back(invariance_check(f, m.op, m.coupling, m.marks, nu));
        if (dis) reps.push_back(dissipativity_check(f, m.op, m.coupling, m.marks, nu, smoothing));
        if (ibp && std::find(ibp_names.begin(), ibp_names.end(), f.name()) != ibp_names.end())
            reps.push_back(ibp_check(f, m.op, m.coupling, m.marks, nu));
        for (const auto& rep : reps) {
            checks.push_back(to_json(rep));
            r.pass = r.pass && rep.pass;
        }
    }
    r.pass = r.pass && r.aborted == 0;
    out.write_json("reports/kolmogorov.json", {{"atoms", nu.size()},
                                               {"burn_in", num(burn_in)},
                                               {"identity", identity},
                                               {"checks", checks},
                                               {"pass", r.pass}});
    r.summary = {{"checks", checks.size()}};
    return r;
}

// ---------------------------------------------------------------------------
// regularize
// ---------------------------------------------------------------------------

inline CommandOutcome cmd_regularize(const RunConfig& c, const Model& m, OutputWriter& out) {
    const std::string cmd = "regularize";
    const json s = detail::section(c, cmd, {"eps", "tiny_eps", "tiny_tol", "quad_points", "slack",
                                            "u", "probes"});
    const auto eps = detail::opt<std::vector<double>>(s, "eps", {0.2, 0.1, 0.05, 0.025}, cmd);
    const double tiny = detail::opt<double>(s, "tiny_eps", 1e-8, cmd);
    const double tiny_tol = detail::opt<double>(s, "tiny_tol", 1e-4, cmd);
    const int quad = detail::opt<int>(s, "quad_points", 32, cmd);
    const double slack = detail::opt<double>(s, "slack", 0.05, cmd);
    VectorSpec uspec;
    uspec.kind = "eigen";
    uspec = detail::opt_vector(s, "u", cmd).value_or(uspec);
    const auto n_probes = detail::opt<std::size_t>(s, "probes", 4, cmd);
    detail::require_config(!eps.empty(), "regularize.eps is empty");
    for (double e : eps)
        detail::require_config(e > 0.0 && std::isfinite(e), "regularize.eps values must be > 0");
    detail::require_config(tiny > 0.0 && std::isfinite(tiny), "regularize.tiny_eps must be > 0");
    detail::require_config(quad >= 8, "regularize.quad_points must be >= 8");

    const StateVector u = build_vector(m.space, uspec, c.base_dir);
    std::vector<StateVector> probes;
    for (std::size_t k = 0; k < n_probes; ++k) {
        StateVector v = battery_direction(m.space, k + 2);
        v *= std::pow(4.0, static_cast<double>(k) - 1.0);
        probes.push_back(std::move(v));
    }
    const auto sweep = regularization_sweep(m.op, eps, u, probes, quad, slack);
    const double tiny_err = regularization_error(m.op, {tiny, quad, 1e-12}, u);
    const bool tiny_ok = tiny_err <= tiny_tol;

    CommandOutcome r;
    r.pass = sweep.error_monotone && sweep.growth_uniform && tiny_ok;
    json rep = to_json(sweep);
    rep["tiny_eps"] = {{"eps", tiny}, {"error", num(tiny_err)}, {"tolerance", tiny_tol}, {"pass", tiny_ok}};
    rep["pass"] = r.pass;
    out.write_json("reports/regularize.json", rep);
    r.summary = {{"rows", sweep.rows.size()}};
    return r;
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

inline CommandOutcome dispatch(const std::string& cmd, const RunConfig& c, const Model& m,
                               OutputWriter& out) {
    if (cmd == "check-operator") return cmd_check_operator(c, m, out);
    if (cmd == "simulate") return cmd_simulate(c, m, out);
    if (cmd == "ergodicity") return cmd_ergodicity(c, m, out);
    if (cmd == "mixing") return cmd_mixing(c, m, out);
    if (cmd == "kolmogorov") return cmd_kolmogorov(c, m, out);
    if (cmd == "regularize") return cmd_regularize(c, m, out);
    throw ConfigError("unknown command '" + cmd + "'");
}

/// Runs one subcommand end to end and returns its exit code. Files land in
/// the configured output directory; errors go to `err`.
inline int run_command(const std::string& cmd, const std::filesystem::path& config_path,
                       const Overrides& ov = {}, std::ostream& err = std::cerr) {
    RunConfig c;
    try {
        c = load_config(config_path);
        if (ov.output_dir) c.output_dir = *ov.output_dir;
        if (ov.seed) c.seed = *ov.seed;
        if (std::find(command_names().begin(), command_names().end(), cmd) == command_names().end())
            throw ConfigError("unknown command '" + cmd + "'");
        std::set<std::string> sections;
        for (const auto& n : command_names()) sections.insert(experiment_key(n));
        detail::allow_keys(c.experiment, "experiment", sections);
    } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }
    const std::string hash = config_hash(c);
    OutputWriter out(c.output_dir, hash);
    out.write_text("config.json", "// config_hash=" + hash + "\n" + to_json(c).dump(2) + "\n");

    int code = kExitPass;
    std::string status = "pass";
    std::string message;
    CommandOutcome res;
    try {
        const Model m = build_model(c);
        res = dispatch(cmd, c, m, out);
        if (res.aborted > 0) {
            code = kExitNumerical;
            status = "numerical_abort";
            message = std::to_string(res.aborted) + " ensemble members did not converge";
        } else if (!res.pass) {
            code = kExitCheckFailed;
            status = "check_failed";
        }
    } catch (const Refused& e) {
        code = kExitCheckFailed;
        status = "refused";
        message = e.what();
    } catch (const NonConverged& e) {
        code = kExitNumerical;
        status = "numerical_abort";
        message = std::string(e.what()) + " at t=" + format_double(e.time());
    } catch (const ConfigError& e) {
        code = kExitConfig;
        status = "config_error";
        message = e.what();
    } catch (const ContractViolation& e) {
        code = kExitConfig;
        status = "config_error";
        message = e.what();
    }
    if (!message.empty()) err << cmd << ": " << status << ": " << message << "\n";

    auto files = out.files();
    std::sort(files.begin(), files.end());
    out.write_json("manifest.json", {{"command", cmd},
                                     {"seed", c.seed},
                                     {"status", status},
                                     {"exit_code", code},
                                     {"message", message},
                                     {"solver", to_json(res.solver)},
                                     {"summary", res.summary},
                                     {"files", files}});
    return code;
}

}  // namespace jumplab
