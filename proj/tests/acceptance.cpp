// Acceptance run: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "jumplab/commands.hpp"

using namespace jumplab;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = JUMPLAB_CONFIG_DIR;
const fs::path kOut = "acceptance_out";

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [violated]");
    }
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

json read_json(const fs::path& p) {
    std::ifstream f(p);
    return json::parse(f);
}

/// Runs a shipped config through the CLI driver and returns its output dir.
fs::path run_shipped(const std::string& cmd, const std::string& config, Outcome& o) {
    const fs::path out = kOut / (config + "-" + cmd);
    fs::remove_all(out);
    std::ostringstream err;
    const int code = run_command(cmd, kConfigs / (config + ".json"), {out.string(), std::nullopt}, err);
    o.require(code == kExitPass, cmd + " " + config + " exit " + std::to_string(code) +
                                     (err.str().empty() ? "" : " (" + err.str() + ")"));
    if (fs::exists(out / "manifest.json")) {
        const double res = read_json(out / "manifest.json").at("solver").at("max_residual").get<double>();
        const double tol = load_config(kConfigs / (config + ".json")).sim.solver_tol;
        o.require(res <= tol, "max step residual " + fmt(res) + " <= " + fmt(tol));
    }
    return out;
}

StateVector random_state(std::size_t n, Rng& rng, double scale) {
    StateVector v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

/// Dense Gaussian elimination with partial pivoting.
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
        std::swap(a[k], a[piv]);
        std::swap(b[k], b[piv]);
        for (std::size_t i = k + 1; i < n; ++i) {
            const double f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t j = i + 1; j < n; ++j) s -= a[i][j] * x[j];
        x[i] = s / a[i][i];
    }
    return x;
}

Outcome criterion1() {
    Outcome o;
    const GridSpace sob(32, 3.0, SpaceMode::Sobolev);
    const GridSpace neg(32, 3.0, SpaceMode::Negative);
    const auto plap = MonotoneOperator::p_laplace(sob, ScalarFunction::power(3.0));
    const auto pme = MonotoneOperator::porous_media(neg, ScalarFunction::power(3.0));
    const MarkSpace none;
    for (const auto* op : {&plap, &pme}) {
        const auto g = JumpCoupling::none(0, op->space().n());
        for (auto c : {Condition::Monotone, Condition::Coercive}) {
            const auto r = check_condition({*op, g, none}, c, 1000, 1);
            o.require(r.pass && r.min_gap >= -1e-9,
                      std::string(to_string(op->kind())) + " " + std::string(to_string(c)) +
                          " min_gap " + fmt(r.min_gap));
        }
    }
    Rng rng(5);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const auto u = random_state(sob.n(), rng, std::pow(10.0, t % 4 - 2));
        const double rhs = std::pow(norm_v(sob, u), 3.0);
        worst = std::max(worst, std::abs(pairing_with_self(plap, u) - rhs) / rhs);
    }
    o.require(worst <= 1e-9, "summation by parts rel err " + fmt(worst));
    return o;
}

Outcome criterion2() {
    Outcome o;
    const GridSpace scalar(1, 4.0, SpaceMode::Euclidean);
    const auto cubic = MonotoneOperator::custom_fd(scalar, ScalarFunction::cubic());
    const MarkSpace none;
    const auto w = implicit_step(cubic, JumpCoupling::none(0, 1), none, StateVector{2.0}, 1.0, 1e-14);
    o.require(std::abs(w[0] - 1.0) <= 1e-10, "w + w^3 = 2 root err " + fmt(std::abs(w[0] - 1.0)));

    const GridSpace s(32, 2.0, SpaceMode::Sobolev);
    const auto lin = MonotoneOperator::linear_diffusion(s);
    const auto g = JumpCoupling::none(0, s.n());
    Rng rng(6);
    const auto u = random_state(s.n(), rng, 1.0);
    const double dt = 0.01;
    std::vector<std::vector<double>> dense(s.n(), std::vector<double>(s.n(), 0.0));
    for (std::size_t j = 0; j < s.n(); ++j) {
        StateVector e(s.n());
        e[j] = 1.0;
        const auto col = apply(lin, e);
        for (std::size_t i = 0; i < s.n(); ++i) dense[i][j] = (i == j ? 1.0 : 0.0) + dt * col[i];
    }
    const auto ref = dense_solve(dense, u.values());
    const auto step = implicit_step(lin, g, none, u, dt, 1e-14);
    double err = 0.0;
    for (std::size_t i = 0; i < s.n(); ++i) err = std::max(err, std::abs(step[i] - ref[i]));
    o.require(err <= 1e-10, "linear step vs dense solve " + fmt(err));

    const GridSpace s3(32, 3.0, SpaceMode::Sobolev);
    const auto plap = MonotoneOperator::p_laplace(s3, ScalarFunction::power(3.0));
    const auto g3 = JumpCoupling::none(0, s3.n());
    int violations = 0;
    for (int t = 0; t < 100; ++t) {
        const auto a = random_state(s3.n(), rng, 1.0);
        const auto b = random_state(s3.n(), rng, 1.0);
        const auto ja = implicit_step(plap, g3, none, a, 1e-3, 1e-13);
        const auto jb = implicit_step(plap, g3, none, b, 1e-3, 1e-13);
        if (norm_h(s3, ja - jb) > norm_h(s3, a - b) * (1.0 + 1e-12)) ++violations;
    }
    o.require(violations == 0, "nonexpansive on 100 pairs (" + std::to_string(violations) + " violations)");
    return o;
}

Outcome criterion3() {
    Outcome o;
    const auto out = run_shipped("ergodicity", "ou-jumps", o);
    const auto rep = read_json(out / "reports/ergodicity.json");
    const auto m2 = rep.at("integrability").at("m2");
    const double v = m2.at("value"), se = m2.at("se");
    o.require(std::abs(v - 0.5) <= 3.0 * se, "second moment " + fmt(v) + " +- " + fmt(se) + " vs 0.5");
    const auto& mom = rep.at("moment");
    const double g = mom.at("gamma_hat");
    o.require(mom.at("status") == "PASS", "moment_check " + mom.at("status").get<std::string>());
    o.require(g >= 1.8 && g <= 2.2, "gamma_hat " + fmt(g) + " in [1.8, 2.2]");
    return o;
}

json g_mixing;  // one coupled run serves criteria 4 and 5
double g_mixing_seconds = 0.0;

Outcome criterion4() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = run_shipped("mixing", "linear-mixing", o);
    g_mixing_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    g_mixing = read_json(out / "reports/mixing.json");
    const auto& mix = g_mixing.at("mixing");
    const double a = mix.at("alpha_hat");
    o.require(std::abs(a - 2.0) <= 0.05, "alpha_hat " + fmt(a) + " = 2 +- 0.05");
    o.require(mix.at("pass").get<bool>(), "coupled msd under certified envelope");
    const auto& fb = g_mixing.at("functional_bound");
    std::vector<double> want{0.5, 1.0, 2.0, 4.0};
    std::vector<double> got;
    for (const auto& row : fb.at("rows")) {
        got.push_back(row.at("t"));
        const double lhs = row.at("lhs"), rhs = row.at("rhs"), se = row.at("se");
        o.require(lhs <= rhs + 3.0 * se,
                  "t=" + fmt(row.at("t")) + " |P_t phi - nu(phi)| " + fmt(lhs) + " <= " + fmt(rhs) + " + 3*" + fmt(se));
    }
    o.require(got == want, "bound evaluated at t in {0.5, 1, 2, 4}");
    return o;
}

Outcome criterion5() {
    Outcome o;
    if (g_mixing.is_null()) {
        o.require(false, "mixing report missing");
        return o;
    }
    const auto& ct = g_mixing.at("cauchy_tails");
    std::vector<double> starts;
    for (const auto& row : ct.at("rows")) {
        const double s1 = row.at("s1");
        if (std::find(starts.begin(), starts.end(), s1) == starts.end()) starts.push_back(s1);
        const double s2 = row.at("s2");
        if (std::find(starts.begin(), starts.end(), s2) == starts.end()) starts.push_back(s2);
    }
    std::sort(starts.begin(), starts.end());
    o.require(starts == std::vector<double>{-8.0, -4.0, -2.0, -1.0}, "starts {-1, -2, -4, -8}");
    const double fit = ct.at("fitted_exponent"), alpha = ct.at("certified_alpha");
    const double rel = std::abs(fit - alpha) / alpha;
    o.require(rel <= 0.2, "fitted exponent " + fmt(fit) + " vs certified " + fmt(alpha) + " (rel " + fmt(rel) + ")");
    return o;
}

Outcome criterion6() {
    Outcome o;
    const auto out = run_shipped("regularize", "regularize", o);
    const auto rep = read_json(out / "reports/regularize.json");
    std::vector<double> eps, err;
    for (const auto& row : rep.at("rows")) {
        eps.push_back(row.at("eps"));
        err.push_back(row.at("error"));
    }
    o.require(eps == std::vector<double>{0.2, 0.1, 0.05, 0.025}, "eps sweep 0.2, 0.1, 0.05, 0.025");
    bool mono = true;
    for (std::size_t k = 1; k < err.size(); ++k) mono = mono && err[k] <= 1.05 * err[k - 1];
    std::string errs;
    for (double e : err) errs += (errs.empty() ? "" : ", ") + fmt(e);
    o.require(mono, "errors " + errs + " decrease within 5%");
    const double tiny = rep.at("tiny_eps").at("error");
    o.require(tiny <= 1e-4, "error at eps=1e-8 " + fmt(tiny));
    o.require(rep.at("growth_uniform").get<bool>(), "uniform growth constant");
    return o;
}

Outcome criterion7() {
    Outcome o;
    const auto out = run_shipped("kolmogorov", "kolmogorov-ou", o);
    const auto rep = read_json(out / "reports/kolmogorov.json");
    double worst = 0.0;
    for (const auto& row : rep.at("identity")) worst = std::max(worst, row.at("max_rel_error").get<double>());
    o.require(worst <= 1e-9, "L(f^2) = 2fLf + Gamma max rel err " + fmt(worst));
    int inv = 0;
    bool inv_ok = true;
    for (const auto& c : rep.at("checks")) {
        if (c.at("kind") == "INVARIANCE") {
            ++inv;
            inv_ok = inv_ok && c.at("pass").get<bool>();
        }
        if (c.at("kind") == "IBP" && c.at("test_function") == "linear") {
            const auto& d = c.at("ibp");
            const double i1 = d.at("I1_f_Lf").at("value"), i1se = d.at("I1_f_Lf").at("se");
            const double i2 = d.at("I2_gamma").at("value"), i2se = d.at("I2_gamma").at("se");
            o.require(std::abs(i1 + 0.5) <= 3.0 * i1se, "I1 " + fmt(i1) + " +- " + fmt(i1se) + " vs -0.5");
            o.require(std::abs(i2 - 1.0) <= 3.0 * i2se + 1e-12, "I2 " + fmt(i2) + " vs 1");
            o.require(d.at("factor_flag").get<bool>(),
                      "factor flag (supported " + d.at("supported_factor").get<std::string>() + ")");
        }
    }
    o.require(inv >= 5 && inv_ok, "invariance on " + std::to_string(inv) + " battery functions");
    return o;
}

Outcome criterion8() {
    Outcome o;
    const auto out = run_shipped("ergodicity", "p-laplace-p3", o);
    const auto rep = read_json(out / "reports/ergodicity.json");
    const auto cfg = load_config(kConfigs / "p-laplace-p3.json");
    o.require(cfg.space.n == 32 && cfg.space.p == 3.0 && cfg.sim.horizon == 20.0 &&
                  cfg.sim.members == 200 && cfg.noise.marks.size() == 2,
              "setup n=32 p=3 T=20 M=200 two marks");
    const auto& integ = rep.at("integrability");
    o.require(integ.at("finite").get<bool>(),
              "m2 " + fmt(integ.at("m2").at("value")) + ", mpv " + fmt(integ.at("mpv").at("value")) + " finite");
    o.require(rep.at("horizon_doubling").at("stable").get<bool>(), "stable under horizon doubling");
    const auto& et = rep.at("alternate_initial").at("energy_test");
    o.require(et.at("pass").get<bool>(), "energy distance " + fmt(et.at("statistic")) + " <= 95% threshold " +
                                             fmt(et.at("threshold_95")));
    return o;
}

}  // namespace

int main() {
    fs::create_directories(kOut);
    struct Criterion {
        int id;
        double limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{{1, 10.0, criterion1},  {2, 1.0, criterion2},
                                     {3, 60.0, criterion3},  {4, 60.0, criterion4},
                                     {5, 60.0, criterion5},  {6, 30.0, criterion6},
                                     {7, 60.0, criterion7},  {8, 600.0, criterion8}};
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.id == 5) secs += g_mixing_seconds;  // shares the criterion 4 run
        o.require(secs < c.limit_s, "runtime " + fmt(secs) + " s < " + fmt(c.limit_s) + " s");
        std::printf("CRITERION %d %s: %s\n", c.id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed;
}
