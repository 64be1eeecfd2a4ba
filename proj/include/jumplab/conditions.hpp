#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "jumplab/noise.hpp"
#include "jumplab/operators.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

enum class Condition { Monotone, Coercive, Growth, GBound, Strict, Superlinear };

inline std::string_view to_string(Condition c) {
    switch (c) {
        case Condition::Monotone: return "MONOTONE_2_1";
        case Condition::Coercive: return "COERCIVE_2_2";
        case Condition::Growth: return "GROWTH_2_3";
        case Condition::GBound: return "G_BOUND_2_4";
        case Condition::Strict: return "STRICT_2_5";
        case Condition::Superlinear: return "SUPERLINEAR";
    }
    return "?";
}

inline Condition condition_from_string(std::string_view s) {
    for (auto c : {Condition::Monotone, Condition::Coercive, Condition::Growth, Condition::GBound,
                   Condition::Strict, Condition::Superlinear})
        if (to_string(c) == s) return c;
    throw ConfigError("unknown condition '" + std::string(s) + "'");
}

/// Sampled certificate for one structural condition. The fitted constants
/// hold over the sampled set only.
struct ConditionReport {
    Condition condition = Condition::Monotone;
    std::size_t samples = 0;
    double min_gap = 0.0;
    double tolerance = 0.0;
    std::map<std::string, double> fitted;
    bool pass = false;
    std::vector<std::vector<double>> nonfinite_states;

    double constant(const std::string& name) const {
        auto it = fitted.find(name);
        if (it == fitted.end()) throw ContractViolation("certificate lacks constant '" + name + "'");
        return it->second;
    }
};

/// Shared inputs of the condition checkers.
struct DriftSystem {
    const MonotoneOperator& op;
    const JumpCoupling& coupling;
    const MarkSpace& marks;
};

namespace detail {

/// Nonnegative least squares for at most a handful of columns by enumerating
/// active sets; returns the feasible least-squares solution of min SSE.
inline std::vector<double> nnls_small(const std::vector<std::vector<double>>& cols,
                                      const std::vector<double>& y) {
    const std::size_t k = cols.size();
    const std::size_t m = y.size();
    std::vector<double> best(k, 0.0);
    double best_sse = 0.0;
    for (double v : y) best_sse += v * v;
    for (std::uint32_t mask = 1; mask < (1u << k); ++mask) {
        std::vector<std::size_t> act;
        for (std::size_t j = 0; j < k; ++j)
            if (mask & (1u << j)) act.push_back(j);
        const std::size_t a = act.size();
        std::vector<double> ata(a * a, 0.0), aty(a, 0.0);
        for (std::size_t r = 0; r < a; ++r) {
            for (std::size_t c = 0; c < a; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < m; ++i) s += cols[act[r]][i] * cols[act[c]][i];
                ata[r * a + c] = s;
            }
            double s = 0.0;
            for (std::size_t i = 0; i < m; ++i) s += cols[act[r]][i] * y[i];
            aty[r] = s;
        }
        // Gaussian elimination with partial pivoting.
        bool singular = false;
        std::vector<double> x = aty;
        for (std::size_t c = 0; c < a && !singular; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < a; ++r)
                if (std::abs(ata[r * a + c]) > std::abs(ata[piv * a + c])) piv = r;
            const double diag_scale = std::abs(ata[c * a + c]) + 1e-300;
            if (std::abs(ata[piv * a + c]) <= 1e-13 * diag_scale ||
                std::abs(ata[piv * a + c]) == 0.0) {
                singular = true;
                break;
            }
            if (piv != c) {
                for (std::size_t j = 0; j < a; ++j) std::swap(ata[c * a + j], ata[piv * a + j]);
                std::swap(x[c], x[piv]);
            }
            for (std::size_t r = c + 1; r < a; ++r) {
                const double f = ata[r * a + c] / ata[c * a + c];
                for (std::size_t j = c; j < a; ++j) ata[r * a + j] -= f * ata[c * a + j];
                x[r] -= f * x[c];
            }
        }
        if (singular) continue;
        for (std::size_t c = a; c-- > 0;) {
            for (std::size_t j = c + 1; j < a; ++j) x[c] -= ata[c * a + j] * x[j];
            x[c] /= ata[c * a + c];
        }
        if (std::any_of(x.begin(), x.end(), [](double v) { return v < 0.0 || !std::isfinite(v); }))
            continue;
        double sse = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            double pred = 0.0;
            for (std::size_t r = 0; r < a; ++r) pred += x[r] * cols[act[r]][i];
            sse += (y[i] - pred) * (y[i] - pred);
        }
        if (sse < best_sse) {
            best_sse = sse;
            std::fill(best.begin(), best.end(), 0.0);
            for (std::size_t r = 0; r < a; ++r) best[act[r]] = x[r];
        }
    }
    return best;
}

inline StateVector sample_state(std::size_t n, std::size_t index, Rng& rng) {
    static constexpr double amplitudes[] = {0.1, 1.0, 10.0};
    const double amp = amplitudes[index % 3];
    StateVector x(n);
    for (auto& v : x) v = amp * rng.normal();
    return x;
}

constexpr double kRequiredPositive = 1e-8;  // floor for constants that must be > 0
constexpr double kRelativeTolerance = 1e-9;

inline void record_nonfinite(ConditionReport& r, const StateVector& x) {
    r.nonfinite_states.push_back(x.values());
}

}  // namespace detail

/// Draws `samples` Gaussian states (amplitudes cycling through 0.1, 1, 10),
/// evaluates the condition's gap and fits its constants. For conditions with
/// pairs, `samples` pairs are drawn.
///
/// Constants that the condition requires to be strictly positive (alpha_1,
/// alpha, eta) are floored at 1e-8; the affine constant is raised until all
/// samples are covered only when the leading constant clears that floor, so
/// a drift lacking the structure reports a negative min_gap.
inline ConditionReport check_condition(const DriftSystem& sys, Condition which,
                                       std::size_t samples, std::uint64_t seed,
                                       double superlinear_delta = -1.0) {
    const GridSpace& space = sys.op.space();
    detail::require(samples >= 1, "check_condition needs samples >= 1");
    detail::require(space.p() >= 2.0, "conditions require p >= 2");
    sys.coupling.check(space, sys.marks);
    const double p = space.p();
    const std::size_t n = space.n();
    Rng rng(seed);

    ConditionReport rep;
    rep.condition = which;
    rep.samples = samples;

    auto two_pairing = [&](const StateVector& x, const StateVector& y) {
        const StateVector d = x - y;
        DualVector ad = apply(sys.op, x);
        ad -= apply(sys.op, y);
        return 2.0 * dual_pairing(space, ad, d);
    };

    switch (which) {
        case Condition::Monotone:
        case Condition::Strict:
        case Condition::Superlinear: {
            const double delta = superlinear_delta >= 0.0 ? superlinear_delta : p - 2.0;
            std::vector<double> gaps, dist2;
            double scale = 1.0;
            for (std::size_t s = 0; s < samples; ++s) {
                const StateVector x = detail::sample_state(n, s, rng);
                const StateVector y = detail::sample_state(n, s, rng);
                double two_p = 0.0, gd = 0.0;
                try {
                    two_p = two_pairing(x, y);
                    gd = g_diff_norm_sq(space, sys.coupling, sys.marks, x, y);
                } catch (const ContractViolation&) {
                    detail::record_nonfinite(rep, x);
                    continue;
                }
                if (!std::isfinite(two_p) || !std::isfinite(gd)) {
                    detail::record_nonfinite(rep, x);
                    continue;
                }
                scale = std::max(scale, std::abs(two_p) + gd);
                gaps.push_back(two_p - gd);
                const double nh = norm_h(space, x - y);
                dist2.push_back(nh * nh);
            }
            rep.tolerance = detail::kRelativeTolerance * scale;
            if (gaps.empty()) {
                rep.min_gap = -INFINITY;
                break;
            }
            if (which == Condition::Monotone) {
                rep.min_gap = *std::min_element(gaps.begin(), gaps.end());
                break;
            }
            const double power = which == Condition::Strict ? 1.0 : 1.0 + delta / 2.0;
            double coef = INFINITY;
            for (std::size_t i = 0; i < gaps.size(); ++i)
                if (dist2[i] > 0.0) coef = std::min(coef, gaps[i] / std::pow(dist2[i], power));
            const double cert = std::max(coef, detail::kRequiredPositive);
            rep.min_gap = INFINITY;
            for (std::size_t i = 0; i < gaps.size(); ++i)
                rep.min_gap = std::min(rep.min_gap, gaps[i] - cert * std::pow(dist2[i], power));
            if (which == Condition::Strict) {
                rep.fitted["alpha"] = coef;
                // eta in (0, alpha) and delta_eta with
                // 2<Ax,x> - |G(x)|_m^2 >= eta |x|_H^2 - delta_eta on fresh samples.
                const double eta = 0.5 * coef;
                double delta_eta = 0.0;
                for (std::size_t s = 0; s < samples; ++s) {
                    const StateVector x = detail::sample_state(n, s, rng);
                    const double l = 2.0 * pairing_with_self(sys.op, x) -
                                     g_norm_sq(space, sys.coupling, sys.marks, x);
                    const double nh = norm_h(space, x);
                    delta_eta = std::max(delta_eta, eta * nh * nh - l);
                }
                // x = 0 is always admissible.
                delta_eta = std::max(delta_eta, g_norm_sq(space, sys.coupling, sys.marks,
                                                          space.zeros()));
                rep.fitted["eta"] = eta;
                rep.fitted["delta_eta"] = delta_eta;
            } else {
                rep.fitted["eta"] = coef;
                rep.fitted["delta"] = delta;
            }
            break;
        }
        case Condition::Coercive:
        case Condition::Growth:
        case Condition::GBound: {
            std::vector<double> lhs, pv, qh, nv, gsq, dual;
            std::vector<StateVector> xs;
            double scale = 1.0;
            for (std::size_t s = 0; s < samples; ++s) {
                StateVector x = detail::sample_state(n, s, rng);
                double ax_x = 0.0, g2 = 0.0, dn = 0.0;
                try {
                    const DualVector ax = apply(sys.op, x);
                    ax_x = dual_pairing(space, ax, x);
                    g2 = g_norm_sq(space, sys.coupling, sys.marks, x);
                    dn = dual_norm(space, ax);
                } catch (const ContractViolation&) {
                    detail::record_nonfinite(rep, x);
                    continue;
                }
                if (!std::isfinite(ax_x) || !std::isfinite(g2) || !std::isfinite(dn)) {
                    detail::record_nonfinite(rep, x);
                    continue;
                }
                const double v = norm_v(space, x);
                const double hh = norm_h(space, x);
                lhs.push_back(2.0 * ax_x - g2);
                pv.push_back(std::pow(v, p));
                qh.push_back(hh * hh);
                nv.push_back(v);
                gsq.push_back(g2);
                dual.push_back(dn);
                scale = std::max({scale, std::abs(2.0 * ax_x) + g2, dn});
            }
            rep.tolerance = detail::kRelativeTolerance * scale;
            const std::size_t m = lhs.size();
            if (m == 0) {
                rep.min_gap = -INFINITY;
                break;
            }

            // Coercivity: lhs >= alpha1 |x|_V^p - alpha0 |x|_H^2 - C0.
            std::vector<double> neg_q(m), neg_one(m, -1.0);
            for (std::size_t i = 0; i < m; ++i) neg_q[i] = -qh[i];
            auto co = detail::nnls_small({pv, neg_q, neg_one}, lhs);
            double alpha1 = std::max(co[0], detail::kRequiredPositive);
            double alpha0 = co[1];
            double c0 = co[2];
            double coer_gap = INFINITY;
            for (std::size_t i = 0; i < m; ++i)
                coer_gap = std::min(coer_gap, lhs[i] - (alpha1 * pv[i] - alpha0 * qh[i] - c0));
            if (co[0] >= detail::kRequiredPositive && coer_gap < 0.0) {
                c0 -= coer_gap;
                coer_gap = 0.0;
            }

            // Growth: |Ax|_{V'} <= C1 |x|_V^{p-1} + C2.
            std::vector<double> pm1(m), one(m, 1.0);
            for (std::size_t i = 0; i < m; ++i) pm1[i] = std::pow(nv[i], p - 1.0);
            auto gr = detail::nnls_small({pm1, one}, dual);
            const double c1 = std::max(gr[0], detail::kRequiredPositive);
            double c2 = gr[1];
            double growth_gap = INFINITY;
            for (std::size_t i = 0; i < m; ++i)
                growth_gap = std::min(growth_gap, c1 * pm1[i] + c2 - dual[i]);
            if (growth_gap < 0.0) {
                c2 -= growth_gap;
                growth_gap = 0.0;
            }

            rep.fitted["alpha1"] = alpha1;
            rep.fitted["alpha0"] = alpha0;
            rep.fitted["C0"] = c0;
            rep.fitted["C1"] = c1;
            rep.fitted["C2"] = c2;
            if (which == Condition::Coercive) {
                rep.min_gap = coer_gap;
            } else if (which == Condition::Growth) {
                rep.min_gap = growth_gap;
            } else {
                // |G(x,.)|_m^2 <= 2 C1 |x|_V^p + alpha0 |x|_H^2 + 2 C2 |x|_V + C0
                double g_gap = INFINITY;
                for (std::size_t i = 0; i < m; ++i) {
                    const double rhs =
                        2.0 * c1 * pv[i] + alpha0 * qh[i] + 2.0 * c2 * nv[i] + c0;
                    g_gap = std::min(g_gap, rhs - gsq[i]);
                }
                rep.min_gap = g_gap;
            }
            break;
        }
    }
    rep.pass = rep.nonfinite_states.empty() && rep.min_gap >= -rep.tolerance;
    return rep;
}

}  // namespace jumplab
