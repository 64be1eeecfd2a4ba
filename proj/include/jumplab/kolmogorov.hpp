#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "jumplab/ergodics.hpp"
#include "jumplab/errors.hpp"
#include "jumplab/noise.hpp"
#include "jumplab/operators.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

/// Monomial coef * prod_j y_j^{powers[j]}.
struct Monomial {
    double coef = 0.0;
    std::vector<int> powers;
};

/// Outer function F: R^k -> R of a cylindrical test function.
///   Polynomial  sum of monomials
///   TanhPower   c * tanh(sum_j w_j y_j + b)^m
class OuterFunction {
public:
    enum class Family { Polynomial, TanhPower };

    static OuterFunction polynomial(std::size_t k, std::vector<Monomial> terms) {
        OuterFunction o(Family::Polynomial, k);
        for (auto& t : terms) {
            detail::require(t.powers.size() == k, "monomial arity must match direction count");
            for (int e : t.powers) detail::require(e >= 0, "monomial powers must be >= 0");
        }
        o.terms_ = std::move(terms);
        return o;
    }
    static OuterFunction constant(std::size_t k, double c) {
        return polynomial(k, {Monomial{c, std::vector<int>(k, 0)}});
    }
    static OuterFunction tanh_power(std::vector<double> w, double b, int m, double c = 1.0) {
        detail::require(m >= 1, "tanh power must be >= 1");
        OuterFunction o(Family::TanhPower, w.size());
        o.w_ = std::move(w);
        o.b_ = b;
        o.m_ = m;
        o.c_ = c;
        return o;
    }

    Family family() const noexcept { return family_; }
    std::size_t arity() const noexcept { return k_; }
    const std::vector<Monomial>& terms() const noexcept { return terms_; }
    int degree() const {
        int d = 0;
        for (const auto& t : terms_) {
            int s = 0;
            for (int e : t.powers) s += e;
            d = std::max(d, s);
        }
        return d;
    }

    double value(const std::vector<double>& y) const {
        if (family_ == Family::TanhPower) return c_ * std::pow(std::tanh(arg(y)), m_);
        double s = 0.0;
        for (const auto& t : terms_) s += t.coef * monomial(t.powers, y, -1);
        return s;
    }

    std::vector<double> gradient(const std::vector<double>& y) const {
        std::vector<double> g(k_, 0.0);
        if (family_ == Family::TanhPower) {
            const double th = std::tanh(arg(y));
            const double d = c_ * m_ * std::pow(th, m_ - 1) * (1.0 - th * th);
            for (std::size_t j = 0; j < k_; ++j) g[j] = d * w_[j];
            return g;
        }
        for (const auto& t : terms_)
            for (std::size_t j = 0; j < k_; ++j)
                if (t.powers[j] > 0)
                    g[j] += t.coef * t.powers[j] * monomial(t.powers, y, static_cast<int>(j));
        return g;
    }

    /// F^2 in the same family.
    OuterFunction square() const {
        if (family_ == Family::TanhPower) return tanh_power(w_, b_, 2 * m_, c_ * c_);
        std::map<std::vector<int>, double> acc;
        for (const auto& a : terms_)
            for (const auto& b : terms_) {
                std::vector<int> p(k_);
                for (std::size_t j = 0; j < k_; ++j) p[j] = a.powers[j] + b.powers[j];
                acc[p] += a.coef * b.coef;
            }
        std::vector<Monomial> out;
        for (auto& [p, c] : acc) out.push_back({c, p});
        return polynomial(k_, std::move(out));
    }

    std::string describe() const {
        if (family_ == Family::TanhPower)
            return "tanh_power(m=" + std::to_string(m_) + ")";
        return "polynomial(deg=" + std::to_string(degree()) + ")";
    }

private:
    OuterFunction(Family f, std::size_t k) : family_(f), k_(k) {}

    double arg(const std::vector<double>& y) const {
        double s = b_;
        for (std::size_t j = 0; j < k_; ++j) s += w_[j] * y[j];
        return s;
    }

    // prod_j y_j^{p_j}, with the exponent of index `lowered` reduced by one.
    static double monomial(const std::vector<int>& p, const std::vector<double>& y, int lowered) {
        double v = 1.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const int e = p[j] - (static_cast<int>(j) == lowered ? 1 : 0);
            for (int r = 0; r < e; ++r) v *= y[j];
        }
        return v;
    }

    Family family_;
    std::size_t k_;
    std::vector<Monomial> terms_;
    std::vector<double> w_;
    double b_ = 0.0;
    int m_ = 1;
    double c_ = 1.0;
};

/// f(x) = F(<l_1,x>_H, ..., <l_k,x>_H) with k <= 4 directions.
class CylinderFunction {
public:
    CylinderFunction(const GridSpace& space, std::vector<StateVector> directions, OuterFunction outer,
                     std::string name = {})
        : space_(space), dirs_(std::move(directions)), outer_(std::move(outer)),
          name_(std::move(name)) {
        detail::require(dirs_.size() <= 4, "cylinder functions use at most 4 directions");
        detail::require(dirs_.size() == outer_.arity(), "outer arity must match direction count");
        for (const auto& d : dirs_) space_.check(d);
        if (name_.empty()) name_ = outer_.describe();
    }

    const GridSpace& space() const noexcept { return space_; }
    const std::vector<StateVector>& directions() const noexcept { return dirs_; }
    const OuterFunction& outer() const noexcept { return outer_; }
    const std::string& name() const noexcept { return name_; }

    std::vector<double> coordinates(const StateVector& x) const {
        std::vector<double> y(dirs_.size());
        for (std::size_t j = 0; j < dirs_.size(); ++j) y[j] = inner_h(space_, dirs_[j], x);
        return y;
    }

    double operator()(const StateVector& x) const { return outer_.value(coordinates(x)); }

    /// H-gradient: sum_j dF/dy_j l_j
    StateVector gradient(const StateVector& x) const {
        const auto g = outer_.gradient(coordinates(x));
        StateVector out(space_.n());
        for (std::size_t j = 0; j < dirs_.size(); ++j) out.axpy(g[j], dirs_[j]);
        return out;
    }

    CylinderFunction square() const {
        return CylinderFunction(space_, dirs_, outer_.square(), name_ + "^2");
    }

    /// Max abs difference between the outer gradient and central differences.
    double gradient_fd_error(const std::vector<double>& y, double step = 1e-5) const {
        const auto g = outer_.gradient(y);
        double err = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            auto yp = y, ym = y;
            yp[j] += step;
            ym[j] -= step;
            const double fd = (outer_.value(yp) - outer_.value(ym)) / (2.0 * step);
            err = std::max(err, std::abs(fd - g[j]) / std::max(1.0, std::abs(g[j])));
        }
        return err;
    }

private:
    GridSpace space_;
    std::vector<StateVector> dirs_;
    OuterFunction outer_;
    std::string name_;
};

namespace detail {

inline void require_additive(const JumpCoupling& coupling) {
    if (!coupling.is_additive())
        throw Refused("Kolmogorov operator is defined for additive (state-independent) noise only");
}

}  // namespace detail

/// I f(x) = sum_i m_i [f(x+g_i) - f(x) - <Df(x), g_i>_H]
inline double nonlocal_part(const CylinderFunction& f, const JumpCoupling& coupling,
                            const MarkSpace& marks, const StateVector& x) {
    detail::require_additive(coupling);
    const GridSpace& space = f.space();
    const double fx = f(x);
    const StateVector df = f.gradient(x);
    double s = 0.0;
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const auto& g = coupling.increments()[i];
        s += marks.mass(i) * (f(x + g) - fx - inner_h(space, df, g));
    }
    return s;
}

/// Lf(x) = -<Ax, Df(x)> + I f(x)
inline double apply_L(const CylinderFunction& f, const MonotoneOperator& op,
                      const JumpCoupling& coupling, const MarkSpace& marks, const StateVector& x) {
    detail::require_additive(coupling);
    const GridSpace& space = op.space();
    space.check(x);
    const double drift = dual_pairing(space, apply(op, x), f.gradient(x));
    return -drift + nonlocal_part(f, coupling, marks, x);
}

/// Gamma(f,g)(x) = sum_i m_i (f(x+g_i)-f(x)) (g(x+g_i)-g(x))
inline double carre_du_champ(const CylinderFunction& f, const CylinderFunction& g,
                             const JumpCoupling& coupling, const MarkSpace& marks,
                             const StateVector& x) {
    detail::require_additive(coupling);
    const double fx = f(x), gx = g(x);
    double s = 0.0;
    for (std::size_t i = 0; i < marks.size(); ++i) {
        const StateVector y = x + coupling.increments()[i];
        s += marks.mass(i) * (f(y) - fx) * (g(y) - gx);
    }
    return s;
}

enum class KolmogorovCheck { Invariance, Dissipativity, Ibp };

inline std::string_view to_string(KolmogorovCheck k) {
    switch (k) {
        case KolmogorovCheck::Invariance: return "INVARIANCE";
        case KolmogorovCheck::Dissipativity: return "DISSIPATIVITY";
        case KolmogorovCheck::Ibp: return "IBP";
    }
    return "?";
}

struct IbpDetail {
    Estimate i1;  // int f Lf dnu
    Estimate i2;  // int Gamma(f,f) dnu
    Estimate i3;  // int L(f^2) dnu
    Estimate full_gap;  // int (f Lf + Gamma) dnu      (factor 1)
    Estimate half_gap;  // int (f Lf + Gamma/2) dnu    (factor 1/2)
    bool full_fits = false;
    bool half_fits = false;
    bool i3_zero = false;
    std::string supported_factor;  // "1", "1/2", "both", "neither"
    bool factor_flag = false;      // data contradict the factor-1 display
};

struct KolmogorovReport {
    KolmogorovCheck kind = KolmogorovCheck::Invariance;
    std::string test_function;
    double value = 0.0;
    double se = 0.0;
    bool pass = false;
    std::optional<IbpDetail> ibp;
};

inline KolmogorovReport invariance_check(const CylinderFunction& f, const MonotoneOperator& op,
                                         const JumpCoupling& coupling, const MarkSpace& marks,
                                         const EmpiricalMeasure& nu) {
    detail::require_additive(coupling);
    const auto est = measure_mean(
        nu, [&](const StateVector& x) { return apply_L(f, op, coupling, marks, x); });
    KolmogorovReport r;
    r.kind = KolmogorovCheck::Invariance;
    r.test_function = f.name();
    r.value = est.value;
    r.se = est.se;
    r.pass = std::abs(est.value) <= 3.0 * est.se;
    return r;
}

inline KolmogorovReport dissipativity_check(const CylinderFunction& f, const MonotoneOperator& op,
                                            const JumpCoupling& coupling, const MarkSpace& marks,
                                            const EmpiricalMeasure& nu, double smoothing = 0.1) {
    detail::require_additive(coupling);
    detail::require(smoothing > 0.0 && std::isfinite(smoothing), "smoothing must be positive");
    const auto est = measure_mean(nu, [&](const StateVector& x) {
        return std::tanh(f(x) / smoothing) * apply_L(f, op, coupling, marks, x);
    });
    KolmogorovReport r;
    r.kind = KolmogorovCheck::Dissipativity;
    r.test_function = f.name();
    r.value = est.value;
    r.se = est.se;
    r.pass = est.value <= 3.0 * est.se;
    return r;
}

/// Estimates int f Lf, int Gamma(f,f) and int L(f^2) and reports which
/// factor in int f Lf dnu = -c int Gamma(f,f) dnu the data support.
inline KolmogorovReport ibp_check(const CylinderFunction& f, const MonotoneOperator& op,
                                  const JumpCoupling& coupling, const MarkSpace& marks,
                                  const EmpiricalMeasure& nu) {
    detail::require_additive(coupling);
    const CylinderFunction f2 = f.square();
    struct Row {
        double flf, gamma, lf2;
    };
    std::vector<Row> rows;
    rows.reserve(nu.size());
    for (const auto& a : nu.atoms())
        rows.push_back({f(a.state) * apply_L(f, op, coupling, marks, a.state),
                        carre_du_champ(f, f, coupling, marks, a.state),
                        apply_L(f2, op, coupling, marks, a.state)});
    // measure_mean evaluates atoms in order; feed it the precomputed rows.
    auto column = [&](auto pick) {
        std::size_t i = 0;
        return measure_mean(nu, [&](const StateVector&) { return pick(rows[i++]); });
    };
    IbpDetail d;
    d.i1 = column([](const Row& r) { return r.flf; });
    d.i2 = column([](const Row& r) { return r.gamma; });
    d.i3 = column([](const Row& r) { return r.lf2; });
    d.full_gap = column([](const Row& r) { return r.flf + r.gamma; });
    d.half_gap = column([](const Row& r) { return r.flf + 0.5 * r.gamma; });
    d.full_fits = std::abs(d.full_gap.value) <= 3.0 * d.full_gap.se;
    d.half_fits = std::abs(d.half_gap.value) <= 3.0 * d.half_gap.se;
    d.i3_zero = std::abs(d.i3.value) <= 3.0 * d.i3.se;
    d.supported_factor = d.full_fits ? (d.half_fits ? "both" : "1") : (d.half_fits ? "1/2" : "neither");
    d.factor_flag = !d.full_fits && d.half_fits;

    KolmogorovReport r;
    r.kind = KolmogorovCheck::Ibp;
    r.test_function = f.name();
    r.value = d.half_gap.value;
    r.se = d.half_gap.se;
    r.pass = d.half_fits && d.i3_zero;
    r.ibp = d;
    return r;
}

/// Battery direction k >= 1: Laplacian eigenvector on a grid, unit vector
/// e_{(k-1) mod n} in the Euclidean mode.
inline StateVector battery_direction(const GridSpace& space, std::size_t k) {
    if (space.has_geometry()) return laplacian_eigenvector(space, k);
    StateVector e(space.n());
    e[(k - 1) % space.n()] = 1.0;
    return e;
}

/// Shipped test-function battery: constant, linear, quadratic, quartic,
/// bounded tanh^2, and a two-direction cross term when n >= 2.
inline std::vector<CylinderFunction> test_battery(const GridSpace& space) {
    const StateVector l1 = battery_direction(space, 1);
    const double s = 1.0 / std::max(1e-300, norm_h(space, l1));
    StateVector d1 = l1;
    d1 *= s;
    std::vector<CylinderFunction> out;
    out.emplace_back(space, std::vector<StateVector>{d1}, OuterFunction::constant(1, 1.0), "constant");
    out.emplace_back(space, std::vector<StateVector>{d1},
                     OuterFunction::polynomial(1, {{1.0, {1}}}), "linear");
    out.emplace_back(space, std::vector<StateVector>{d1},
                     OuterFunction::polynomial(1, {{1.0, {2}}}), "quadratic");
    out.emplace_back(space, std::vector<StateVector>{d1},
                     OuterFunction::polynomial(1, {{1.0, {4}}, {-1.0, {2}}}), "quartic");
    out.emplace_back(space, std::vector<StateVector>{d1}, OuterFunction::tanh_power({1.0}, 0.0, 2),
                     "tanh2");
    if (space.n() >= 2) {
        StateVector d2 = battery_direction(space, 2);
        d2 *= 1.0 / norm_h(space, d2);
        out.emplace_back(space, std::vector<StateVector>{d1, d2},
                         OuterFunction::polynomial(2, {{1.0, {1, 1}}, {0.5, {2, 0}}}), "cross");
    }
    return out;
}

}  // namespace jumplab
