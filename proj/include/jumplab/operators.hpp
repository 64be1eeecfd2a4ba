#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jumplab/errors.hpp"
#include "jumplab/scalar_function.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

enum class OperatorKind { LinearDiffusion, PLaplace, PorousMedia, CustomFd };

inline std::string_view to_string(OperatorKind k) {
    switch (k) {
        case OperatorKind::LinearDiffusion: return "linear_diffusion";
        case OperatorKind::PLaplace: return "p_laplace";
        case OperatorKind::PorousMedia: return "porous_media";
        case OperatorKind::CustomFd: return "custom_fd";
    }
    return "?";
}

inline OperatorKind operator_kind_from_string(std::string_view s) {
    if (s == "linear_diffusion") return OperatorKind::LinearDiffusion;
    if (s == "p_laplace") return OperatorKind::PLaplace;
    if (s == "porous_media") return OperatorKind::PorousMedia;
    if (s == "custom_fd") return OperatorKind::CustomFd;
    throw ConfigError("unknown operator kind '" + std::string(s) + "'");
}

/// A monotone drift A : V -> V' on a GridSpace.
///
///   LinearDiffusion  Au = -Delta_h u
///   PLaplace         (Au)_i = -(a(d_{i+1}) - a(d_i)) / h, d = forward differences
///   PorousMedia      Au = -Delta_h beta(u)
///   CustomFd         (Au)_i = phi(u_i), or a user map on R^n
class MonotoneOperator {
public:
    using Map = std::function<void(std::span<const double>, std::span<double>)>;

    static MonotoneOperator linear_diffusion(GridSpace space) {
        return {OperatorKind::LinearDiffusion, std::move(space), ScalarFunction::linear()};
    }
    static MonotoneOperator p_laplace(GridSpace space, ScalarFunction flux) {
        return {OperatorKind::PLaplace, std::move(space), std::move(flux)};
    }
    static MonotoneOperator porous_media(GridSpace space, ScalarFunction beta) {
        return {OperatorKind::PorousMedia, std::move(space), std::move(beta)};
    }
    /// Entrywise custom drift (Au)_i = phi(u_i).
    static MonotoneOperator custom_fd(GridSpace space, ScalarFunction phi) {
        return {OperatorKind::CustomFd, std::move(space), std::move(phi)};
    }
    /// Fully custom map; implicit steps fall back to damped Picard iteration.
    static MonotoneOperator custom_map(GridSpace space, Map map, std::string name = "custom") {
        MonotoneOperator op{OperatorKind::CustomFd, std::move(space),
                            ScalarFunction::custom([](double) { return 0.0; },
                                                   [](double) { return 0.0; }, name)};
        op.map_ = std::move(map);
        return op;
    }

    OperatorKind kind() const noexcept { return kind_; }
    const GridSpace& space() const noexcept { return space_; }
    /// The flux a, the nonlinearity beta, or the entrywise custom map.
    const ScalarFunction& function() const noexcept { return fn_; }
    bool has_custom_map() const noexcept { return static_cast<bool>(map_); }
    bool has_jacobian() const noexcept { return !map_; }

    /// out = A u; `out` must have length n.
    void apply_into(std::span<const double> u, std::span<double> out) const {
        const std::size_t n = space_.n();
        const double h = space_.h();
        switch (kind_) {
            case OperatorKind::LinearDiffusion: {
                const double inv_h2 = 1.0 / (h * h);
                for (std::size_t i = 0; i < n; ++i) {
                    const double l = i > 0 ? u[i - 1] : 0.0;
                    const double r = i + 1 < n ? u[i + 1] : 0.0;
                    out[i] = (2.0 * u[i] - l - r) * inv_h2;
                }
                return;
            }
            case OperatorKind::PLaplace: {
                const double inv_h = 1.0 / h;
                double flux_left = fn_(u[0] * inv_h);
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = i + 1 < n ? u[i + 1] : 0.0;
                    const double flux_right = fn_((r - u[i]) * inv_h);
                    out[i] = -(flux_right - flux_left) * inv_h;
                    flux_left = flux_right;
                }
                return;
            }
            case OperatorKind::PorousMedia: {
                const double inv_h2 = 1.0 / (h * h);
                double b_left = 0.0;
                double b_mid = fn_(u[0]);
                for (std::size_t i = 0; i < n; ++i) {
                    const double b_right = i + 1 < n ? fn_(u[i + 1]) : 0.0;
                    out[i] = (2.0 * b_mid - b_left - b_right) * inv_h2;
                    b_left = b_mid;
                    b_mid = b_right;
                }
                return;
            }
            case OperatorKind::CustomFd: {
                if (map_) {
                    map_(u, out);
                    return;
                }
                for (std::size_t i = 0; i < n; ++i) out[i] = fn_(u[i]);
                return;
            }
        }
    }

    /// Tridiagonal Jacobian dA/du at u. Not available for custom maps.
    void jacobian_into(std::span<const double> u, Tridiagonal& jac) const {
        detail::require(has_jacobian(), "custom map has no Jacobian");
        const std::size_t n = space_.n();
        const double h = space_.h();
        if (jac.size() != n) jac = Tridiagonal(n);
        switch (kind_) {
            case OperatorKind::LinearDiffusion: {
                const double inv_h2 = 1.0 / (h * h);
                std::fill(jac.diag.begin(), jac.diag.end(), 2.0 * inv_h2);
                std::fill(jac.lower.begin(), jac.lower.end(), -inv_h2);
                std::fill(jac.upper.begin(), jac.upper.end(), -inv_h2);
                return;
            }
            case OperatorKind::PLaplace: {
                // Face j carries slope a'(d_j); row i touches faces i and i+1.
                const double inv_h = 1.0 / h;
                const double inv_h2 = inv_h * inv_h;
                double s_left = fn_.derivative(u[0] * inv_h);
                for (std::size_t i = 0; i < n; ++i) {
                    const double r = i + 1 < n ? u[i + 1] : 0.0;
                    const double s_right = fn_.derivative((r - u[i]) * inv_h);
                    jac.diag[i] = (s_left + s_right) * inv_h2;
                    if (i + 1 < n) {
                        jac.upper[i] = -s_right * inv_h2;
                        jac.lower[i] = -s_right * inv_h2;
                    }
                    s_left = s_right;
                }
                return;
            }
            case OperatorKind::PorousMedia: {
                const double inv_h2 = 1.0 / (h * h);
                for (std::size_t i = 0; i < n; ++i) {
                    const double db = fn_.derivative(u[i]);
                    jac.diag[i] = 2.0 * db * inv_h2;
                    if (i > 0) jac.upper[i - 1] = -db * inv_h2;  // row i-1, column i
                    if (i + 1 < n) jac.lower[i] = -db * inv_h2;  // row i+1, column i
                }
                return;
            }
            case OperatorKind::CustomFd: {
                std::fill(jac.lower.begin(), jac.lower.end(), 0.0);
                std::fill(jac.upper.begin(), jac.upper.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) jac.diag[i] = fn_.derivative(u[i]);
                return;
            }
        }
    }

    std::string describe() const {
        std::string s(to_string(kind_));
        if (kind_ != OperatorKind::LinearDiffusion) s += "[" + fn_.describe() + "]";
        return s;
    }

private:
    MonotoneOperator(OperatorKind kind, GridSpace space, ScalarFunction fn)
        : kind_(kind), space_(std::move(space)), fn_(std::move(fn)) {}

    OperatorKind kind_;
    GridSpace space_;
    ScalarFunction fn_;
    Map map_;
};

inline DualVector apply(const MonotoneOperator& op, const StateVector& u) {
    op.space().check(u);
    DualVector out(u.size());
    op.apply_into(u.span(), out.span());
    detail::require(out.all_finite(), "operator produced non-finite output; misconfigured drift?");
    return out;
}

/// <Au, u>
inline double pairing_with_self(const MonotoneOperator& op, const StateVector& u) {
    return dual_pairing(op.space(), apply(op, u), u);
}

/// Outcome of sampling the structural assumptions on a, beta or phi.
struct OperatorValidation {
    bool monotone = true;       // nondecreasing on sampled pairs
    bool growth_ok = true;      // |f(x)| <= K (|x|^{p-1} + 1) with K not growing in |x|
    double growth_constant = 0.0;
    bool coercive_ok = true;    // x f(x) >= k |x|^p - k' (porous media)
    double coercivity_constant = 0.0;
};

inline OperatorValidation validate(const MonotoneOperator& op) {
    OperatorValidation v;
    if (op.has_custom_map() || op.kind() == OperatorKind::LinearDiffusion) return v;
    const auto& f = op.function();
    const double p = op.space().p();
    std::vector<double> xs;
    for (double e = -3.0; e <= 4.0; e += 0.25) {
        xs.push_back(std::pow(10.0, e));
        xs.push_back(-std::pow(10.0, e));
    }
    xs.push_back(0.0);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (f(xs[i]) < f(xs[i - 1])) v.monotone = false;
    auto ratio = [&](double x) { return std::abs(f(x)) / (std::pow(std::abs(x), p - 1.0) + 1.0); };
    for (double x : xs) v.growth_constant = std::max(v.growth_constant, ratio(x));
    v.growth_ok = ratio(1e4) <= 1.5 * std::max(ratio(1e2), 1e-300) + 1e-12 &&
                  ratio(-1e4) <= 1.5 * std::max(ratio(-1e2), 1e-300) + 1e-12;
    if (op.kind() == OperatorKind::PorousMedia) {
        double k = INFINITY;
        for (double x : xs)
            if (std::abs(x) >= 10.0) k = std::min(k, x * f(x) / std::pow(std::abs(x), p));
        v.coercivity_constant = k;
        v.coercive_ok = k > 0.0;
    }
    return v;
}

// ---------------------------------------------------------------------------
// Regularization: Yosida approximation, mollification, A^eps
// ---------------------------------------------------------------------------

struct RegularizationParams {
    double eps = 0.1;
    int quad_points = 32;
    double newton_tol = 1e-12;

    void validate() const {
        detail::require(eps > 0.0 && std::isfinite(eps), "regularization eps must be > 0");
        detail::require(quad_points >= 8, "quad_points must be >= 8");
        detail::require(newton_tol > 0.0, "newton_tol must be > 0");
    }
};

/// Yosida approximation eps^{-1} (xi - y) where y + eps a(y) = xi, solved by
/// Newton's method safeguarded by a bisection bracket.
inline double yosida_flux(const ScalarFunction& a, double eps, double xi, double tol = 1e-12,
                          int max_iter = 200) {
    detail::require(eps > 0.0, "yosida_flux requires eps > 0");
    auto g = [&](double y) { return y + eps * a(y) - xi; };
    double lo = xi, hi = xi;
    const double g0 = g(xi);
    if (g0 == 0.0) return 0.0;  // a(xi) = 0
    double step = std::max(1.0, std::abs(xi));
    if (g0 > 0.0) {
        for (lo = xi - step; g(lo) > 0.0; lo = xi - step) {
            step *= 2.0;
            if (!std::isfinite(step)) throw ContractViolation("yosida_flux: cannot bracket root");
        }
    } else {
        for (hi = xi + step; g(hi) < 0.0; hi = xi + step) {
            step *= 2.0;
            if (!std::isfinite(step)) throw ContractViolation("yosida_flux: cannot bracket root");
        }
    }
    double y = std::clamp(xi - eps * a(xi), lo, hi);
    const double scale = 1.0 + std::abs(xi);
    for (int it = 0; it < max_iter; ++it) {
        const double gy = g(y);
        if (std::abs(gy) <= tol * scale || hi - lo <= tol * scale) return (xi - y) / eps;
        if (gy > 0.0) hi = y;
        else lo = y;
        const double dg = 1.0 + eps * a.derivative(y);
        double next = y - gy / dg;
        if (!(next > lo && next < hi) || !std::isfinite(next)) next = 0.5 * (lo + hi);
        y = next;
    }
    throw ContractViolation("yosida_flux: resolvent solve did not converge (flux not monotone?)");
}

/// Normalized bump mollifier exp(-1/(1-(s/eps)^2)) on (-eps, eps), discretized
/// with midpoint quadrature.
class Mollifier {
public:
    Mollifier(double eps, int quad_points) {
        detail::require(eps > 0.0, "mollifier eps must be > 0");
        detail::require(quad_points >= 1, "mollifier needs quadrature nodes");
        const double ds = 2.0 * eps / quad_points;
        double total = 0.0;
        for (int j = 0; j < quad_points; ++j) {
            const double s = -eps + (j + 0.5) * ds;
            const double r = s / eps;
            const double w = std::exp(-1.0 / (1.0 - r * r));
            nodes_.push_back(s);
            weights_.push_back(w);
            total += w;
        }
        for (auto& w : weights_) w /= total;
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

    template <typename F>
    double convolve(const F& f, double x) const {
        double s = 0.0;
        for (std::size_t j = 0; j < nodes_.size(); ++j) s += weights_[j] * f(x - nodes_[j]);
        return s;
    }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

/// x -> sum_j w_j f(x - s_j)
template <typename F>
auto mollify(F f, double eps, int quad_points) {
    return [f = std::move(f), m = Mollifier(eps, quad_points)](double x) {
        return m.convolve(f, x);
    };
}

/// a_eps = (Yosida approximation of a) * zeta_eps
inline std::function<double(double)> regularized_flux(const ScalarFunction& a,
                                                      const RegularizationParams& reg) {
    reg.validate();
    return mollify([a, eps = reg.eps, tol = reg.newton_tol](double x) {
        return yosida_flux(a, eps, x, tol);
    }, reg.eps, reg.quad_points);
}

/// beta_eps = (beta truncated to [-1/eps, 1/eps]) * zeta_eps
inline std::function<double(double)> regularized_beta(const ScalarFunction& beta,
                                                      const RegularizationParams& reg) {
    reg.validate();
    const double cap = 1.0 / reg.eps;
    return mollify([beta, cap](double x) { return std::clamp(beta(x), -cap, cap); }, reg.eps,
                   reg.quad_points);
}

/// A^eps u for P-Laplace:  -R div(a_eps(grad R u))
///            porous media: -Delta R beta_eps(R u)
/// with R = (I - eps Delta_h)^{-1}.
inline DualVector apply_regularized(const MonotoneOperator& op, const RegularizationParams& reg,
                                    const StateVector& u) {
    const GridSpace& space = op.space();
    space.check(u);
    reg.validate();
    if (op.kind() != OperatorKind::PLaplace && op.kind() != OperatorKind::PorousMedia)
        throw ContractViolation("apply_regularized supports p_laplace and porous_media only");
    const StateVector ru = resolvent(space, reg.eps, u);
    const std::size_t n = space.n();
    StateVector inner(n);
    if (op.kind() == OperatorKind::PLaplace) {
        const auto a_eps = regularized_flux(op.function(), reg);
        const auto d = forward_differences(space, ru.span());
        std::vector<double> flux(d.size());
        for (std::size_t j = 0; j < d.size(); ++j) flux[j] = a_eps(d[j]);
        for (std::size_t i = 0; i < n; ++i) inner[i] = -(flux[i + 1] - flux[i]) / space.h();
        return retag<DualTag>(resolvent(space, reg.eps, inner));
    }
    const auto b_eps = regularized_beta(op.function(), reg);
    for (std::size_t i = 0; i < n; ++i) inner[i] = b_eps(ru[i]);
    return retag<DualTag>(neg_laplacian(space, resolvent(space, reg.eps, inner)));
}

/// |A^eps u - A u|_{V'}
inline double regularization_error(const MonotoneOperator& op, const RegularizationParams& reg,
                                   const StateVector& u) {
    return dual_norm(op.space(), apply_regularized(op, reg, u) - apply(op, u));
}

struct RegularizationRow {
    double eps = 0.0;
    double error = 0.0;
    double growth_constant = 0.0;  // max |A^eps x|_{V'} / (|x|_V^{p-1} + 1) over probes
};

struct RegularizationSweep {
    std::vector<RegularizationRow> rows;
    double exact_growth_constant = 0.0;  // same ratio for A itself
    bool error_monotone = false;         // each error <= (1 + slack) * previous
    bool growth_uniform = false;         // every row's constant <= 2 * exact constant
    double slack = 0.05;
};

/// Runs the eps sweep on `u`; growth constants use `u` plus `probes`.
inline RegularizationSweep regularization_sweep(const MonotoneOperator& op,
                                                std::vector<double> eps_values,
                                                const StateVector& u,
                                                const std::vector<StateVector>& probes,
                                                int quad_points = 32, double slack = 0.05) {
    RegularizationSweep sweep;
    sweep.slack = slack;
    const GridSpace& space = op.space();
    const double p = space.p();
    std::vector<StateVector> all = probes;
    all.push_back(u);
    auto growth = [&](const auto& eval) {
        double best = 0.0;
        for (const auto& x : all) {
            const double denom = std::pow(norm_v(space, x), p - 1.0) + 1.0;
            best = std::max(best, dual_norm(space, eval(x)) / denom);
        }
        return best;
    };
    sweep.exact_growth_constant = growth([&](const StateVector& x) { return apply(op, x); });
    for (double eps : eps_values) {
        RegularizationParams reg{eps, quad_points, 1e-12};
        RegularizationRow row;
        row.eps = eps;
        row.error = regularization_error(op, reg, u);
        row.growth_constant =
            growth([&](const StateVector& x) { return apply_regularized(op, reg, x); });
        sweep.rows.push_back(row);
    }
    sweep.error_monotone = true;
    sweep.growth_uniform = true;
    for (std::size_t k = 0; k < sweep.rows.size(); ++k) {
        if (k > 0 && sweep.rows[k].error > (1.0 + slack) * sweep.rows[k - 1].error)
            sweep.error_monotone = false;
        if (sweep.rows[k].growth_constant > 2.0 * sweep.exact_growth_constant)
            sweep.growth_uniform = false;
    }
    return sweep;
}

}  // namespace jumplab
