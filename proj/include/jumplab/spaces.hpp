#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jumplab/errors.hpp"
#include "jumplab/rng.hpp"

namespace jumplab {

// ---------------------------------------------------------------------------
// Coefficient vectors
// ---------------------------------------------------------------------------

/// Nodal coefficient vector tagged by the space it lives in. Interior nodes
/// only; zero Dirichlet boundary values are implied.
template <typename Tag>
class Coefficients {
public:
    Coefficients() = default;
    explicit Coefficients(std::size_t n, double value = 0.0) : c_(n, value) {}
    explicit Coefficients(std::vector<double> values) : c_(std::move(values)) {}
    Coefficients(std::initializer_list<double> values) : c_(values) {}

    std::size_t size() const noexcept { return c_.size(); }
    double& operator[](std::size_t i) noexcept { return c_[i]; }
    double operator[](std::size_t i) const noexcept { return c_[i]; }

    std::span<double> span() noexcept { return c_; }
    std::span<const double> span() const noexcept { return c_; }
    std::vector<double>& values() noexcept { return c_; }
    const std::vector<double>& values() const noexcept { return c_; }

    auto begin() noexcept { return c_.begin(); }
    auto end() noexcept { return c_.end(); }
    auto begin() const noexcept { return c_.begin(); }
    auto end() const noexcept { return c_.end(); }

    bool all_finite() const noexcept {
        return std::all_of(c_.begin(), c_.end(), [](double x) { return std::isfinite(x); });
    }

    Coefficients& operator+=(const Coefficients& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
        return *this;
    }
    Coefficients& operator-=(const Coefficients& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
        return *this;
    }
    Coefficients& operator*=(double a) noexcept {
        for (auto& x : c_) x *= a;
        return *this;
    }
    /// this += a * o
    Coefficients& axpy(double a, const Coefficients& o) {
        check_same(o);
        for (std::size_t i = 0; i < c_.size(); ++i) c_[i] += a * o.c_[i];
        return *this;
    }

    friend Coefficients operator+(Coefficients a, const Coefficients& b) { return a += b; }
    friend Coefficients operator-(Coefficients a, const Coefficients& b) { return a -= b; }
    friend Coefficients operator*(double s, Coefficients a) { return a *= s; }
    friend Coefficients operator*(Coefficients a, double s) { return a *= s; }
    friend Coefficients operator-(Coefficients a) { return a *= -1.0; }

    friend bool operator==(const Coefficients&, const Coefficients&) = default;

private:
    void check_same(const Coefficients& o) const {
        detail::require(o.size() == size(), "coefficient vectors differ in length");
    }

    std::vector<double> c_;
};

struct StateTag {};
struct DualTag {};

/// Element of V (and H): nodal values of a state.
using StateVector = Coefficients<StateTag>;
/// Element of V' represented by its nodal coefficients.
using DualVector = Coefficients<DualTag>;

template <typename To, typename From>
Coefficients<To> retag(const Coefficients<From>& v) {
    return Coefficients<To>(v.values());
}

// ---------------------------------------------------------------------------
// Tridiagonal systems
// ---------------------------------------------------------------------------

/// Tridiagonal matrix: `lower[i]` couples row i+1 to column i, `upper[i]`
/// couples row i to column i+1.
struct Tridiagonal {
    std::vector<double> lower;
    std::vector<double> diag;
    std::vector<double> upper;

    explicit Tridiagonal(std::size_t n = 0)
        : lower(n > 0 ? n - 1 : 0), diag(n), upper(n > 0 ? n - 1 : 0) {}

    std::size_t size() const noexcept { return diag.size(); }

    std::vector<double> multiply(std::span<const double> x) const {
        const std::size_t n = size();
        std::vector<double> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = diag[i] * x[i];
            if (i > 0) s += lower[i - 1] * x[i - 1];
            if (i + 1 < n) s += upper[i] * x[i + 1];
            y[i] = s;
        }
        return y;
    }
};

/// Thomas algorithm. Stable without pivoting for matrices that are
/// diagonally dominant by rows or by columns. `scratch` must hold n values.
inline void solve_tridiagonal_inplace(const Tridiagonal& a, std::span<double> rhs,
                                      std::span<double> scratch) {
    const std::size_t n = a.size();
    if (n == 0) return;
    double beta = a.diag[0];
    detail::require(beta != 0.0, "singular tridiagonal system");
    rhs[0] /= beta;
    for (std::size_t i = 1; i < n; ++i) {
        scratch[i] = a.upper[i - 1] / beta;
        beta = a.diag[i] - a.lower[i - 1] * scratch[i];
        detail::require(beta != 0.0, "singular tridiagonal system");
        rhs[i] = (rhs[i] - a.lower[i - 1] * rhs[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i > 0; --i) rhs[i - 1] -= scratch[i] * rhs[i];
}

inline std::vector<double> solve_tridiagonal(const Tridiagonal& a, std::vector<double> rhs) {
    detail::require(rhs.size() == a.size(), "tridiagonal solve: dimension mismatch");
    std::vector<double> scratch(a.size());
    solve_tridiagonal_inplace(a, rhs, scratch);
    return rhs;
}

// ---------------------------------------------------------------------------
// GridSpace
// ---------------------------------------------------------------------------

/// Which discrete evolution triple the grid realizes.
///  - Sobolev:   H = L2(0,1),      V = W^{1,p}_0   (divergence-form drifts)
///  - Negative:  H = W^{-1,2}(0,1), V = L_p        (porous-media drifts)
///  - Euclidean: H = R^n (plain l2), V = R^n with the l_p norm (SDE case)
enum class SpaceMode { Sobolev, Negative, Euclidean };

inline std::string_view to_string(SpaceMode m) {
    switch (m) {
        case SpaceMode::Sobolev: return "sobolev";
        case SpaceMode::Negative: return "negative";
        case SpaceMode::Euclidean: return "euclidean";
    }
    return "?";
}

inline SpaceMode space_mode_from_string(std::string_view s) {
    if (s == "sobolev") return SpaceMode::Sobolev;
    if (s == "negative") return SpaceMode::Negative;
    if (s == "euclidean") return SpaceMode::Euclidean;
    throw ConfigError("unknown space mode '" + std::string(s) + "'");
}

/// Uniform grid on (0,1) with n interior nodes and zero Dirichlet data.
/// In Euclidean mode there is no geometry and h = 1.
class GridSpace {
public:
    GridSpace(std::size_t n, double p, SpaceMode mode) : n_(n), p_(p), mode_(mode) {
        if (mode == SpaceMode::Euclidean) {
            detail::require(n >= 1, "Euclidean space needs n >= 1");
            h_ = 1.0;
        } else {
            detail::require(n >= 2, "grid needs at least 2 interior nodes");
            h_ = 1.0 / static_cast<double>(n + 1);
        }
        detail::require(std::isfinite(p) && p >= 2.0, "exponent p must satisfy p >= 2");
    }

    std::size_t n() const noexcept { return n_; }
    double h() const noexcept { return h_; }
    double p() const noexcept { return p_; }
    /// Conjugate exponent q = p / (p - 1).
    double q() const noexcept { return p_ / (p_ - 1.0); }
    SpaceMode mode() const noexcept { return mode_; }
    bool has_geometry() const noexcept { return mode_ != SpaceMode::Euclidean; }

    /// Node coordinate x_i = (i+1) h for the 0-based interior index i.
    double node(std::size_t i) const noexcept { return static_cast<double>(i + 1) * h_; }

    template <typename Tag>
    void check(const Coefficients<Tag>& v) const {
        detail::require(v.size() == n_, "vector length " + std::to_string(v.size()) +
                                            " does not match space dimension " + std::to_string(n_));
    }

    StateVector zeros() const { return StateVector(n_); }

    friend bool operator==(const GridSpace&, const GridSpace&) = default;

private:
    std::size_t n_;
    double h_ = 0.0;
    double p_;
    SpaceMode mode_;
};

// ---------------------------------------------------------------------------
// Discrete Laplacian
// ---------------------------------------------------------------------------

/// Matrix of -Delta_h (three-point stencil, zero Dirichlet), scaled by `scale`
/// and shifted by `shift` on the diagonal: shift*I + scale*(-Delta_h).
inline Tridiagonal neg_laplacian_matrix(const GridSpace& space, double scale = 1.0,
                                        double shift = 0.0) {
    const std::size_t n = space.n();
    const double inv_h2 = 1.0 / (space.h() * space.h());
    Tridiagonal m(n);
    std::fill(m.diag.begin(), m.diag.end(), shift + 2.0 * scale * inv_h2);
    std::fill(m.lower.begin(), m.lower.end(), -scale * inv_h2);
    std::fill(m.upper.begin(), m.upper.end(), -scale * inv_h2);
    return m;
}

/// (-Delta_h v)_i = (2 v_i - v_{i-1} - v_{i+1}) / h^2 with v_0 = v_{n+1} = 0.
template <typename Tag>
Coefficients<Tag> neg_laplacian(const GridSpace& space, const Coefficients<Tag>& v) {
    space.check(v);
    const std::size_t n = space.n();
    const double inv_h2 = 1.0 / (space.h() * space.h());
    Coefficients<Tag> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double left = i > 0 ? v[i - 1] : 0.0;
        const double right = i + 1 < n ? v[i + 1] : 0.0;
        out[i] = (2.0 * v[i] - left - right) * inv_h2;
    }
    return out;
}

/// Solves -Delta_h w = v.
template <typename Tag>
Coefficients<Tag> inv_laplacian(const GridSpace& space, const Coefficients<Tag>& v) {
    space.check(v);
    return Coefficients<Tag>(solve_tridiagonal(neg_laplacian_matrix(space), v.values()));
}

/// Solves u - eps * Delta_h u = f.
template <typename Tag>
Coefficients<Tag> resolvent(const GridSpace& space, double eps, const Coefficients<Tag>& f) {
    space.check(f);
    detail::require(eps > 0.0 && std::isfinite(eps), "resolvent requires eps > 0");
    return Coefficients<Tag>(solve_tridiagonal(neg_laplacian_matrix(space, eps, 1.0), f.values()));
}

/// k-th discrete Dirichlet eigenvalue (k >= 1): (2/h^2)(1 - cos(k pi h)).
inline double laplacian_eigenvalue(const GridSpace& space, std::size_t k) {
    const double h = space.h();
    return 2.0 / (h * h) * (1.0 - std::cos(static_cast<double>(k) * std::numbers::pi * h));
}

/// k-th discrete Dirichlet eigenvector (k >= 1), nodal values sin(k pi x_i).
inline StateVector laplacian_eigenvector(const GridSpace& space, std::size_t k) {
    StateVector v(space.n());
    for (std::size_t i = 0; i < space.n(); ++i)
        v[i] = std::sin(static_cast<double>(k) * std::numbers::pi * space.node(i));
    return v;
}

// ---------------------------------------------------------------------------
// Norms and pairings
// ---------------------------------------------------------------------------

namespace detail {

inline double weighted_dot(double w, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return w * s;
}

inline double weighted_lp(double w, std::span<const double> a, double p) {
    double s = 0.0;
    for (double x : a) s += std::pow(std::abs(x), p);
    return std::pow(w * s, 1.0 / p);
}

}  // namespace detail

/// H inner product. Sobolev: h sum u v. Negative: h <(-Delta_h)^{-1} u, v>.
/// Euclidean: sum u v.
template <typename TagA, typename TagB>
double inner_h(const GridSpace& space, const Coefficients<TagA>& u, const Coefficients<TagB>& v) {
    space.check(u);
    space.check(v);
    switch (space.mode()) {
        case SpaceMode::Sobolev: return detail::weighted_dot(space.h(), u.span(), v.span());
        case SpaceMode::Euclidean: return detail::weighted_dot(1.0, u.span(), v.span());
        case SpaceMode::Negative: {
            const auto w = inv_laplacian(space, u);
            return detail::weighted_dot(space.h(), w.span(), v.span());
        }
    }
    return 0.0;
}

template <typename Tag>
double norm_h(const GridSpace& space, const Coefficients<Tag>& v) {
    return std::sqrt(std::max(0.0, inner_h(space, v, v)));
}

/// Discrete V norm. Sobolev: (h sum_{i=0..n} |(v_{i+1}-v_i)/h|^p)^{1/p} over
/// all n+1 forward differences including both boundary segments.
/// Negative: (h sum |v_i|^p)^{1/p}. Euclidean: l_p norm.
template <typename Tag>
double norm_v(const GridSpace& space, const Coefficients<Tag>& v) {
    space.check(v);
    const double p = space.p();
    switch (space.mode()) {
        case SpaceMode::Sobolev: {
            const std::size_t n = space.n();
            const double h = space.h();
            double s = 0.0;
            for (std::size_t j = 0; j <= n; ++j) {
                const double right = j < n ? v[j] : 0.0;
                const double left = j > 0 ? v[j - 1] : 0.0;
                s += std::pow(std::abs((right - left) / h), p);
            }
            return std::pow(h * s, 1.0 / p);
        }
        case SpaceMode::Negative: return detail::weighted_lp(space.h(), v.span(), p);
        case SpaceMode::Euclidean: return detail::weighted_lp(1.0, v.span(), p);
    }
    return 0.0;
}

/// Duality pairing <f, v> between V' and V, realized through the H pivot so
/// that <f, v> equals the H inner product whenever f lies in H.
inline double dual_pairing(const GridSpace& space, const DualVector& f, const StateVector& v) {
    return inner_h(space, f, v);
}

/// Forward differences (n+1 values) of a nodal vector with zero boundary.
inline std::vector<double> forward_differences(const GridSpace& space, std::span<const double> v) {
    const std::size_t n = space.n();
    const double inv_h = 1.0 / space.h();
    std::vector<double> d(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        const double right = j < n ? v[j] : 0.0;
        const double left = j > 0 ? v[j - 1] : 0.0;
        d[j] = (right - left) * inv_h;
    }
    return d;
}

/// Exact dual norm |f|_{V'} = sup_v <f,v> / |v|_V.
///
/// Sobolev: writing <f,v> = h sum_j F_j d_j with d = forward differences of v
/// and F_j = h sum_{i>j} f_i, the supremum over the constraint sum_j d_j = 0
/// is min_c (h sum_j |F_j - c|^q)^{1/q}; the scalar convex minimization is
/// done by bisection on the derivative.
/// Negative: |(-Delta_h)^{-1} f|_{L_q}. Euclidean: |f|_{l_q}.
inline double dual_norm(const GridSpace& space, const DualVector& f) {
    space.check(f);
    const double q = space.q();
    switch (space.mode()) {
        case SpaceMode::Euclidean: return detail::weighted_lp(1.0, f.span(), q);
        case SpaceMode::Negative: {
            const auto w = inv_laplacian(space, f);
            return detail::weighted_lp(space.h(), w.span(), q);
        }
        case SpaceMode::Sobolev: break;
    }
    const std::size_t n = space.n();
    const double h = space.h();
    std::vector<double> big_f(n + 1, 0.0);
    for (std::size_t j = n; j-- > 0;) big_f[j] = big_f[j + 1] + h * f[j];
    auto slope = [&](double c) {
        double s = 0.0;
        for (double fj : big_f) {
            const double d = fj - c;
            s += (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * std::pow(std::abs(d), q - 1.0);
        }
        return s;  // proportional to -d/dc of sum |F_j - c|^q
    };
    double lo = *std::min_element(big_f.begin(), big_f.end());
    double hi = *std::max_element(big_f.begin(), big_f.end());
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi) + std::abs(lo)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (slope(mid) > 0.0) lo = mid;
        else hi = mid;
    }
    const double c = 0.5 * (lo + hi);
    double s = 0.0;
    for (double fj : big_f) s += std::pow(std::abs(fj - c), q);
    return std::pow(h * s, 1.0 / q);
}

/// Lower estimate of |f|_{V'} by maximizing <f,v>/|v|_V over random Gaussian
/// directions and the coordinate directions.
inline double dual_norm_search(const GridSpace& space, const DualVector& f, std::size_t trials,
                               Rng& rng) {
    space.check(f);
    double best = 0.0;
    auto consider = [&](const StateVector& v) {
        const double nv = norm_v(space, v);
        if (nv > 0.0) best = std::max(best, std::abs(dual_pairing(space, f, v)) / nv);
    };
    StateVector v(space.n());
    for (std::size_t i = 0; i < space.n(); ++i) {
        std::fill(v.begin(), v.end(), 0.0);
        v[i] = 1.0;
        consider(v);
    }
    for (std::size_t t = 0; t < trials; ++t) {
        for (auto& x : v) x = rng.normal();
        consider(v);
    }
    return best;
}

/// Estimate of the embedding constant c with |v|_H <= c |v|_V: the maximum of
/// |v|_H / |v|_V over `trials` Gaussian directions, the first Laplacian
/// eigenvector and the constant vector. Unsupported in Negative mode.
inline double embedding_constant(const GridSpace& space, std::size_t trials, std::uint64_t seed) {
    if (space.mode() == SpaceMode::Negative)
        throw ContractViolation("embedding_constant: unsupported in negative mode");
    double best = 0.0;
    auto consider = [&](const StateVector& v) {
        const double nv = norm_v(space, v);
        if (nv > 0.0) best = std::max(best, norm_h(space, v) / nv);
    };
    consider(StateVector(space.n(), 1.0));
    if (space.has_geometry()) consider(laplacian_eigenvector(space, 1));
    Rng rng(seed);
    StateVector v(space.n());
    for (std::size_t t = 0; t < trials; ++t) {
        for (auto& x : v) x = rng.normal();
        consider(v);
    }
    return best;
}

}  // namespace jumplab
