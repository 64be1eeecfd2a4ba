#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "jumplab/errors.hpp"
#include "jumplab/rng.hpp"
#include "jumplab/scalar_function.hpp"
#include "jumplab/spaces.hpp"

namespace jumplab {

struct Mark {
    std::string id;
    double mass = 0.0;
};

/// Finite discrete mark space (Z, m).
class MarkSpace {
public:
    MarkSpace() = default;
    explicit MarkSpace(std::vector<Mark> marks) : marks_(std::move(marks)) {
        for (const auto& mk : marks_) {
            detail::require(mk.mass > 0.0 && std::isfinite(mk.mass),
                            "mark '" + mk.id + "' must have finite positive mass");
            total_ += mk.mass;
        }
        cumulative_.reserve(marks_.size());
        double c = 0.0;
        for (const auto& mk : marks_) cumulative_.push_back(c += mk.mass / total_);
        if (!cumulative_.empty()) cumulative_.back() = 1.0;
    }

    std::size_t size() const noexcept { return marks_.size(); }
    const Mark& operator[](std::size_t i) const { return marks_[i]; }
    const std::vector<Mark>& marks() const noexcept { return marks_; }
    double total_mass() const noexcept { return total_; }
    double mass(std::size_t i) const { return marks_[i].mass; }

    /// Index of the mark selected by a uniform variate u in [0,1).
    std::size_t draw(double u) const {
        for (std::size_t i = 0; i < cumulative_.size(); ++i)
            if (u < cumulative_[i]) return i;
        return cumulative_.size() - 1;
    }

private:
    std::vector<Mark> marks_;
    std::vector<double> cumulative_;
    double total_ = 0.0;
};

enum class CouplingKind { Additive, MultScalar, MultLipschitz };

inline std::string_view to_string(CouplingKind k) {
    switch (k) {
        case CouplingKind::Additive: return "additive";
        case CouplingKind::MultScalar: return "mult_scalar";
        case CouplingKind::MultLipschitz: return "mult_lipschitz";
    }
    return "?";
}

/// Jump coupling G(x, z_i):
///   Additive       G(x, z_i) = g_i
///   MultScalar     G(x, z_i) = sigma_i x
///   MultLipschitz  G(x, z_i) = sigma_i phi(x)   (phi applied entrywise)
class JumpCoupling {
public:
    static JumpCoupling none(std::size_t marks, std::size_t n) {
        return additive(std::vector<StateVector>(marks, StateVector(n)));
    }
    static JumpCoupling additive(std::vector<StateVector> g) {
        JumpCoupling c(CouplingKind::Additive);
        c.g_ = std::move(g);
        return c;
    }
    static JumpCoupling mult_scalar(std::vector<double> sigma) {
        JumpCoupling c(CouplingKind::MultScalar);
        c.sigma_ = std::move(sigma);
        return c;
    }
    static JumpCoupling mult_lipschitz(std::vector<double> sigma, ScalarFunction phi) {
        detail::require(std::isfinite(phi.lipschitz()),
                        "mult_lipschitz coupling needs a globally Lipschitz profile");
        JumpCoupling c(CouplingKind::MultLipschitz);
        c.sigma_ = std::move(sigma);
        c.phi_ = std::move(phi);
        return c;
    }

    CouplingKind kind() const noexcept { return kind_; }
    bool is_additive() const noexcept { return kind_ == CouplingKind::Additive; }
    std::size_t marks() const noexcept {
        return kind_ == CouplingKind::Additive ? g_.size() : sigma_.size();
    }
    const std::vector<StateVector>& increments() const noexcept { return g_; }
    const std::vector<double>& sigmas() const noexcept { return sigma_; }
    const ScalarFunction& profile() const noexcept { return phi_; }

    /// Declared Lipschitz constant of x -> G(x, z_i) in H (per mark).
    double lipschitz(std::size_t i) const {
        switch (kind_) {
            case CouplingKind::Additive: return 0.0;
            case CouplingKind::MultScalar: return std::abs(sigma_[i]);
            case CouplingKind::MultLipschitz: return std::abs(sigma_[i]) * phi_.lipschitz();
        }
        return 0.0;
    }

    /// out = G(x, z_i)
    void evaluate(std::size_t i, const StateVector& x, StateVector& out) const {
        switch (kind_) {
            case CouplingKind::Additive: out = g_[i]; return;
            case CouplingKind::MultScalar:
                out = x;
                out *= sigma_[i];
                return;
            case CouplingKind::MultLipschitz:
                out = x;
                for (auto& v : out) v = sigma_[i] * phi_(v);
                return;
        }
    }

    StateVector evaluate(std::size_t i, const StateVector& x) const {
        StateVector out;
        evaluate(i, x, out);
        return out;
    }

    void check(const GridSpace& space, const MarkSpace& ms) const {
        detail::require(marks() == ms.size(), "coupling and mark space disagree on mark count");
        for (const auto& g : g_) space.check(g);
    }

private:
    explicit JumpCoupling(CouplingKind k) : kind_(k), phi_(ScalarFunction::linear()) {}

    CouplingKind kind_;
    std::vector<StateVector> g_;
    std::vector<double> sigma_;
    ScalarFunction phi_;
};

struct JumpEvent {
    double time = 0.0;
    std::size_t mark = 0;
};

/// Realized Poisson random measure on [0, T].
struct JumpStream {
    std::vector<JumpEvent> events;
    double horizon = 0.0;
    std::uint64_t seed_key = 0;  // key of the generator that produced it
};

/// Samples events with exponential(total_mass) inter-arrival times and
/// i.i.d. marks with probabilities m_i / total_mass.
inline JumpStream sample_stream(const MarkSpace& ms, double horizon, Rng& rng) {
    detail::require(horizon > 0.0, "sample_stream requires T > 0");
    JumpStream s;
    s.horizon = horizon;
    s.seed_key = rng.key();
    const double rate = ms.total_mass();
    if (rate <= 0.0 || ms.size() == 0) return s;
    double t = 0.0;
    for (;;) {
        t += rng.exponential(rate);
        if (t > horizon) break;
        s.events.push_back({t, ms.draw(rng.uniform())});
    }
    return s;
}

/// |G(x,.)|_m^2 = sum_i m_i |G(x, z_i)|_H^2
inline double g_norm_sq(const GridSpace& space, const JumpCoupling& g, const MarkSpace& ms,
                        const StateVector& x) {
    space.check(x);
    double s = 0.0;
    StateVector tmp;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        g.evaluate(i, x, tmp);
        const double nh = norm_h(space, tmp);
        s += ms.mass(i) * nh * nh;
    }
    return s;
}

/// |G(x,.) - G(y,.)|_m^2
inline double g_diff_norm_sq(const GridSpace& space, const JumpCoupling& g, const MarkSpace& ms,
                             const StateVector& x, const StateVector& y) {
    if (g.is_additive()) return 0.0;
    double s = 0.0;
    StateVector gx, gy;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        g.evaluate(i, x, gx);
        g.evaluate(i, y, gy);
        gx -= gy;
        const double nh = norm_h(space, gx);
        s += ms.mass(i) * nh * nh;
    }
    return s;
}

/// sum_i m_i G(x, z_i): the drift contributed by the compensator.
inline StateVector compensator_drift(const JumpCoupling& g, const MarkSpace& ms,
                                     const StateVector& x) {
    StateVector out(x.size());
    StateVector tmp;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        g.evaluate(i, x, tmp);
        out.axpy(ms.mass(i), tmp);
    }
    return out;
}

/// Diagonal of the Jacobian of x -> compensator_drift(x) (entrywise couplings).
inline std::vector<double> compensator_drift_jacobian_diag(const JumpCoupling& g,
                                                           const MarkSpace& ms,
                                                           const StateVector& x) {
    std::vector<double> d(x.size(), 0.0);
    switch (g.kind()) {
        case CouplingKind::Additive: break;
        case CouplingKind::MultScalar: {
            double s = 0.0;
            for (std::size_t i = 0; i < ms.size(); ++i) s += ms.mass(i) * g.sigmas()[i];
            std::fill(d.begin(), d.end(), s);
            break;
        }
        case CouplingKind::MultLipschitz: {
            double s = 0.0;
            for (std::size_t i = 0; i < ms.size(); ++i) s += ms.mass(i) * g.sigmas()[i];
            for (std::size_t k = 0; k < x.size(); ++k) d[k] = s * g.profile().derivative(x[k]);
            break;
        }
    }
    return d;
}

}  // namespace jumplab
