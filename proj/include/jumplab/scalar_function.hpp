#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "jumplab/errors.hpp"

namespace jumplab {

/// Scalar map R -> R with an analytic derivative, used for fluxes a(xi),
/// porous-media nonlinearities beta(x), entrywise custom drifts and
/// Lipschitz jump profiles.
///
/// Families (`scale` multiplies every family):
///   linear       s x
///   power r      s |x|^{r-2} x        (p-Laplace flux when r = p)
///   cubic        s x^3
///   tanh         s tanh(x)
///   sin          s sin(x)
///   custom       user-supplied value/derivative
class ScalarFunction {
public:
    enum class Family { Linear, Power, Cubic, Tanh, Sin, Custom };

    static ScalarFunction linear(double scale = 1.0) { return {Family::Linear, scale, 2.0}; }
    static ScalarFunction power(double exponent, double scale = 1.0) {
        detail::require(exponent >= 1.0, "power family needs exponent >= 1");
        return {Family::Power, scale, exponent};
    }
    static ScalarFunction cubic(double scale = 1.0) { return {Family::Cubic, scale, 4.0}; }
    static ScalarFunction tanh(double scale = 1.0) { return {Family::Tanh, scale, 2.0}; }
    static ScalarFunction sin(double scale = 1.0) { return {Family::Sin, scale, 2.0}; }
    static ScalarFunction custom(std::function<double(double)> f, std::function<double(double)> df,
                                 std::string name = "custom") {
        ScalarFunction s{Family::Custom, 1.0, 2.0};
        s.f_ = std::move(f);
        s.df_ = std::move(df);
        s.name_ = std::move(name);
        return s;
    }

    /// Parses "family:scale[:exponent]", e.g. "power:1.0" (exponent defaults
    /// to `default_exponent`), "power:2:4", "linear:-1", "cubic:1".
    static ScalarFunction parse(std::string_view text, double default_exponent) {
        std::vector<std::string> parts;
        std::stringstream ss{std::string(text)};
        for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
        if (parts.empty() || parts.size() > 3)
            throw ConfigError("cannot parse scalar function '" + std::string(text) + "'");
        double scale = 1.0;
        try {
            if (parts.size() >= 2) scale = std::stod(parts[1]);
        } catch (const std::exception&) {
            throw ConfigError("bad scale in scalar function '" + std::string(text) + "'");
        }
        const std::string& fam = parts[0];
        if (fam == "power") {
            double r = default_exponent;
            if (parts.size() == 3) {
                try {
                    r = std::stod(parts[2]);
                } catch (const std::exception&) {
                    throw ConfigError("bad exponent in '" + std::string(text) + "'");
                }
            }
            if (r < 1.0) throw ConfigError("power exponent must be >= 1");
            return power(r, scale);
        }
        if (parts.size() == 3) throw ConfigError("only the power family takes an exponent");
        if (fam == "linear") return linear(scale);
        if (fam == "cubic") return cubic(scale);
        if (fam == "tanh") return tanh(scale);
        if (fam == "sin") return sin(scale);
        throw ConfigError("unknown scalar function family '" + fam + "'");
    }

    double operator()(double x) const {
        switch (family_) {
            case Family::Linear: return scale_ * x;
            case Family::Power: {
                const double ax = std::abs(x);
                if (exponent_ == 2.0) return scale_ * x;
                if (exponent_ == 3.0) return scale_ * ax * x;
                return ax == 0.0 ? 0.0 : scale_ * std::pow(ax, exponent_ - 2.0) * x;
            }
            case Family::Cubic: return scale_ * x * x * x;
            case Family::Tanh: return scale_ * std::tanh(x);
            case Family::Sin: return scale_ * std::sin(x);
            case Family::Custom: return f_(x);
        }
        return 0.0;
    }

    double derivative(double x) const {
        switch (family_) {
            case Family::Linear: return scale_;
            case Family::Power: {
                const double ax = std::abs(x);
                if (exponent_ == 2.0) return scale_;
                if (exponent_ == 3.0) return 2.0 * scale_ * ax;
                if (ax == 0.0) return exponent_ < 2.0 ? INFINITY : 0.0;
                return scale_ * (exponent_ - 1.0) * std::pow(ax, exponent_ - 2.0);
            }
            case Family::Cubic: return 3.0 * scale_ * x * x;
            case Family::Tanh: {
                const double t = std::tanh(x);
                return scale_ * (1.0 - t * t);
            }
            case Family::Sin: return scale_ * std::cos(x);
            case Family::Custom: return df_(x);
        }
        return 0.0;
    }

    Family family() const noexcept { return family_; }
    double scale() const noexcept { return scale_; }
    double exponent() const noexcept { return exponent_; }

    /// Global Lipschitz constant when one exists (tanh, sin, linear), else inf.
    double lipschitz() const noexcept {
        switch (family_) {
            case Family::Linear:
            case Family::Tanh:
            case Family::Sin: return std::abs(scale_);
            case Family::Power: return exponent_ == 2.0 ? std::abs(scale_) : INFINITY;
            default: return INFINITY;
        }
    }

    std::string describe() const {
        std::ostringstream os;
        os.precision(17);
        switch (family_) {
            case Family::Linear: os << "linear:" << scale_; break;
            case Family::Power: os << "power:" << scale_ << ":" << exponent_; break;
            case Family::Cubic: os << "cubic:" << scale_; break;
            case Family::Tanh: os << "tanh:" << scale_; break;
            case Family::Sin: os << "sin:" << scale_; break;
            case Family::Custom: os << name_; break;
        }
        return os.str();
    }

private:
    ScalarFunction(Family f, double scale, double exponent)
        : family_(f), scale_(scale), exponent_(exponent) {}

    Family family_;
    double scale_;
    double exponent_;
    std::function<double(double)> f_;
    std::function<double(double)> df_;
    std::string name_;
};

}  // namespace jumplab
