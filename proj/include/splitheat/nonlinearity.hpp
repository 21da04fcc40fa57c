#pragma once

#include "splitheat/error.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

namespace splitheat {

/// Multiplicative noise coefficient f with f(0) = 0, together with the
/// quotient g(s) = f(s)/s (g(0) = f'(0)) that the stochastic substep uses.
struct Nonlinearity {
    enum class Kind { Zero, Linear, RegularizedSqrt, HalfSqrt };

    Kind kind = Kind::Zero;
    double lambda = 0.0;  ///< Linear slope
    double delta = 0.1;   ///< RegularizedSqrt width
    std::optional<double> g_cap;  ///< optional clamp |g| <= g_cap

    static Nonlinearity zero() { return {}; }
    static Nonlinearity linear(double lambda) { return {Kind::Linear, lambda, 0.1, std::nullopt}; }
    static Nonlinearity regularized_sqrt(double delta) {
        if (!(delta > 0.0)) throw Error("regularized sqrt needs delta > 0");
        return {Kind::RegularizedSqrt, 0.0, delta, std::nullopt};
    }
    static Nonlinearity half_sqrt() { return {Kind::HalfSqrt, 0.0, 0.1, std::nullopt}; }

    bool is_lipschitz() const { return kind != Kind::HalfSqrt; }
};

inline std::string_view to_string(Nonlinearity::Kind kind) {
    switch (kind) {
        case Nonlinearity::Kind::Zero: return "zero";
        case Nonlinearity::Kind::Linear: return "linear";
        case Nonlinearity::Kind::RegularizedSqrt: return "reg_sqrt";
        case Nonlinearity::Kind::HalfSqrt: return "half_sqrt";
    }
    return "?";
}

inline Nonlinearity::Kind parse_nonlinearity_kind(std::string_view name) {
    if (name == "zero") return Nonlinearity::Kind::Zero;
    if (name == "linear") return Nonlinearity::Kind::Linear;
    if (name == "reg_sqrt") return Nonlinearity::Kind::RegularizedSqrt;
    if (name == "half_sqrt") return Nonlinearity::Kind::HalfSqrt;
    throw Error("unknown nonlinearity '" + std::string(name) + "' (expected linear|reg_sqrt|half_sqrt|zero)");
}

namespace detail {

// C^1 odd approximation of sign(s) sqrt|s|: linear on |s| <= delta/2,
// cubic blend on delta/2 <= |s| <= delta, square root beyond.
inline double regularized_sqrt(double s, double delta) {
    const double a = std::abs(s);
    const double sd = std::sqrt(delta);
    if (a <= 0.5 * delta) return s / sd;
    const double sgn = s < 0.0 ? -1.0 : 1.0;
    if (a <= delta) {
        return -2.0 * sd / (delta * delta * delta) * s * s * s + sgn * 4.0 / (delta * sd) * s * s - 1.5 / sd * s + sgn * 0.5 * sd;
    }
    return sgn * std::sqrt(a);
}

}  // namespace detail

inline double f_eval(const Nonlinearity& nl, double s) {
    switch (nl.kind) {
        case Nonlinearity::Kind::Zero: return 0.0;
        case Nonlinearity::Kind::Linear: return nl.lambda * s;
        case Nonlinearity::Kind::RegularizedSqrt: return detail::regularized_sqrt(s, nl.delta);
        case Nonlinearity::Kind::HalfSqrt: return s > 0.0 ? std::sqrt(s) : 0.0;
    }
    return 0.0;
}

/// f(s)/s away from zero, f'(0) at zero (taken analytically per kind).
inline double g_eval(const Nonlinearity& nl, double s) {
    double g = 0.0;
    switch (nl.kind) {
        case Nonlinearity::Kind::Zero: g = 0.0; break;
        case Nonlinearity::Kind::Linear: g = nl.lambda; break;
        case Nonlinearity::Kind::RegularizedSqrt:
            g = std::abs(s) <= 0.5 * nl.delta ? 1.0 / std::sqrt(nl.delta) : detail::regularized_sqrt(s, nl.delta) / s;
            break;
        case Nonlinearity::Kind::HalfSqrt: g = s > 0.0 ? 1.0 / std::sqrt(s) : 0.0; break;
    }
    if (nl.g_cap) g = std::clamp(g, -*nl.g_cap, *nl.g_cap);
    return g;
}

/// Global Lipschitz constant of f. For the regularized square root the
/// steepest slope sits inside the cubic blend at |s| = 2 delta / 3, where
/// f' = 7 / (6 sqrt(delta)).
inline double lipschitz_estimate(const Nonlinearity& nl) {
    switch (nl.kind) {
        case Nonlinearity::Kind::Zero: return 0.0;
        case Nonlinearity::Kind::Linear: return std::abs(nl.lambda);
        case Nonlinearity::Kind::RegularizedSqrt: return 7.0 / (6.0 * std::sqrt(nl.delta));
        case Nonlinearity::Kind::HalfSqrt: throw Error("lipschitz_estimate: half_sqrt is non-Lipschitz");
    }
    return 0.0;
}

}  // namespace splitheat
