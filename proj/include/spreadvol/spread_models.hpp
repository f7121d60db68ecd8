#pragma once

// Closed-form spread laws: liquidity-only spread, straddle estimate, the
// general liquidity + impact spread and its dimensionless minimum.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

#include "spreadvol/error.hpp"

namespace spreadvol {

/// Inputs shared by the closed-form spread laws. Volatility and any volume
/// passed alongside must refer to the same reference time unit.
struct SpreadModelParams {
    double price_s = 1.0;           ///< money per share
    double sigma = 1.0;             ///< volatility per sqrt(reference time)
    double lambda_risk = 1.0;       ///< risk-aversion multiplier on the liquidity term
    double rho_risk = 1.0;          ///< multiplier on the impact term
    double avg_trade_size_n = 1.0;  ///< shares per transaction
    double tau0 = 1.0;              ///< time constant of the amplitude evolution

    /// Price, trade size and time constant must be positive. The three
    /// multipliers may be zero so that either spread term can be switched off.
    void validate() const {
        detail::require_positive(price_s, "price_s");
        detail::require_positive(avg_trade_size_n, "avg_trade_size_n");
        detail::require_positive(tau0, "tau0");
        detail::require_non_negative(sigma, "sigma");
        detail::require_non_negative(lambda_risk, "lambda_risk");
        detail::require_non_negative(rho_risk, "rho_risk");
    }
};

/// a = sqrt(2) rho lambda^2 sigma^2 pi tau0 and V0 = n / (sqrt(2) rho pi tau0).
struct DimensionlessSpreadParams {
    double a_coeff = 0.0;
    double v0_scale = 0.0;

    static DimensionlessSpreadParams from(const SpreadModelParams& p) {
        p.validate();
        detail::require_positive(p.rho_risk, "rho_risk");
        detail::require_positive(p.lambda_risk, "lambda_risk");
        detail::require_positive(p.sigma, "sigma");
        const double rho_pi_tau = std::numbers::sqrt2 * p.rho_risk * std::numbers::pi * p.tau0;
        return {rho_pi_tau * p.lambda_risk * p.lambda_risk * p.sigma * p.sigma,
                p.avg_trade_size_n / rho_pi_tau};
    }
};

struct SpreadMinimum {
    double v_min = 0.0;
    double delta_min = 0.0;
};

/// Average time between transactions, tau = n / V.
inline double transaction_time(double n, double volume) {
    detail::require_positive(n, "n");
    detail::require_positive(volume, "volume");
    return n / volume;
}

/// lambda * s * sigma * sqrt(n / V).
inline double basic_spread(const SpreadModelParams& p, double volume) {
    p.validate();
    const double tau = transaction_time(p.avg_trade_size_n, volume);
    return p.lambda_risk * p.price_s * p.sigma * std::sqrt(tau);
}

/// Risk multiplier implied by pricing the spread as an ATM straddle.
inline const double kStraddleLambda = std::sqrt(8.0 / std::numbers::pi);

/// Width of the positive-P/L range of an ATM straddle expiring after tau.
/// Evaluated along the same expression as basic_spread.
inline double straddle_spread(double s, double sigma, double tau) {
    detail::require_positive(s, "s");
    detail::require_positive(sigma, "sigma");
    detail::require_non_negative(tau, "tau");
    return kStraddleLambda * s * sigma * std::sqrt(tau);
}

/// delta(v) = sqrt(a / v + v^2).
inline double general_spread_dimensionless(double a, double v) {
    detail::require_non_negative(a, "a");
    detail::require_positive(v, "v");
    return std::sqrt(a / v + v * v);
}

/// sqrt(lambda^2 s^2 sigma^2 n / V + 2 rho^2 (pi s tau0 / n)^2 V^2).
inline double general_spread(const SpreadModelParams& p, double volume) {
    p.validate();
    detail::require_positive(volume, "volume");
    const double liquidity = p.lambda_risk * p.price_s * p.sigma;
    const double impact = p.rho_risk * std::numbers::pi * p.price_s * p.tau0 / p.avg_trade_size_n * volume;
    return std::sqrt(liquidity * liquidity * p.avg_trade_size_n / volume + 2.0 * impact * impact);
}

/// Analytic minimum of delta(v): v_min = (a/2)^(1/3), delta_min = sqrt(3) v_min.
inline SpreadMinimum spread_minimum(double a) {
    detail::require_positive(a, "a");
    const double v = std::cbrt(a / 2.0);
    return {v, std::numbers::sqrt3 * v};
}

/// The two volumes at which delta(v) equals a given spread.
struct VolumePair {
    double lower = 0.0;  ///< on the liquidity branch, v <= v_min
    double upper = 0.0;  ///< on the impact branch, v >= v_min
};

inline constexpr double kMinimumTieTolerance = 1e-9;

namespace detail {

// Bisection for f(v) = delta(a, v) - target on a bracket where f changes
// sign exactly once; `decreasing` selects the branch orientation.
inline double bisect_branch(double a, double target, double lo, double hi, bool decreasing) {
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double f = general_spread_dimensionless(a, mid) - target;
        const bool root_left = decreasing ? (f < 0.0) : (f > 0.0);
        (root_left ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace detail

/// Both roots v1 <= v_min <= v2 of delta(a, v) = delta. A spread within
/// kMinimumTieTolerance of the minimum yields the double root at v_min.
inline VolumePair inverse_spread_volumes(double a, double delta) {
    const SpreadMinimum m = spread_minimum(a);
    detail::require_positive(delta, "delta");
    if (delta < m.delta_min - kMinimumTieTolerance) {
        throw NoSolutionError("requested spread lies below the minimum spread");
    }
    if (delta <= m.delta_min + kMinimumTieTolerance) return {m.v_min, m.v_min};

    // sqrt(a/eps) = 2 delta at eps = a / (4 delta^2); delta(v) >= v covers the right end.
    const double eps = a / (4.0 * delta * delta);
    const double v_big = std::max(2.0 * delta, 10.0 * m.v_min);
    return {detail::bisect_branch(a, delta, eps, m.v_min, true),
            detail::bisect_branch(a, delta, m.v_min, v_big, false)};
}

}  // namespace spreadvol
