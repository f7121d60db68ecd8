#pragma once

// Operating-spread optimization for a market maker quoting a dimensionless
// spread delta(lambda) with Rayleigh-distributed execution:
//   r(lambda)   = exp(-(lambda / lambda0)^2)
//   P/L(lambda) = 0.5 r v (delta - commission)
// The first-order condition is solved in lambda and reported as the residual
//   delta - commission - delta' lambda0^2 / (2 lambda)
// which is the r-form condition delta - commission + r d(delta)/dr = 0.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spreadvol/csv.hpp"
#include "spreadvol/error.hpp"
#include "spreadvol/spread_models.hpp"

namespace spreadvol {

struct ExecutionModel {
    double lambda0 = 1.0;

    void validate() const { detail::require_positive(lambda0, "lambda0"); }
};

/// Probability that a quote at control level lambda executes.
inline double execution_rate(const ExecutionModel& m, double lambda) {
    m.validate();
    detail::require_non_negative(lambda, "lambda");
    const double x = lambda / m.lambda0;
    return std::exp(-x * x);
}

/// Density p(lambda) = 2 lambda / lambda0^2 exp(-(lambda / lambda0)^2); r is its survival function.
inline double execution_density(const ExecutionModel& m, double lambda) {
    m.validate();
    detail::require_non_negative(lambda, "lambda");
    const double x = lambda / m.lambda0;
    return 2.0 * lambda / (m.lambda0 * m.lambda0) * std::exp(-x * x);
}

/// A one-parameter spread family delta(lambda) at fixed volume.
template <class L>
concept SpreadFamily = requires(const L& law, double lambda) {
    { law.value(lambda) } -> std::convertible_to<double>;
    { law.slope(lambda) } -> std::convertible_to<double>;
    { law.curvature(lambda) } -> std::convertible_to<double>;
};

/// delta(lambda) = (lambda / lambda_ref) delta_ref: impact and liquidity
/// multipliers move together, so the spread is linear in the control.
struct LinearSpreadLaw {
    double delta_ref = 1.0;
    double lambda_ref = 1.0;

    void validate() const {
        detail::require_positive(delta_ref, "delta_ref");
        detail::require_positive(lambda_ref, "lambda_ref");
    }
    double value(double lambda) const { return lambda / lambda_ref * delta_ref; }
    double slope(double) const { return delta_ref / lambda_ref; }
    double curvature(double) const { return 0.0; }
};

static_assert(SpreadFamily<LinearSpreadLaw>);

template <SpreadFamily Law = LinearSpreadLaw>
struct PnLParams {
    double commission_alpha = 0.0;  ///< same units as delta
    double volume_v = 1.0;
    Law spread_curve{};
    double lambda_max = 0.0;  ///< search bound; 0 picks max(10 lambda0, 2 lambda_ref)

    void validate() const {
        detail::require_non_negative(commission_alpha, "commission_alpha");
        detail::require_positive(volume_v, "volume_v");
        detail::require_non_negative(lambda_max, "lambda_max");
        if constexpr (requires { spread_curve.validate(); }) spread_curve.validate();
    }
};

template <SpreadFamily Law>
double spread_pnl(const PnLParams<Law>& p, const ExecutionModel& m, double lambda) {
    p.validate();
    return 0.5 * execution_rate(m, lambda) * p.volume_v * (p.spread_curve.value(lambda) - p.commission_alpha);
}

/// First-order-condition residual at lambda > 0.
template <SpreadFamily Law>
double optimality_residual(const PnLParams<Law>& p, const ExecutionModel& m, double lambda) {
    detail::require_positive(lambda, "lambda");
    const double l0sq = m.lambda0 * m.lambda0;
    return p.spread_curve.value(lambda) - p.commission_alpha - p.spread_curve.slope(lambda) * l0sq / (2.0 * lambda);
}

struct SpreadOptimum {
    double lambda_opt = 0.0;
    double spread_opt = 0.0;
    double exec_rate = 0.0;
    double pnl_opt = 0.0;
    double residual = 0.0;     ///< first-order residual; NaN at a boundary optimum
    bool interior = true;
    bool halt = false;         ///< no positive P/L anywhere on [0, lambda_max]
    std::size_t iterations = 0;
};

inline constexpr std::size_t kBracketGridPoints = 2001;
inline constexpr double kResidualTol = 1e-12;

namespace detail {

inline double default_lambda_max(double lambda_max, double lambda0, double lambda_ref) {
    return lambda_max > 0.0 ? lambda_max : std::max(10.0 * lambda0, 2.0 * lambda_ref);
}

template <class Law>
double lambda_ref_of(const Law& law) {
    if constexpr (requires { law.lambda_ref; }) return law.lambda_ref;
    else return 1.0;
}

template <SpreadFamily Law>
SpreadOptimum make_optimum(const PnLParams<Law>& p, const ExecutionModel& m, double lambda, bool interior) {
    SpreadOptimum o;
    o.lambda_opt = lambda;
    o.spread_opt = p.spread_curve.value(lambda);
    o.exec_rate = execution_rate(m, lambda);
    o.pnl_opt = 0.5 * o.exec_rate * p.volume_v * (o.spread_opt - p.commission_alpha);
    o.interior = interior;
    o.residual = interior ? optimality_residual(p, m, lambda) : std::numeric_limits<double>::quiet_NaN();
    return o;
}

}  // namespace detail

/// Maximizes P/L over lambda in (0, lambda_max]. A coarse grid brackets the
/// maximum, then a safeguarded Newton iteration drives the first-order
/// residual to zero inside the bracket. If the best P/L is not positive the
/// result is flagged `halt`.
template <SpreadFamily Law>
SpreadOptimum optimize_spread(const PnLParams<Law>& p, const ExecutionModel& m, std::size_t max_iterations = 200) {
    p.validate();
    m.validate();
    const double hi = detail::default_lambda_max(p.lambda_max, m.lambda0, detail::lambda_ref_of(p.spread_curve));
    const double l0sq = m.lambda0 * m.lambda0;
    const auto pnl = [&](double l) { return spread_pnl(p, m, l); };

    // coarse bracket
    const double step = hi / static_cast<double>(kBracketGridPoints - 1);
    std::size_t best = 1;
    double best_val = pnl(step);
    for (std::size_t i = 2; i < kBracketGridPoints; ++i) {
        const double v = pnl(step * static_cast<double>(i));
        if (v > best_val) {
            best_val = v;
            best = i;
        }
    }
    const SpreadOptimum fallback = detail::make_optimum(p, m, step * static_cast<double>(best), false);

    double a = step * static_cast<double>(best - 1);
    double b = std::min(step * static_cast<double>(best + 1), hi);
    if (a <= 0.0) a = step * 1e-6;
    const auto R = [&](double l) { return optimality_residual(p, m, l); };
    double Ra = R(a);
    double Rb = R(b);

    SpreadOptimum out;
    if (Ra < 0.0 && Rb > 0.0) {
        // P/L rises while R < 0 and falls once R > 0
        double x = step * static_cast<double>(best);
        if (x >= b) x = 0.5 * (a + b);
        std::size_t it = 0;
        bool converged = false;
        for (; it < max_iterations; ++it) {
            const double r = R(x);
            if (std::abs(r) <= kResidualTol * std::max(1.0, p.spread_curve.value(x))) {
                converged = true;
                break;
            }
            if (r < 0.0) a = x;
            else b = x;
            const double dr = p.spread_curve.slope(x) - p.spread_curve.curvature(x) * l0sq / (2.0 * x) +
                              p.spread_curve.slope(x) * l0sq / (2.0 * x * x);
            double next = dr != 0.0 ? x - r / dr : 0.5 * (a + b);
            if (!(next > a && next < b)) next = 0.5 * (a + b);
            if (b - a <= std::numeric_limits<double>::epsilon() * b) {
                x = next;
                converged = true;
                break;
            }
            x = next;
        }
        if (!converged) {
            SpreadOptimum f = fallback;
            f.halt = f.pnl_opt <= 0.0;
            throw ConvergenceError<SpreadOptimum>("operating-spread optimization did not converge", f);
        }
        out = detail::make_optimum(p, m, x, true);
        out.iterations = it;
    } else {
        // maximum on the boundary of the search range
        out = fallback;
        if (best + 1 >= kBracketGridPoints) out = detail::make_optimum(p, m, hi, false);
    }
    out.halt = out.pnl_opt <= 0.0;
    return out;
}

/// Closed-form optimum of the linear family: lambda* = (alpha + sqrt(alpha^2 + 2 c^2 lambda0^2)) / (2 c), c = slope.
inline double linear_optimum_lambda(double slope, double commission_alpha, double lambda0) {
    detail::require_positive(slope, "slope");
    detail::require_non_negative(commission_alpha, "commission_alpha");
    detail::require_positive(lambda0, "lambda0");
    return (commission_alpha +
            std::sqrt(commission_alpha * commission_alpha + 2.0 * slope * slope * lambda0 * lambda0)) /
           (2.0 * slope);
}

// ---------------------------------------------------------------------------
// Reference curves and policies

/// Bid-ask reference: delta_ref(v) = sqrt(a / v + v^2).
struct BidAskReference {
    double a = 1.0;
    double operator()(double v) const { return general_spread_dimensionless(a, v); }
};

/// Bar reference at a fixed horizon: delta_ref(v) = sqrt(floor^2 + v^2 / 2 + cubic v^3).
struct BarReference {
    double floor = 0.0;
    double cubic = 0.0;
    double operator()(double v) const {
        detail::require_non_negative(v, "v");
        return std::sqrt(floor * floor + v * v / 2.0 + cubic * v * v * v);
    }
};

enum class QuotingMode { BidAsk, Bar };

struct PolicyPoint {
    double v = 0.0;
    double delta_ref = 0.0;
    double lambda_opt = std::numeric_limits<double>::quiet_NaN();
    double spread_opt = std::numeric_limits<double>::quiet_NaN();
    double exec_rate = std::numeric_limits<double>::quiet_NaN();
    double pnl_opt = std::numeric_limits<double>::quiet_NaN();
    double pnl_naive = std::numeric_limits<double>::quiet_NaN();
    bool halt = false;
    bool ok = true;
    std::string error;
};

struct QuotePolicy {
    QuotingMode mode = QuotingMode::BidAsk;
    double commission_alpha = 0.0;
    double lambda0 = 1.0;
    double lambda_ref = 1.0;
    std::vector<PolicyPoint> points;

    std::size_t gaps() const {
        return static_cast<std::size_t>(std::count_if(points.begin(), points.end(), [](const auto& p) { return !p.ok; }));
    }
};

/// Optimizes every volume point against delta_ref(v) scaled linearly in
/// lambda. The naive comparison quotes the reference spread, lambda = lambda_ref.
inline QuotePolicy policy_curve(std::span<const double> volumes, const std::function<double(double)>& reference,
                                QuotingMode mode, double commission_alpha, const ExecutionModel& model,
                                double lambda_ref = 1.0, double lambda_max = 0.0) {
    if (volumes.empty()) throw DomainError("volume grid must be non-empty");
    detail::require(std::is_sorted(volumes.begin(), volumes.end()) &&
                        std::adjacent_find(volumes.begin(), volumes.end()) == volumes.end(),
                    "volume grid must be strictly ascending");
    model.validate();
    detail::require_positive(lambda_ref, "lambda_ref");
    detail::require_non_negative(commission_alpha, "commission_alpha");

    QuotePolicy policy{mode, commission_alpha, model.lambda0, lambda_ref, {}};
    policy.points.reserve(volumes.size());
    for (double v : volumes) {
        PolicyPoint pt;
        pt.v = v;
        try {
            pt.delta_ref = reference(v);
            const PnLParams<LinearSpreadLaw> params{commission_alpha, v, {pt.delta_ref, lambda_ref}, lambda_max};
            const SpreadOptimum o = optimize_spread(params, model);
            pt.lambda_opt = o.lambda_opt;
            pt.spread_opt = o.spread_opt;
            pt.exec_rate = o.exec_rate;
            pt.pnl_opt = o.pnl_opt;
            pt.pnl_naive = spread_pnl(params, model, lambda_ref);
            pt.halt = o.halt;
        } catch (const ConvergenceError<SpreadOptimum>& e) {
            pt.ok = false;
            pt.error = e.what();
        } catch (const Error& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        policy.points.push_back(std::move(pt));
    }
    return policy;
}

/// CSV `v,lambda_opt,spread_opt,exec_rate,pnl_opt,pnl_naive,halt`; failed points carry nan.
inline void write_policy_csv(std::ostream& out, const QuotePolicy& policy) {
    out << "v,lambda_opt,spread_opt,exec_rate,pnl_opt,pnl_naive,halt\n";
    for (const auto& p : policy.points)
        csv::write_row(out, {csv::format_double(p.v), csv::format_double(p.lambda_opt),
                             csv::format_double(p.spread_opt), csv::format_double(p.exec_rate),
                             csv::format_double(p.pnl_opt), csv::format_double(p.pnl_naive), p.halt ? "1" : "0"});
}

}  // namespace spreadvol
