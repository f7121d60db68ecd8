#pragma once

// Percentile spread-volume curves and the fits of the bid-ask and bar spread
// laws to them.
//
// Both laws are square roots of a two-term sum that is linear in lambda^2 and
// rho^2:
//   bid-ask:  delta^2 = lambda^2 sigma^2 n / V + rho^2 2 (pi tau0 / n)^2 V^2
//   bar:      delta^2 = lambda^2 sigma_T^2     + rho^2 (pi tau0 / n)^2 V^2 (1 + V T / n)
// so the fit runs a bounded Levenberg-Marquardt on (lambda^2, rho^2) >= 0,
// which keeps rho = 0 reachable.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "spreadvol/csv.hpp"
#include "spreadvol/error.hpp"
#include "spreadvol/market_data.hpp"
#include "spreadvol/scaling.hpp"
#include "spreadvol/statistics.hpp"

namespace spreadvol {

// ---------------------------------------------------------------------------
// Flow statistics

struct FlowStats {
    double n = 0.0;       ///< mean trade size
    double volume = 0.0;  ///< shares per reference time unit
    double sigma = 0.0;   ///< log-price volatility per sqrt(reference time)
    std::size_t trades = 0;
};

inline constexpr std::size_t kMinFlowTrades = 30;

/// Trade-flow statistics over the window [t_first, t_first + window]
/// (reference units; `unit_ms` milliseconds per unit). Log-price changes
/// between consecutive trades are rescaled by the mean inter-trade time.
inline FlowStats measure_flow_stats(std::span<const TradeRecord> trades, double window, double unit_ms = 1000.0,
                                    std::size_t min_trades = kMinFlowTrades) {
    detail::require_positive(window, "window");
    detail::require_positive(unit_ms, "unit_ms");
    if (trades.empty()) throw InsufficientDataError("no trades in window");
    const double end_ms = static_cast<double>(trades.front().timestamp_ms) + window * unit_ms;
    std::size_t count = 0;
    while (count < trades.size() && static_cast<double>(trades[count].timestamp_ms) <= end_ms) ++count;
    if (count < std::max<std::size_t>(min_trades, 2))
        throw InsufficientDataError("too few trades in window: " + std::to_string(count));
    const auto in_window = trades.first(count);

    FlowStats out;
    out.trades = count;
    double total = 0.0;
    for (const auto& t : in_window) total += t.size;
    out.n = total / static_cast<double>(count);
    out.volume = total / window;

    std::vector<double> log_changes;
    log_changes.reserve(count - 1);
    for (std::size_t i = 1; i < count; ++i) log_changes.push_back(std::log(in_window[i].price / in_window[i - 1].price));
    const double span_units =
        static_cast<double>(in_window.back().timestamp_ms - in_window.front().timestamp_ms) / unit_ms;
    if (!(span_units > 0.0)) throw InsufficientDataError("trades in window share one timestamp");
    const double mean_gap = span_units / static_cast<double>(count - 1);
    out.sigma = (log_changes.size() >= 2 ? stats::stddev(log_changes) : 0.0) / std::sqrt(mean_gap);
    return out;
}

// ---------------------------------------------------------------------------
// Spread-volume curves

enum class SpreadSource { BidAsk, Bar };

/// One spread observation at a volume rate.
struct SpreadObservation {
    double volume = 0.0;
    double spread = 0.0;
};

/// Quotes with a known volume rate; relative spreads divide by the mid.
inline std::vector<SpreadObservation> observations_from_quotes(std::span<const QuoteRecord> quotes, bool relative,
                                                               std::size_t* skipped = nullptr) {
    std::vector<SpreadObservation> out;
    std::size_t missing = 0;
    for (const auto& q : quotes) {
        if (!q.volume) {
            ++missing;
            continue;
        }
        const double spread = q.ask - q.bid;
        out.push_back({*q.volume, relative ? spread / (0.5 * (q.ask + q.bid)) : spread});
    }
    if (skipped) *skipped = missing;
    return out;
}

/// Bars over `horizon_T` reference units; the volume rate is volume / T.
inline std::vector<SpreadObservation> observations_from_bars(std::span<const BarRecord> bars, double horizon_T,
                                                             bool relative) {
    detail::require_positive(horizon_T, "horizon_T");
    std::vector<SpreadObservation> out;
    out.reserve(bars.size());
    for (const auto& b : bars) {
        const double spread = b.high - b.low;
        out.push_back({b.volume / horizon_T, relative ? spread / (0.5 * (b.high + b.low)) : spread});
    }
    return out;
}

struct BucketSpec {
    enum class Kind {
        LogPercentile,  ///< log-spaced between two volume percentiles
        Log,            ///< log-spaced between lo and hi
        Linear,         ///< evenly spaced between lo and hi
        Explicit        ///< caller-provided edges
    };

    Kind kind = Kind::LogPercentile;
    std::size_t count = 25;
    double p_lo = 0.01;
    double p_hi = 0.99;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> edges;
    std::size_t min_count = 20;  ///< buckets with fewer samples are flagged
};

struct CurveBucket {
    double v_lo = 0.0;
    double v_hi = 0.0;
    double v_mid = 0.0;
    double spread_quantile = std::numeric_limits<double>::quiet_NaN();
    std::size_t trade_count = 0;
    bool flagged = false;
};

struct SpreadVolumeCurve {
    std::vector<CurveBucket> buckets;
    double quantile_level = 0.9;
    SpreadSource source = SpreadSource::BidAsk;
    bool relative = true;  ///< spreads divided by the mid price

    std::size_t total_count() const {
        std::size_t n = 0;
        for (const auto& b : buckets) n += b.trade_count;
        return n;
    }
};

namespace detail {

inline std::vector<double> bucket_edges(const BucketSpec& spec, std::span<const SpreadObservation> obs) {
    using Kind = BucketSpec::Kind;
    if (spec.kind == Kind::Explicit) {
        require(spec.edges.size() >= 2 && std::is_sorted(spec.edges.begin(), spec.edges.end()),
                "explicit bucket edges must be ascending with at least two entries");
        return spec.edges;
    }
    require(spec.count >= 1, "bucket count must be at least 1");
    double lo = spec.lo;
    double hi = spec.hi;
    if (spec.kind == Kind::LogPercentile) {
        std::vector<double> positive;
        for (const auto& o : obs)
            if (o.volume > 0.0) positive.push_back(o.volume);
        if (positive.empty()) throw InsufficientDataError("no positive volumes to bucket");
        std::sort(positive.begin(), positive.end());
        lo = stats::quantile_sorted(positive, spec.p_lo);
        hi = stats::quantile_sorted(positive, spec.p_hi);
    }
    require(hi >= lo, "bucket range must satisfy hi >= lo");
    if (spec.kind == Kind::Linear) {
        std::vector<double> e(spec.count + 1);
        for (std::size_t i = 0; i <= spec.count; ++i)
            e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(spec.count);
        return e;
    }
    if (hi == lo) return {lo, hi};
    return log_space(lo, hi, spec.count + 1);
}

}  // namespace detail

/// Splits the observations into volume buckets and takes the spread quantile
/// of each. Observations outside the edge range land in the end buckets, so
/// the bucket counts always add up to the number of observations.
inline SpreadVolumeCurve build_spread_volume_curve(std::span<const SpreadObservation> obs, const BucketSpec& spec,
                                                   double quantile_level, SpreadSource source, bool relative = true) {
    detail::require(quantile_level > 0.0 && quantile_level <= 1.0, "quantile_level must lie in (0, 1]");
    if (obs.empty()) throw InsufficientDataError("no observations for the spread-volume curve");
    const auto edges = detail::bucket_edges(spec, obs);
    const std::size_t nb = edges.size() - 1;
    const bool geometric = spec.kind == BucketSpec::Kind::LogPercentile || spec.kind == BucketSpec::Kind::Log;

    std::vector<std::vector<double>> samples(nb);
    for (const auto& o : obs) {
        const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, o.volume);
        samples[static_cast<std::size_t>(it - (edges.begin() + 1))].push_back(o.spread);
    }

    SpreadVolumeCurve curve;
    curve.quantile_level = quantile_level;
    curve.source = source;
    curve.relative = relative;
    bool any = false;
    for (std::size_t i = 0; i < nb; ++i) {
        CurveBucket b;
        b.v_lo = edges[i];
        b.v_hi = edges[i + 1];
        b.v_mid = geometric && b.v_lo > 0.0 ? std::sqrt(b.v_lo * b.v_hi) : 0.5 * (b.v_lo + b.v_hi);
        b.trade_count = samples[i].size();
        b.flagged = b.trade_count < spec.min_count;
        if (!samples[i].empty()) {
            b.spread_quantile = stats::quantile(std::move(samples[i]), quantile_level);
            any = true;
        }
        curve.buckets.push_back(b);
    }
    if (!any) throw InsufficientDataError("every volume bucket is empty");
    return curve;
}

/// Curve CSV: `v_lo,v_hi,v_mid,spread_q,count`.
inline void write_curve_csv(std::ostream& out, const SpreadVolumeCurve& curve) {
    out << "v_lo,v_hi,v_mid,spread_q,count\n";
    for (const auto& b : curve.buckets)
        csv::write_row(out, {csv::format_double(b.v_lo), csv::format_double(b.v_hi), csv::format_double(b.v_mid),
                             csv::format_double(b.spread_quantile), std::to_string(b.trade_count)});
}

/// Trade-frequency histogram that accompanies a curve.
inline void write_histogram_csv(std::ostream& out, const SpreadVolumeCurve& curve) {
    const double total = static_cast<double>(std::max<std::size_t>(curve.total_count(), 1));
    out << "v_lo,v_hi,count,frequency,flagged\n";
    for (const auto& b : curve.buckets)
        csv::write_row(out, {csv::format_double(b.v_lo), csv::format_double(b.v_hi), std::to_string(b.trade_count),
                             csv::format_double(static_cast<double>(b.trade_count) / total), b.flagged ? "1" : "0"});
}

inline SpreadVolumeCurve read_curve_csv(std::istream& in, std::size_t min_count = 20) {
    const auto table = csv::Table::read(in);
    const auto c_lo = table.require("v_lo");
    const auto c_hi = table.require("v_hi");
    const auto c_mid = table.require("v_mid");
    const auto c_q = table.require("spread_q");
    const auto c_n = table.require("count");
    SpreadVolumeCurve curve;
    for (const auto& row : table.rows()) {
        const auto f = csv::split(row);
        if (f.size() != table.header().size()) throw InvalidInputError("curve CSV row has the wrong field count");
        const auto lo = csv::parse_double(f[c_lo]);
        const auto hi = csv::parse_double(f[c_hi]);
        const auto mid = csv::parse_double(f[c_mid]);
        const auto q = csv::parse_double(f[c_q]);
        const auto n = csv::parse_double(f[c_n]);
        if (!lo || !hi || !mid || !q || !n || *n < 0.0) throw InvalidInputError("malformed number in curve CSV");
        CurveBucket b{*lo, *hi, *mid, *q, static_cast<std::size_t>(*n), false};
        b.flagged = b.trade_count < min_count;
        curve.buckets.push_back(b);
    }
    if (curve.buckets.empty()) throw InsufficientDataError("curve CSV has no rows");
    return curve;
}

// ---------------------------------------------------------------------------
// Model laws

/// Dimensionless bid-ask spread at volume rate V.
inline double bid_ask_model(double volume, double lambda, double rho, double tau0, double n, double sigma) {
    detail::require_positive(volume, "volume");
    const double impact = std::numbers::pi * tau0 / n * volume;
    return std::sqrt(lambda * lambda * sigma * sigma * n / volume + 2.0 * rho * rho * impact * impact);
}

/// Dimensionless bar height at volume rate V over horizon T (sigma_T given).
inline double bar_model(double volume, double T, double lambda, double rho, double tau0, double n, double sigma_T) {
    detail::require_non_negative(volume, "volume");
    const double impact = std::numbers::pi * tau0 / n * volume;
    return std::sqrt(lambda * lambda * sigma_T * sigma_T + rho * rho * impact * impact * (1.0 + volume * T / n));
}

// ---------------------------------------------------------------------------
// Fitting

struct FitOptions {
    double tau0 = 1.0;                 ///< held fixed; only rho * tau0 is identified
    bool strict_product = false;       ///< report the fit as rho * tau0
    std::size_t max_iterations = 500;
    double relative_step_tol = 1e-10;
    bool include_flagged = false;      ///< fit buckets below min_count too
    double price_ref = 1.0;            ///< scales the model when the curve is in money
};

struct CalibrationResult {
    enum class Law { BidAsk, Bar };

    Law law = Law::BidAsk;
    double lambda_hat = 0.0;
    double rho_hat = 0.0;
    double tau0_hat = 0.0;
    double rho_tau0_product = 0.0;
    bool strict_product = false;
    double residual_norm = 0.0;  ///< count-weighted RMS of (model - data) / data
    double n_used = 0.0;
    double sigma_used = 0.0;     ///< sigma for bid-ask, sigma_T for bars
    double horizon_T = 0.0;      ///< bars only
    std::vector<double> covariance_diag;  ///< variances of (lambda, rho)
    std::size_t buckets_used = 0;
    std::size_t iterations = 0;
    bool converged = false;

    double lambda_uncertainty() const { return std::sqrt(covariance_diag.at(0)); }
    double rho_uncertainty() const { return std::sqrt(covariance_diag.at(1)); }

    /// Model spread on the curve's scale at volume rate V.
    double model(double volume, double price_ref = 1.0) const {
        const double d = law == Law::BidAsk
                             ? bid_ask_model(volume, lambda_hat, rho_hat, tau0_hat, n_used, sigma_used)
                             : bar_model(volume, horizon_T, lambda_hat, rho_hat, tau0_hat, n_used, sigma_used);
        return price_ref * d;
    }
};

namespace detail {

// y_i ~ scale * sqrt(p0 A_i + p1 B_i) with count weights w_i. Residuals are
// relative, (model - y) / y, since quantile noise scales with the spread level.
struct TwoTermProblem {
    std::vector<double> A, B, y, w;
    double scale = 1.0;

    double model(std::size_t i, const Eigen::Vector2d& p) const {
        return scale * std::sqrt(std::max(p[0] * A[i] + p[1] * B[i], 0.0));
    }

    double cost(const Eigen::Vector2d& p) const {
        double c = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double r = (model(i, p) - y[i]) / y[i];
            c += w[i] * r * r;
        }
        return c;
    }

    // Gauss-Newton normal matrix and gradient of the weighted cost / 2.
    void linearize(const Eigen::Vector2d& p, Eigen::Matrix2d& H, Eigen::Vector2d& g) const {
        H.setZero();
        g.setZero();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double m = model(i, p);
            if (m <= 0.0) continue;
            const double k = scale * scale / (2.0 * m * y[i]);
            const Eigen::Vector2d J{k * A[i], k * B[i]};
            H += w[i] * J * J.transpose();
            g += w[i] * J * ((m - y[i]) / y[i]);
        }
    }

    // Linear least squares on the squared law, (p0 A + p1 B) / t - 1 with
    // t = y^2 / scale^2, clamped to p >= 0.
    Eigen::Vector2d initial_guess() const {
        Eigen::Matrix2d M = Eigen::Matrix2d::Zero();
        Eigen::Vector2d b = Eigen::Vector2d::Zero();
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double t = y[i] * y[i] / (scale * scale);
            const Eigen::Vector2d x{A[i] / t, B[i] / t};
            M += w[i] * x * x.transpose();
            b += w[i] * x;
        }
        Eigen::Vector2d p = M.ldlt().solve(b);
        if (p.allFinite() && p[0] > 0.0 && p[1] >= 0.0) return p;
        // one-term fallbacks
        const Eigen::Vector2d only_a{std::max(b[0] / M(0, 0), 0.0), 0.0};
        const Eigen::Vector2d only_b{0.0, std::max(b[1] / M(1, 1), 0.0)};
        return cost(only_a) <= cost(only_b) ? only_a : only_b;
    }
};

struct TwoTermFit {
    Eigen::Vector2d p;
    Eigen::Matrix2d covariance;
    double cost = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

inline TwoTermFit fit_two_term(const TwoTermProblem& prob, const FitOptions& opt) {
    Eigen::Vector2d p = prob.initial_guess();
    double cost = prob.cost(p);
    double mu = 1e-3;
    TwoTermFit out;
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
        out.iterations = it;
        Eigen::Matrix2d H;
        Eigen::Vector2d g;
        prob.linearize(p, H, g);
        bool accepted = false;
        while (mu < 1e20) {
            Eigen::Matrix2d damped = H;
            damped.diagonal() += mu * H.diagonal().cwiseMax(1e-300);
            const Eigen::Vector2d step = damped.ldlt().solve(-g);
            const Eigen::Vector2d trial = (p + step).cwiseMax(0.0);
            const double trial_cost = prob.cost(trial);
            if (std::isfinite(trial_cost) && trial_cost <= cost) {
                const double rel = (trial - p).norm() / std::max(p.norm(), 1e-300);
                p = trial;
                cost = trial_cost;
                mu = std::max(mu / 10.0, 1e-12);
                accepted = true;
                if (rel < opt.relative_step_tol) out.converged = true;
                break;
            }
            mu *= 10.0;
        }
        // No descent direction left at any damping: p is stationary on the feasible set.
        if (!accepted) out.converged = true;
        if (out.converged) break;
    }
    out.p = p;
    out.cost = cost;

    Eigen::Matrix2d H;
    Eigen::Vector2d g;
    prob.linearize(p, H, g);
    const double dof = static_cast<double>(prob.y.size()) - 2.0;
    // residual variance per unit weight
    const double s2 = dof > 0.0 ? cost / dof : 0.0;
    Eigen::FullPivLU<Eigen::Matrix2d> lu(H);
    out.covariance = lu.isInvertible() ? Eigen::Matrix2d(s2 * lu.inverse())
                                       : Eigen::Matrix2d::Constant(std::numeric_limits<double>::infinity());
    return out;
}

// Standard deviation of sqrt(p) from that of p: half-width of the image of
// [p - sd, p + sd] under sqrt, which stays finite at the p = 0 boundary.
inline double sqrt_param_sd(double p, double var_p) {
    const double sd = std::sqrt(std::max(var_p, 0.0));
    return 0.5 * (std::sqrt(p + sd) - std::sqrt(std::max(p - sd, 0.0)));
}

inline CalibrationResult finish(const TwoTermProblem& prob, const FitOptions& opt, CalibrationResult r) {
    const TwoTermFit fit = fit_two_term(prob, opt);
    r.lambda_hat = std::sqrt(fit.p[0]);
    const double rho_eff = std::sqrt(fit.p[1]);  // rho at the configured tau0
    r.tau0_hat = opt.tau0;
    r.rho_hat = rho_eff;
    r.rho_tau0_product = rho_eff * opt.tau0;
    r.strict_product = opt.strict_product;
    double wsum = 0.0;
    for (double w : prob.w) wsum += w;
    r.residual_norm = std::sqrt(fit.cost / wsum);
    const double sd_l = sqrt_param_sd(fit.p[0], fit.covariance(0, 0));
    const double sd_r = sqrt_param_sd(fit.p[1], fit.covariance(1, 1));
    r.covariance_diag = {sd_l * sd_l, sd_r * sd_r};
    r.buckets_used = prob.y.size();
    r.iterations = fit.iterations;
    r.converged = fit.converged;
    if (!fit.converged)
        throw ConvergenceError<CalibrationResult>("spread-law fit did not converge within the iteration limit", r);
    return r;
}

inline std::vector<const CurveBucket*> usable_buckets(const SpreadVolumeCurve& curve, const FitOptions& opt,
                                                      bool need_positive_volume) {
    std::vector<const CurveBucket*> out;
    for (const auto& b : curve.buckets) {
        if (b.trade_count == 0 || !std::isfinite(b.spread_quantile)) continue;
        if (b.flagged && !opt.include_flagged) continue;
        if (need_positive_volume && !(b.v_mid > 0.0)) continue;
        if (!(b.v_mid >= 0.0) || !(b.spread_quantile > 0.0)) continue;
        out.push_back(&b);
    }
    if (out.size() < 3) throw InsufficientDataError("spread-law fit needs at least three usable buckets");
    return out;
}

}  // namespace detail

/// Count-weighted least-squares fit of the bid-ask law to a curve, with
/// tau0 fixed (FitOptions::tau0) and flow inputs n, sigma measured elsewhere.
inline CalibrationResult fit_bid_ask_curve(const SpreadVolumeCurve& curve, double n, double sigma,
                                           const FitOptions& opt = {}) {
    detail::require_positive(n, "n");
    detail::require_positive(sigma, "sigma");
    detail::require_positive(opt.tau0, "tau0");
    const auto buckets = detail::usable_buckets(curve, opt, true);
    detail::TwoTermProblem prob;
    prob.scale = curve.relative ? 1.0 : opt.price_ref;
    const double c = std::numbers::pi * opt.tau0 / n;
    for (const auto* b : buckets) {
        prob.A.push_back(sigma * sigma * n / b->v_mid);
        prob.B.push_back(2.0 * c * c * b->v_mid * b->v_mid);
        prob.y.push_back(b->spread_quantile);
        prob.w.push_back(static_cast<double>(b->trade_count));
    }
    CalibrationResult r;
    r.law = CalibrationResult::Law::BidAsk;
    r.n_used = n;
    r.sigma_used = sigma;
    return detail::finish(prob, opt, r);
}

/// Count-weighted least-squares fit of the bar law at horizon T. The V = 0
/// intercept of the law is lambda * sigma_T.
inline CalibrationResult fit_bar_curve(const SpreadVolumeCurve& curve, double horizon_T, double n, double sigma_T,
                                       const FitOptions& opt = {}) {
    detail::require_positive(horizon_T, "horizon_T");
    detail::require_positive(n, "n");
    detail::require_positive(sigma_T, "sigma_T");
    detail::require_positive(opt.tau0, "tau0");
    const auto buckets = detail::usable_buckets(curve, opt, false);
    detail::TwoTermProblem prob;
    prob.scale = curve.relative ? 1.0 : opt.price_ref;
    const double c = std::numbers::pi * opt.tau0 / n;
    for (const auto* b : buckets) {
        const double V = b->v_mid;
        prob.A.push_back(sigma_T * sigma_T);
        prob.B.push_back(c * c * V * V * (1.0 + V * horizon_T / n));
        prob.y.push_back(b->spread_quantile);
        prob.w.push_back(static_cast<double>(b->trade_count));
    }
    CalibrationResult r;
    r.law = CalibrationResult::Law::Bar;
    r.n_used = n;
    r.sigma_used = sigma_T;
    r.horizon_T = horizon_T;
    return detail::finish(prob, opt, r);
}

/// One security in a cross-section for the liquidity-only law.
struct CrossSectionPoint {
    double price_s = 0.0;
    double sigma = 0.0;
    double n = 0.0;
    double volume = 0.0;
    double observed_spread = 0.0;
};

/// Least-squares lambda of Delta = lambda s sigma sqrt(n / V) over a cross-section.
inline double fit_lambda_cross_section(std::span<const CrossSectionPoint> points) {
    if (points.empty()) throw InsufficientDataError("empty cross-section");
    double sxy = 0.0;
    double sxx = 0.0;
    for (const auto& p : points) {
        const double x = p.price_s * p.sigma * std::sqrt(transaction_time(p.n, p.volume));
        sxy += x * p.observed_spread;
        sxx += x * x;
    }
    if (!(sxx > 0.0)) throw DomainError("cross-section has no volatility information");
    return sxy / sxx;
}

inline constexpr std::size_t kMinExecutionSamples = 100;

/// Maximum-likelihood lambda0 of p(x) = 2 x / lambda0^2 exp(-(x / lambda0)^2).
inline double fit_execution_scale(std::span<const double> samples) {
    if (samples.size() < kMinExecutionSamples)
        throw InsufficientDataError("execution-scale fit needs at least 100 samples");
    for (double x : samples)
        if (!(x > 0.0)) throw DomainError("execution-scale samples must be positive");
    return stats::rayleigh_scale_mle(samples);
}

}  // namespace spreadvol
