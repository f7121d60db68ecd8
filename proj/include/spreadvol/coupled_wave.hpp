#pragma once

// Two-level price operator model. Each step draws a mid-price move and the
// operator's diagonal split xi and coupling kappa; the eigenvalue gap is the
// bar height and the next last price is placed inside the bar. The same
// operator drives a closed-form evolution of the high/low amplitudes.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "spreadvol/error.hpp"
#include "spreadvol/random.hpp"
#include "spreadvol/scaling.hpp"
#include "spreadvol/spread_models.hpp"
#include "spreadvol/statistics.hpp"

namespace spreadvol {

enum class LastPriceRule {
    UniformInBar,  ///< last price uniform between low and high
    NormalHalfBar  ///< last price normal around mid with std h/2
};

/// Variance coefficient of the last-price placement: Var = alpha h^2 / 4.
inline double placement_alpha(LastPriceRule rule) {
    return rule == LastPriceRule::UniformInBar ? 1.0 / 3.0 : 1.0;
}

struct CoupledWaveParams {
    double sigma_step = 0.0;  ///< mid-price volatility per step, sigma * sqrt(dt)
    double xi_mean = 0.0;
    double xi_std = 0.0;
    double kappa_mean = 0.0;
    double kappa_std = 0.0;
    double tau0 = 1.0;
    LastPriceRule last_price_rule = LastPriceRule::UniformInBar;
    std::uint64_t seed = 0;

    void validate() const {
        detail::require_non_negative(sigma_step, "sigma_step");
        detail::require_non_negative(xi_std, "xi_std");
        detail::require_non_negative(kappa_std, "kappa_std");
        detail::require_positive(tau0, "tau0");
    }

    /// True when bar heights are a constant (both draws have zero spread).
    bool degenerate_heights() const { return xi_std == 0.0 && kappa_std == 0.0; }

    /// E[h^2] = E[xi^2] + E[kappa^2].
    double mean_square_height() const {
        return xi_mean * xi_mean + xi_std * xi_std + kappa_mean * kappa_mean + kappa_std * kappa_std;
    }

    static double sigma_step_for(double sigma, double dt) {
        detail::require_non_negative(sigma, "sigma");
        detail::require_positive(dt, "dt");
        return sigma * std::sqrt(dt);
    }
};

/// Hermitian 2x2 price operator with a real off-diagonal element.
struct PriceOperator2x2 {
    double s11 = 0.0;
    double s22 = 0.0;
    double s12 = 0.0;

    static PriceOperator2x2 from_draws(double s_mid, double xi, double kappa) {
        return {s_mid + xi / 2.0, s_mid - xi / 2.0, kappa / 2.0};
    }
};

struct OperatorSpectrum {
    double s_high = 0.0;
    double s_low = 0.0;
    double h = 0.0;
    double s_mid = 0.0;
};

inline OperatorSpectrum eigen_decompose(const PriceOperator2x2& op) {
    const double mid = 0.5 * (op.s11 + op.s22);
    const double h = std::hypot(op.s11 - op.s22, 2.0 * op.s12);
    return {mid + h / 2.0, mid - h / 2.0, h, mid};
}

struct BarSample {
    double s_mid = 0.0;
    double s_high = 0.0;
    double s_low = 0.0;
    double s_last = 0.0;
    double h = 0.0;
    double xi = 0.0;
    double kappa = 0.0;
    double volume = 0.0;  ///< volume rate driving the step, 0 when undriven
};

/// Rejected draws above this fraction of steps are reported as a warning.
inline constexpr double kRedrawWarnRate = 1e-3;

struct BarSeries {
    double s0 = 0.0;
    double dt = 1.0;  ///< step length in reference time units
    std::vector<BarSample> bars;
    std::size_t redraws = 0;

    std::size_t size() const noexcept { return bars.size(); }
    double redraw_rate() const {
        return bars.empty() ? 0.0 : static_cast<double>(redraws) / static_cast<double>(bars.size());
    }
    bool redraw_warning() const { return redraw_rate() > kRedrawWarnRate; }
};

/// Couples bar heights to a per-step volume so that the chosen spread law is
/// the `quantile_level` quantile of h at every volume. Volumes are lognormal.
struct VolumeDrive {
    enum class Law { BidAsk, Bar };

    double volume_median = 1.0;
    double volume_log_std = 1.0;
    Law law = Law::BidAsk;
    SpreadModelParams spread;  ///< price_s is replaced by the step's mid price
    double horizon_T = 1.0;    ///< used by the bar law
    double quantile_level = 0.9;

    void validate() const {
        detail::require_positive(volume_median, "volume_median");
        detail::require_non_negative(volume_log_std, "volume_log_std");
        detail::require_positive(horizon_T, "horizon_T");
        detail::require(quantile_level > 0.0 && quantile_level < 1.0, "quantile_level must lie in (0, 1)");
        spread.validate();
    }

    /// Model spread (money) at the given mid price and volume rate.
    double spread_at(double s_mid, double volume) const {
        SpreadModelParams p = spread;
        p.price_s = s_mid;
        if (law == Law::BidAsk) return general_spread(p, volume);
        const SpreadSurfaceParams bar{p.lambda_risk, p.rho_risk, p.sigma, p.avg_trade_size_n, p.tau0, {}, {}};
        return bar_spread_with_volume(bar, s_mid, volume, horizon_T);
    }

    /// Normal std of xi and kappa that puts the Rayleigh quantile of h at `spread`.
    double height_scale(double spread_value) const {
        return spread_value / std::sqrt(-2.0 * std::log1p(-quantile_level));
    }
};

namespace detail {

inline double draw_mid(double s_last, double sigma_step, Rng& rng, std::size_t& redraws) {
    for (;;) {
        const double mid = s_last * (1.0 + sigma_step * rng.normal());
        if (mid > 0.0) return mid;
        ++redraws;
    }
}

inline double place_last(const BarSample& bar, LastPriceRule rule, Rng& rng, std::size_t& redraws) {
    for (;;) {
        const double last = rule == LastPriceRule::UniformInBar ? rng.uniform(bar.s_low, bar.s_high)
                                                                : rng.normal(bar.s_mid, bar.h / 2.0);
        if (last > 0.0) return last;
        ++redraws;
    }
}

inline BarSample assemble(double s_mid, double xi, double kappa) {
    const auto spec = eigen_decompose(PriceOperator2x2::from_draws(s_mid, xi, kappa));
    BarSample bar;
    bar.s_mid = spec.s_mid;
    bar.s_high = spec.s_high;
    bar.s_low = spec.s_low;
    bar.h = std::hypot(xi, kappa);
    bar.xi = xi;
    bar.kappa = kappa;
    return bar;
}

}  // namespace detail

/// One model step from the previous last price. Draw order per step:
/// dz, xi, kappa, placement. A non-positive mid or last price is redrawn
/// and counted in `redraws`.
inline BarSample step_price(double s_last, const CoupledWaveParams& params, Rng& rng, std::size_t& redraws) {
    detail::require_positive(s_last, "s_last");
    const double mid = detail::draw_mid(s_last, params.sigma_step, rng, redraws);
    const double xi = rng.normal(params.xi_mean, params.xi_std);
    const double kappa = rng.normal(params.kappa_mean, params.kappa_std);
    BarSample bar = detail::assemble(mid, xi, kappa);
    bar.s_last = detail::place_last(bar, params.last_price_rule, rng, redraws);
    return bar;
}

/// Volume-driven step: after the mid, a volume rate is drawn and xi, kappa
/// are zero-mean normals whose scale follows the drive's spread law.
inline BarSample step_price(double s_last, const CoupledWaveParams& params, const VolumeDrive& drive, Rng& rng,
                            std::size_t& redraws) {
    detail::require_positive(s_last, "s_last");
    const double mid = detail::draw_mid(s_last, params.sigma_step, rng, redraws);
    const double volume = drive.volume_median * std::exp(drive.volume_log_std * rng.normal());
    const double scale = drive.height_scale(drive.spread_at(mid, volume));
    const double xi = rng.normal(0.0, scale);
    const double kappa = rng.normal(0.0, scale);
    BarSample bar = detail::assemble(mid, xi, kappa);
    bar.volume = volume;
    bar.s_last = detail::place_last(bar, params.last_price_rule, rng, redraws);
    return bar;
}

/// Simulates path `path_index` of the run seeded by params.seed.
inline BarSeries simulate_path(const CoupledWaveParams& params, double s0, std::size_t n_steps, double dt = 1.0,
                               std::uint64_t path_index = 0) {
    params.validate();
    detail::require_positive(s0, "s0");
    detail::require_positive(dt, "dt");
    if (n_steps < 1) throw DomainError("n_steps must be at least 1");
    Rng rng = Rng::substream(params.seed, path_index);
    BarSeries out{s0, dt, {}, 0};
    out.bars.reserve(n_steps);
    double last = s0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        out.bars.push_back(step_price(last, params, rng, out.redraws));
        last = out.bars.back().s_last;
    }
    return out;
}

inline BarSeries simulate_path(const CoupledWaveParams& params, const VolumeDrive& drive, double s0,
                               std::size_t n_steps, double dt = 1.0, std::uint64_t path_index = 0) {
    params.validate();
    drive.validate();
    detail::require_positive(s0, "s0");
    detail::require_positive(dt, "dt");
    if (n_steps < 1) throw DomainError("n_steps must be at least 1");
    Rng rng = Rng::substream(params.seed, path_index);
    BarSeries out{s0, dt, {}, 0};
    out.bars.reserve(n_steps);
    double last = s0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        out.bars.push_back(step_price(last, params, drive, rng, out.redraws));
        last = out.bars.back().s_last;
    }
    return out;
}

/// Independent paths 0..n_paths-1 on up to `workers` threads. Each path owns
/// its substream, so the result does not depend on the worker count.
inline std::vector<BarSeries> simulate_paths(const CoupledWaveParams& params, double s0, std::size_t n_steps,
                                             std::size_t n_paths, double dt = 1.0, unsigned workers = 0) {
    params.validate();
    std::vector<BarSeries> out(n_paths);
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(n_paths, 1)));
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < n_paths; i += workers) out[i] = simulate_path(params, s0, n_steps, dt, i);
        });
    }
    pool.clear();
    return out;
}

inline constexpr std::size_t kMinVolatilitySamples = 1000;

/// Standard deviation of consecutive last-price changes, money per step.
inline double path_volatility(const BarSeries& series) {
    if (series.size() < kMinVolatilitySamples)
        throw InsufficientDataError("path volatility needs at least 1000 bars");
    std::vector<double> increments;
    increments.reserve(series.size());
    double prev = series.s0;
    for (const auto& bar : series.bars) {
        increments.push_back(bar.s_last - prev);
        prev = bar.s_last;
    }
    return stats::stddev(increments);
}

/// eta = sqrt(s^2 sigma_step^2 + alpha <h^2> / 4), money per step.
inline double predicted_volatility(double sigma_step, double s, double mean_h2, LastPriceRule rule) {
    detail::require_non_negative(sigma_step, "sigma_step");
    detail::require_positive(s, "s");
    detail::require_non_negative(mean_h2, "mean_h2");
    return std::sqrt(s * s * sigma_step * sigma_step + placement_alpha(rule) * mean_h2 / 4.0);
}

inline double predicted_volatility(const CoupledWaveParams& params, double s) {
    params.validate();
    return predicted_volatility(params.sigma_step, s, params.mean_square_height(), params.last_price_rule);
}

/// Money-flow bar height implied by a transaction time: 2 pi tau0 s / tau.
inline double impact_price(double s, double tau, double tau0) {
    detail::require_positive(s, "s");
    detail::require_positive(tau, "tau");
    detail::require_positive(tau0, "tau0");
    return 2.0 * std::numbers::pi * tau0 * s / tau;
}

struct AmplitudeState {
    std::complex<double> psi_high{1.0, 0.0};
    std::complex<double> psi_low{0.0, 0.0};

    double norm() const { return std::norm(psi_high) + std::norm(psi_low); }
    double p_high() const { return std::norm(psi_high); }
    double p_low() const { return std::norm(psi_low); }
};

/// Operator coefficients held constant over one evolution interval.
struct OperatorCoefficients {
    double s_mid = 0.0;
    double xi = 0.0;
    double kappa = 0.0;

    double h() const { return std::hypot(xi, kappa); }
};

/// Closed-form solution of i tau0 s dpsi/dt = S psi for constant coefficients:
/// psi(t) = exp(-i s_mid t / (tau0 s)) [cos(theta) - i sin(theta) (xi sz + kappa sx) / h] psi(0),
/// theta = h t / (2 tau0 s).
inline AmplitudeState evolve_amplitudes(const AmplitudeState& state0, const OperatorCoefficients& op, double s,
                                        double tau0, double t) {
    detail::require_positive(s, "s");
    detail::require_positive(tau0, "tau0");
    using namespace std::complex_literals;
    const double h = op.h();
    const std::complex<double> phase = std::polar(1.0, -op.s_mid * t / (tau0 * s));
    if (h == 0.0) return {phase * state0.psi_high, phase * state0.psi_low};
    const double theta = h * t / (2.0 * tau0 * s);
    const double c = std::cos(theta);
    const double sn = std::sin(theta);
    const double zx = op.xi / h;
    const double zk = op.kappa / h;
    const std::complex<double> high = (c - 1i * zx * sn) * state0.psi_high - 1i * zk * sn * state0.psi_low;
    const std::complex<double> low = -1i * zk * sn * state0.psi_high + (c + 1i * zx * sn) * state0.psi_low;
    return {phase * high, phase * low};
}

/// Time for a complete high -> low transfer when xi = 0: pi tau0 s / h.
inline double full_transfer_time(double s, double tau0, double h) {
    detail::require_positive(h, "h");
    return std::numbers::pi * tau0 * s / h;
}

/// Period of the level populations, 2 pi tau0 s / h.
inline double population_period(double s, double tau0, double h) { return 2.0 * full_transfer_time(s, tau0, h); }

inline constexpr double kMaxRotationPerStep = 0.1;

/// Largest step keeping the rotation angle h dt / (2 tau0 s) below
/// kMaxRotationPerStep for heights up to three RMS heights.
inline double max_evolution_dt(const CoupledWaveParams& params, double s) {
    params.validate();
    detail::require_positive(s, "s");
    const double h_typ = 3.0 * std::sqrt(params.mean_square_height());
    if (h_typ == 0.0) return std::numeric_limits<double>::infinity();
    return kMaxRotationPerStep * 2.0 * params.tau0 * s / h_typ;
}

/// Piecewise-constant evolution along a price path: for each step i the
/// price scale is s_path[i], and s_mid, xi, kappa are drawn afresh from
/// `params` (stream keyed by params.seed).
inline AmplitudeState evolve_fluctuating(const AmplitudeState& state0, const CoupledWaveParams& params,
                                         std::span<const double> s_path, double dt, std::size_t n_steps) {
    params.validate();
    detail::require_positive(dt, "dt");
    if (s_path.size() < n_steps) throw DomainError("price path shorter than the number of evolution steps");
    Rng rng(params.seed);
    std::size_t ignored = 0;
    AmplitudeState state = state0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double s = s_path[i];
        detail::require_positive(s, "s_path element");
        OperatorCoefficients op;
        op.s_mid = detail::draw_mid(s, params.sigma_step, rng, ignored);
        op.xi = rng.normal(params.xi_mean, params.xi_std);
        op.kappa = rng.normal(params.kappa_mean, params.kappa_std);
        state = evolve_amplitudes(state, op, s, params.tau0, dt);
    }
    return state;
}

}  // namespace spreadvol
