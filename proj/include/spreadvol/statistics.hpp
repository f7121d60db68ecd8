#pragma once

// Small descriptive-statistics toolkit shared by the simulator summaries and
// the calibration routines.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "spreadvol/error.hpp"

namespace spreadvol::stats {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) throw InsufficientDataError("mean of an empty sample");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> xs) {
    if (xs.size() < 2) throw InsufficientDataError("standard deviation needs two samples");
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double mean_square(std::span<const double> xs) {
    if (xs.empty()) throw InsufficientDataError("mean square of an empty sample");
    double s = 0.0;
    for (double x : xs) s += x * x;
    return s / static_cast<double>(xs.size());
}

/// Quantile of an already sorted sample by linear interpolation between
/// order statistics, h = (n - 1) q.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InsufficientDataError("quantile of an empty sample");
    detail::require(q >= 0.0 && q <= 1.0, "quantile level must lie in [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double w = h - static_cast<double>(lo);
    return sorted[lo] + w * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, q);
}

/// Maximum-likelihood scale of p(x) = 2 x / s^2 exp(-(x/s)^2), s = sqrt(mean x^2).
/// The conventional Rayleigh mode is s / sqrt(2).
inline double rayleigh_scale_mle(std::span<const double> xs) { return std::sqrt(mean_square(xs)); }

/// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
template <class Cdf>
double ks_statistic(std::vector<double> xs, Cdf&& cdf) {
    if (xs.empty()) throw InsufficientDataError("KS statistic of an empty sample");
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic survival function of the Kolmogorov distribution,
/// P(sqrt(n) D > t) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2).
inline double kolmogorov_survival(double t) {
    if (t <= 0.0) return 1.0;
    if (t < 0.2) return 1.0;  // series converges poorly; the value is 1 to double precision
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * t * t);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) break;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic p-value of a KS statistic `d` from `n` samples, with the
/// Stephens small-sample correction.
inline double ks_pvalue(double d, std::size_t n) {
    const double rn = std::sqrt(static_cast<double>(n));
    return kolmogorov_survival((rn + 0.12 + 0.11 / rn) * d);
}

/// Rayleigh CDF with mode `sigma_mode`: 1 - exp(-x^2 / (2 sigma^2)).
inline double rayleigh_cdf(double x, double sigma_mode) {
    if (x <= 0.0) return 0.0;
    return -std::expm1(-x * x / (2.0 * sigma_mode * sigma_mode));
}

}  // namespace spreadvol::stats
