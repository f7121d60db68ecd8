#pragma once

// Horizon scaling of spreads and high-low bars, with and without a volume
// dependence, and the (T, V) spread surface built from them.

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <vector>

#include "spreadvol/csv.hpp"
#include "spreadvol/error.hpp"

namespace spreadvol {

/// A spread observed at one horizon together with the volatility input
/// that produced it.
struct HorizonSpread {
    double horizon_T = 1.0;
    double spread = 0.0;
    double eta = 0.0;      ///< last-price volatility over the horizon, money
    double sigma_T = 0.0;  ///< mid-price volatility over the horizon
};

/// Piecewise-constant value over (horizon, volume) buckets. Edges are
/// ascending; values are stored horizon-major. Arguments outside the edge
/// range fall into the nearest end bucket.
struct RiskTable {
    std::vector<double> horizon_edges;  ///< size = rows + 1
    std::vector<double> volume_edges;   ///< size = cols + 1
    std::vector<double> values;         ///< rows * cols

    void validate() const {
        detail::require(horizon_edges.size() >= 2 && volume_edges.size() >= 2, "risk table needs at least one bucket");
        detail::require(std::is_sorted(horizon_edges.begin(), horizon_edges.end()) &&
                            std::is_sorted(volume_edges.begin(), volume_edges.end()),
                        "risk table edges must be ascending");
        detail::require(values.size() == (horizon_edges.size() - 1) * (volume_edges.size() - 1),
                        "risk table must define every bucket");
        for (double v : values) detail::require_non_negative(v, "risk table value");
    }

    double at(double T, double volume) const {
        const auto row = bucket(horizon_edges, T);
        const auto col = bucket(volume_edges, volume);
        return values[row * (volume_edges.size() - 1) + col];
    }

private:
    static std::size_t bucket(const std::vector<double>& edges, double x) {
        const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, x);
        return static_cast<std::size_t>(it - (edges.begin() + 1));
    }
};

/// Parameters of the volume-inclusive bar law. `sigma` is per sqrt(reference
/// time); the horizon volatility is sigma_T = sigma sqrt(T).
struct SpreadSurfaceParams {
    double lambda_risk = 1.0;
    double rho_risk = 1.0;
    double sigma = 1.0;
    double n = 1.0;
    double tau0 = 1.0;
    std::optional<RiskTable> lambda_table;
    std::optional<RiskTable> rho_table;

    void validate() const {
        detail::require_non_negative(lambda_risk, "lambda_risk");
        detail::require_non_negative(rho_risk, "rho_risk");
        detail::require_non_negative(sigma, "sigma");
        detail::require_positive(n, "n");
        detail::require_positive(tau0, "tau0");
        if (lambda_table) lambda_table->validate();
        if (rho_table) rho_table->validate();
    }

    double lambda_at(double T, double volume) const { return lambda_table ? lambda_table->at(T, volume) : lambda_risk; }
    double rho_at(double T, double volume) const { return rho_table ? rho_table->at(T, volume) : rho_risk; }
};

inline double sigma_at_horizon(double sigma, double T) {
    detail::require_non_negative(sigma, "sigma");
    detail::require_positive(T, "T");
    return sigma * std::sqrt(T);
}

/// Spread over horizon T >= tau from the initial bar h_tau and the per-tau
/// volatility eta_tau: sqrt(rho^2 h^2 / 4 + lambda^2 eta^2 T / tau).
inline double horizon_spread(double h_tau, double eta_tau, double lambda, double rho, double tau, double T) {
    detail::require_non_negative(h_tau, "h_tau");
    detail::require_non_negative(eta_tau, "eta_tau");
    detail::require_positive(tau, "tau");
    if (T < tau) throw DomainError("horizon must not be shorter than the reference time");
    return std::sqrt(rho * rho * h_tau * h_tau / 4.0 + lambda * lambda * eta_tau * eta_tau * T / tau);
}

/// Re-expresses a spread known at T1 for a longer horizon T2.
inline double scale_spread_time(double spread_T1, double eta_T1, double lambda, double T1, double T2) {
    detail::require_positive(spread_T1, "spread_T1");
    detail::require_non_negative(eta_T1, "eta_T1");
    detail::require_positive(T1, "T1");
    if (T2 < T1) throw DomainError("target horizon must not be shorter than the base horizon");
    const double k = lambda * eta_T1 / spread_T1;
    return spread_T1 * std::sqrt(1.0 + k * k * (T2 / T1 - 1.0));
}

/// Square-root-of-time scaling, the classical baseline.
inline double classical_scale(double spread_T1, double T1, double T2) {
    detail::require_non_negative(spread_T1, "spread_T1");
    detail::require_positive(T1, "T1");
    detail::require_positive(T2, "T2");
    return std::sqrt(T2 / T1) * spread_T1;
}

/// Bar height at horizon T for volume rate V, in money:
/// s sqrt(lambda^2 sigma_T^2 + rho^2 (pi tau0 / n)^2 V^2 + rho^2 (pi tau0)^2 T V^3 / n^3).
inline double bar_spread_with_volume(const SpreadSurfaceParams& p, double s, double volume, double T) {
    p.validate();
    detail::require_positive(s, "s");
    detail::require_non_negative(volume, "volume");
    detail::require_positive(T, "T");
    const double lambda = p.lambda_at(T, volume);
    const double rho = p.rho_at(T, volume);
    const double sigma_T = sigma_at_horizon(p.sigma, T);
    const double impact = rho * std::numbers::pi * p.tau0 / p.n * volume;
    const double floor = lambda * sigma_T;
    return s * std::sqrt(floor * floor + impact * impact * (1.0 + volume * T / p.n));
}

/// d/dV of bar_spread_with_volume for scalar coefficients.
inline double bar_spread_volume_slope(const SpreadSurfaceParams& p, double s, double volume, double T) {
    const double delta = bar_spread_with_volume(p, s, volume, T);
    if (delta == 0.0) return 0.0;
    const double c = p.rho_risk * std::numbers::pi * p.tau0 / p.n;
    // d/dV [c^2 V^2 + c^2 T V^3 / n] = 2 c^2 V + 3 c^2 T V^2 / n
    const double d_inner = 2.0 * c * c * volume + 3.0 * c * c * T * volume * volume / p.n;
    return s * s * d_inner / (2.0 * delta);
}

/// Volume scale V0 = n / (sqrt(2) rho pi tau0) shared with the bid-ask law.
inline double bar_volume_scale(const SpreadSurfaceParams& p) {
    p.validate();
    detail::require_positive(p.rho_risk, "rho_risk");
    return p.n / (std::numbers::sqrt2 * p.rho_risk * std::numbers::pi * p.tau0);
}

/// Dimensionless bar height for v = V / V0 with constant coefficients:
/// sqrt(lambda^2 sigma_T^2 + v^2 / 2 + T v^3 / (2^(3/2) rho pi tau0)).
inline double bar_spread_dimensionless(double v, double T, const SpreadSurfaceParams& p) {
    p.validate();
    detail::require_positive(p.rho_risk, "rho_risk");
    detail::require_non_negative(v, "v");
    detail::require_positive(T, "T");
    const double floor = p.lambda_risk * sigma_at_horizon(p.sigma, T);
    const double cubic = T / (2.0 * std::numbers::sqrt2 * p.rho_risk * std::numbers::pi * p.tau0);
    return std::sqrt(floor * floor + v * v / 2.0 + cubic * v * v * v);
}

/// Bar heights over a horizon x volume grid, horizons as rows.
struct SpreadSurface {
    std::vector<double> horizons;
    std::vector<double> volumes;
    std::vector<double> values;

    double at(std::size_t ti, std::size_t vi) const { return values[ti * volumes.size() + vi]; }
};

inline std::vector<double> log_space(double lo, double hi, std::size_t n) {
    detail::require_positive(lo, "lo");
    detail::require(hi >= lo, "log_space needs hi >= lo");
    detail::require(n >= 1, "log_space needs at least one point");
    std::vector<double> out(n);
    if (n == 1) {
        out[0] = lo;
        return out;
    }
    const double step = std::log(hi / lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo * std::exp(step * static_cast<double>(i));
    out.back() = hi;
    return out;
}

inline constexpr std::size_t kDefaultSurfaceVolumes = 50;
inline constexpr std::size_t kDefaultSurfaceHorizons = 20;

inline SpreadSurface spread_surface(const SpreadSurfaceParams& p, double s, const std::vector<double>& volumes,
                                    const std::vector<double>& horizons) {
    if (volumes.empty() || horizons.empty()) throw DomainError("spread surface grids must be non-empty");
    detail::require(std::is_sorted(volumes.begin(), volumes.end()) && std::is_sorted(horizons.begin(), horizons.end()),
                    "spread surface grids must be ascending");
    SpreadSurface out{horizons, volumes, {}};
    out.values.reserve(horizons.size() * volumes.size());
    for (double T : horizons)
        for (double V : volumes) out.values.push_back(bar_spread_with_volume(p, s, V, T));
    return out;
}

/// CSV with header `T,v,delta`, horizons in the outer loop.
inline void write_surface_csv(std::ostream& out, const SpreadSurface& surface) {
    out << "T,v,delta\n";
    for (std::size_t ti = 0; ti < surface.horizons.size(); ++ti)
        for (std::size_t vi = 0; vi < surface.volumes.size(); ++vi)
            csv::write_row(out, {csv::format_double(surface.horizons[ti]), csv::format_double(surface.volumes[vi]),
                                 csv::format_double(surface.at(ti, vi))});
}

inline SpreadSurface read_surface_csv(std::istream& in) {
    const auto table = csv::Table::read(in);
    const auto cT = table.require("T");
    const auto cv = table.require("v");
    const auto cd = table.require("delta");
    SpreadSurface out;
    for (const auto& row : table.rows()) {
        const auto f = csv::split(row);
        if (f.size() < table.header().size()) throw InvalidInputError("short row in surface CSV");
        const auto T = csv::parse_double(f[cT]);
        const auto v = csv::parse_double(f[cv]);
        const auto d = csv::parse_double(f[cd]);
        if (!T || !v || !d) throw InvalidInputError("non-numeric field in surface CSV");
        if (out.horizons.empty() || out.horizons.back() != *T) out.horizons.push_back(*T);
        if (out.horizons.size() == 1) out.volumes.push_back(*v);
        out.values.push_back(*d);
    }
    if (out.values.size() != out.horizons.size() * out.volumes.size())
        throw InvalidInputError("surface CSV is not a complete grid");
    return out;
}

}  // namespace spreadvol
