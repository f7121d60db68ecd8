#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/rayleigh.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "spreadvol/coupled_wave.hpp"

using namespace spreadvol;
using cplx = std::complex<double>;

namespace {

CoupledWaveParams frozen() {
    CoupledWaveParams p;
    p.sigma_step = 0.0;
    p.seed = 1;
    return p;
}

// Fourth-order Runge-Kutta on i tau0 s dpsi/dt = S psi.
AmplitudeState rk4(AmplitudeState st, const OperatorCoefficients& op, double s, double tau0, double t, int steps) {
    using namespace std::complex_literals;
    const cplx s11 = op.s_mid + op.xi / 2, s22 = op.s_mid - op.xi / 2, s12 = op.kappa / 2;
    const auto f = [&](cplx a, cplx b, cplx& da, cplx& db) {
        da = -1i * (s11 * a + s12 * b) / (tau0 * s);
        db = -1i * (s12 * a + s22 * b) / (tau0 * s);
    };
    const double dt = t / steps;
    cplx a = st.psi_high, b = st.psi_low;
    for (int i = 0; i < steps; ++i) {
        cplx k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b;
        f(a, b, k1a, k1b);
        f(a + 0.5 * dt * k1a, b + 0.5 * dt * k1b, k2a, k2b);
        f(a + 0.5 * dt * k2a, b + 0.5 * dt * k2b, k3a, k3b);
        f(a + dt * k3a, b + dt * k3b, k4a, k4b);
        a += dt / 6 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
        b += dt / 6 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b);
    }
    return {a, b};
}

}  // namespace

TEST(EigenDecompose, Examples) {
    auto r = eigen_decompose({10, 10, 0});
    EXPECT_EQ(r.h, 0.0);
    EXPECT_EQ(r.s_high, 10.0);
    EXPECT_EQ(r.s_low, 10.0);
    r = eigen_decompose({11, 9, 0});
    EXPECT_DOUBLE_EQ(r.h, 2.0);
    EXPECT_DOUBLE_EQ(r.s_high, 11.0);
    EXPECT_DOUBLE_EQ(r.s_low, 9.0);
    r = eigen_decompose({10, 10, 1.5});
    EXPECT_DOUBLE_EQ(r.h, 3.0);
    EXPECT_DOUBLE_EQ(r.s_mid, 10.0);
}

TEST(EigenDecompose, MatchesSelfAdjointSolver) {
    Rng rng(17);
    for (int i = 0; i < 500; ++i) {
        const PriceOperator2x2 op = PriceOperator2x2::from_draws(rng.uniform(1, 200), rng.normal(0, 3), rng.normal(0, 3));
        Eigen::Matrix2d m;
        m << op.s11, op.s12, op.s12, op.s22;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
        const auto r = eigen_decompose(op);
        EXPECT_NEAR(r.s_low, es.eigenvalues()[0], 1e-12 * std::abs(r.s_mid));
        EXPECT_NEAR(r.s_high, es.eigenvalues()[1], 1e-12 * std::abs(r.s_mid));
        EXPECT_GE(r.s_high, r.s_low);
        EXPECT_NEAR(r.s_high - r.s_low, r.h, 1e-12 * std::abs(r.s_mid));
    }
}

TEST(StepPrice, FrozenDynamics) {
    const auto p = frozen();
    Rng rng(3);
    std::size_t redraws = 0;
    const auto bar = step_price(50.0, p, rng, redraws);
    EXPECT_EQ(bar.s_mid, 50.0);
    EXPECT_EQ(bar.h, 0.0);
    EXPECT_EQ(bar.s_last, 50.0);
}

TEST(StepPrice, DegenerateThreeFourFive) {
    auto p = frozen();
    p.xi_mean = 3.0;
    p.kappa_mean = 4.0;
    const auto series = simulate_path(p, 100.0, 50);
    for (const auto& b : series.bars) {
        EXPECT_DOUBLE_EQ(b.h, 5.0);
        EXPECT_DOUBLE_EQ(b.s_high - b.s_low, 5.0);
        EXPECT_LE(b.s_low, b.s_last);
        EXPECT_LE(b.s_last, b.s_high);
    }
}

TEST(SimulatePath, DeterministicAndLength) {
    CoupledWaveParams p;
    p.sigma_step = 0.01;
    p.xi_std = 0.2;
    p.kappa_std = 0.2;
    p.seed = 42;
    const auto a = simulate_path(p, 100.0, 500);
    const auto b = simulate_path(p, 100.0, 500);
    ASSERT_EQ(a.size(), 500u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.bars[i].s_last, b.bars[i].s_last);
        EXPECT_EQ(a.bars[i].h, b.bars[i].h);
        EXPECT_NEAR(a.bars[i].h, std::hypot(a.bars[i].xi, a.bars[i].kappa), 0.0);
        EXPECT_NEAR(a.bars[i].s_high, a.bars[i].s_mid + a.bars[i].h / 2, 1e-12);
    }
    EXPECT_EQ(simulate_path(p, 100.0, 1).size(), 1u);
    EXPECT_THROW(simulate_path(p, 100.0, 0), DomainError);
    EXPECT_THROW(simulate_path(p, -1.0, 10), DomainError);
}

TEST(SimulatePaths, IndependentOfWorkerCount) {
    CoupledWaveParams p;
    p.sigma_step = 0.02;
    p.xi_std = 0.5;
    p.kappa_std = 0.5;
    p.seed = 9;
    const auto one = simulate_paths(p, 10.0, 200, 7, 1.0, 1);
    const auto many = simulate_paths(p, 10.0, 200, 7, 1.0, 4);
    for (std::size_t k = 0; k < 7; ++k)
        for (std::size_t i = 0; i < 200; ++i) EXPECT_EQ(one[k].bars[i].s_last, many[k].bars[i].s_last);
    EXPECT_NE(one[0].bars[5].s_last, one[1].bars[5].s_last);
}

TEST(SimulatePath, NegativeMidIsRedrawnAndCounted) {
    CoupledWaveParams p;
    p.sigma_step = 2.0;
    p.seed = 5;
    const auto s = simulate_path(p, 1.0, 2000);
    EXPECT_GT(s.redraws, 0u);
    EXPECT_TRUE(s.redraw_warning());
    for (const auto& b : s.bars) EXPECT_GT(b.s_mid, 0.0);
}

TEST(Volatility, ConstantBarLimits) {
    EXPECT_NEAR(predicted_volatility(0.0, 100.0, 4.0, LastPriceRule::UniformInBar), 2.0 / std::sqrt(12.0), 1e-15);
    EXPECT_NEAR(predicted_volatility(0.0, 100.0, 4.0, LastPriceRule::NormalHalfBar), 1.0, 1e-15);
    EXPECT_NEAR(predicted_volatility(0.01, 100.0, 0.0, LastPriceRule::NormalHalfBar), 1.0, 1e-15);
    EXPECT_NEAR(CoupledWaveParams::sigma_step_for(0.02, 4.0), 0.04, 1e-15);
}

TEST(Volatility, UniformPlacementMatchesConstantBarVariance) {
    auto p = frozen();
    p.xi_mean = 0.6;
    p.kappa_mean = 0.8;  // h = 1
    const auto s = simulate_path(p, 100.0, 100000);
    EXPECT_NEAR(path_volatility(s), predicted_volatility(p, 100.0), 0.02 * predicted_volatility(p, 100.0));
    EXPECT_THROW(path_volatility(simulate_path(p, 100.0, 999)), InsufficientDataError);
}

TEST(Rayleigh, BarHeightsPassKsAgainstBoost) {
    CoupledWaveParams p;
    p.sigma_step = 0.001;
    p.xi_std = 0.3;
    p.kappa_std = 0.3;
    p.seed = 77;
    const auto s = simulate_path(p, 100.0, 20000);
    std::vector<double> h;
    for (const auto& b : s.bars) h.push_back(b.h);
    boost::math::rayleigh_distribution<double> dist(0.3);
    const double d = stats::ks_statistic(h, [&](double x) { return boost::math::cdf(dist, x); });
    EXPECT_GT(stats::ks_pvalue(d, h.size()), 0.01);
}

TEST(Amplitudes, ZeroTimeIsIdentity) {
    const AmplitudeState s0{cplx(0.6, 0.0), cplx(0.0, 0.8)};
    const auto s = evolve_amplitudes(s0, {5.0, 0.3, 0.4}, 5.0, 1.0, 0.0);
    EXPECT_EQ(s.psi_high, s0.psi_high);
    EXPECT_EQ(s.psi_low, s0.psi_low);
}

TEST(Amplitudes, FullTransferWithoutDiagonalSplit) {
    const double s = 10.0, tau0 = 0.5, h = 2.0;
    const auto st = evolve_amplitudes({}, {s, 0.0, h}, s, tau0, full_transfer_time(s, tau0, h));
    EXPECT_NEAR(st.p_low(), 1.0, 1e-12);
    EXPECT_NEAR(population_period(s, tau0, h), 2 * std::numbers::pi * tau0 * s / h, 1e-12);
}

TEST(Amplitudes, NoCouplingMeansNoTransfer) {
    for (double t : {0.1, 1.0, 17.0}) {
        const auto st = evolve_amplitudes({}, {3.0, 1.5, 0.0}, 3.0, 1.0, t);
        EXPECT_NEAR(st.p_high(), 1.0, 1e-15);
    }
}

TEST(Amplitudes, ClosedFormMatchesRungeKutta) {
    const OperatorCoefficients op{1.0, 0.3, 0.7};
    const AmplitudeState s0{cplx(0.6, 0.0), cplx(0.0, 0.8)};
    const auto exact = evolve_amplitudes(s0, op, 1.0, 1.0, 5.0);
    const auto num = rk4(s0, op, 1.0, 1.0, 5.0, 100000);
    EXPECT_LT(std::abs(exact.psi_high - num.psi_high), 1e-6);
    EXPECT_LT(std::abs(exact.psi_low - num.psi_low), 1e-6);
    EXPECT_NEAR(exact.norm(), 1.0, 1e-12);
}

TEST(Amplitudes, FluctuatingEvolutionConservesNorm) {
    CoupledWaveParams p;
    p.sigma_step = 0.01;
    p.xi_mean = 0.1;
    p.xi_std = 0.3;
    p.kappa_mean = 0.2;
    p.kappa_std = 0.3;
    p.seed = 8;
    std::vector<double> path(10000, 100.0);
    const auto st = evolve_fluctuating({}, p, path, max_evolution_dt(p, 100.0), path.size());
    EXPECT_NEAR(st.norm(), 1.0, 1e-9);
}

TEST(Amplitudes, DegenerateFluctuatingEqualsRepeatedConstant) {
    auto p = frozen();
    p.xi_mean = 0.2;
    p.kappa_mean = 0.5;
    std::vector<double> path(100, 4.0);
    const auto chained = evolve_fluctuating({}, p, path, 0.3, 100);
    const auto direct = evolve_amplitudes({}, {4.0, 0.2, 0.5}, 4.0, 1.0, 30.0);
    EXPECT_NEAR(std::abs(chained.psi_high - direct.psi_high), 0.0, 1e-12);
    EXPECT_NEAR(std::abs(chained.psi_low - direct.psi_low), 0.0, 1e-12);
}

TEST(ImpactPrice, Values) {
    EXPECT_NEAR(impact_price(1, 2 * std::numbers::pi, 1), 1.0, 1e-15);
    EXPECT_NEAR(impact_price(100, 1, 1 / (2 * std::numbers::pi)), 100.0, 1e-12);
    EXPECT_NEAR(impact_price(7, 0.5, 0.3), 2 * impact_price(7, 1.0, 0.3), 1e-14);
    EXPECT_THROW(impact_price(1, 0, 1), DomainError);
}
