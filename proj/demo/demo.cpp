// Operating-spread policy for the dimensionless bid-ask law with a = 10,
// commission 3 and execution scale 3, plus the horizon scaling of one spread.

#include <cstdio>
#include <vector>

#include "spreadvol/spreadvol.hpp"

int main() {
    using namespace spreadvol;

    const double a = 10.0;
    const auto m = spread_minimum(a);
    std::printf("reference minimum: v = %.6f  delta = %.6f\n", m.v_min, m.delta_min);

    std::vector<double> vs;
    for (int i = 0; i < 100; ++i) vs.push_back(0.1 + 9.9 * i / 99.0);
    const auto policy = policy_curve(vs, BidAskReference{a}, QuotingMode::BidAsk, 3.0, ExecutionModel{3.0});

    std::printf("%8s %10s %10s %10s %10s %10s\n", "v", "delta_ref", "lambda*", "delta*", "r", "P/L");
    for (std::size_t i = 0; i < policy.points.size(); i += 11) {
        const auto& p = policy.points[i];
        std::printf("%8.3f %10.4f %10.4f %10.4f %10.4f %10.4f\n", p.v, p.delta_ref, p.lambda_opt, p.spread_opt,
                    p.exec_rate, p.pnl_opt);
    }

    std::printf("\nspread 0.02 at T = 1 with eta = 0.004, lambda = 2\n");
    for (double T : {1.0, 10.0, 100.0, 1000.0})
        std::printf("T = %6.0f  scaled %.5f  sqrt-time %.5f\n", T, scale_spread_time(0.02, 0.004, 2.0, 1.0, T),
                    classical_scale(0.02, 1.0, T));
    return 0;
}
