#pragma once

// JSON forms of results. Objects use nlohmann::json's default ordered-map
// storage, so keys are emitted sorted.

#include <cmath>
#include <string>

#include <json.hpp>

#include "spreadvol/calibration.hpp"
#include "spreadvol/error.hpp"
#include "spreadvol/optimizer.hpp"
#include "spreadvol/version.hpp"

namespace spreadvol {

using Json = nlohmann::json;

/// NaN and infinities become null.
inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline const char* law_name(CalibrationResult::Law law) {
    return law == CalibrationResult::Law::BidAsk ? "bid_ask" : "bar";
}

inline Json to_json(const CalibrationResult& r) {
    Json j;
    j["law"] = law_name(r.law);
    j["lambda_hat"] = number_or_null(r.lambda_hat);
    j["rho_hat"] = number_or_null(r.rho_hat);
    j["tau0_hat"] = number_or_null(r.tau0_hat);
    j["rho_tau0_product"] = number_or_null(r.rho_tau0_product);
    j["strict_product"] = r.strict_product;
    j["residual_norm"] = number_or_null(r.residual_norm);
    j["n_used"] = number_or_null(r.n_used);
    j["sigma_used"] = number_or_null(r.sigma_used);
    j["horizon_T"] = number_or_null(r.horizon_T);
    Json cov = Json::array();
    for (double c : r.covariance_diag) cov.push_back(number_or_null(c));
    j["covariance_diag"] = cov;
    j["lambda_uncertainty"] = number_or_null(r.covariance_diag.empty() ? NAN : r.lambda_uncertainty());
    j["rho_uncertainty"] = number_or_null(r.covariance_diag.size() < 2 ? NAN : r.rho_uncertainty());
    j["buckets_used"] = r.buckets_used;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["units"] = "dimensionless";
    return j;
}

/// Reads the fields written by to_json(CalibrationResult).
inline CalibrationResult calibration_from_json(const Json& j) {
    try {
        CalibrationResult r;
        const std::string law = j.at("law").get<std::string>();
        if (law == "bid_ask") r.law = CalibrationResult::Law::BidAsk;
        else if (law == "bar") r.law = CalibrationResult::Law::Bar;
        else throw InvalidInputError("unknown calibration law '" + law + "'");
        r.lambda_hat = j.at("lambda_hat").get<double>();
        r.rho_hat = j.at("rho_hat").get<double>();
        r.tau0_hat = j.at("tau0_hat").get<double>();
        r.rho_tau0_product = j.value("rho_tau0_product", r.rho_hat * r.tau0_hat);
        r.n_used = j.at("n_used").get<double>();
        r.sigma_used = j.at("sigma_used").get<double>();
        if (r.law == CalibrationResult::Law::Bar) r.horizon_T = j.at("horizon_T").get<double>();
        r.converged = j.value("converged", true);
        return r;
    } catch (const Json::exception& e) {
        throw InvalidInputError(std::string("malformed calibration JSON: ") + e.what());
    }
}

inline Json to_json(const PolicyPoint& p) {
    Json j;
    j["v"] = p.v;
    j["delta_ref"] = number_or_null(p.delta_ref);
    j["lambda_opt"] = number_or_null(p.lambda_opt);
    j["spread_opt"] = number_or_null(p.spread_opt);
    j["exec_rate"] = number_or_null(p.exec_rate);
    j["pnl_opt"] = number_or_null(p.pnl_opt);
    j["pnl_naive"] = number_or_null(p.pnl_naive);
    j["halt"] = p.halt;
    j["ok"] = p.ok;
    if (!p.ok) j["error"] = p.error;
    return j;
}

inline Json to_json(const QuotePolicy& policy) {
    Json j;
    j["mode"] = policy.mode == QuotingMode::BidAsk ? "bid_ask" : "bar";
    j["commission_alpha"] = policy.commission_alpha;
    j["lambda0"] = policy.lambda0;
    j["lambda_ref"] = policy.lambda_ref;
    j["gaps"] = policy.gaps();
    Json pts = Json::array();
    for (const auto& p : policy.points) pts.push_back(to_json(p));
    j["points"] = pts;
    j["units"] = "dimensionless";
    return j;
}

}  // namespace spreadvol
