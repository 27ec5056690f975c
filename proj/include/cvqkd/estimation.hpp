#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "cvqkd/channel.hpp"
#include "cvqkd/params.hpp"

#include <json.hpp>

namespace cvqkd::est {

// Maximum-likelihood channel estimators with their finite-size variances and
// one-sided confidence bounds.
struct EstimationReport {
    double c_mb_hat = 0.0;  // covariance estimator
    double tau_hat = 0.0;
    double sigma_tau = 0.0;
    double tau_low = 0.0;
    bool tau_low_clamped = false;
    double v_eps_hat = 0.0; // excess-noise-variance estimator
    bool v_eps_negative = false;
    double sigma_veps = 0.0;
    double v_eps_up = 0.0;
    bool v_eps_up_clamped = false;
    std::uint64_t m_used = 0;
    ModulationMode mode = ModulationMode::Single;
    double z_score = 6.5;
    bool degenerate = false; // all-zero or otherwise unusable data

    nlohmann::ordered_json to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

/// c_hat = (1/m) sum M_i B_i. Requires equal lengths >= 2.
double estimate_covariance(std::span<const double> m_data, std::span<const double> b_data);

/// tau_hat = c_hat^2 / V_M^2.
double estimate_tau(double c_mb_hat, double v_m);

/// Finite-size variance of tau_hat:
/// single mode (4 tau^2/m)(2 + V_N/(tau V_M)); double mode the same with
/// V_M -> V_M2, V_N -> V_N*, m -> N.
double tau_variance(double tau, const ProtocolParams& params, const ChannelModel& ch,
                    std::uint64_t m, ModulationMode mode);

/// tau_hat - z*sigma, clamped at 0 (clamped flag reported when it fires).
double tau_lower_bound(double tau_hat, double sigma_tau, double z, bool* clamped = nullptr);

/// Excess-noise estimator from residuals:
///   (1/m) sum (B_i - sqrt(tau_hat) M_i)^2 - tau_hat (V_S + v_m1_known - 1) - 1.
/// v_m1_known = 0 in single mode; in double mode M is x_M2, the residual
/// variance target is V_N*, and the known key-modulation variance V_M1 is
/// subtracted so the estimator stays unbiased for V_eps.
double estimate_excess(std::span<const double> m_data, std::span<const double> b_data,
                       double tau_hat, double v_s, double v_m1_known = 0.0,
                       bool* negative = nullptr);

/// Finite-size variance of the excess estimator:
/// single mode (2/m) V_N^2 + sigma_tau^2 (1 - V_S)^2; double mode
/// (2/N) V_N*^2 + sigma_tau*^2 (V_M1 + V_S - 1)^2 — the sensitivity term
/// carries V_M1 because the estimator subtracts tau_hat*(V_S + V_M1 - 1).
double excess_variance(const ProtocolParams& params, const ChannelModel& ch, std::uint64_t m,
                       ModulationMode mode);

/// v_eps_hat + z*sigma, clamped below at 0.
double excess_upper_bound(double v_eps_hat, double sigma_veps, double z, bool* clamped = nullptr);

// The per-block data the estimation step consumes: (M, B) pairs in single
// mode, (M2, B) pairs plus the locally held M1 in double mode.
struct SampleRecords {
    channel::QuadratureBatch m1; // single mode: the revealed PE data
    channel::QuadratureBatch m2; // double mode only
    channel::QuadratureBatch b;
    ModulationMode mode = ModulationMode::Single;
};

/// Composes the estimators into a fully populated report; deterministic
/// given the data. Plug-in estimates feed the variance formulas.
EstimationReport run_estimation(const SampleRecords& data, const ProtocolParams& params,
                                const SecurityBudget& sec);

} // namespace cvqkd::est
