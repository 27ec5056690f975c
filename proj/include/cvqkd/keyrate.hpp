#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cvqkd/bounds.hpp"
#include "cvqkd/estimation.hpp"
#include "cvqkd/params.hpp"

#include <json.hpp>

namespace cvqkd::keyrate {

// Everything that went into one key-length evaluation, flat enough to land in
// a CSV row.
struct KeyRateReport {
    double h_min = 0.0;   // bits
    double h_max = 0.0;   // bits
    double leak_ec = 0.0; // bits
    double ell_low = 0.0; // bits (raw; may be negative)
    double rate = 0.0;    // max(ell_low,0)/N
    std::uint64_t n_key = 0;
    std::string abort_reason; // empty when a key was produced

    double d0_bins = 0.0;
    double mu_bins = 0.0;
    double c_delta = 0.0;
    double eps_prime = 0.0;
    double p_alpha = 0.0;
    double mutual_info = 0.0;     // bits/symbol, at the parameters the leakage used
    double leak_per_symbol = 0.0; // bits/symbol
    double entropy_key_var = 0.0; // H(x_M), H(x_M1) or H(x_B) per direction/mode
    double tau_used = 0.0;        // tau (ideal) or tau_low (finite)
    double v_eps_used = 0.0;      // V_eps (ideal) or V_eps_up (finite)
    bool finite_estimation = false;

    // Input snapshot
    ProtocolParams protocol;
    ChannelModel channel;
    Discretization disc;
    SecurityBudget security;
    BoundOptions options;
    std::optional<double> distance_km;

    nlohmann::ordered_json to_json() const;
    static std::string csv_header();
    std::string csv_row(double axis_value, const std::string& axis_name) const;
};

/// I(A:B) = 1/2 log2(1 + tau*V_key/V_N), V_key = V_M (single) or V_M1
/// (double; the revealed x_M2 is conditioned away, V_N per Eq.-14 form).
double mutual_information(const ProtocolParams& params, const ChannelModel& ch);

/// Same expression evaluated at explicit channel knowledge (tau, v_eps).
double mutual_information_at(double tau, double v_eps, const ProtocolParams& params);

struct LeakageResult {
    double per_symbol = 0.0;
    double total = 0.0;      // per_symbol * n_key
    double entropy = 0.0;     // the H(.) term
    double mutual_info = 0.0; // the I term actually used
};

/// leak_EC = H(key variable) - beta*I per symbol, times n_key. DR uses the
/// key-data modulation entropy, RR uses H(x_B). When a finite EstimationReport
/// is supplied, I is evaluated at (tau_low, v_eps_up); H stays at the model
/// values.
LeakageResult leakage(const ProtocolParams& params, const ChannelModel& ch,
                      const Discretization& disc,
                      const est::EstimationReport* finite = nullptr);

/// Expected finite-size estimation report for a block of m samples: point
/// estimates at the true channel, variances from the finite-size formulas.
est::EstimationReport expected_report(const ProtocolParams& params, const ChannelModel& ch,
                                      const SecurityBudget& sec);

/// Assembles the finite-size key length
///   ell_low = H_min - leak_EC - log2(1/(eps_1^2 eps_c)) + 2
/// and the rate max(ell_low,0)/N. Budget exhaustion and non-positive key
/// lengths are reported via abort_reason rather than thrown.
KeyRateReport key_length(const Config& cfg, const est::EstimationReport* finite = nullptr);

/// Convenience: key_length with finite estimation at the expected report.
KeyRateReport key_length_finite(const Config& cfg);

enum class SweepAxis { DistanceKm, BlockSize };

std::string to_string(SweepAxis a);

struct SweepResult {
    SweepAxis axis = SweepAxis::DistanceKm;
    std::vector<double> axis_values;
    std::vector<KeyRateReport> reports;

    bool all_zero() const;
    std::string to_csv() const;
};

/// One report per grid point. finite_estimation uses the expected report at
/// each point. Evaluations are independent; workers > 1 computes them in
/// parallel with an index-ordered gather.
SweepResult sweep(const Config& cfg, SweepAxis axis, const std::vector<double>& grid,
                  bool finite_estimation, int workers = 1);

enum class FreeParameter { MPeFraction, VM2Fraction, Bits, VM };

std::string to_string(FreeParameter p);
FreeParameter free_parameter_from_string(const std::string& s);

struct TracePoint {
    std::vector<double> values; // one per free parameter, order as requested
    double rate = 0.0;
    std::string abort_reason;
};

struct OptimizeResult {
    KeyRateReport best;
    std::vector<double> argmax; // one per free parameter
    std::vector<TracePoint> trace;
};

/// Deterministic coordinate grid search (full-range scan plus two refinement
/// passes per parameter) maximizing the finite-estimation rate.
OptimizeResult optimize(const Config& cfg, const std::vector<FreeParameter>& free,
                        bool finite_estimation = true, int workers = 1);

} // namespace cvqkd::keyrate
