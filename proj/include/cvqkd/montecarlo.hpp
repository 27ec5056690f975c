#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cvqkd/estimation.hpp"
#include "cvqkd/params.hpp"

#include <json.hpp>

namespace cvqkd::mc {

// End-to-end protocol simulation settings. Sample counts are per trial and
// deliberately independent of protocol.n_total so desk-scale runs can validate
// the estimators without 1e9-sample blocks.
struct TrialConfig {
    std::uint64_t seed = 0;
    std::uint64_t trials = 1;
    std::uint64_t samples_per_trial = 10'000; // N of the simulated block
    std::uint64_t m_pe = 5'000;               // PE partition size (single mode)
    ProtocolParams params;
    ChannelModel channel;
    Discretization disc;
    SecurityBudget security;
    double coverage_z = 3.0; // desk-scale confidence checks run at this z
    bool rescale_alice = true;
    double d0_margin = 1.0;

    void check() const; // throws ValidationError on inconsistent settings
};

struct TrialRecord {
    est::EstimationReport report;
    double d_pe = 0.0;     // d(x_M^PE, x_B^PE), or d(x_M2, x_B) in double mode
    double d_key = 0.0;    // d(x_M^key, x_B^key), or d(x_M1, x_B)
    double d_m1_m2 = 0.0;  // double mode only
    double p_alpha_emp = 0.0;
    std::uint64_t out_of_range = 0;
    bool pe_passed = false;     // d_pe <= d0_margin * predicted d0
    bool triangle_ok = true;    // double mode: d_key <= d_pe + d_m1_m2
    bool serfling_ok = true;    // single mode: d_key <= d_pe + mu
    bool tau_miss = false;      // true tau < tau_hat - z*sigma
    bool veps_miss = false;     // true V_eps > v_eps_hat + z*sigma
};

struct WilsonInterval {
    double lo = 0.0;
    double hi = 0.0;
};

WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z);

struct TrialSummary {
    TrialConfig config;
    std::vector<TrialRecord> records;

    // aggregates (deterministic trial-index-order reductions)
    double mean_c_mb = 0.0;
    double mean_tau_hat = 0.0;
    double var_tau_hat = 0.0;
    double mean_veps_hat = 0.0;
    double var_veps_hat = 0.0;
    double tau_var_formula = 0.0;  // at the true channel parameters
    double veps_var_formula = 0.0;
    double tau_var_ratio = 0.0;    // empirical / formula
    double veps_var_ratio = 0.0;
    std::uint64_t tau_misses = 0;
    std::uint64_t veps_misses = 0;
    WilsonInterval tau_miss_ci{};
    WilsonInterval veps_miss_ci{};
    double mean_d_pe = 0.0;
    double mean_d_key = 0.0;
    double mean_d_m1_m2 = 0.0;
    double predicted_d0_bins = 0.0;
    double mu_bins = 0.0; // 0 when eps' is exhausted or in double mode
    double p_alpha_emp = 0.0;
    double p_alpha_model = 0.0;
    std::uint64_t serfling_violations = 0;
    std::uint64_t triangle_violations = 0;
    double pe_pass_rate = 0.0;

    nlohmann::ordered_json to_json() const;
    std::string trials_csv() const;
};

/// One full protocol round: modulate, transmit, measure, discretize,
/// partition, estimate. Bit-identical for a fixed (seed, trial_index).
TrialRecord run_protocol_trial(const TrialConfig& cfg, std::uint64_t trial_index);

/// Raw per-trial batches for external reanalysis (the CSV dump path).
est::SampleRecords trial_batches(const TrialConfig& cfg, std::uint64_t trial_index);

/// Runs all trials (optionally in parallel) and aggregates. Identical output
/// for any worker count.
TrialSummary run_trials(const TrialConfig& cfg, int workers = 1);

/// Confidence-bound coverage at cfg.coverage_z: counts one-sided misses of
/// tau and V_eps against the true channel. Requires trials >= 100.
TrialSummary coverage_experiment(const TrialConfig& cfg, int workers = 1);

/// Distance statistics: triangle inequality per trial (double mode), Serfling
/// sanity d_key <= d_pe + mu (single mode), empirical-vs-predicted d0.
TrialSummary distance_experiment(const TrialConfig& cfg, int workers = 1);

} // namespace cvqkd::mc
