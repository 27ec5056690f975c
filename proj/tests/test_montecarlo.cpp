#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cvqkd/bounds.hpp"
#include "cvqkd/montecarlo.hpp"

using namespace cvqkd;

namespace {

mc::TrialConfig base_config() {
    mc::TrialConfig tc;
    tc.seed = 20'240'817;
    tc.trials = 200;
    tc.samples_per_trial = 20'000;
    tc.m_pe = 10'000;
    tc.params.v_s = squeezed_variance_from_db(13.1);
    tc.params.v_anti = anti_squeezed_variance_from_db(25.8);
    tc.params.v_m = 25.0;
    tc.channel.tau = tau_from_distance(2.0, 0.2);
    tc.channel.excess_noise = 0.01;
    tc.disc = {61.6, 12};
    return tc;
}

} // namespace

TEST_CASE("trial config validation") {
    mc::TrialConfig tc = base_config();
    CHECK_NOTHROW(tc.check());
    tc.m_pe = tc.samples_per_trial;
    CHECK_THROWS_AS(tc.check(), ValidationError);
    tc = base_config();
    tc.trials = 0;
    CHECK_THROWS_AS(tc.check(), ValidationError);
}

TEST_CASE("near-noiseless channel recovers tau ~ 1") {
    mc::TrialConfig tc = base_config();
    tc.params.v_s = 1e-6;
    tc.params.v_anti = 1e7;
    tc.channel.tau = 1.0;
    tc.channel.excess_noise = 0.0;
    tc.samples_per_trial = 100'000;
    tc.m_pe = 50'000;
    const auto rec = mc::run_protocol_trial(tc, 0);
    CHECK(std::abs(rec.report.tau_hat - 1.0) < 1e-2);
}

TEST_CASE("trials are bit-identical for a fixed (seed, index)") {
    const mc::TrialConfig tc = base_config();
    const auto a = mc::run_protocol_trial(tc, 3);
    const auto b = mc::run_protocol_trial(tc, 3);
    CHECK(a.report.c_mb_hat == b.report.c_mb_hat);
    CHECK(a.report.tau_hat == b.report.tau_hat);
    CHECK(a.report.v_eps_hat == b.report.v_eps_hat);
    CHECK(a.d_pe == b.d_pe);
    CHECK(a.d_key == b.d_key);
    const auto c = mc::run_protocol_trial(tc, 4);
    CHECK(a.report.c_mb_hat != c.report.c_mb_hat);
}

TEST_CASE("double mode estimates on all N samples") {
    mc::TrialConfig tc = base_config();
    tc.params.mode = ModulationMode::Double;
    tc.params.v_m1 = 12.5;
    tc.params.v_m2 = 12.5;
    const auto rec = mc::run_protocol_trial(tc, 0);
    CHECK(rec.report.m_used == tc.samples_per_trial);
    CHECK(rec.report.mode == ModulationMode::Double);
    CHECK(rec.d_m1_m2 > 0.0);
}

TEST_CASE("summary is identical across worker counts") {
    mc::TrialConfig tc = base_config();
    tc.trials = 40;
    const auto one = mc::run_trials(tc, 1);
    const auto three = mc::run_trials(tc, 3);
    CHECK(one.to_json().dump() == three.to_json().dump());
    CHECK(one.trials_csv() == three.trials_csv());
}

TEST_CASE("coverage: z = 3 misses stay below 1%, z = 0 splits, z = 6.5 never misses") {
    mc::TrialConfig tc = base_config();
    tc.trials = 1000;
    tc.samples_per_trial = 10'000;
    tc.m_pe = 5'000;

    tc.coverage_z = 3.0;
    const auto s3 = mc::coverage_experiment(tc, 4);
    CHECK(static_cast<double>(s3.tau_misses) / tc.trials <= 0.01);
    CHECK(static_cast<double>(s3.veps_misses) / tc.trials <= 0.01);
    CHECK(s3.tau_miss_ci.lo <= 0.00135); // erf oracle value within the Wilson band
    CHECK(s3.tau_miss_ci.hi >= 0.0);

    tc.coverage_z = 0.0;
    const auto s0 = mc::coverage_experiment(tc, 4);
    const double miss0 = static_cast<double>(s0.tau_misses) / tc.trials;
    CHECK(miss0 > 0.40);
    CHECK(miss0 < 0.60);

    tc.coverage_z = 6.5;
    const auto s65 = mc::coverage_experiment(tc, 4);
    CHECK(s65.tau_misses == 0);
    CHECK(s65.veps_misses == 0);

    CHECK_THROWS_AS([&] {
        mc::TrialConfig small = tc;
        small.trials = 50;
        mc::coverage_experiment(small);
    }(), std::invalid_argument);
}

TEST_CASE("coverage at z in {1,2} tracks the Gaussian tail") {
    mc::TrialConfig tc = base_config();
    tc.trials = 2000;
    tc.samples_per_trial = 10'000;
    tc.m_pe = 5'000;
    for (const auto [z, expect] : {std::pair{1.0, 0.158655}, std::pair{2.0, 0.022750}}) {
        tc.coverage_z = z;
        const auto s = mc::coverage_experiment(tc, 4);
        const double miss = static_cast<double>(s.tau_misses) / tc.trials;
        const double sd = std::sqrt(expect * (1 - expect) / tc.trials);
        CHECK(std::abs(miss - expect) < 4.0 * sd);
    }
}

TEST_CASE("distance experiment: Serfling sanity and prediction agreement") {
    mc::TrialConfig tc = base_config();
    tc.disc = {12.8, 9}; // delta = 0.05 for the fine-bin comparison
    tc.trials = 200;
    tc.samples_per_trial = 20'000;
    tc.m_pe = 10'000;
    const auto s = mc::distance_experiment(tc, 4);
    // key-partition distance <= PE-partition distance + mu in >= 199/200 runs
    CHECK(s.serfling_violations <= 1);
    CHECK(s.mu_bins > 0.0);
    CHECK(s.pe_pass_rate > 0.0);
    CHECK(s.pe_pass_rate < 1.0);

    // one long trial: empirical distance within 2% of the quadrature prediction
    mc::TrialConfig big = tc;
    big.trials = 1;
    big.samples_per_trial = 1'000'000;
    big.m_pe = 500'000;
    const auto sb = mc::distance_experiment(big, 1);
    CHECK(sb.mean_d_pe == doctest::Approx(sb.predicted_d0_bins).epsilon(0.02));
    CHECK(sb.mean_d_key == doctest::Approx(sb.predicted_d0_bins).epsilon(0.02));
}

TEST_CASE("distance experiment: triangle inequality holds on every double-mode trial") {
    mc::TrialConfig tc = base_config();
    tc.params.mode = ModulationMode::Double;
    tc.params.v_m1 = 12.5;
    tc.params.v_m2 = 12.5;
    tc.trials = 200;
    tc.samples_per_trial = 20'000;
    const auto s = mc::distance_experiment(tc, 4);
    CHECK(s.triangle_violations == 0);
    for (const auto& r : s.records)
        CHECK(r.d_key <= r.d_pe + r.d_m1_m2);
}

TEST_CASE("empirical p_alpha matches the Gaussian tail when counts are informative") {
    mc::TrialConfig tc = base_config();
    tc.params.v_m = 1.0;
    tc.channel.tau = 0.9;
    tc.disc = {3.2, 6}; // small detection range so out-of-range events are common
    tc.trials = 200;
    tc.samples_per_trial = 20'000;
    tc.m_pe = 10'000;
    const auto s = mc::run_trials(tc, 4);
    const double n = static_cast<double>(tc.trials * tc.samples_per_trial);
    const double expected_hits = s.p_alpha_model * n;
    REQUIRE(expected_hits >= 10.0);
    const double sd = std::sqrt(s.p_alpha_model * (1.0 - s.p_alpha_model) / n);
    CHECK(std::abs(s.p_alpha_emp - s.p_alpha_model) < 3.0 * sd);
}

TEST_CASE("aggregate estimator statistics match the finite-size formulas") {
    mc::TrialConfig tc = base_config();
    tc.trials = 2000;
    tc.samples_per_trial = 10'000;
    tc.m_pe = 5'000;
    const auto s = mc::run_trials(tc, 4);

    // mean covariance within 4 standard errors of sqrt(tau) V_M
    const double c_true = std::sqrt(tc.channel.tau) * tc.params.v_m;
    const double v_n = channel::noise_variance(tc.params, tc.channel).v_n;
    const double sigma_c2 = tc.channel.tau * tc.params.v_m * tc.params.v_m *
                            (2.0 + v_n / (tc.channel.tau * tc.params.v_m)) /
                            static_cast<double>(tc.m_pe);
    CHECK(std::abs(s.mean_c_mb - c_true) <
          4.0 * std::sqrt(sigma_c2 / static_cast<double>(tc.trials)));

    CHECK(s.tau_var_ratio > 0.8);
    CHECK(s.tau_var_ratio < 1.2);
    CHECK(s.veps_var_ratio > 0.8);
    CHECK(s.veps_var_ratio < 1.2);
}

TEST_CASE("double-mode aggregate variance ratios") {
    mc::TrialConfig tc = base_config();
    tc.params.mode = ModulationMode::Double;
    tc.params.v_m1 = 12.5;
    tc.params.v_m2 = 12.5;
    tc.trials = 2000;
    tc.samples_per_trial = 10'000;
    const auto s = mc::run_trials(tc, 4);
    CHECK(s.tau_var_ratio > 0.8);
    CHECK(s.tau_var_ratio < 1.2);
    CHECK(s.veps_var_ratio > 0.8);
    CHECK(s.veps_var_ratio < 1.2);
}

TEST_CASE("wilson interval sanity") {
    const auto ci = mc::wilson_interval(5, 1000, 3.0);
    CHECK(ci.lo > 0.0);
    CHECK(ci.lo < 0.005);
    CHECK(ci.hi > 0.005);
    CHECK(ci.hi < 0.05);
    const auto all = mc::wilson_interval(0, 100, 3.0);
    CHECK(all.lo == 0.0);
}

TEST_CASE("summary serialization carries the headline statistics") {
    mc::TrialConfig tc = base_config();
    tc.trials = 5;
    const auto s = mc::run_trials(tc, 1);
    const auto j = s.to_json();
    CHECK(j.at("trials").get<std::uint64_t>() == 5);
    CHECK(j.contains("tau_var_ratio"));
    const auto csv = s.trials_csv();
    CHECK(csv.rfind("trial,mode,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 6); // header + 5 rows
}
