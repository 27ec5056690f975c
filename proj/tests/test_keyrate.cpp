#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cvqkd/channel.hpp"
#include "cvqkd/keyrate.hpp"

using namespace cvqkd;

namespace {

// Paper-style source and budget with a modulation variance low enough that
// the detection range alpha = 61.6 stays ~11 sigma of Bob's variance; this
// configuration produces positive rates out to ~6 km in RR.
Config workable_config(double distance_km = 2.0) {
    Config cfg;
    cfg.protocol.v_s = squeezed_variance_from_db(13.1);
    cfg.protocol.v_anti = anti_squeezed_variance_from_db(25.8);
    cfg.protocol.v_m = 25.0;
    cfg.protocol.beta = 0.95;
    cfg.protocol.direction = Direction::RR;
    cfg.protocol.n_total = 1'000'000'000ull;
    cfg.protocol.m_pe = 500'000'000ull;
    cfg.disc = {61.6, 12};
    cfg.channel.excess_noise = 0.01;
    cfg.channel.loss_db_per_km = 0.2;
    cfg.distance_km = distance_km;
    cfg.channel.tau = tau_from_distance(distance_km, 0.2);
    return cfg;
}

// The documented defaults: V_M = 40, L = 12, m = N/2, alpha = 61.6.
Config paper_config(double distance_km, Direction dir) {
    Config cfg = workable_config(distance_km);
    cfg.protocol.v_m = 40.0;
    cfg.protocol.direction = dir;
    return cfg;
}

} // namespace

TEST_CASE("mutual_information") {
    ProtocolParams p;
    p.v_s = 1.0;
    p.v_m = 40.0;
    ChannelModel ch;
    ch.tau = 1e-15;
    ch.excess_noise = 0.0;
    CHECK(keyrate::mutual_information(p, ch) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));

    ch.tau = 1.0;
    CHECK(keyrate::mutual_information(p, ch) ==
          doctest::Approx(2.678776002309041846583).epsilon(1e-12)); // 0.5 log2(41)

    p.v_s = 0.04898;
    ch.tau = 0.6310;
    ch.excess_noise = 0.01;
    CHECK(keyrate::mutual_information(p, ch) ==
          doctest::Approx(2.990176886762820).epsilon(1e-9));

    // double mode: signal variance is V_M1, V_N unchanged
    p.mode = ModulationMode::Double;
    p.v_m1 = 10.0;
    p.v_m2 = 30.0;
    const double v_n = channel::noise_variance(p, ch).v_n;
    CHECK(keyrate::mutual_information(p, ch) ==
          doctest::Approx(0.5 * std::log2(1.0 + ch.tau * 10.0 / v_n)).epsilon(1e-12));
}

TEST_CASE("leakage decreases toward the Shannon limit as beta -> 1") {
    Config cfg = workable_config();
    double prev = 1e18;
    for (double beta : {0.80, 0.90, 0.95, 1.0}) {
        cfg.protocol.beta = beta;
        const auto l = keyrate::leakage(cfg.protocol, cfg.channel, cfg.disc);
        CHECK(l.total < prev);
        prev = l.total;
    }
}

TEST_CASE("finite leakage exceeds ideal leakage and is close at N = 1e9") {
    Config cfg = paper_config(5.0, Direction::RR);
    const auto ideal = keyrate::leakage(cfg.protocol, cfg.channel, cfg.disc);
    const auto rep = keyrate::expected_report(cfg.protocol, cfg.channel, cfg.security);
    CHECK(rep.tau_low < cfg.channel.tau);
    CHECK(rep.v_eps_up > cfg.channel.tau * cfg.channel.excess_noise);
    const auto finite = keyrate::leakage(cfg.protocol, cfg.channel, cfg.disc, &rep);
    CHECK(finite.total >= ideal.total);
    CHECK((finite.total - ideal.total) / ideal.total < 0.01);
}

TEST_CASE("key_length assembles the published correction arithmetic") {
    Config cfg = workable_config(2.0);
    const auto rep = keyrate::key_length(cfg);
    REQUIRE(rep.abort_reason.empty());
    const double eps1 = cfg.security.eps1_effective();
    const double correction = std::log2(1.0 / (eps1 * eps1 * cfg.security.eps_c));
    CHECK(rep.ell_low ==
          doctest::Approx(rep.h_min - rep.leak_ec - correction + 2.0).epsilon(1e-12));
    CHECK(rep.rate == doctest::Approx(rep.ell_low / 1e9).epsilon(1e-12));

    // with the whole epsilon correction driven to ~1, ell -> h_min - leak + 2
    cfg.security.eps_1 = 1.0 - 1e-12;
    cfg.security.eps_c = 1.0 - 1e-12;
    const auto rep2 = keyrate::key_length(cfg);
    CHECK(rep2.ell_low ==
          doctest::Approx(rep2.h_min - rep2.leak_ec + 2.0).epsilon(1e-9).scale(1.0));
}

TEST_CASE("workable configuration yields positive keys up to the cutoff") {
    CHECK(keyrate::key_length_finite(workable_config(2.0)).rate > 0.4);
    CHECK(keyrate::key_length_finite(workable_config(5.0)).rate > 0.0);
    const auto beyond = keyrate::key_length_finite(workable_config(7.0));
    CHECK(beyond.rate == 0.0);
    CHECK(beyond.abort_reason == "ell_low_nonpositive");
}

TEST_CASE("paper defaults exhaust the budget or the margin at every distance") {
    // Regression capture of the blocking analysis: with V_M = 40 and
    // alpha = 61.6, short range pushes p_alpha so high that eps' < 0, while
    // long range leaves ell_low < 0; zero key everywhere.
    const auto short_range = keyrate::key_length_finite(paper_config(4.0, Direction::RR));
    CHECK(short_range.rate == 0.0);
    CHECK(short_range.abort_reason == "eps_prime_exhausted");

    const auto rr15 = keyrate::key_length_finite(paper_config(15.0, Direction::RR));
    CHECK(rr15.rate == 0.0);
    CHECK(rr15.abort_reason == "ell_low_nonpositive");
    CHECK(rr15.ell_low / 1e9 == doctest::Approx(-0.41).epsilon(0.1));

    const auto dr10 = keyrate::key_length_finite(paper_config(10.0, Direction::DR));
    CHECK(dr10.rate == 0.0);
    CHECK(dr10.abort_reason == "ell_low_nonpositive");
}

TEST_CASE("ideal estimation equals finite estimation with zero-width bounds") {
    Config cfg = workable_config(3.0);
    est::EstimationReport rep;
    rep.mode = cfg.protocol.mode;
    rep.tau_hat = cfg.channel.tau;
    rep.sigma_tau = 0.0;
    rep.tau_low = cfg.channel.tau;
    rep.v_eps_hat = cfg.channel.tau * cfg.channel.excess_noise;
    rep.sigma_veps = 0.0;
    rep.v_eps_up = rep.v_eps_hat;
    const auto ideal = keyrate::key_length(cfg);
    const auto finite = keyrate::key_length(cfg, &rep);
    CHECK(finite.ell_low == ideal.ell_low);
    CHECK(finite.rate == ideal.rate);
}

TEST_CASE("finite estimation never beats ideal estimation") {
    for (double d : {1.0, 2.0, 3.0, 4.0, 5.0}) {
        const Config cfg = workable_config(d);
        const auto ideal = keyrate::key_length(cfg);
        const auto finite = keyrate::key_length_finite(cfg);
        CHECK(finite.ell_low <= ideal.ell_low);
    }
}

TEST_CASE("RR dominates DR at long distance") {
    const auto rr = keyrate::key_length_finite(paper_config(15.0, Direction::RR));
    const auto dr = keyrate::key_length_finite(paper_config(15.0, Direction::DR));
    CHECK(rr.rate >= dr.rate);
    CHECK(rr.ell_low >= dr.ell_low); // strict ordering on the raw key length
    CHECK(rr.ell_low > dr.ell_low);
}

TEST_CASE("literal no-gamma double-mode bound never lowers the rate") {
    Config cfg = workable_config(2.0);
    cfg.protocol.mode = ModulationMode::Double;
    cfg.protocol.v_m1 = 12.5;
    cfg.protocol.v_m2 = 12.5;
    const auto with_gamma = keyrate::key_length_finite(cfg);
    cfg.bounds.gamma_in_double_mode = false;
    const auto literal = keyrate::key_length_finite(cfg);
    CHECK(literal.h_max < with_gamma.h_max);
    CHECK(literal.ell_low >= with_gamma.ell_low);
    CHECK(literal.rate >= with_gamma.rate);
}

TEST_CASE("ell_low is monotone in its components") {
    // beta up -> leakage down -> ell up
    Config lo = workable_config(2.0);
    Config hi = lo;
    lo.protocol.beta = 0.90;
    hi.protocol.beta = 0.95;
    CHECK(keyrate::key_length(hi).ell_low > keyrate::key_length(lo).ell_low);

    // a larger d0 margin inflates h_max, deflates h_min, deflates ell
    Config wide = workable_config(2.0);
    wide.bounds.d0_margin = 1.5;
    const auto base = keyrate::key_length(workable_config(2.0));
    const auto inflated = keyrate::key_length(wide);
    CHECK(inflated.h_max > base.h_max);
    CHECK(inflated.h_min < base.h_min);
    CHECK(inflated.ell_low < base.ell_low);
}

TEST_CASE("distance sweep is monotone and deterministic across workers") {
    Config cfg = workable_config(0.0);
    std::vector<double> grid;
    for (int d = 0; d <= 10; ++d)
        grid.push_back(d);
    const auto one = keyrate::sweep(cfg, keyrate::SweepAxis::DistanceKm, grid, true, 1);
    const auto four = keyrate::sweep(cfg, keyrate::SweepAxis::DistanceKm, grid, true, 4);
    CHECK(one.to_csv() == four.to_csv());
    CHECK(one.reports.size() == grid.size());
    for (std::size_t i = 1; i < one.reports.size(); ++i)
        CHECK(one.reports[i].rate <= one.reports[i - 1].rate + 1e-15);
    CHECK(!one.all_zero());
    // CSV header is fixed and rows carry the axis
    CHECK(one.to_csv().rfind("axis,axis_value,direction,", 0) == 0);
}

TEST_CASE("block-size sweep is non-decreasing in N") {
    Config cfg = workable_config(2.0);
    const std::vector<double> grid{1e7, 1e8, 1e9};
    const auto res = keyrate::sweep(cfg, keyrate::SweepAxis::BlockSize, grid, true, 1);
    CHECK(res.reports[0].rate <= res.reports[1].rate);
    CHECK(res.reports[1].rate <= res.reports[2].rate);
    CHECK(res.reports[2].rate > 0.0);
    // the PE fraction is preserved from the base configuration
    CHECK(res.reports[0].protocol.m_pe == 5'000'000ull);
}

TEST_CASE("optimizer matches a dense scan for a single free parameter") {
    Config cfg = workable_config(3.0);
    const auto result =
        keyrate::optimize(cfg, {keyrate::FreeParameter::MPeFraction}, true, 2);

    // dense 1e3-point oracle over the same range
    double best_rate = -1.0, best_f = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double f = 0.02 + (0.98 - 0.02) * i / 999.0;
        Config point = cfg;
        point.protocol.m_pe = static_cast<std::uint64_t>(f * 1e9);
        const auto rep = keyrate::key_length_finite(point);
        if (rep.rate > best_rate) {
            best_rate = rep.rate;
            best_f = f;
        }
    }
    CHECK(result.best.rate >= 0.995 * best_rate);
    CHECK(std::abs(result.argmax[0] - best_f) < 0.06); // within one coarse grid step
    // interior optimum: boundaries waste either key data or estimation data
    CHECK(result.argmax[0] > 0.02);
    CHECK(result.argmax[0] < 0.98);
    CHECK(result.trace.size() >= 3 * 17); // three passes over one parameter
}

TEST_CASE("optimizer dominance for the double-mode split") {
    Config cfg = workable_config(2.0);
    cfg.protocol.mode = ModulationMode::Double;
    cfg.protocol.v_m1 = 12.5;
    cfg.protocol.v_m2 = 12.5;
    const auto base = keyrate::key_length_finite(cfg);
    const auto result =
        keyrate::optimize(cfg, {keyrate::FreeParameter::VM2Fraction}, true, 2);
    CHECK(result.best.rate >= base.rate);
    CHECK_THROWS_AS(keyrate::optimize(cfg, {}, true), std::invalid_argument);
}
