#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "cvqkd/channel.hpp"
#include "cvqkd/csvio.hpp"
#include "cvqkd/mathfn.hpp"
#include "cvqkd/rng.hpp"

using namespace cvqkd;

namespace {

// Known-answer vectors for Philox4x32-10, cross-checked against an
// independent reference implementation of the published algorithm.
struct Kat {
    rng::Block ctr;
    std::uint32_t k0, k1;
    rng::Block expect;
};

const Kat kKats[] = {
    {{{0, 0, 0, 0}}, 0, 0, {{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}}},
    {{{0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}},
     0xffffffffu,
     0xffffffffu,
     {{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}}},
    {{{0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}},
     0xa4093822u,
     0x299f31d0u,
     {{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}}},
    {{{1, 0, 0, 0}}, 42, 0, {{0xfcdb2127u, 0x53ba6cfdu, 0x838f5a6eu, 0x744e06fbu}}},
};

double ks_statistic_vs_normal(std::vector<double> samples, double variance) {
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    const double sd = std::sqrt(variance);
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = mathfn::norm_cdf(samples[i] / sd);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d;
}

} // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
    for (const auto& kat : kKats) {
        const auto out = rng::philox4x32(kat.ctr, kat.k0, kat.k1);
        for (int i = 0; i < 4; ++i)
            CHECK(out.x[i] == kat.expect.x[i]);
    }
}

TEST_CASE("normal stream is a pure function of (seed, stream, index)") {
    const rng::NormalStream a(42, 7);
    const rng::NormalStream b(42, 7);
    const rng::NormalStream c(43, 7);
    const rng::NormalStream d(42, 8);
    CHECK(a(123456789) == b(123456789));
    CHECK(a(0) != c(0));
    CHECK(a(0) != d(0));
    // batch fill equals per-index evaluation
    std::vector<double> buf(100);
    a.fill(buf, 50);
    for (std::size_t i = 0; i < buf.size(); ++i)
        CHECK(buf[i] == a(50 + i));
}

TEST_CASE("normal stream moments") {
    const rng::NormalStream ns(2024, 1);
    const std::size_t n = 1'000'000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ns(i);
        s1 += x;
        s2 += x * x;
        s4 += x * x * x * x;
    }
    CHECK(s1 / n == doctest::Approx(0.0).scale(1.0).epsilon(4e-3));
    CHECK(s2 / n == doctest::Approx(1.0).epsilon(5e-3));
    CHECK(s4 / n == doctest::Approx(3.0).epsilon(2e-2));
}

TEST_CASE("derive_seed separates purposes and indices") {
    CHECK(rng::derive_seed(1, 0, 1) != rng::derive_seed(1, 0, 2));
    CHECK(rng::derive_seed(1, 0, 1) != rng::derive_seed(1, 1, 1));
    CHECK(rng::derive_seed(1, 0, 1) != rng::derive_seed(2, 0, 1));
    CHECK(rng::derive_seed(1, 0, 1) == rng::derive_seed(1, 0, 1));
}

TEST_CASE("noise_variance matches the channel model") {
    ProtocolParams p;
    ChannelModel ch;

    // vacuum limit: eps = 0, V_S = 1
    p.v_s = 1.0;
    ch.tau = 0.37;
    ch.excess_noise = 0.0;
    CHECK(channel::noise_variance(p, ch).v_n == doctest::Approx(1.0).epsilon(1e-15));

    // paper example
    p.v_s = 0.04898;
    ch.tau = 0.6310;
    ch.excess_noise = 0.01;
    const auto nv = channel::noise_variance(p, ch);
    CHECK(nv.v_n == doctest::Approx(0.40621638).epsilon(1e-9));
    CHECK(nv.v_eps == doctest::Approx(0.006310).epsilon(1e-12));

    // lossless squeezed input
    p.v_s = 0.5;
    ch.tau = 1.0;
    ch.excess_noise = 0.0;
    CHECK(channel::noise_variance(p, ch).v_n == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("noise_variance_double reduces to the single-mode form at V_M1 = 0") {
    ProtocolParams p;
    p.mode = ModulationMode::Double;
    p.v_m = 40.0;
    p.v_m1 = 0.0;
    p.v_m2 = 40.0;
    p.v_s = 0.04898;
    ChannelModel ch;
    ch.tau = 0.731;
    ch.excess_noise = 0.01;
    CHECK(channel::noise_variance_double(p, ch).v_n ==
          doctest::Approx(channel::noise_variance(p, ch).v_n).epsilon(1e-15));

    p.v_m1 = 10.0;
    p.v_m2 = 30.0;
    ch.tau = 0.5;
    p.v_s = 0.04898;
    CHECK(channel::noise_variance_double(p, ch).v_n ==
          doctest::Approx(5.52949).epsilon(1e-9));

    // tau -> 0 leaves pure vacuum at Bob
    ch.tau = 1e-15;
    CHECK(channel::noise_variance_double(p, ch).v_n == doctest::Approx(1.0).epsilon(1e-9));

    p.mode = ModulationMode::Single;
    CHECK_THROWS_AS(channel::noise_variance_double(p, ch), std::logic_error);
}

TEST_CASE("bob_variance") {
    ProtocolParams p;
    ChannelModel ch;
    p.v_s = 1.0;
    p.v_m = 40.0;
    ch.tau = 1.0;
    ch.excess_noise = 0.0;
    CHECK(channel::bob_variance(p, ch) == doctest::Approx(41.0).epsilon(1e-15));

    p.v_s = 0.04898;
    ch.tau = 0.6310;
    ch.excess_noise = 0.01;
    CHECK(channel::bob_variance(p, ch) == doctest::Approx(25.64621638).epsilon(1e-9));

    p.v_m = 0.0;
    p.v_s = 1.0;
    ch.tau = 0.4;
    ch.excess_noise = 0.0;
    CHECK(channel::bob_variance(p, ch) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("transmit: identity channel returns the input bit-exactly") {
    channel::QuadratureBatch in;
    const rng::NormalStream ns(7, 1);
    in.values = ns.draw(1000);
    ChannelModel ch;
    ch.tau = 1.0;
    ch.excess_noise = 0.0;
    const auto out = channel::transmit(in, ch, 99);
    CHECK(out.values == in.values);
}

TEST_CASE("transmit: noise variance via Monte Carlo") {
    ChannelModel ch;
    ch.tau = 0.5;
    ch.excess_noise = 0.0;
    channel::QuadratureBatch zeros;
    const std::size_t n = 1'000'000;
    zeros.values.assign(n, 0.0);
    const auto out = channel::transmit(zeros, ch, 4242);
    double s2 = 0.0;
    for (double v : out.values)
        s2 += v * v;
    const double var = s2 / static_cast<double>(n);
    // tolerance 3*sqrt(2/n)*0.5 around the predicted 0.5
    CHECK(std::abs(var - 0.5) < 3.0 * std::sqrt(2.0 / n) * 0.5);
}

TEST_CASE("transmit: regression slope recovers sqrt(tau)") {
    ProtocolParams p;
    p.v_m = 40.0;
    ChannelModel ch;
    ch.tau = 0.6310;
    ch.excess_noise = 0.01;
    const std::size_t n = 1'000'000;
    const rng::NormalStream ms(11, rng::kPurposeModulation);
    channel::QuadratureBatch x_a;
    x_a.values.resize(n);
    const double sd = std::sqrt(p.v_m);
    for (std::size_t i = 0; i < n; ++i)
        x_a.values[i] = sd * ms(i);
    const auto x_b = channel::transmit(x_a, ch, 11);
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += x_a.values[i] * x_b.values[i];
        sxx += x_a.values[i] * x_a.values[i];
    }
    const double slope = sxy / sxx;
    // 4 predicted standard deviations of the covariance estimator
    const double v_n = 1.0 - ch.tau + ch.tau * ch.excess_noise;
    const double sigma_c =
        std::sqrt(ch.tau * p.v_m * p.v_m * (2.0 + v_n / (ch.tau * p.v_m)) / n);
    CHECK(std::abs(slope - std::sqrt(ch.tau)) < 4.0 * sigma_c / p.v_m);
}

TEST_CASE("transmit preserves Gaussianity (KS at 1e6 samples, 1% level)") {
    ProtocolParams p;
    p.v_s = 0.04898;
    p.v_m = 40.0;
    ChannelModel ch;
    ch.tau = 0.6310;
    ch.excess_noise = 0.01;
    const std::size_t n = 1'000'000;
    const rng::NormalStream ms(5, rng::kPurposeModulation);
    const rng::NormalStream ss(5, rng::kPurposeSqueeze);
    channel::QuadratureBatch x_a;
    x_a.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        x_a.values[i] = std::sqrt(p.v_m) * ms(i) + std::sqrt(p.v_s) * ss(i);
    const auto x_b = channel::transmit(x_a, ch, 5);
    const double d = ks_statistic_vs_normal(x_b.values, channel::bob_variance(p, ch));
    CHECK(d * std::sqrt(static_cast<double>(n)) < 1.627623611518950); // 1% critical value
}

TEST_CASE("discretize examples") {
    Discretization disc{61.6, 12};
    bool oor = false;

    CHECK(channel::discretize_value(-disc.alpha - 5.0, disc, &oor) == 0);
    CHECK(oor);
    CHECK(channel::discretize_value(-disc.alpha, disc, &oor) == 0); // (-inf,-alpha] tail
    CHECK(oor);
    CHECK(channel::discretize_value(-1e-12, disc, &oor) == 2047);
    CHECK(!oor);
    CHECK(channel::discretize_value(0.0, disc, &oor) == 2047); // 0 is a right-closed edge
    CHECK(!oor);
    CHECK(channel::discretize_value(disc.alpha, disc, &oor) == 4095);
    CHECK(!oor);
    CHECK(channel::discretize_value(disc.alpha + 1.0, disc, &oor) == 4095);
    CHECK(oor);

    channel::QuadratureBatch batch;
    batch.values = {-100.0, 0.0, 100.0};
    const auto d = channel::discretize(batch, disc);
    CHECK(d.bins == std::vector<std::uint32_t>{0, 2047, 4095});
    CHECK(d.out_of_range == 2);
}

TEST_CASE("discretize is monotone with exact bin geometry") {
    Discretization disc{12.8, 8};
    CHECK(disc.bin_count() == 256.0);
    const rng::NormalStream ns(17, 3);
    for (std::size_t i = 0; i < 20000; i += 2) {
        const double x = 6.0 * ns(i);
        const double y = 6.0 * ns(i + 1);
        const auto bx = channel::discretize_value(std::min(x, y), disc);
        const auto by = channel::discretize_value(std::max(x, y), disc);
        CHECK(bx <= by);
    }
    // all bins have width delta: walking one delta moves exactly one bin
    for (int k = 1; k < 255; ++k) {
        const double mid = -disc.alpha + (k + 0.5) * disc.delta();
        CHECK(channel::discretize_value(mid, disc) ==
              channel::discretize_value(mid - disc.delta(), disc) + 1);
    }
}

TEST_CASE("batch CSV round-trip is bit-exact") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "cvqkd_test_csv";
    fs::create_directories(dir);
    const auto path = (dir / "batch.csv").string();

    const rng::NormalStream ns(123, 9);
    io::BatchFile bf;
    bf.mode = ModulationMode::Double;
    bf.m1.values = ns.draw(500, 0);
    bf.m2.values = ns.draw(500, 1000);
    bf.b.values = ns.draw(500, 2000);
    io::write_batch_csv(path, bf);
    const auto rt = io::read_batch_csv(path);
    CHECK(rt.mode == ModulationMode::Double);
    CHECK(rt.m1.values == bf.m1.values);
    CHECK(rt.m2.values == bf.m2.values);
    CHECK(rt.b.values == bf.b.values);

    // error paths: bad cell with line number, empty file
    {
        std::FILE* f = std::fopen((dir / "bad.csv").string().c_str(), "wb");
        std::fputs("m,b\n1.0,2.0\n1.0,oops\n", f);
        std::fclose(f);
        CHECK_THROWS_WITH_AS(io::read_batch_csv((dir / "bad.csv").string()),
                             doctest::Contains("line 3"), std::runtime_error);
        std::FILE* e = std::fopen((dir / "empty.csv").string().c_str(), "wb");
        std::fclose(e);
        CHECK_THROWS_AS(io::read_batch_csv((dir / "empty.csv").string()), std::runtime_error);
    }
    fs::remove_all(dir);
}
