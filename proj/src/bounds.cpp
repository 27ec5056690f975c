#include "cvqkd/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "cvqkd/channel.hpp"
#include "cvqkd/mathfn.hpp"

namespace cvqkd::bounds {

SmoothingReport eps_prime(const SecurityBudget& sec, double p_alpha, std::uint64_t n_key) {
    if (!(p_alpha >= 0.0 && p_alpha < 1.0))
        throw std::domain_error("eps_prime: p_alpha must lie in [0,1)");
    if (n_key < 1)
        throw std::domain_error("eps_prime: n_key must be >= 1");
    // 1 - (1-p)^n = -expm1(n log1p(-p)); exact to machine precision for the
    // n*p ~ 1e-21 regime the budget actually lives in.
    const double any_oor =
        (p_alpha == 0.0)
            ? 0.0
            : -std::expm1(static_cast<double>(n_key) * std::log1p(-p_alpha));
    const double value = sec.eps_s / (4.0 * sec.p_pass) -
                         2.0 * std::sqrt(2.0 * any_oor) / std::sqrt(sec.p_pass);
    if (!(value > 0.0))
        throw BudgetExhausted("security budget exhausted: eps' <= 0 "
                              "(detection range alpha too small or block too large for eps_s)");
    return SmoothingReport{value, p_alpha, sec.p_pass};
}

double mu_fluctuation(const Discretization& disc, std::uint64_t n_total, std::uint64_t m_pe,
                      double eps_prime) {
    if (!(m_pe > 0 && m_pe < n_total))
        throw std::domain_error("mu_fluctuation: need 0 < m_pe < n_total");
    if (!(eps_prime > 0.0 && eps_prime < 1.0))
        throw std::domain_error("mu_fluctuation: eps_prime must lie in (0,1)");
    const double big_n = static_cast<double>(n_total);
    const double m = static_cast<double>(m_pe);
    const double n = static_cast<double>(n_total - m_pe);
    // N(m+1)/(n m^2), factored to stay well-conditioned for N ~ 1e9.
    const double ratio = (big_n / n) * ((m + 1.0) / m) / m;
    return disc.bin_count() * std::sqrt(ratio * std::log(1.0 / eps_prime));
}

double hmax_bound(const MaxEntropyInput& inp) {
    if (!(inp.d0 >= 0.0) || !(inp.mu >= 0.0))
        throw std::domain_error("hmax_bound: d0 and mu must be >= 0");
    if (inp.n_key < 1)
        throw std::domain_error("hmax_bound: n_key must be >= 1");
    const double n = static_cast<double>(inp.n_key);
    if (inp.mode == ModulationMode::Single)
        return n * mathfn::log2_gamma_ldf(inp.d0 + inp.mu);
    if (inp.mu != 0.0)
        throw std::domain_error("hmax_bound: mu must be 0 in double mode");
    if (inp.apply_gamma)
        return n * mathfn::log2_gamma_ldf(inp.d0);
    // Literal no-gamma form, kept for reproduction studies.
    return n * std::log2(inp.d0);
}

double hmin_bound(std::uint64_t n_key, const Discretization& disc, double hmax,
                  bool use_prolate_correction) {
    if (n_key == 0)
        return 0.0;
    const double c =
        mathfn::overlap_c({.delta = disc.delta(), .use_prolate_correction = use_prolate_correction});
    return -static_cast<double>(n_key) * std::log2(c) - hmax;
}

double l1_distance(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("l1_distance: length mismatch");
    if (a.empty())
        throw std::invalid_argument("l1_distance: sequences must be non-empty");
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += (a[i] >= b[i]) ? (a[i] - b[i]) : (b[i] - a[i]);
    return static_cast<double>(sum) / static_cast<double>(a.size());
}

double predicted_distance_bins(double sigma_u, double sigma_v, double cov_uv,
                               const Discretization& disc) {
    if (!(sigma_u > 0.0) || !(sigma_v > 0.0))
        throw std::domain_error("predicted_distance_bins: sigmas must be > 0");
    double rho = cov_uv / (sigma_u * sigma_v);
    rho = std::clamp(rho, -1.0, 1.0);
    const double delta = disc.delta();
    const std::int64_t nbins = std::int64_t{1} << disc.bits;
    const double span = 9.0 * std::max(sigma_u, sigma_v);

    // Terms are symmetric under e -> -e, so walk the non-negative edges and
    // double everything except the center edge at 0.
    double total = 0.0;
    const std::int64_t j_center = nbins / 2; // edge at exactly 0
    {
        // 1 - 2 Phi2(0,0;rho) = 1/2 - asin(rho)/pi
        total += 0.5 - std::asin(rho) / 3.141592653589793238462643383279502884;
    }
    for (std::int64_t j = j_center + 1; j < nbins; ++j) {
        const double e = -disc.alpha + static_cast<double>(j) * delta;
        if (e > span)
            break;
        const double h = e / sigma_u;
        const double k = e / sigma_v;
        const double term =
            mathfn::norm_cdf(h) + mathfn::norm_cdf(k) - 2.0 * mathfn::bivariate_normal_cdf(h, k, rho);
        total += 2.0 * std::max(0.0, term);
    }
    return total;
}

namespace {

double fast_distance_bins(double v_diff, const Discretization& disc) {
    return mathfn::expected_abs_gaussian(v_diff) / disc.delta() + 1.0;
}

} // namespace

double predicted_d0(const ProtocolParams& params, const ChannelModel& ch,
                    const Discretization& disc, bool rescale, bool fast) {
    const double r = rescale ? std::sqrt(ch.tau) : 1.0;
    const auto nv = channel::noise_variance(params, ch);
    if (fast) {
        const double v_diff = (std::sqrt(ch.tau) - r) * (std::sqrt(ch.tau) - r) * params.v_m + nv.v_n;
        return fast_distance_bins(v_diff, disc);
    }
    const double sigma_u = r * std::sqrt(params.v_m);
    const double sigma_v = std::sqrt(channel::bob_variance(params, ch));
    const double cov = r * std::sqrt(ch.tau) * params.v_m;
    return predicted_distance_bins(sigma_u, sigma_v, cov, disc);
}

DoubleModeDistances predicted_d0_double(const ProtocolParams& params, const ChannelModel& ch,
                                        const Discretization& disc, bool rescale, bool fast) {
    if (params.mode != ModulationMode::Double)
        throw std::logic_error("predicted_d0_double: params.mode is not double");
    const double r = rescale ? std::sqrt(ch.tau) : 1.0;
    const auto nv_star = channel::noise_variance_double(params, ch);
    DoubleModeDistances d;
    if (fast) {
        const double sq = std::sqrt(ch.tau);
        const double v_m2b = (sq - r) * (sq - r) * params.v_m2 + nv_star.v_n;
        const double v_m1m2 = r * r * (params.v_m1 + params.v_m2);
        d.d_m2_b = fast_distance_bins(v_m2b, disc);
        d.d_m1_m2 = fast_distance_bins(v_m1m2, disc);
        return d;
    }
    const double v_b = channel::bob_variance(params, ch);
    d.d_m2_b = predicted_distance_bins(r * std::sqrt(params.v_m2), std::sqrt(v_b),
                                       r * std::sqrt(ch.tau) * params.v_m2, disc);
    d.d_m1_m2 =
        predicted_distance_bins(r * std::sqrt(params.v_m1), r * std::sqrt(params.v_m2), 0.0, disc);
    return d;
}

} // namespace cvqkd::bounds
