#include "cvqkd/estimation.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cvqkd/csvio.hpp"

namespace cvqkd::est {

double estimate_covariance(std::span<const double> m_data, std::span<const double> b_data) {
    if (m_data.size() != b_data.size())
        throw std::invalid_argument("estimate_covariance: length mismatch");
    if (m_data.size() < 2)
        throw std::invalid_argument("estimate_covariance: need at least 2 samples");
    double sum = 0.0;
    for (std::size_t i = 0; i < m_data.size(); ++i)
        sum += m_data[i] * b_data[i];
    return sum / static_cast<double>(m_data.size());
}

double estimate_tau(double c_mb_hat, double v_m) {
    if (!(v_m > 0.0))
        throw std::domain_error("estimate_tau: v_m must be > 0");
    const double r = c_mb_hat / v_m;
    return r * r;
}

double tau_variance(double tau, const ProtocolParams& params, const ChannelModel& ch,
                    std::uint64_t m, ModulationMode mode) {
    if (m < 1)
        throw std::domain_error("tau_variance: m must be >= 1");
    ChannelModel at = ch;
    at.tau = tau;
    if (mode == ModulationMode::Single) {
        const double v_n = channel::noise_variance(params, at).v_n;
        return (4.0 * tau * tau / static_cast<double>(m)) * (2.0 + v_n / (tau * params.v_m));
    }
    const double v_n_star = channel::noise_variance_double(params, at).v_n;
    return (4.0 * tau * tau / static_cast<double>(m)) * (2.0 + v_n_star / (tau * params.v_m2));
}

double tau_lower_bound(double tau_hat, double sigma_tau, double z, bool* clamped) {
    if (!(sigma_tau >= 0.0))
        throw std::domain_error("tau_lower_bound: sigma_tau must be >= 0");
    const double raw = tau_hat - z * sigma_tau;
    if (clamped)
        *clamped = raw < 0.0;
    return std::max(raw, 0.0);
}

double estimate_excess(std::span<const double> m_data, std::span<const double> b_data,
                       double tau_hat, double v_s, double v_m1_known, bool* negative) {
    if (m_data.size() != b_data.size())
        throw std::invalid_argument("estimate_excess: length mismatch");
    if (m_data.empty())
        throw std::invalid_argument("estimate_excess: empty data");
    if (!(tau_hat >= 0.0))
        throw std::domain_error("estimate_excess: tau_hat must be >= 0");
    const double sq = std::sqrt(tau_hat);
    double sum = 0.0;
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        const double r = b_data[i] - sq * m_data[i];
        sum += r * r;
    }
    const double value = sum / static_cast<double>(m_data.size()) -
                         tau_hat * (v_s + v_m1_known - 1.0) - 1.0;
    if (negative)
        *negative = value < 0.0;
    return value;
}

double excess_variance(const ProtocolParams& params, const ChannelModel& ch, std::uint64_t m,
                       ModulationMode mode) {
    if (m < 1)
        throw std::domain_error("excess_variance: m must be >= 1");
    const double s2_tau = tau_variance(ch.tau, params, ch, m, mode);
    if (mode == ModulationMode::Single) {
        const double v_n = channel::noise_variance(params, ch).v_n;
        const double s = 1.0 - params.v_s;
        return (2.0 / static_cast<double>(m)) * v_n * v_n + s2_tau * s * s;
    }
    const double v_n_star = channel::noise_variance_double(params, ch).v_n;
    const double s = params.v_m1 + params.v_s - 1.0;
    return (2.0 / static_cast<double>(m)) * v_n_star * v_n_star + s2_tau * s * s;
}

double excess_upper_bound(double v_eps_hat, double sigma_veps, double z, bool* clamped) {
    if (!(sigma_veps >= 0.0))
        throw std::domain_error("excess_upper_bound: sigma_veps must be >= 0");
    const double raw = v_eps_hat + z * sigma_veps;
    if (clamped)
        *clamped = raw < 0.0;
    return std::max(raw, 0.0);
}

EstimationReport run_estimation(const SampleRecords& data, const ProtocolParams& params,
                                const SecurityBudget& sec) {
    const bool dbl = data.mode == ModulationMode::Double;
    const auto& alice = dbl ? data.m2 : data.m1;
    if (alice.size() != data.b.size())
        throw std::invalid_argument("run_estimation: Alice/Bob length mismatch");
    if (dbl && data.m1.size() != data.b.size())
        throw std::invalid_argument("run_estimation: m1 length mismatch in double mode");

    EstimationReport rep;
    rep.mode = data.mode;
    rep.m_used = alice.size();
    rep.z_score = sec.z_pe;

    const double v_mod = dbl ? params.v_m2 : params.v_m;
    const double v_m1_known = dbl ? params.v_m1 : 0.0;

    rep.c_mb_hat = estimate_covariance(alice.values, data.b.values);
    rep.tau_hat = estimate_tau(rep.c_mb_hat, v_mod);
    rep.degenerate = rep.c_mb_hat == 0.0;
    rep.v_eps_hat = estimate_excess(alice.values, data.b.values, rep.tau_hat, params.v_s,
                                    v_m1_known, &rep.v_eps_negative);

    // Plug-in estimates inside the variance formulas.
    if (rep.tau_hat > 0.0) {
        ChannelModel plug;
        plug.tau = rep.tau_hat;
        plug.excess_noise = std::max(rep.v_eps_hat, 0.0) / rep.tau_hat;
        rep.sigma_tau = std::sqrt(tau_variance(rep.tau_hat, params, plug, rep.m_used, data.mode));
        rep.sigma_veps = std::sqrt(excess_variance(params, plug, rep.m_used, data.mode));
    } else {
        rep.sigma_tau = 0.0;
        rep.sigma_veps = 0.0;
    }
    rep.tau_low = tau_lower_bound(rep.tau_hat, rep.sigma_tau, sec.z_pe, &rep.tau_low_clamped);
    rep.v_eps_up = excess_upper_bound(rep.v_eps_hat, rep.sigma_veps, sec.z_pe,
                                      &rep.v_eps_up_clamped);
    return rep;
}

nlohmann::ordered_json EstimationReport::to_json() const {
    return nlohmann::ordered_json{{"mode", to_string(mode)},
                                  {"m_used", m_used},
                                  {"c_mb_hat", c_mb_hat},
                                  {"tau_hat", tau_hat},
                                  {"sigma_tau", sigma_tau},
                                  {"tau_low", tau_low},
                                  {"tau_low_clamped", tau_low_clamped},
                                  {"v_eps_hat", v_eps_hat},
                                  {"v_eps_negative", v_eps_negative},
                                  {"sigma_veps", sigma_veps},
                                  {"v_eps_up", v_eps_up},
                                  {"v_eps_up_clamped", v_eps_up_clamped},
                                  {"z_score", z_score},
                                  {"degenerate", degenerate}};
}

std::string EstimationReport::csv_header() {
    return "mode,m_used,c_mb_hat,tau_hat,sigma_tau,tau_low,tau_low_clamped,"
           "v_eps_hat,v_eps_negative,sigma_veps,v_eps_up,v_eps_up_clamped,z_score,degenerate";
}

std::string EstimationReport::csv_row() const {
    std::ostringstream os;
    os << to_string(mode) << ',' << m_used << ',' << io::fmt(c_mb_hat) << ',' << io::fmt(tau_hat)
       << ',' << io::fmt(sigma_tau) << ',' << io::fmt(tau_low) << ',' << (tau_low_clamped ? 1 : 0)
       << ',' << io::fmt(v_eps_hat) << ',' << (v_eps_negative ? 1 : 0) << ',' << io::fmt(sigma_veps)
       << ',' << io::fmt(v_eps_up) << ',' << (v_eps_up_clamped ? 1 : 0) << ',' << io::fmt(z_score)
       << ',' << (degenerate ? 1 : 0);
    return os.str();
}

} // namespace cvqkd::est
