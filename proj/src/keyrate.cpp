#include "cvqkd/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cvqkd/channel.hpp"
#include "cvqkd/csvio.hpp"
#include "cvqkd/mathfn.hpp"
#include "cvqkd/parallel.hpp"

namespace cvqkd::keyrate {

double mutual_information(const ProtocolParams& params, const ChannelModel& ch) {
    const double v_n = channel::noise_variance(params, ch).v_n;
    return 0.5 * std::log2(1.0 + ch.tau * params.key_modulation_variance() / v_n);
}

double mutual_information_at(double tau, double v_eps, const ProtocolParams& params) {
    const double v_n = 1.0 + v_eps + tau * (params.v_s - 1.0);
    return 0.5 * std::log2(1.0 + tau * params.key_modulation_variance() / v_n);
}

LeakageResult leakage(const ProtocolParams& params, const ChannelModel& ch,
                      const Discretization& disc, const est::EstimationReport* finite) {
    LeakageResult res;
    const double entropy_var = params.direction == Direction::DR
                                   ? params.key_modulation_variance()
                                   : channel::bob_variance(params, ch);
    res.entropy = mathfn::discrete_gaussian_entropy(entropy_var, disc.alpha, disc.delta());
    res.mutual_info = finite ? mutual_information_at(finite->tau_low, finite->v_eps_up, params)
                             : mutual_information(params, ch);
    res.per_symbol = res.entropy - params.beta * res.mutual_info;
    res.total = res.per_symbol * static_cast<double>(params.n_key());
    return res;
}

est::EstimationReport expected_report(const ProtocolParams& params, const ChannelModel& ch,
                                      const SecurityBudget& sec) {
    est::EstimationReport rep;
    rep.mode = params.mode;
    rep.m_used = params.mode == ModulationMode::Single ? params.m_pe : params.n_total;
    rep.z_score = sec.z_pe;
    const double v_mod = params.mode == ModulationMode::Single ? params.v_m : params.v_m2;
    rep.c_mb_hat = std::sqrt(ch.tau) * v_mod;
    rep.tau_hat = ch.tau;
    rep.sigma_tau = std::sqrt(est::tau_variance(ch.tau, params, ch, rep.m_used, params.mode));
    rep.tau_low = est::tau_lower_bound(rep.tau_hat, rep.sigma_tau, sec.z_pe, &rep.tau_low_clamped);
    rep.v_eps_hat = ch.tau * ch.excess_noise;
    rep.sigma_veps = std::sqrt(est::excess_variance(params, ch, rep.m_used, params.mode));
    rep.v_eps_up =
        est::excess_upper_bound(rep.v_eps_hat, rep.sigma_veps, sec.z_pe, &rep.v_eps_up_clamped);
    return rep;
}

KeyRateReport key_length(const Config& cfg, const est::EstimationReport* finite) {
    validate(cfg);
    const auto& p = cfg.protocol;
    const auto& ch = cfg.channel;
    const auto& disc = cfg.disc;
    const auto& sec = cfg.security;
    const auto& opt = cfg.bounds;

    KeyRateReport rep;
    rep.protocol = p;
    rep.channel = ch;
    rep.disc = disc;
    rep.security = sec;
    rep.options = opt;
    rep.distance_km = cfg.distance_km;
    rep.n_key = p.n_key();
    rep.finite_estimation = finite != nullptr;
    rep.tau_used = finite ? finite->tau_low : ch.tau;
    rep.v_eps_used = finite ? finite->v_eps_up : ch.tau * ch.excess_noise;
    rep.c_delta = mathfn::overlap_c({disc.delta(), opt.use_prolate_correction});
    rep.p_alpha = mathfn::gaussian_tail(disc.alpha, channel::bob_variance(p, ch));

    const double n_total = static_cast<double>(p.n_total);
    try {
        const auto smoothing = bounds::eps_prime(sec, rep.p_alpha, rep.n_key);
        rep.eps_prime = smoothing.eps_prime;

        bounds::MaxEntropyInput mei;
        mei.n_key = rep.n_key;
        mei.mode = p.mode;
        mei.apply_gamma = p.mode == ModulationMode::Single || opt.gamma_in_double_mode;
        if (p.mode == ModulationMode::Single) {
            rep.mu_bins = bounds::mu_fluctuation(disc, p.n_total, p.m_pe, smoothing.eps_prime);
            rep.d0_bins =
                opt.d0_margin * bounds::predicted_d0(p, ch, disc, opt.rescale_alice, opt.fast_d0);
        } else {
            rep.mu_bins = 0.0;
            rep.d0_bins = opt.d0_margin *
                          bounds::predicted_d0_double(p, ch, disc, opt.rescale_alice, opt.fast_d0)
                              .total();
        }
        mei.d0 = rep.d0_bins;
        mei.mu = rep.mu_bins;

        rep.h_max = bounds::hmax_bound(mei);
        rep.h_min = bounds::hmin_bound(rep.n_key, disc, rep.h_max, opt.use_prolate_correction);

        const auto leak = leakage(p, ch, disc, finite);
        rep.leak_ec = leak.total;
        rep.leak_per_symbol = leak.per_symbol;
        rep.mutual_info = leak.mutual_info;
        rep.entropy_key_var = leak.entropy;

        const double eps1 = sec.eps1_effective();
        const double correction = std::log2(1.0 / (eps1 * eps1 * sec.eps_c));
        rep.ell_low = rep.h_min - rep.leak_ec - correction + 2.0;
        if (rep.ell_low > 0.0) {
            rep.rate = rep.ell_low / n_total;
        } else {
            rep.rate = 0.0;
            rep.abort_reason = "ell_low_nonpositive";
        }
    } catch (const bounds::BudgetExhausted& e) {
        rep.rate = 0.0;
        rep.ell_low = 0.0;
        rep.eps_prime = 0.0;
        rep.abort_reason = "eps_prime_exhausted";
    }
    return rep;
}

KeyRateReport key_length_finite(const Config& cfg) {
    const auto rep = expected_report(cfg.protocol, cfg.channel, cfg.security);
    return key_length(cfg, &rep);
}

std::string to_string(SweepAxis a) {
    return a == SweepAxis::DistanceKm ? "distance_km" : "block_size";
}

bool SweepResult::all_zero() const {
    return std::all_of(reports.begin(), reports.end(),
                       [](const KeyRateReport& r) { return r.rate <= 0.0; });
}

SweepResult sweep(const Config& cfg, SweepAxis axis, const std::vector<double>& grid,
                  bool finite_estimation, int workers) {
    if (grid.empty())
        throw std::invalid_argument("sweep: empty grid");
    SweepResult result;
    result.axis = axis;
    result.axis_values = grid;
    result.reports.resize(grid.size());

    // Keep the PE fraction fixed when the block size is swept.
    const double m_frac = static_cast<double>(cfg.protocol.m_pe) /
                          static_cast<double>(cfg.protocol.n_total);

    parallel_for(grid.size(), workers, [&](std::size_t i) {
        Config point = cfg;
        if (axis == SweepAxis::DistanceKm) {
            point.distance_km = grid[i];
            point.channel.tau = tau_from_distance(grid[i], cfg.channel.loss_db_per_km);
        } else {
            const auto n = static_cast<std::uint64_t>(grid[i]);
            point.protocol.n_total = n;
            if (point.protocol.mode == ModulationMode::Single) {
                auto m = static_cast<std::uint64_t>(std::llround(m_frac * static_cast<double>(n)));
                m = std::clamp<std::uint64_t>(m, 1, n - 1);
                point.protocol.m_pe = m;
            } else {
                point.protocol.m_pe = n / 2; // unused by double mode, kept consistent
            }
        }
        result.reports[i] =
            finite_estimation ? key_length_finite(point) : key_length(point, nullptr);
    });
    return result;
}

std::string SweepResult::to_csv() const {
    std::ostringstream os;
    os << KeyRateReport::csv_header() << '\n';
    for (std::size_t i = 0; i < reports.size(); ++i)
        os << reports[i].csv_row(axis_values[i], to_string(axis)) << '\n';
    return os.str();
}

std::string to_string(FreeParameter p) {
    switch (p) {
    case FreeParameter::MPeFraction:
        return "m_fraction";
    case FreeParameter::VM2Fraction:
        return "v_m2_fraction";
    case FreeParameter::Bits:
        return "bits";
    case FreeParameter::VM:
        return "v_m";
    }
    return "?";
}

FreeParameter free_parameter_from_string(const std::string& s) {
    if (s == "m_fraction")
        return FreeParameter::MPeFraction;
    if (s == "v_m2_fraction")
        return FreeParameter::VM2Fraction;
    if (s == "bits")
        return FreeParameter::Bits;
    if (s == "v_m")
        return FreeParameter::VM;
    throw std::invalid_argument("unknown free parameter '" + s +
                                "' (expected m_fraction, v_m2_fraction, bits or v_m)");
}

namespace {

struct ParamRange {
    double lo, hi;
    bool log_scale;
    bool integer;
};

ParamRange range_of(FreeParameter p) {
    switch (p) {
    case FreeParameter::MPeFraction:
        return {0.02, 0.98, false, false};
    case FreeParameter::VM2Fraction:
        return {0.02, 0.98, false, false};
    case FreeParameter::Bits:
        return {4.0, 16.0, false, true};
    case FreeParameter::VM:
        return {0.5, 100.0, true, false};
    }
    return {0.0, 1.0, false, false};
}

void apply_value(Config& cfg, FreeParameter p, double v) {
    switch (p) {
    case FreeParameter::MPeFraction: {
        const auto n = cfg.protocol.n_total;
        auto m = static_cast<std::uint64_t>(std::llround(v * static_cast<double>(n)));
        cfg.protocol.m_pe = std::clamp<std::uint64_t>(m, 1, n - 1);
        break;
    }
    case FreeParameter::VM2Fraction:
        cfg.protocol.v_m2 = v * cfg.protocol.v_m;
        cfg.protocol.v_m1 = cfg.protocol.v_m - cfg.protocol.v_m2;
        break;
    case FreeParameter::Bits:
        cfg.disc.bits = static_cast<int>(std::lround(v));
        break;
    case FreeParameter::VM: {
        cfg.protocol.v_m = v;
        if (cfg.protocol.mode == ModulationMode::Double) {
            // keep the configured split fraction
            const double f = cfg.protocol.v_m1 + cfg.protocol.v_m2 > 0.0
                                 ? cfg.protocol.v_m2 / (cfg.protocol.v_m1 + cfg.protocol.v_m2)
                                 : 0.5;
            cfg.protocol.v_m2 = f * v;
            cfg.protocol.v_m1 = v - cfg.protocol.v_m2;
        }
        break;
    }
    }
}

std::vector<double> grid_of(const ParamRange& r, double lo, double hi, int points) {
    std::vector<double> g;
    if (r.integer) {
        const int a = static_cast<int>(std::ceil(lo));
        const int b = static_cast<int>(std::floor(hi));
        for (int v = a; v <= b; ++v)
            g.push_back(v);
        return g;
    }
    for (int i = 0; i < points; ++i) {
        const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
        g.push_back(r.log_scale ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t);
    }
    return g;
}

} // namespace

OptimizeResult optimize(const Config& cfg, const std::vector<FreeParameter>& free,
                        bool finite_estimation, int workers) {
    if (free.empty())
        throw std::invalid_argument("optimize: no free parameters given");
    constexpr int kPoints = 17;
    constexpr int kPasses = 3; // full-range scan plus two refinements

    OptimizeResult result;
    std::vector<double> current(free.size());
    std::vector<std::pair<double, double>> spans(free.size());
    for (std::size_t i = 0; i < free.size(); ++i) {
        const auto r = range_of(free[i]);
        spans[i] = {r.lo, r.hi};
        current[i] = r.integer ? std::lround(0.5 * (r.lo + r.hi)) : 0.5 * (r.lo + r.hi);
    }

    Config base = cfg;
    double best_rate = -1.0;

    const auto evaluate = [&](const std::vector<double>& values) {
        Config point = base;
        for (std::size_t i = 0; i < free.size(); ++i)
            apply_value(point, free[i], values[i]);
        KeyRateReport rep;
        try {
            rep = finite_estimation ? key_length_finite(point) : key_length(point, nullptr);
        } catch (const ValidationError& e) {
            rep.rate = 0.0;
            rep.abort_reason = "invalid_point";
        }
        return rep;
    };

    // Seed with the midpoint so the incumbent is always defined.
    {
        auto rep = evaluate(current);
        result.trace.push_back({current, rep.rate, rep.abort_reason});
        best_rate = rep.rate;
        result.best = rep;
        result.argmax = current;
    }

    for (int pass = 0; pass < kPasses; ++pass) {
        for (std::size_t pi = 0; pi < free.size(); ++pi) {
            const auto r = range_of(free[pi]);
            double lo = spans[pi].first, hi = spans[pi].second;
            if (pass > 0) {
                // shrink around the incumbent
                const double width = r.log_scale
                                         ? std::pow(spans[pi].second / spans[pi].first,
                                                    1.0 / std::pow(4.0, pass))
                                         : (spans[pi].second - spans[pi].first) /
                                               std::pow(4.0, pass);
                if (r.log_scale) {
                    lo = std::max(spans[pi].first, result.argmax[pi] / width);
                    hi = std::min(spans[pi].second, result.argmax[pi] * width);
                } else {
                    lo = std::max(spans[pi].first, result.argmax[pi] - 0.5 * width);
                    hi = std::min(spans[pi].second, result.argmax[pi] + 0.5 * width);
                }
            }
            const auto grid = grid_of(r, lo, hi, kPoints);
            if (grid.empty())
                continue;

            std::vector<KeyRateReport> reps(grid.size());
            std::vector<std::vector<double>> vals(grid.size());
            parallel_for(grid.size(), workers, [&](std::size_t gi) {
                auto v = result.argmax;
                v[pi] = grid[gi];
                vals[gi] = v;
                reps[gi] = evaluate(v);
            });
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                result.trace.push_back({vals[gi], reps[gi].rate, reps[gi].abort_reason});
                if (reps[gi].rate > best_rate) {
                    best_rate = reps[gi].rate;
                    result.best = reps[gi];
                    result.argmax = vals[gi];
                }
            }
        }
    }
    return result;
}

nlohmann::ordered_json KeyRateReport::to_json() const {
    nlohmann::ordered_json j{{"rate", rate},
                             {"ell_low", ell_low},
                             {"h_min", h_min},
                             {"h_max", h_max},
                             {"leak_ec", leak_ec},
                             {"n_key", n_key},
                             {"abort_reason", abort_reason},
                             {"d0_bins", d0_bins},
                             {"mu_bins", mu_bins},
                             {"c_delta", c_delta},
                             {"eps_prime", eps_prime},
                             {"p_alpha", p_alpha},
                             {"mutual_info", mutual_info},
                             {"leak_per_symbol", leak_per_symbol},
                             {"entropy_key_var", entropy_key_var},
                             {"tau_used", tau_used},
                             {"v_eps_used", v_eps_used},
                             {"finite_estimation", finite_estimation}};
    Config snap{protocol, disc, security, channel, options, distance_km};
    j["inputs"] = config_to_json(snap);
    return j;
}

std::string KeyRateReport::csv_header() {
    return "axis,axis_value,direction,mode,estimation,rate,ell_low,h_min,h_max,leak_ec,n_total,"
           "m_pe,n_key,tau,excess_noise,distance_km,v_s,v_anti,v_m,v_m1,v_m2,beta,alpha,bits,"
           "delta,c_delta,d0_bins,mu_bins,eps_prime,p_alpha,mutual_info,leak_per_symbol,"
           "entropy_key_var,tau_used,v_eps_used,eps_s,eps_c,eps_1,z_pe,p_pass,rescale_alice,"
           "gamma_in_double_mode,d0_margin,abort_reason";
}

std::string KeyRateReport::csv_row(double axis_value, const std::string& axis_name) const {
    std::ostringstream os;
    const char c = ',';
    os << axis_name << c << io::fmt(axis_value) << c << cvqkd::to_string(protocol.direction) << c
       << cvqkd::to_string(protocol.mode) << c << (finite_estimation ? "finite" : "ideal") << c
       << io::fmt(rate) << c << io::fmt(ell_low) << c << io::fmt(h_min) << c << io::fmt(h_max)
       << c << io::fmt(leak_ec) << c << protocol.n_total << c << protocol.m_pe << c << n_key << c
       << io::fmt(channel.tau) << c << io::fmt(channel.excess_noise) << c
       << (distance_km ? io::fmt(*distance_km) : "") << c << io::fmt(protocol.v_s) << c
       << io::fmt(protocol.v_anti) << c << io::fmt(protocol.v_m) << c << io::fmt(protocol.v_m1)
       << c << io::fmt(protocol.v_m2) << c << io::fmt(protocol.beta) << c << io::fmt(disc.alpha)
       << c << disc.bits << c << io::fmt(disc.delta()) << c << io::fmt(c_delta) << c
       << io::fmt(d0_bins) << c << io::fmt(mu_bins) << c << io::fmt(eps_prime) << c
       << io::fmt(p_alpha) << c << io::fmt(mutual_info) << c << io::fmt(leak_per_symbol) << c
       << io::fmt(entropy_key_var) << c << io::fmt(tau_used) << c << io::fmt(v_eps_used) << c
       << io::fmt(security.eps_s) << c << io::fmt(security.eps_c) << c
       << io::fmt(security.eps1_effective()) << c << io::fmt(security.z_pe) << c
       << io::fmt(security.p_pass) << c << (options.rescale_alice ? 1 : 0) << c
       << (options.gamma_in_double_mode ? 1 : 0) << c << io::fmt(options.d0_margin) << c
       << abort_reason;
    return os.str();
}

} // namespace cvqkd::keyrate
