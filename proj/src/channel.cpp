#include "cvqkd/channel.hpp"

#include <cmath>
#include <stdexcept>

#include "cvqkd/rng.hpp"

namespace cvqkd::channel {

NoiseVariances noise_variance(const ProtocolParams& params, const ChannelModel& ch) {
    NoiseVariances nv;
    nv.v_eps = ch.tau * ch.excess_noise;
    nv.v_n = 1.0 + nv.v_eps + ch.tau * (params.v_s - 1.0);
    return nv;
}

NoiseVariances noise_variance_double(const ProtocolParams& params, const ChannelModel& ch) {
    if (params.mode != ModulationMode::Double)
        throw std::logic_error("noise_variance_double: params.mode is not double");
    NoiseVariances nv;
    nv.v_eps = ch.tau * ch.excess_noise;
    nv.v_n = ch.tau * (params.v_s + params.v_m1 - 1.0) + 1.0 + nv.v_eps;
    return nv;
}

double bob_variance(const ProtocolParams& params, const ChannelModel& ch) {
    return ch.tau * params.v_m + noise_variance(params, ch).v_n;
}

QuadratureBatch transmit(const QuadratureBatch& x_a, const ChannelModel& ch, std::uint64_t seed) {
    if (!(ch.tau > 0.0 && ch.tau <= 1.0))
        throw std::domain_error("transmit: tau must lie in (0,1]");
    const double g_var = (1.0 - ch.tau) + ch.tau * ch.excess_noise;
    QuadratureBatch out;
    out.values.resize(x_a.values.size());
    if (g_var == 0.0) {
        const double sq = std::sqrt(ch.tau);
        for (std::size_t i = 0; i < x_a.values.size(); ++i)
            out.values[i] = (ch.tau == 1.0) ? x_a.values[i] : sq * x_a.values[i];
        return out;
    }
    const double sq = std::sqrt(ch.tau);
    const double g_sd = std::sqrt(g_var);
    const rng::NormalStream noise(seed, rng::kPurposeChannelNoise);
    for (std::size_t i = 0; i < x_a.values.size(); ++i)
        out.values[i] = sq * x_a.values[i] + g_sd * noise(i);
    return out;
}

std::uint32_t discretize_value(double value, const Discretization& disc, bool* out_of_range) {
    if (!std::isfinite(value))
        throw std::invalid_argument("discretize: values must be finite");
    const double delta = disc.delta();
    const auto top = static_cast<std::int64_t>((std::uint64_t{1} << disc.bits) - 1);
    // k = ceil((x+alpha)/delta) - 1 maps the half-open right-closed bins;
    // comparisons run on the scaled value so huge inputs never reach the cast.
    const double t = (value + disc.alpha) / delta;
    std::int64_t k;
    bool oor = false;
    if (!(t > 0.0)) {
        k = 0;
        oor = true;
    } else if (t > static_cast<double>(top) + 1.0) {
        k = top;
        oor = true;
    } else {
        k = static_cast<std::int64_t>(std::ceil(t)) - 1;
    }
    if (out_of_range)
        *out_of_range = oor;
    return static_cast<std::uint32_t>(k);
}

DiscretizedBatch discretize(const QuadratureBatch& x, const Discretization& disc) {
    DiscretizedBatch out;
    out.bins.resize(x.values.size());
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        bool oor = false;
        out.bins[i] = discretize_value(x.values[i], disc, &oor);
        out.out_of_range += oor ? 1 : 0;
    }
    return out;
}

} // namespace cvqkd::channel
