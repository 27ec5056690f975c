#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cvqkd/params.hpp"

namespace cvqkd::channel {

// A batch of real quadrature samples in shot-noise units.
struct QuadratureBatch {
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

struct NoiseVariances {
    double v_n = 0.0;   // total aggregated noise variance at Bob
    double v_eps = 0.0; // tau * excess_noise
};

/// V_N = 1 + tau*eps + tau*(V_S - 1); also exposes V_eps = tau*eps.
NoiseVariances noise_variance(const ProtocolParams& params, const ChannelModel& ch);

/// Double-mode aggregated noise V_N* = tau*(V_S + V_M1 - 1) + 1 + V_eps
/// (x_M2 is the parameter-estimation signal, so x_M1 joins the noise).
/// Throws std::logic_error unless params.mode is Double.
NoiseVariances noise_variance_double(const ProtocolParams& params, const ChannelModel& ch);

/// V_B = tau*V_M + V_N.
double bob_variance(const ProtocolParams& params, const ChannelModel& ch);

/// Applies the Gaussian-equivalent channel: x_B_i = sqrt(tau)*x_a_i + g_i with
/// g ~ N(0, (1-tau) + tau*eps). Sample i is a pure function of (seed, i), so
/// batches may be partitioned across workers freely. tau = 1, eps = 0 returns
/// the input bit-exactly.
QuadratureBatch transmit(const QuadratureBatch& x_a, const ChannelModel& ch, std::uint64_t seed);

// Bin indices after ADC discretization, plus the out-of-range tally that feeds
// the empirical p_alpha.
struct DiscretizedBatch {
    std::vector<std::uint32_t> bins;
    std::uint64_t out_of_range = 0;

    std::size_t size() const { return bins.size(); }
};

/// Maps each value to its bin index k in {0,...,2^L-1}. Interior bins are the
/// half-open intervals (-alpha + k*delta, -alpha + (k+1)*delta]; values <= -alpha
/// clamp to bin 0 and values > alpha clamp to bin 2^L-1, both counted as
/// out-of-range (x = alpha itself lies in the last interior bin).
DiscretizedBatch discretize(const QuadratureBatch& x, const Discretization& disc);

std::uint32_t discretize_value(double value, const Discretization& disc, bool* out_of_range = nullptr);

} // namespace cvqkd::channel
