#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>

#include "cvqkd/params.hpp"

namespace cvqkd::bounds {

// Raised when the smoothing parameter eps' of the max-entropy estimate is
// non-positive: alpha too small or the block too large for eps_s.
class BudgetExhausted : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SmoothingReport {
    double eps_prime = 0.0;
    double p_alpha = 0.0;
    double p_pass = 1.0;
};

/// eps' = eps_s/(4 p_pass) - 2 sqrt(2 [1-(1-p_alpha)^n]) / sqrt(p_pass),
/// with 1-(1-p)^n evaluated via expm1/log1p so that n*p ~ 1e-21 survives.
/// Throws BudgetExhausted when eps' <= 0.
SmoothingReport eps_prime(const SecurityBudget& sec, double p_alpha, std::uint64_t n_key);

/// Statistical fluctuation mu = (2 alpha/delta) sqrt(N(m+1)/(n m^2) ln(1/eps'))
/// with n = N - m, in bin units.
double mu_fluctuation(const Discretization& disc, std::uint64_t n_total, std::uint64_t m_pe,
                      double eps_prime);

struct MaxEntropyInput {
    double d0 = 0.0;       // distance threshold, bin units (total distance in double mode)
    double mu = 0.0;       // statistical fluctuation, bin units (must be 0 in double mode)
    std::uint64_t n_key = 0;
    ModulationMode mode = ModulationMode::Single;
    bool apply_gamma = true; // false reproduces the literal no-gamma double-mode form
};

/// Smooth max-entropy upper bound in bits:
/// single mode n*log2 gamma(d0+mu); double mode N*log2 gamma(d_total)
/// (or N*log2(d_total) with apply_gamma off).
double hmax_bound(const MaxEntropyInput& inp);

/// Smooth min-entropy lower bound -n log2 c(delta) - hmax, in bits.
double hmin_bound(std::uint64_t n_key, const Discretization& disc, double hmax,
                  bool use_prolate_correction = false);

/// Mean L1 distance (1/m) sum |a_i - b_i| on bin indices; the accumulation is
/// an exact integer sum, so any evaluation order gives the same result.
double l1_distance(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Expected L1 distance in bin units between the discretizations of two
/// jointly Gaussian zero-mean variables, by the exact edge decomposition
/// E|bin(u)-bin(v)| = sum_e [P(u<=e) + P(v<=e) - 2 P(u<=e, v<=e)]
/// over the interior bin edges (a deterministic quadrature over the joint
/// Gaussian on the bin grid).
double predicted_distance_bins(double sigma_u, double sigma_v, double cov_uv,
                               const Discretization& disc);

/// Model-side threshold d0 for the single-mode Alice-vs-Bob distance.
/// rescale compares sqrt(tau)*x_M against x_B (the default); fast replaces the
/// quadrature by expected_abs_gaussian(V_D)/delta + 1.
double predicted_d0(const ProtocolParams& params, const ChannelModel& ch,
                    const Discretization& disc, bool rescale, bool fast = false);

struct DoubleModeDistances {
    double d_m2_b = 0.0;  // d(x_M2, x_B)
    double d_m1_m2 = 0.0; // d(x_M1, x_M2)

    double total() const { return d_m2_b + d_m1_m2; }
};

/// Predicted double-mode distances (same rescale/fast conventions).
DoubleModeDistances predicted_d0_double(const ProtocolParams& params, const ChannelModel& ch,
                                        const Discretization& disc, bool rescale,
                                        bool fast = false);

} // namespace cvqkd::bounds
