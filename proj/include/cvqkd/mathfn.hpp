#pragma once

#include <cstdint>

namespace cvqkd::mathfn {

/// Standard normal CDF and upper tail, erfc-based.
double norm_cdf(double x);
double norm_upper_tail(double x);

/// Large deviation function gamma(t) = (t + sqrt(t^2+1)) * [t/(sqrt(t^2+1)-1)]^t,
/// continuous at t = 0 with gamma(0) = 1 and strictly increasing on [0, inf).
/// Throws std::domain_error for t < 0 or non-finite t.
double gamma_ldf(double t);

/// log2 of gamma_ldf, evaluated directly in log space.
double log2_gamma_ldf(double t);

struct OverlapParams {
    double delta = 0.0;                 // bin width, shot-noise units
    bool use_prolate_correction = false; // evaluate S0^(1) instead of taking it as 1
};

/// Measurement overlap c(delta) = delta^2/(2 pi) * S0^(1)(1, delta^2/4)^2.
/// With the correction flag off the S0 factor is 1 (small-delta regime).
/// With the flag on, c(delta) is the largest eigenvalue of the Slepian
/// sinc-kernel operator with bandwidth delta^2/4, computed by a Gauss-Legendre
/// Nystrom discretization and power iteration.
/// Throws std::range_error if the result is >= 1 (discretization too coarse).
double overlap_c(const OverlapParams& params);

/// P(|X| > threshold) for X ~ N(0, variance). Thresholds <= 0 give 1.
/// Throws std::domain_error for variance <= 0.
double gaussian_tail(double threshold, double variance);

/// ln P(|X| > threshold), usable far past double underflow (asymptotic
/// erfc expansion once the linear-space value would be < ~1e-280).
double log_gaussian_tail(double threshold, double variance);

/// Shannon entropy in bits of a zero-mean Gaussian integrated over the
/// 2 alpha/delta = 2^L bins covering (-alpha, alpha], with the two unbounded
/// tails merged into the outermost bins. Result lies in [0, L].
/// Throws std::domain_error on invalid inputs (2 alpha/delta must be a power
/// of two).
double discrete_gaussian_entropy(double variance, double alpha, double delta);

/// E|X| = sqrt(2 variance / pi) for X ~ N(0, variance).
double expected_abs_gaussian(double variance);

/// Bivariate standard normal CDF P(X <= h, Y <= k) with correlation rho.
/// Drezner-Wesolowsky angular quadrature for |rho| <= 0.925, Genz-style
/// boundary-layer integral for larger |rho|. Absolute accuracy ~1e-14.
double bivariate_normal_cdf(double h, double k, double rho);

} // namespace cvqkd::mathfn
