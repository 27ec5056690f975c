#include "cvqkd/mathfn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvqkd::mathfn {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kSqrt2 = 1.414213562373095048801688724209698079;

void require_finite(double x, const char* what) {
    if (!std::isfinite(x))
        throw std::domain_error(std::string(what) + " must be finite");
}

// Gauss-Legendre nodes/weights on [-1,1] by Newton iteration on P_n.
struct GaussLegendre {
    std::vector<double> x, w;
    explicit GaussLegendre(int n) : x(n), w(n) {
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0, p1 = 0.0;
                for (int j = 0; j < n; ++j) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
                }
                pp = n * (z * p0 - p1) / (z * z - 1.0);
                const double dz = p0 / pp;
                z -= dz;
                if (std::abs(dz) < 1e-16)
                    break;
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
        }
    }
};

const GaussLegendre& gl24() {
    static const GaussLegendre g(24);
    return g;
}

const GaussLegendre& gl48() {
    static const GaussLegendre g(48);
    return g;
}

// sinc kernel sin(c(x-y))/(pi(x-y)) with the removable singularity expanded.
double sinc_kernel(double c, double x, double y) {
    const double u = c * (x - y);
    if (std::abs(u) < 1e-8)
        return c / kPi * (1.0 - u * u / 6.0);
    return std::sin(u) / (kPi * (x - y));
}

// Largest eigenvalue of the band-limiting operator on [-1,1] with bandwidth c:
// Nystrom discretization on Gauss-Legendre nodes, then power iteration. The
// hierarchy lambda_0 >> lambda_1 makes power iteration converge in a handful
// of steps for every c this artifact can reach (c = delta^2/4 with
// c(delta) < 1 forces c < ~1.6).
double slepian_lambda0(double c) {
    const auto& g = gl48();
    const int n = static_cast<int>(g.x.size());
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    std::vector<double> sw(n);
    for (int i = 0; i < n; ++i)
        sw[i] = std::sqrt(g.w[i]);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            a[static_cast<std::size_t>(i) * n + j] = sw[i] * sw[j] * sinc_kernel(c, g.x[i], g.x[j]);

    std::vector<double> v(n, 1.0 / std::sqrt(static_cast<double>(n))), av(n);
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j)
                s += a[static_cast<std::size_t>(i) * n + j] * v[j];
            av[i] = s;
        }
        double norm = 0.0;
        for (double t : av)
            norm += t * t;
        norm = std::sqrt(norm);
        if (norm == 0.0)
            return 0.0;
        double rq = 0.0; // Rayleigh quotient v.Av with normalized v
        for (int i = 0; i < n; ++i)
            rq += v[i] * av[i];
        for (int i = 0; i < n; ++i)
            v[i] = av[i] / norm;
        if (it > 2 && std::abs(rq - lambda) <= 1e-16 * std::abs(rq))
            return rq;
        lambda = rq;
    }
    return lambda;
}

// Adaptive Simpson with explicit recursion.
template <class F>
double simpson_rec(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                   double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps)
        return left + right + delta / 15.0;
    return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

template <class F>
double adaptive_simpson(const F& f, double a, double b, double eps, int depth = 40) {
    if (a >= b)
        return 0.0;
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec(f, a, b, fa, fm, fb, whole, eps, depth);
}

} // namespace

double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / kSqrt2);
}

double norm_upper_tail(double x) {
    return 0.5 * std::erfc(x / kSqrt2);
}

double log2_gamma_ldf(double t) {
    if (!(t >= 0.0) || !std::isfinite(t))
        throw std::domain_error("gamma_ldf: t must be finite and >= 0");
    if (t == 0.0)
        return 0.0;
    const double s = std::hypot(t, 1.0);
    // log gamma = asinh(t) + t ln((sqrt(t^2+1)+1)/t); the rewritten bracket
    // avoids the sqrt(t^2+1)-1 cancellation at small t.
    const double ln_gamma = std::asinh(t) + t * std::log((s + 1.0) / t);
    return ln_gamma / 0.693147180559945309417232121458176568;
}

double gamma_ldf(double t) {
    return std::exp2(log2_gamma_ldf(t));
}

double overlap_c(const OverlapParams& params) {
    if (!(params.delta > 0.0) || !std::isfinite(params.delta))
        throw std::domain_error("overlap_c: delta must be finite and > 0");
    double c;
    if (params.use_prolate_correction) {
        // c(delta) = lambda_0(delta^2/4) exactly; equivalently
        // delta^2/(2 pi) * S0^(1)(1, delta^2/4)^2.
        c = slepian_lambda0(params.delta * params.delta / 4.0);
    } else {
        c = params.delta * params.delta / (2.0 * kPi);
    }
    if (c >= 1.0)
        throw std::range_error("overlap_c: c(delta) >= 1, discretization too coarse");
    return c;
}

double gaussian_tail(double threshold, double variance) {
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw std::domain_error("gaussian_tail: variance must be finite and > 0");
    require_finite(threshold, "gaussian_tail: threshold");
    if (threshold <= 0.0)
        return 1.0;
    return std::erfc(threshold / std::sqrt(2.0 * variance));
}

double log_gaussian_tail(double threshold, double variance) {
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw std::domain_error("log_gaussian_tail: variance must be finite and > 0");
    require_finite(threshold, "log_gaussian_tail: threshold");
    if (threshold <= 0.0)
        return 0.0;
    const double x = threshold / std::sqrt(2.0 * variance);
    const double lin = std::erfc(x);
    if (lin > 1e-280)
        return std::log(lin);
    // erfc(x) ~ exp(-x^2)/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6));
    // only reached for x > 25 where the series is far below double precision.
    const double ix2 = 1.0 / (x * x);
    return -x * x - std::log(x * std::sqrt(kPi)) +
           std::log1p(ix2 * (-0.5 + ix2 * (0.75 - 1.875 * ix2)));
}

double discrete_gaussian_entropy(double variance, double alpha, double delta) {
    if (!(variance > 0.0) || !std::isfinite(variance))
        throw std::domain_error("discrete_gaussian_entropy: variance must be > 0");
    if (!(alpha > 0.0) || !(delta > 0.0))
        throw std::domain_error("discrete_gaussian_entropy: alpha and delta must be > 0");
    const double ratio = 2.0 * alpha / delta;
    const int bits = static_cast<int>(std::lround(std::log2(ratio)));
    if (bits < 1 || bits > 26 || std::abs(ratio - std::ldexp(1.0, bits)) > 1e-9 * ratio)
        throw std::domain_error("discrete_gaussian_entropy: 2*alpha/delta must be a power of two");
    const std::int64_t nbins = std::int64_t{1} << bits;

    const double sigma = std::sqrt(variance);
    // Bins fully outside +-40 sigma carry no representable mass; the merged
    // tail bins are handled explicitly below.
    std::int64_t k_lo = static_cast<std::int64_t>(std::floor((-40.0 * sigma + alpha) / delta)) - 1;
    std::int64_t k_hi = static_cast<std::int64_t>(std::ceil((40.0 * sigma + alpha) / delta)) + 1;
    k_lo = std::max<std::int64_t>(k_lo, 0);
    k_hi = std::min<std::int64_t>(k_hi, nbins - 1);

    // P(l < X <= r) with both edges on the same side of zero, evaluated in
    // the tail to avoid cancellation between near-1 CDF values.
    const auto bin_mass = [&](std::int64_t k) {
        const double l = (k == 0) ? -std::numeric_limits<double>::infinity() : -alpha + k * delta;
        const double r = (k == nbins - 1) ? std::numeric_limits<double>::infinity()
                                          : -alpha + (k + 1) * delta;
        if (l >= 0.0)
            return norm_upper_tail(l / sigma) - (std::isinf(r) ? 0.0 : norm_upper_tail(r / sigma));
        return (std::isinf(l) ? 0.0 : -norm_upper_tail(-l / sigma)) + norm_upper_tail(-r / sigma);
    };

    double h = 0.0;
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
        const double p = bin_mass(k);
        if (p > 0.0)
            h -= p * std::log2(p);
    }
    if (k_lo > 0) {
        const double p = bin_mass(0);
        if (p > 0.0)
            h -= p * std::log2(p);
    }
    if (k_hi < nbins - 1) {
        const double p = bin_mass(nbins - 1);
        if (p > 0.0)
            h -= p * std::log2(p);
    }
    return std::max(0.0, h);
}

double expected_abs_gaussian(double variance) {
    if (!(variance >= 0.0) || !std::isfinite(variance))
        throw std::domain_error("expected_abs_gaussian: variance must be finite and >= 0");
    return std::sqrt(2.0 * variance / kPi);
}

double bivariate_normal_cdf(double h, double k, double rho) {
    require_finite(h, "bivariate_normal_cdf: h");
    require_finite(k, "bivariate_normal_cdf: k");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw std::domain_error("bivariate_normal_cdf: rho must lie in [-1,1]");
    if (rho == 1.0)
        return norm_cdf(std::min(h, k));
    if (rho == -1.0)
        return std::max(0.0, norm_cdf(h) + norm_cdf(k) - 1.0);
    if (rho == 0.0)
        return norm_cdf(h) * norm_cdf(k);

    if (std::abs(rho) <= 0.925) {
        // Drezner-Wesolowsky: Phi2 = Phi(h)Phi(k)
        //   + 1/(2 pi) Int_0^{asin rho} exp(-(h^2+k^2-2hk sin t)/(2 cos^2 t)) dt
        const double upper = std::asin(rho);
        const auto& g = gl24();
        const double hs = 0.5 * (h * h + k * k);
        const double hk = h * k;
        double integral = 0.0;
        for (std::size_t i = 0; i < g.x.size(); ++i) {
            const double t = 0.5 * upper * (g.x[i] + 1.0);
            const double sn = std::sin(t);
            integral += g.w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        integral *= 0.5 * upper;
        return norm_cdf(h) * norm_cdf(k) + integral / (2.0 * kPi);
    }

    if (rho < 0.0)
        return norm_cdf(h) - bivariate_normal_cdf(h, -k, -rho);

    // High-correlation branch via Plackett's identity integrated from rho = 1:
    //   Phi2(h,k;rho) = Phi(min(h,k))
    //     - 1/(2 pi) Int_0^{sqrt(1-rho^2)}
    //         exp(-(h-k)^2/(2x^2) - hk/(1+sqrt(1-x^2))) / sqrt(1-x^2) dx.
    // The exponent is <= 0 for all inputs, so no overflow is possible.
    const double a = std::sqrt((1.0 - rho) * (1.0 + rho));
    const double b = std::abs(h - k);
    const double hk = h * k;
    const auto integrand = [&](double x) {
        if (x <= 0.0)
            return 0.0;
        const double om = std::sqrt(1.0 - x * x);
        const double expo = -b * b / (2.0 * x * x) - hk / (1.0 + om);
        if (expo < -745.0)
            return 0.0;
        return std::exp(expo) / om;
    };
    const double x_lo = (b > 0.0) ? std::min(a, b / 8.6) : 0.0;
    const double integral = adaptive_simpson(integrand, x_lo, a, 1e-16);
    return std::max(0.0, norm_cdf(std::min(h, k)) - integral / (2.0 * kPi));
}

} // namespace cvqkd::mathfn
