#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace cvqkd {

enum class Direction { DR, RR };
enum class ModulationMode { Single, Double };

std::string to_string(Direction d);
std::string to_string(ModulationMode m);
Direction direction_from_string(const std::string& s);
ModulationMode mode_from_string(const std::string& s);

// Source, modulation, block and reconciliation settings. All variances are in
// shot-noise units (vacuum quadrature variance = 1).
struct ProtocolParams {
    double v_s = 0.04897788193684462;  // squeezed-quadrature variance (13.1 dB)
    double v_anti = 380.1893963205612; // anti-squeezed variance (25.8 dB); recorded, unused by bounds
    double v_m = 40.0;                 // total modulation variance
    double v_m1 = 0.0;                 // key-data modulation variance (double mode)
    double v_m2 = 0.0;                 // PE-data modulation variance (double mode)
    double beta = 0.95;                // reconciliation efficiency
    Direction direction = Direction::RR;
    std::uint64_t n_total = 1'000'000'000; // N
    std::uint64_t m_pe = 500'000'000;      // m (single mode)
    ModulationMode mode = ModulationMode::Single;

    std::uint64_t n_key() const {
        return mode == ModulationMode::Single ? n_total - m_pe : n_total;
    }
    double key_modulation_variance() const {
        return mode == ModulationMode::Single ? v_m : v_m1;
    }
};

// Detection range and ADC resolution; delta is derived so that
// 2*alpha/delta = 2^bits holds exactly.
struct Discretization {
    double alpha = 61.6; // detection half-range
    int bits = 12;       // L

    double delta() const { return std::ldexp(alpha, 1 - bits); }
    double bin_count() const { return std::ldexp(1.0, bits); }
};

// Smoothing/failure parameters of the composable security statement.
struct SecurityBudget {
    double eps_c = 1e-9;   // correctness
    double eps_s = 1e-9;   // secrecy
    double eps_r = 1e-9;   // robustness
    double eps_1 = 0.0;    // physical-part smoothness; 0 means "default to eps_s/4"
    double eps_pe = 1e-10; // PE failure probability, stored as the paired value of z_pe
    double z_pe = 6.5;     // confidence z-score paired with eps_pe
    double p_pass = 1.0;   // assumed passing probability

    double eps1_effective() const { return eps_1 > 0.0 ? eps_1 : eps_s / 4.0; }
};

// Transmittance/excess-noise channel. omega is the equivalent entangling-cloner
// variance, defined only for tau < 1.
struct ChannelModel {
    double tau = 1.0;
    double excess_noise = 0.0;       // epsilon
    double loss_db_per_km = 0.2;

    std::optional<double> omega() const {
        if (tau >= 1.0)
            return std::nullopt;
        return 1.0 + tau * excess_noise / (1.0 - tau);
    }
};

/// tau = 10^(-loss*d/10). Throws std::domain_error on negative inputs.
double tau_from_distance(double distance_km, double loss_db_per_km);

/// Inverse of tau_from_distance.
double distance_from_tau(double tau, double loss_db_per_km);

/// dB conventions: squeezing v = 10^(-dB/10), anti-squeezing v = 10^(+dB/10).
double squeezed_variance_from_db(double db);
double anti_squeezed_variance_from_db(double db);

// Knobs of the bound assembly that are choices rather than physics.
struct BoundOptions {
    bool rescale_alice = true;        // compare sqrt(tau)-rescaled Alice data
    bool gamma_in_double_mode = true; // off reproduces the literal no-gamma double-mode bound
    bool use_prolate_correction = false;
    bool fast_d0 = false;             // closed-form d0 approximation instead of quadrature
    double d0_margin = 1.0;           // multiplicative margin on the predicted threshold
};

struct Config {
    ProtocolParams protocol;
    Discretization disc;
    SecurityBudget security;
    ChannelModel channel;
    BoundOptions bounds;
    std::optional<double> distance_km; // if set, channel.tau is derived from it
};

class ValidationError : public std::runtime_error {
  public:
    explicit ValidationError(std::vector<std::string> violations);
    const std::vector<std::string>& violations() const { return violations_; }

  private:
    std::vector<std::string> violations_;
};

/// Returns the list of violated invariants (empty when valid).
std::vector<std::string> validation_violations(const ProtocolParams& p, const Discretization& d,
                                               const SecurityBudget& s);
std::vector<std::string> validation_violations(const Config& cfg);

/// Throws ValidationError naming every violated invariant.
void validate(const ProtocolParams& p, const Discretization& d, const SecurityBudget& s);
void validate(const Config& cfg);

/// JSON round-trip. load_config rejects unknown keys and aggregates all
/// violations; the schema is documented in the README.
Config config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const Config& cfg);
Config load_config(const std::string& path);

} // namespace cvqkd
