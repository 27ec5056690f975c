#include "cvqkd/params.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cvqkd {

namespace {

bool near(double a, double b, double rel = 1e-12) {
    return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), 1.0});
}

void check_known_keys(const nlohmann::json& j, const std::string& section,
                      const std::set<std::string>& known, std::vector<std::string>& out) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key()))
            out.push_back(section + ": unknown key '" + it.key() + "'");
    }
}

} // namespace

std::string to_string(Direction d) {
    return d == Direction::DR ? "dr" : "rr";
}

std::string to_string(ModulationMode m) {
    return m == ModulationMode::Single ? "single" : "double";
}

Direction direction_from_string(const std::string& s) {
    if (s == "dr" || s == "DR")
        return Direction::DR;
    if (s == "rr" || s == "RR")
        return Direction::RR;
    throw std::invalid_argument("direction must be 'dr' or 'rr', got '" + s + "'");
}

ModulationMode mode_from_string(const std::string& s) {
    if (s == "single")
        return ModulationMode::Single;
    if (s == "double")
        return ModulationMode::Double;
    throw std::invalid_argument("mode must be 'single' or 'double', got '" + s + "'");
}

double tau_from_distance(double distance_km, double loss_db_per_km) {
    if (!(distance_km >= 0.0) || !std::isfinite(distance_km))
        throw std::domain_error("tau_from_distance: distance_km must be finite and >= 0");
    if (!(loss_db_per_km > 0.0) || !std::isfinite(loss_db_per_km))
        throw std::domain_error("tau_from_distance: loss_db_per_km must be finite and > 0");
    return std::pow(10.0, -loss_db_per_km * distance_km / 10.0);
}

double distance_from_tau(double tau, double loss_db_per_km) {
    if (!(tau > 0.0 && tau <= 1.0))
        throw std::domain_error("distance_from_tau: tau must lie in (0,1]");
    if (!(loss_db_per_km > 0.0))
        throw std::domain_error("distance_from_tau: loss_db_per_km must be > 0");
    return -10.0 * std::log10(tau) / loss_db_per_km;
}

double squeezed_variance_from_db(double db) {
    return std::pow(10.0, -db / 10.0);
}

double anti_squeezed_variance_from_db(double db) {
    return std::pow(10.0, db / 10.0);
}

ValidationError::ValidationError(std::vector<std::string> violations)
    : std::runtime_error([&violations] {
          std::ostringstream os;
          os << "invalid configuration (" << violations.size() << " violation(s)):";
          for (const auto& v : violations)
              os << "\n  - " << v;
          return os.str();
      }()),
      violations_(std::move(violations)) {}

std::vector<std::string> validation_violations(const ProtocolParams& p, const Discretization& d,
                                               const SecurityBudget& s) {
    std::vector<std::string> out;

    if (!(p.v_s > 0.0 && p.v_s <= 1.0))
        out.push_back("protocol.v_s must lie in (0,1]");
    if (!(p.v_anti >= 1.0))
        out.push_back("protocol.v_anti must be >= 1");
    if (p.v_s > 0.0 && p.v_anti > 0.0 && p.v_s * p.v_anti < 1.0 - 1e-12)
        out.push_back("protocol.v_s * v_anti must be >= 1 (uncertainty relation)");
    if (!(p.v_m > 0.0))
        out.push_back("protocol.v_m must be > 0");
    if (!(p.beta > 0.0 && p.beta <= 1.0))
        out.push_back("protocol.beta must lie in (0,1]");
    if (p.n_total < 2)
        out.push_back("protocol.n_total must be >= 2");
    if (p.mode == ModulationMode::Single) {
        if (!(p.m_pe > 0 && p.m_pe < p.n_total))
            out.push_back("protocol.m_pe must satisfy 0 < m_pe < n_total in single mode");
    } else {
        if (!(p.v_m1 >= 0.0) || !(p.v_m2 >= 0.0))
            out.push_back("protocol.v_m1 and v_m2 must be >= 0 in double mode");
        if (!near(p.v_m1 + p.v_m2, p.v_m))
            out.push_back("protocol.v_m1 + v_m2 must equal v_m in double mode");
    }

    if (!(d.alpha > 0.0))
        out.push_back("discretization.alpha must be > 0");
    if (d.bits < 1 || d.bits > 26)
        out.push_back("discretization.bits must lie in [1,26]");

    const auto eps_in_01 = [&out](double v, const char* name) {
        if (!(v > 0.0 && v < 1.0))
            out.push_back(std::string("security.") + name + " must lie in (0,1)");
    };
    eps_in_01(s.eps_c, "eps_c");
    eps_in_01(s.eps_s, "eps_s");
    eps_in_01(s.eps_r, "eps_r");
    eps_in_01(s.eps_pe, "eps_pe");
    if (s.eps_1 != 0.0 && !(s.eps_1 > 0.0 && s.eps_1 < 1.0))
        out.push_back("security.eps_1 must lie in (0,1) when set");
    if (!(s.z_pe > 0.0))
        out.push_back("security.z_pe must be > 0");
    if (!(s.p_pass > 0.0 && s.p_pass <= 1.0))
        out.push_back("security.p_pass must lie in (0,1]");

    return out;
}

std::vector<std::string> validation_violations(const Config& cfg) {
    auto out = validation_violations(cfg.protocol, cfg.disc, cfg.security);
    if (!(cfg.channel.tau > 0.0 && cfg.channel.tau <= 1.0))
        out.push_back("channel.tau must lie in (0,1]");
    if (!(cfg.channel.excess_noise >= 0.0))
        out.push_back("channel.excess_noise must be >= 0");
    if (!(cfg.channel.loss_db_per_km > 0.0))
        out.push_back("channel.loss_db_per_km must be > 0");
    if (cfg.distance_km && !(*cfg.distance_km >= 0.0))
        out.push_back("channel.distance_km must be >= 0");
    if (!(cfg.bounds.d0_margin > 0.0))
        out.push_back("bounds.d0_margin must be > 0");
    return out;
}

void validate(const ProtocolParams& p, const Discretization& d, const SecurityBudget& s) {
    auto v = validation_violations(p, d, s);
    if (!v.empty())
        throw ValidationError(std::move(v));
}

void validate(const Config& cfg) {
    auto v = validation_violations(cfg);
    if (!v.empty())
        throw ValidationError(std::move(v));
}

Config config_from_json(const nlohmann::json& j) {
    Config cfg;
    std::vector<std::string> schema_errors;
    if (!j.is_object())
        throw ValidationError({"top-level config must be a JSON object"});
    check_known_keys(j, "config",
                     {"protocol", "discretization", "security", "channel", "bounds"},
                     schema_errors);

    try {
        if (j.contains("protocol")) {
            const auto& p = j.at("protocol");
            check_known_keys(p, "protocol",
                             {"v_s", "v_anti", "v_m", "v_m1", "v_m2", "beta", "direction",
                              "n_total", "m_pe", "mode", "squeezing_db", "anti_squeezing_db"},
                             schema_errors);
            if (p.contains("squeezing_db"))
                cfg.protocol.v_s = squeezed_variance_from_db(p.at("squeezing_db").get<double>());
            if (p.contains("anti_squeezing_db"))
                cfg.protocol.v_anti =
                    anti_squeezed_variance_from_db(p.at("anti_squeezing_db").get<double>());
            if (p.contains("v_s"))
                cfg.protocol.v_s = p.at("v_s").get<double>();
            if (p.contains("v_anti"))
                cfg.protocol.v_anti = p.at("v_anti").get<double>();
            if (p.contains("v_m"))
                cfg.protocol.v_m = p.at("v_m").get<double>();
            if (p.contains("v_m1"))
                cfg.protocol.v_m1 = p.at("v_m1").get<double>();
            if (p.contains("v_m2"))
                cfg.protocol.v_m2 = p.at("v_m2").get<double>();
            if (p.contains("beta"))
                cfg.protocol.beta = p.at("beta").get<double>();
            if (p.contains("direction"))
                cfg.protocol.direction = direction_from_string(p.at("direction").get<std::string>());
            if (p.contains("n_total"))
                cfg.protocol.n_total = static_cast<std::uint64_t>(p.at("n_total").get<double>());
            if (p.contains("m_pe"))
                cfg.protocol.m_pe = static_cast<std::uint64_t>(p.at("m_pe").get<double>());
            if (p.contains("mode"))
                cfg.protocol.mode = mode_from_string(p.at("mode").get<std::string>());
        }
        if (j.contains("discretization")) {
            const auto& d = j.at("discretization");
            check_known_keys(d, "discretization", {"alpha", "bits"}, schema_errors);
            if (d.contains("alpha"))
                cfg.disc.alpha = d.at("alpha").get<double>();
            if (d.contains("bits"))
                cfg.disc.bits = d.at("bits").get<int>();
        }
        if (j.contains("security")) {
            const auto& s = j.at("security");
            check_known_keys(s, "security",
                             {"eps_c", "eps_s", "eps_r", "eps_1", "eps_pe", "z_pe", "p_pass"},
                             schema_errors);
            if (s.contains("eps_c"))
                cfg.security.eps_c = s.at("eps_c").get<double>();
            if (s.contains("eps_s"))
                cfg.security.eps_s = s.at("eps_s").get<double>();
            if (s.contains("eps_r"))
                cfg.security.eps_r = s.at("eps_r").get<double>();
            if (s.contains("eps_1"))
                cfg.security.eps_1 = s.at("eps_1").get<double>();
            if (s.contains("eps_pe"))
                cfg.security.eps_pe = s.at("eps_pe").get<double>();
            if (s.contains("z_pe"))
                cfg.security.z_pe = s.at("z_pe").get<double>();
            if (s.contains("p_pass"))
                cfg.security.p_pass = s.at("p_pass").get<double>();
        }
        if (j.contains("channel")) {
            const auto& c = j.at("channel");
            check_known_keys(c, "channel",
                             {"tau", "excess_noise", "loss_db_per_km", "distance_km"},
                             schema_errors);
            if (c.contains("loss_db_per_km"))
                cfg.channel.loss_db_per_km = c.at("loss_db_per_km").get<double>();
            if (c.contains("excess_noise"))
                cfg.channel.excess_noise = c.at("excess_noise").get<double>();
            if (c.contains("distance_km")) {
                cfg.distance_km = c.at("distance_km").get<double>();
                cfg.channel.tau = tau_from_distance(*cfg.distance_km, cfg.channel.loss_db_per_km);
            }
            if (c.contains("tau")) {
                cfg.channel.tau = c.at("tau").get<double>();
                cfg.distance_km.reset();
            }
        }
        if (j.contains("bounds")) {
            const auto& b = j.at("bounds");
            check_known_keys(b, "bounds",
                             {"rescale_alice", "gamma_in_double_mode", "use_prolate_correction",
                              "fast_d0", "d0_margin"},
                             schema_errors);
            if (b.contains("rescale_alice"))
                cfg.bounds.rescale_alice = b.at("rescale_alice").get<bool>();
            if (b.contains("gamma_in_double_mode"))
                cfg.bounds.gamma_in_double_mode = b.at("gamma_in_double_mode").get<bool>();
            if (b.contains("use_prolate_correction"))
                cfg.bounds.use_prolate_correction = b.at("use_prolate_correction").get<bool>();
            if (b.contains("fast_d0"))
                cfg.bounds.fast_d0 = b.at("fast_d0").get<bool>();
            if (b.contains("d0_margin"))
                cfg.bounds.d0_margin = b.at("d0_margin").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        schema_errors.push_back(std::string("config parse: ") + e.what());
    } catch (const std::invalid_argument& e) {
        schema_errors.push_back(std::string("config parse: ") + e.what());
    }

    auto violations = schema_errors;
    if (schema_errors.empty())
        violations = validation_violations(cfg);
    if (!violations.empty())
        throw ValidationError(std::move(violations));
    return cfg;
}

nlohmann::ordered_json config_to_json(const Config& cfg) {
    nlohmann::ordered_json j;
    j["protocol"] = {{"v_s", cfg.protocol.v_s},
                     {"v_anti", cfg.protocol.v_anti},
                     {"v_m", cfg.protocol.v_m},
                     {"v_m1", cfg.protocol.v_m1},
                     {"v_m2", cfg.protocol.v_m2},
                     {"beta", cfg.protocol.beta},
                     {"direction", to_string(cfg.protocol.direction)},
                     {"n_total", cfg.protocol.n_total},
                     {"m_pe", cfg.protocol.m_pe},
                     {"mode", to_string(cfg.protocol.mode)}};
    j["discretization"] = {{"alpha", cfg.disc.alpha}, {"bits", cfg.disc.bits}};
    j["security"] = {{"eps_c", cfg.security.eps_c},    {"eps_s", cfg.security.eps_s},
                     {"eps_r", cfg.security.eps_r},    {"eps_1", cfg.security.eps_1},
                     {"eps_pe", cfg.security.eps_pe},  {"z_pe", cfg.security.z_pe},
                     {"p_pass", cfg.security.p_pass}};
    j["channel"] = {{"tau", cfg.channel.tau},
                    {"excess_noise", cfg.channel.excess_noise},
                    {"loss_db_per_km", cfg.channel.loss_db_per_km}};
    if (cfg.distance_km)
        j["channel"]["distance_km"] = *cfg.distance_km;
    j["bounds"] = {{"rescale_alice", cfg.bounds.rescale_alice},
                   {"gamma_in_double_mode", cfg.bounds.gamma_in_double_mode},
                   {"use_prolate_correction", cfg.bounds.use_prolate_correction},
                   {"fast_d0", cfg.bounds.fast_d0},
                   {"d0_margin", cfg.bounds.d0_margin}};
    return j;
}

Config load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ValidationError({"cannot open config file: " + path});
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
    }
    return config_from_json(j);
}

} // namespace cvqkd
