#include "cvqkd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cvqkd/bounds.hpp"
#include "cvqkd/channel.hpp"
#include "cvqkd/csvio.hpp"
#include "cvqkd/mathfn.hpp"
#include "cvqkd/parallel.hpp"
#include "cvqkd/rng.hpp"

namespace cvqkd::mc {

void TrialConfig::check() const {
    std::vector<std::string> v;
    if (trials < 1)
        v.push_back("simulation.trials must be >= 1");
    if (samples_per_trial < 2)
        v.push_back("simulation.samples_per_trial must be >= 2");
    if (params.mode == ModulationMode::Single &&
        !(m_pe > 0 && m_pe < samples_per_trial))
        v.push_back("simulation.m_pe must satisfy 0 < m_pe < samples_per_trial in single mode");
    if (params.mode == ModulationMode::Double &&
        !(params.v_m1 >= 0 && params.v_m2 > 0))
        v.push_back("double mode needs v_m2 > 0 for estimation");
    if (!(coverage_z >= 0))
        v.push_back("simulation.coverage_z must be >= 0");
    auto base = validation_violations(params, disc, security);
    // The simulated block length replaces n_total; the protocol-level m_pe
    // constraint is checked against the simulation sizes above instead.
    for (const auto& s : base)
        if (s.find("m_pe") == std::string::npos)
            v.push_back(s);
    if (!v.empty())
        throw ValidationError(std::move(v));
}

namespace {

// Deterministic Fisher-Yates partition: the first m slots of the returned
// permutation are the PE set. Uniforms come from the trial's shuffle stream.
std::vector<std::uint32_t> pe_partition(std::uint64_t seed, std::uint64_t n) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    const rng::UniformStream u(seed, rng::kPurposeShuffle);
    for (std::uint64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::uint64_t>(u(i) * static_cast<double>(i + 1));
        std::swap(idx[i], idx[std::min(j, i)]);
    }
    return idx;
}

struct TrialData {
    est::SampleRecords records;         // estimation input
    channel::QuadratureBatch m_full;    // Alice's key-bearing data (M or M1)
    channel::QuadratureBatch m2_full;   // double mode
    channel::QuadratureBatch b_full;
    std::vector<std::uint32_t> order;   // single mode partition
};

TrialData make_trial(const TrialConfig& cfg, std::uint64_t trial_index) {
    const std::uint64_t n = cfg.samples_per_trial;
    const std::uint64_t trial_seed = rng::derive_seed(cfg.seed, trial_index, 0xA11CEu);
    TrialData td;

    const rng::NormalStream s_stream(trial_seed, rng::kPurposeSqueeze);
    const double sd_s = std::sqrt(cfg.params.v_s);

    channel::QuadratureBatch x_a;
    x_a.values.resize(n);
    if (cfg.params.mode == ModulationMode::Single) {
        const rng::NormalStream m_stream(trial_seed, rng::kPurposeModulation);
        const double sd_m = std::sqrt(cfg.params.v_m);
        td.m_full.values.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            const double m = sd_m * m_stream(i);
            td.m_full.values[i] = m;
            x_a.values[i] = m + sd_s * s_stream(i);
        }
    } else {
        const rng::NormalStream m1_stream(trial_seed, rng::kPurposeModulation);
        const rng::NormalStream m2_stream(trial_seed, rng::kPurposeModulation2);
        const double sd_m1 = std::sqrt(cfg.params.v_m1);
        const double sd_m2 = std::sqrt(cfg.params.v_m2);
        td.m_full.values.resize(n);
        td.m2_full.values.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            const double m1 = sd_m1 * m1_stream(i);
            const double m2 = sd_m2 * m2_stream(i);
            td.m_full.values[i] = m1;
            td.m2_full.values[i] = m2;
            x_a.values[i] = m1 + m2 + sd_s * s_stream(i);
        }
    }
    td.b_full = channel::transmit(x_a, cfg.channel, trial_seed);

    if (cfg.params.mode == ModulationMode::Single) {
        td.order = pe_partition(trial_seed, n);
        const std::uint64_t m = cfg.m_pe;
        td.records.mode = ModulationMode::Single;
        td.records.m1.values.resize(m);
        td.records.b.values.resize(m);
        for (std::uint64_t i = 0; i < m; ++i) {
            td.records.m1.values[i] = td.m_full.values[td.order[i]];
            td.records.b.values[i] = td.b_full.values[td.order[i]];
        }
    } else {
        td.records.mode = ModulationMode::Double;
        td.records.m1 = td.m_full;
        td.records.m2 = td.m2_full;
        td.records.b = td.b_full;
    }
    return td;
}

channel::QuadratureBatch scaled(const channel::QuadratureBatch& in, double factor) {
    channel::QuadratureBatch out;
    out.values.resize(in.values.size());
    for (std::size_t i = 0; i < in.values.size(); ++i)
        out.values[i] = factor * in.values[i];
    return out;
}

double subset_distance(const std::vector<std::uint32_t>& a_bins,
                       const std::vector<std::uint32_t>& b_bins,
                       const std::vector<std::uint32_t>& order, std::uint64_t from,
                       std::uint64_t to) {
    std::uint64_t sum = 0;
    for (std::uint64_t i = from; i < to; ++i) {
        const auto k = order[i];
        const auto x = a_bins[k], y = b_bins[k];
        sum += (x >= y) ? x - y : y - x;
    }
    return static_cast<double>(sum) / static_cast<double>(to - from);
}

} // namespace

est::SampleRecords trial_batches(const TrialConfig& cfg, std::uint64_t trial_index) {
    cfg.check();
    return make_trial(cfg, trial_index).records;
}

TrialRecord run_protocol_trial(const TrialConfig& cfg, std::uint64_t trial_index) {
    cfg.check();
    const auto td = make_trial(cfg, trial_index);
    TrialRecord rec;
    rec.report = est::run_estimation(td.records, cfg.params, cfg.security);

    const double r = cfg.rescale_alice ? std::sqrt(std::max(rec.report.tau_hat, 0.0)) : 1.0;
    const auto b_disc = channel::discretize(td.b_full, cfg.disc);
    rec.out_of_range = b_disc.out_of_range;
    rec.p_alpha_emp =
        static_cast<double>(b_disc.out_of_range) / static_cast<double>(td.b_full.size());

    // Model-side threshold and Serfling fluctuation at the simulated sizes.
    ProtocolParams sim = cfg.params;
    sim.n_total = cfg.samples_per_trial;
    sim.m_pe = cfg.m_pe;
    double mu = 0.0;
    double d0 = 0.0;
    if (cfg.params.mode == ModulationMode::Single) {
        d0 = bounds::predicted_d0(sim, cfg.channel, cfg.disc, cfg.rescale_alice);
        try {
            const double p_alpha_model =
                mathfn::gaussian_tail(cfg.disc.alpha, channel::bob_variance(sim, cfg.channel));
            const auto sm = bounds::eps_prime(cfg.security, p_alpha_model, sim.n_key());
            mu = bounds::mu_fluctuation(cfg.disc, sim.n_total, sim.m_pe, sm.eps_prime);
        } catch (const bounds::BudgetExhausted&) {
            mu = 0.0; // recorded as exhausted; the Serfling check is skipped
        }

        const auto m_disc = channel::discretize(scaled(td.m_full, r), cfg.disc);
        rec.d_pe = subset_distance(m_disc.bins, b_disc.bins, td.order, 0, cfg.m_pe);
        rec.d_key =
            subset_distance(m_disc.bins, b_disc.bins, td.order, cfg.m_pe, cfg.samples_per_trial);
        rec.serfling_ok = mu == 0.0 || rec.d_key <= rec.d_pe + mu;
    } else {
        d0 = bounds::predicted_d0_double(sim, cfg.channel, cfg.disc, cfg.rescale_alice).total();
        const auto m1_disc = channel::discretize(scaled(td.m_full, r), cfg.disc);
        const auto m2_disc = channel::discretize(scaled(td.m2_full, r), cfg.disc);
        rec.d_pe = bounds::l1_distance(m2_disc.bins, b_disc.bins);
        rec.d_key = bounds::l1_distance(m1_disc.bins, b_disc.bins);
        rec.d_m1_m2 = bounds::l1_distance(m1_disc.bins, m2_disc.bins);
        rec.triangle_ok = rec.d_key <= rec.d_pe + rec.d_m1_m2;
    }
    rec.pe_passed = rec.d_pe <= cfg.d0_margin * d0;

    const double true_veps = cfg.channel.tau * cfg.channel.excess_noise;
    rec.tau_miss =
        cfg.channel.tau < rec.report.tau_hat - cfg.coverage_z * rec.report.sigma_tau;
    rec.veps_miss = true_veps > rec.report.v_eps_hat + cfg.coverage_z * rec.report.sigma_veps;
    return rec;
}

WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t n, double z) {
    if (n == 0)
        return {0.0, 1.0};
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    const double nn = static_cast<double>(n);
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

TrialSummary run_trials(const TrialConfig& cfg, int workers) {
    cfg.check();
    TrialSummary s;
    s.config = cfg;
    s.records.resize(cfg.trials);
    parallel_for(cfg.trials, workers,
                 [&](std::size_t i) { s.records[i] = run_protocol_trial(cfg, i); });

    // Fixed-order reductions keyed by trial index.
    const auto n = static_cast<double>(cfg.trials);
    double sc = 0, st = 0, sv = 0;
    for (const auto& r : s.records) {
        sc += r.report.c_mb_hat;
        st += r.report.tau_hat;
        sv += r.report.v_eps_hat;
    }
    s.mean_c_mb = sc / n;
    s.mean_tau_hat = st / n;
    s.mean_veps_hat = sv / n;
    double qt = 0, qv = 0, dpe = 0, dkey = 0, dm = 0, pa = 0;
    std::uint64_t passes = 0;
    for (const auto& r : s.records) {
        qt += (r.report.tau_hat - s.mean_tau_hat) * (r.report.tau_hat - s.mean_tau_hat);
        qv += (r.report.v_eps_hat - s.mean_veps_hat) * (r.report.v_eps_hat - s.mean_veps_hat);
        dpe += r.d_pe;
        dkey += r.d_key;
        dm += r.d_m1_m2;
        pa += r.p_alpha_emp;
        s.tau_misses += r.tau_miss ? 1 : 0;
        s.veps_misses += r.veps_miss ? 1 : 0;
        s.serfling_violations += r.serfling_ok ? 0 : 1;
        s.triangle_violations += r.triangle_ok ? 0 : 1;
        passes += r.pe_passed ? 1 : 0;
    }
    s.var_tau_hat = cfg.trials > 1 ? qt / (n - 1.0) : 0.0;
    s.var_veps_hat = cfg.trials > 1 ? qv / (n - 1.0) : 0.0;
    s.mean_d_pe = dpe / n;
    s.mean_d_key = dkey / n;
    s.mean_d_m1_m2 = dm / n;
    s.p_alpha_emp = pa / n;
    s.pe_pass_rate = static_cast<double>(passes) / n;

    ProtocolParams sim = cfg.params;
    sim.n_total = cfg.samples_per_trial;
    sim.m_pe = cfg.m_pe;
    const std::uint64_t m_est =
        cfg.params.mode == ModulationMode::Single ? cfg.m_pe : cfg.samples_per_trial;
    s.tau_var_formula = est::tau_variance(cfg.channel.tau, sim, cfg.channel, m_est, sim.mode);
    s.veps_var_formula = est::excess_variance(sim, cfg.channel, m_est, sim.mode);
    s.tau_var_ratio = s.var_tau_hat / s.tau_var_formula;
    s.veps_var_ratio = s.var_veps_hat / s.veps_var_formula;
    s.tau_miss_ci = wilson_interval(s.tau_misses, cfg.trials, 3.0);
    s.veps_miss_ci = wilson_interval(s.veps_misses, cfg.trials, 3.0);

    s.p_alpha_model = mathfn::gaussian_tail(cfg.disc.alpha, channel::bob_variance(sim, cfg.channel));
    if (cfg.params.mode == ModulationMode::Single) {
        s.predicted_d0_bins = bounds::predicted_d0(sim, cfg.channel, cfg.disc, cfg.rescale_alice);
        try {
            const auto sm = bounds::eps_prime(cfg.security, s.p_alpha_model, sim.n_key());
            s.mu_bins = bounds::mu_fluctuation(cfg.disc, sim.n_total, sim.m_pe, sm.eps_prime);
        } catch (const bounds::BudgetExhausted&) {
            s.mu_bins = 0.0;
        }
    } else {
        s.predicted_d0_bins =
            bounds::predicted_d0_double(sim, cfg.channel, cfg.disc, cfg.rescale_alice).total();
        s.mu_bins = 0.0;
    }
    return s;
}

TrialSummary coverage_experiment(const TrialConfig& cfg, int workers) {
    if (cfg.trials < 100)
        throw std::invalid_argument("coverage_experiment: need at least 100 trials");
    return run_trials(cfg, workers);
}

TrialSummary distance_experiment(const TrialConfig& cfg, int workers) {
    return run_trials(cfg, workers);
}

nlohmann::ordered_json TrialSummary::to_json() const {
    nlohmann::ordered_json j;
    j["trials"] = config.trials;
    j["samples_per_trial"] = config.samples_per_trial;
    j["m_pe"] = config.m_pe;
    j["seed"] = config.seed;
    j["mode"] = to_string(config.params.mode);
    j["coverage_z"] = config.coverage_z;
    j["mean_c_mb"] = mean_c_mb;
    j["mean_tau_hat"] = mean_tau_hat;
    j["var_tau_hat"] = var_tau_hat;
    j["mean_veps_hat"] = mean_veps_hat;
    j["var_veps_hat"] = var_veps_hat;
    j["tau_var_formula"] = tau_var_formula;
    j["veps_var_formula"] = veps_var_formula;
    j["tau_var_ratio"] = tau_var_ratio;
    j["veps_var_ratio"] = veps_var_ratio;
    j["tau_misses"] = tau_misses;
    j["veps_misses"] = veps_misses;
    j["tau_miss_ci"] = {tau_miss_ci.lo, tau_miss_ci.hi};
    j["veps_miss_ci"] = {veps_miss_ci.lo, veps_miss_ci.hi};
    j["mean_d_pe"] = mean_d_pe;
    j["mean_d_key"] = mean_d_key;
    j["mean_d_m1_m2"] = mean_d_m1_m2;
    j["predicted_d0_bins"] = predicted_d0_bins;
    j["mu_bins"] = mu_bins;
    j["p_alpha_emp"] = p_alpha_emp;
    j["p_alpha_model"] = p_alpha_model;
    j["serfling_violations"] = serfling_violations;
    j["triangle_violations"] = triangle_violations;
    j["pe_pass_rate"] = pe_pass_rate;
    return j;
}

std::string TrialSummary::trials_csv() const {
    std::ostringstream os;
    os << "trial," << est::EstimationReport::csv_header()
       << ",d_pe,d_key,d_m1_m2,p_alpha_emp,out_of_range,pe_passed,triangle_ok,serfling_ok,"
          "tau_miss,veps_miss\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        os << i << ',' << r.report.csv_row() << ',' << io::fmt(r.d_pe) << ',' << io::fmt(r.d_key)
           << ',' << io::fmt(r.d_m1_m2) << ',' << io::fmt(r.p_alpha_emp) << ',' << r.out_of_range
           << ',' << (r.pe_passed ? 1 : 0) << ',' << (r.triangle_ok ? 1 : 0) << ','
           << (r.serfling_ok ? 1 : 0) << ',' << (r.tau_miss ? 1 : 0) << ','
           << (r.veps_miss ? 1 : 0) << '\n';
    }
    return os.str();
}

} // namespace cvqkd::mc
