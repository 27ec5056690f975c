// cvqkd: finite-size CV-QKD key-rate calculator and Monte-Carlo validator.
//
// Commands: keyrate, estimate, simulate, optimize, replay. Every command is a
// pure function of (config file, flags, seed): reruns produce byte-identical
// outputs, and each output CSV is accompanied by a manifest that records the
// fully resolved configuration needed to reproduce it.
//
// Exit codes: 0 success; 2 configuration/usage/input error; 3 keyrate sweep
// produced zero key at every grid point; 4 optimize was given no free
// parameters.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvqkd/csvio.hpp"
#include "cvqkd/keyrate.hpp"
#include "cvqkd/montecarlo.hpp"
#include "cvqkd/params.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

struct GlobalOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
    int workers = 1;
};

std::string default_out_dir() {
    if (const char* env = std::getenv("CVQKD_OUT_DIR"))
        return env;
    return "out";
}

std::vector<double> parse_grid(const std::string& spec) {
    std::vector<double> grid;
    if (spec.find(':') != std::string::npos) {
        // start:stop:count linspace
        double a = 0, b = 0;
        long n = 0;
        char c1 = 0, c2 = 0;
        std::istringstream is(spec);
        if (!(is >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1)
            throw std::invalid_argument("bad grid spec '" + spec + "' (want start:stop:count)");
        for (long i = 0; i < n; ++i)
            grid.push_back(n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1));
        return grid;
    }
    std::istringstream is(spec);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        if (tok.empty())
            continue;
        grid.push_back(std::stod(tok));
    }
    if (grid.empty())
        throw std::invalid_argument("empty grid spec");
    return grid;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const cvqkd::Config& cfg, const GlobalOpts& g, const ordered_json& options,
                    const std::vector<std::string>& outputs) {
    ordered_json m;
    m["artifact_version"] = kVersion;
    m["command"] = command;
    m["seed"] = g.seed;
    m["workers"] = g.workers;
    m["config"] = cvqkd::config_to_json(cfg);
    m["options"] = options;
    m["outputs"] = outputs;
    write_text(out_dir / (command + "_manifest.json"), m.dump(2) + "\n");
}

// ---- keyrate ---------------------------------------------------------------

int run_keyrate(const cvqkd::Config& cfg, const GlobalOpts& g, const ordered_json& opt) {
    using namespace cvqkd::keyrate;
    cvqkd::Config run_cfg = cfg;
    const std::string axis_s = opt.at("axis").get<std::string>();
    const SweepAxis axis = axis_s == "blocksize" ? SweepAxis::BlockSize : SweepAxis::DistanceKm;
    const auto grid = opt.at("grid").get<std::vector<double>>();
    run_cfg.protocol.direction = cvqkd::direction_from_string(opt.at("direction").get<std::string>());
    run_cfg.protocol.mode = cvqkd::mode_from_string(opt.at("mode").get<std::string>());
    const bool finite = opt.at("estimation").get<std::string>() == "finite";

    const auto result = sweep(run_cfg, axis, grid, finite, g.workers);

    const fs::path out_dir(g.out_dir);
    fs::create_directories(out_dir);
    const std::string csv_name = std::string("keyrate_") + (axis_s == "blocksize" ? "blocksize" : "distance") + ".csv";
    write_text(out_dir / csv_name, result.to_csv());
    write_manifest(out_dir, "keyrate", run_cfg, g, opt, {csv_name});

    if (result.all_zero()) {
        std::cerr << "keyrate: zero key at every grid point\n";
        return 3;
    }
    return 0;
}

// ---- estimate ---------------------------------------------------------------

int run_estimate(const cvqkd::Config& cfg, const GlobalOpts& g, const ordered_json& opt) {
    const std::string input = opt.at("input").get<std::string>();
    const auto batch = cvqkd::io::read_batch_csv(input);
    if (opt.contains("mode") && !opt.at("mode").get<std::string>().empty()) {
        const auto want = cvqkd::mode_from_string(opt.at("mode").get<std::string>());
        if (want != batch.mode)
            throw std::runtime_error(
                "estimate: --mode " + cvqkd::to_string(want) + " but '" + input + "' has a " +
                std::to_string(batch.mode == cvqkd::ModulationMode::Double ? 3 : 2) +
                "-column header for mode " + cvqkd::to_string(batch.mode));
    }
    cvqkd::est::SampleRecords records;
    records.mode = batch.mode;
    records.m1 = batch.m1;
    records.m2 = batch.m2;
    records.b = batch.b;
    cvqkd::ProtocolParams params = cfg.protocol;
    params.mode = batch.mode;

    const auto report = cvqkd::est::run_estimation(records, params, cfg.security);

    const fs::path out_dir(g.out_dir);
    fs::create_directories(out_dir);
    write_text(out_dir / "estimate_report.json", report.to_json().dump(2) + "\n");
    write_text(out_dir / "estimate_report.csv",
               cvqkd::est::EstimationReport::csv_header() + "\n" + report.csv_row() + "\n");
    cvqkd::Config run_cfg = cfg;
    run_cfg.protocol = params;
    write_manifest(out_dir, "estimate", run_cfg, g, opt,
                   {"estimate_report.json", "estimate_report.csv"});
    return 0;
}

// ---- simulate ---------------------------------------------------------------

int run_simulate(const cvqkd::Config& cfg, const GlobalOpts& g, const ordered_json& opt) {
    cvqkd::mc::TrialConfig tc;
    tc.seed = g.seed;
    tc.trials = opt.at("trials").get<std::uint64_t>();
    tc.samples_per_trial = opt.at("samples").get<std::uint64_t>();
    tc.m_pe = opt.contains("m_pe") && opt.at("m_pe").get<std::uint64_t>() > 0
                  ? opt.at("m_pe").get<std::uint64_t>()
                  : tc.samples_per_trial / 2;
    tc.params = cfg.protocol;
    tc.channel = cfg.channel;
    tc.disc = cfg.disc;
    tc.security = cfg.security;
    tc.coverage_z = opt.value("coverage_z", 3.0);
    tc.rescale_alice = cfg.bounds.rescale_alice;
    tc.d0_margin = cfg.bounds.d0_margin;
    if (opt.contains("mode") && !opt.at("mode").get<std::string>().empty())
        tc.params.mode = cvqkd::mode_from_string(opt.at("mode").get<std::string>());

    // Refuse workloads that cannot finish at desk scale, with an estimate.
    const double total = static_cast<double>(tc.trials) * static_cast<double>(tc.samples_per_trial);
    if (total > 4e9) {
        std::cerr << "simulate: " << tc.trials << " trials x " << tc.samples_per_trial
                  << " samples = " << total << " samples (~" << total * 2.5e-8 / 60.0
                  << " min of sampling, ~" << total * 8e-9 << " GB transient); "
                  << "cap is 4e9. Reduce --trials or --samples.\n";
        return 2;
    }
    tc.check();

    const auto summary = cvqkd::mc::run_trials(tc, g.workers);

    const fs::path out_dir(g.out_dir);
    fs::create_directories(out_dir);
    std::vector<std::string> outputs = {"simulate_summary.json", "simulate_trials.csv"};
    write_text(out_dir / "simulate_summary.json", summary.to_json().dump(2) + "\n");
    write_text(out_dir / "simulate_trials.csv", summary.trials_csv());
    if (opt.value("dump_raw", false)) {
        for (std::uint64_t t = 0; t < tc.trials; ++t) {
            const auto rec = cvqkd::mc::trial_batches(tc, t);
            cvqkd::io::BatchFile bf;
            bf.mode = rec.mode;
            bf.m1 = rec.m1;
            bf.m2 = rec.m2;
            bf.b = rec.b;
            const std::string name = "raw_trial_" + std::to_string(t) + ".csv";
            cvqkd::io::write_batch_csv((out_dir / name).string(), bf);
            outputs.push_back(name);
        }
    }
    write_manifest(out_dir, "simulate", cfg, g, opt, outputs);

    if (opt.value("check", false)) {
        std::vector<std::string> failures;
        if (summary.triangle_violations > 0)
            failures.push_back("triangle inequality violated in " +
                               std::to_string(summary.triangle_violations) + " trial(s)");
        if (summary.serfling_violations * 200 > tc.trials) // > 0.5% of trials
            failures.push_back("Serfling bound violated in " +
                               std::to_string(summary.serfling_violations) + " trial(s)");
        if (tc.trials >= 2000) {
            if (summary.tau_var_ratio < 0.8 || summary.tau_var_ratio > 1.2)
                failures.push_back("tau variance ratio " + std::to_string(summary.tau_var_ratio) +
                                   " outside [0.8, 1.2]");
            if (summary.veps_var_ratio < 0.8 || summary.veps_var_ratio > 1.2)
                failures.push_back("V_eps variance ratio " +
                                   std::to_string(summary.veps_var_ratio) + " outside [0.8, 1.2]");
        }
        // Empirical out-of-range rate vs the model tail, when counts are informative.
        const double expected =
            summary.p_alpha_model * static_cast<double>(tc.trials * tc.samples_per_trial);
        if (expected >= 10.0) {
            const double n = static_cast<double>(tc.trials * tc.samples_per_trial);
            const double sd = std::sqrt(summary.p_alpha_model * (1 - summary.p_alpha_model) / n);
            if (std::abs(summary.p_alpha_emp - summary.p_alpha_model) > 3.0 * sd)
                failures.push_back("empirical p_alpha inconsistent with the Gaussian tail model");
        }
        // Rerun one trial to confirm determinism of the record.
        if (tc.trials > 0) {
            const auto again = cvqkd::mc::run_protocol_trial(tc, 0);
            if (again.report.c_mb_hat != summary.records[0].report.c_mb_hat ||
                again.d_pe != summary.records[0].d_pe)
                failures.push_back("trial 0 replay differs (determinism breach)");
        }
        if (!failures.empty()) {
            for (const auto& f : failures)
                std::cerr << "simulate --check: " << f << '\n';
            return 1;
        }
        std::cout << "simulate --check: all invariants hold\n";
    }
    return 0;
}

// ---- optimize ---------------------------------------------------------------

int run_optimize(const cvqkd::Config& cfg, const GlobalOpts& g, const ordered_json& opt) {
    using namespace cvqkd::keyrate;
    const auto names = opt.at("free").get<std::vector<std::string>>();
    if (names.empty()) {
        std::cerr << "optimize: no free parameters given (see --help)\n";
        return 4;
    }
    std::vector<FreeParameter> free;
    for (const auto& n : names)
        free.push_back(free_parameter_from_string(n));
    const bool finite = opt.at("estimation").get<std::string>() == "finite";

    const auto result = optimize(cfg, free, finite, g.workers);

    const fs::path out_dir(g.out_dir);
    fs::create_directories(out_dir);
    ordered_json best;
    best["rate"] = result.best.rate;
    best["argmax"] = ordered_json::object();
    for (std::size_t i = 0; i < free.size(); ++i)
        best["argmax"][to_string(free[i])] = result.argmax[i];
    best["report"] = result.best.to_json();
    write_text(out_dir / "optimize_best.json", best.dump(2) + "\n");

    std::ostringstream trace;
    for (const auto& f : free)
        trace << to_string(f) << ',';
    trace << "rate,abort_reason\n";
    for (const auto& p : result.trace) {
        for (double v : p.values)
            trace << cvqkd::io::fmt(v) << ',';
        trace << cvqkd::io::fmt(p.rate) << ',' << p.abort_reason << '\n';
    }
    write_text(out_dir / "optimize_trace.csv", trace.str());
    write_manifest(out_dir, "optimize", cfg, g, opt,
                   {"optimize_best.json", "optimize_trace.csv"});
    return 0;
}

int dispatch(const std::string& command, const cvqkd::Config& cfg, const GlobalOpts& g,
             const ordered_json& opt) {
    if (command == "keyrate")
        return run_keyrate(cfg, g, opt);
    if (command == "estimate")
        return run_estimate(cfg, g, opt);
    if (command == "simulate")
        return run_simulate(cfg, g, opt);
    if (command == "optimize")
        return run_optimize(cfg, g, opt);
    throw std::runtime_error("unknown command in manifest: " + command);
}

int run_replay(const std::string& manifest_path, GlobalOpts g) {
    std::ifstream in(manifest_path);
    if (!in) {
        std::cerr << "replay: cannot open " << manifest_path << '\n';
        return 2;
    }
    ordered_json m;
    in >> m;
    const auto cfg = cvqkd::config_from_json(m.at("config"));
    g.seed = m.at("seed").get<std::uint64_t>();
    g.workers = m.at("workers").get<int>();
    return dispatch(m.at("command").get<std::string>(), cfg, g, m.at("options"));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-size CV-QKD key-rate calculator and Monte-Carlo validator"};
    app.require_subcommand(1);

    GlobalOpts g;
    g.out_dir = default_out_dir();
    app.add_option("--config", g.config_path, "JSON configuration file")->envname("CVQKD_CONFIG");
    app.add_option("--seed", g.seed, "master seed (required for simulate)");
    app.add_option("--out", g.out_dir, "output directory (env CVQKD_OUT_DIR)");
    app.add_option("--workers", g.workers, "worker thread cap; never affects results")
        ->check(CLI::Range(1, 1024));

    // keyrate
    auto* kr = app.add_subcommand("keyrate", "sweep secret-key rates over a grid");
    std::string axis = "distance", grid_spec = "0:30:31", direction = "rr", mode = "single",
                estimation = "finite";
    kr->add_option("--axis", axis, "distance | blocksize")
        ->check(CLI::IsMember({"distance", "blocksize"}));
    kr->add_option("--grid", grid_spec, "comma list or start:stop:count (e.g. 1e7,1e8,1e9)");
    kr->add_option("--direction", direction, "dr | rr")->check(CLI::IsMember({"dr", "rr"}));
    kr->add_option("--mode", mode, "single | double")->check(CLI::IsMember({"single", "double"}));
    kr->add_option("--estimation", estimation, "ideal | finite")
        ->check(CLI::IsMember({"ideal", "finite"}));

    // estimate
    auto* es = app.add_subcommand("estimate", "ML channel estimation from a batch CSV");
    std::string input, est_mode;
    es->add_option("--input", input, "CSV with columns m,b or m1,m2,b")->required();
    es->add_option("--mode", est_mode, "expected mode; must match the file header")
        ->check(CLI::IsMember({"single", "double"}));

    // simulate
    auto* si = app.add_subcommand("simulate", "Monte-Carlo protocol trials");
    std::uint64_t trials = 100, samples = 10000, m_pe = 0;
    double coverage_z = 3.0;
    bool check = false, dump_raw = false;
    std::string sim_mode;
    si->add_option("--trials", trials, "number of protocol trials");
    si->add_option("--samples", samples, "signals per trial (N)");
    si->add_option("--m-pe", m_pe, "PE partition size (default N/2, single mode)");
    si->add_option("--coverage-z", coverage_z, "z-score for the coverage tally");
    si->add_option("--mode", sim_mode, "single | double (overrides config)")
        ->check(CLI::IsMember({"single", "double"}));
    si->add_flag("--check", check, "run the invariant suite; nonzero exit on violation");
    si->add_flag("--dump-raw", dump_raw, "dump per-trial batches as CSV");

    // optimize
    auto* op = app.add_subcommand("optimize", "grid-search free parameters for max rate");
    std::vector<std::string> free_names;
    std::string opt_estimation = "finite";
    op->add_option("--free", free_names,
                   "free parameters: m_fraction, v_m2_fraction, bits, v_m")
        ->delimiter(',');
    op->add_option("--estimation", opt_estimation, "ideal | finite")
        ->check(CLI::IsMember({"ideal", "finite"}));

    // replay
    auto* rp = app.add_subcommand("replay", "re-run a recorded manifest");
    std::string manifest_path;
    rp->add_option("--manifest", manifest_path, "manifest JSON produced by another command")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (rp->parsed())
            return run_replay(manifest_path, g);

        if (g.config_path.empty()) {
            std::cerr << "a --config file is required\n";
            return 2;
        }
        const cvqkd::Config cfg = cvqkd::load_config(g.config_path);

        if (kr->parsed()) {
            ordered_json opt{{"axis", axis},
                             {"grid", parse_grid(grid_spec)},
                             {"direction", direction},
                             {"mode", mode},
                             {"estimation", estimation}};
            return run_keyrate(cfg, g, opt);
        }
        if (es->parsed()) {
            ordered_json opt{{"input", input}, {"mode", est_mode}};
            return run_estimate(cfg, g, opt);
        }
        if (si->parsed()) {
            if (!si->count("--trials") && !si->count("--samples") && trials * samples == 0) {
                std::cerr << "simulate: --trials and --samples must be positive\n";
                return 2;
            }
            if (app.count("--seed") == 0) {
                std::cerr << "simulate: --seed is required for reproducibility\n";
                return 2;
            }
            ordered_json opt{{"trials", trials},     {"samples", samples},
                             {"m_pe", m_pe},         {"coverage_z", coverage_z},
                             {"mode", sim_mode},     {"check", check},
                             {"dump_raw", dump_raw}};
            return run_simulate(cfg, g, opt);
        }
        if (op->parsed()) {
            ordered_json opt{{"free", free_names}, {"estimation", opt_estimation}};
            return run_optimize(cfg, g, opt);
        }
    } catch (const cvqkd::ValidationError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
