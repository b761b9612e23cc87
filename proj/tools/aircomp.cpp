// aircomp: batch front end for the digital over-the-air computation simulator.
//
// Subcommands:
//   sumber       SUM BER vs SNR sweeps (one CSV per phase scenario)
//   phase-sweep  fixed phase-offset grid (one CSV per offset)
//   fl           federated-learning simulation (per-round CSV + summary)
//   bound        convergence-bound evaluation (per-round CSV)
//   validate     brute-force oracle self-checks
//
// Exit codes: 0 success, 1 config error, 2 validation failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aircomp/aggregate.hpp"
#include "aircomp/analysis.hpp"
#include "aircomp/common.hpp"
#include "aircomp/conv.hpp"
#include "aircomp/flsim.hpp"
#include "aircomp/ldpc.hpp"
#include "aircomp/oracle.hpp"
#include "aircomp/phy.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct ConfigFile {
    json data;
    uint64_t digest = 0;
};

ConfigFile load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string raw = ss.str();
    ConfigFile cf;
    cf.digest = aircomp::fnv1a(raw.data(), raw.size());
    cf.data = json::parse(raw);
    if (!cf.data.contains("version") || cf.data["version"].get<int>() != 1)
        throw std::runtime_error("config: missing or unsupported version (expected 1)");
    return cf;
}

std::ofstream open_output(const std::string& out_dir, const std::string& name) {
    fs::create_directories(out_dir);
    const fs::path p = fs::path(out_dir) / name;
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    std::cerr << "writing " << p.string() << "\n";
    return f;
}

aircomp::SweepSpec sweep_spec_from_json(const json& j, const aircomp::ParityCheckMatrix* ldpc,
                                        uint64_t seed, int jobs) {
    aircomp::SweepSpec s;
    for (const auto& v : j.at("snr_db"))  // numbers, or the string "inf" for noiseless
        s.snr_db.push_back(v.is_string() ? std::numeric_limits<double>::infinity()
                                         : v.get<double>());
    s.users = j.value("users", 2);
    s.frames = j.value("frames", 100);
    s.seed = seed;
    s.jobs = jobs;
    s.conv_info_bits = j.value("conv_info_bits", size_t{1026});
    s.rsjd_retained = j.value("rsjd_retained", size_t{256});
    s.ldpc_iterations = j.value("ldpc_iterations", 40);
    s.subcarriers = j.value("subcarriers", 48);
    s.lh_opts.norm = aircomp::distance_norm_from_name(j.value("likelihood_norm", "none"));
    s.ldpc = ldpc;
    return s;
}

std::string theta_tag(double theta) {
    const int deg = int(std::lround(theta * 180.0 / std::numbers::pi));
    return "theta" + std::to_string(deg);
}

int cmd_sumber(const ConfigFile& cf, uint64_t seed, const std::string& out_dir, int jobs) {
    const json& j = cf.data;
    std::unique_ptr<aircomp::ParityCheckMatrix> ldpc;
    if (j.contains("ldpc_matrix"))
        ldpc = std::make_unique<aircomp::ParityCheckMatrix>(
            aircomp::ParityCheckMatrix::load(j.at("ldpc_matrix").get<std::string>()));
    const auto decoders = j.at("decoders").get<std::vector<std::string>>();

    std::vector<json> scen_list;
    if (j.contains("scenarios"))
        for (const auto& s : j.at("scenarios")) scen_list.push_back(s);
    else
        scen_list.push_back(json{{"scenario", j.value("scenario", "aligned")},
                                 {"theta", j.value("theta", 0.0)}});

    for (const auto& sj : scen_list) {
        const auto scen = aircomp::scenario_from_name(sj.at("scenario").get<std::string>());
        const double theta = sj.value("theta", 0.0);
        std::vector<aircomp::SweepRow> rows;
        for (const auto& dname : decoders) {
            auto spec = sweep_spec_from_json(j, ldpc.get(), seed, jobs);
            spec.decoder = aircomp::decoder_from_name(dname);
            spec.scenario = scen;
            spec.theta = theta;
            auto r = aircomp::run_sweep(spec);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        std::string name = std::string("sumber_") + aircomp::scenario_name(scen);
        if (scen == aircomp::PhaseScenario::FixedOffset) name += "_" + theta_tag(theta);
        auto f = open_output(out_dir, name + ".csv");
        aircomp::write_sweep_csv(f, rows, seed, cf.digest);
    }
    return 0;
}

int cmd_phase_sweep(const ConfigFile& cf, uint64_t seed, const std::string& out_dir, int jobs) {
    const json& j = cf.data;
    std::unique_ptr<aircomp::ParityCheckMatrix> ldpc;
    if (j.contains("ldpc_matrix"))
        ldpc = std::make_unique<aircomp::ParityCheckMatrix>(
            aircomp::ParityCheckMatrix::load(j.at("ldpc_matrix").get<std::string>()));
    const auto decoders = j.at("decoders").get<std::vector<std::string>>();
    const auto thetas = j.at("thetas").get<std::vector<double>>();
    for (double theta : thetas) {
        std::vector<aircomp::SweepRow> rows;
        for (const auto& dname : decoders) {
            auto spec = sweep_spec_from_json(j, ldpc.get(), seed, jobs);
            spec.decoder = aircomp::decoder_from_name(dname);
            spec.scenario = aircomp::PhaseScenario::FixedOffset;
            spec.theta = theta;
            auto r = aircomp::run_sweep(spec);
            rows.insert(rows.end(), r.begin(), r.end());
        }
        auto f = open_output(out_dir, "phase_sweep_" + theta_tag(theta) + ".csv");
        aircomp::write_sweep_csv(f, rows, seed, cf.digest);
    }
    return 0;
}

aircomp::FLConfig fl_config_from_json(const json& j, const aircomp::ParityCheckMatrix* ldpc,
                                      uint64_t seed) {
    aircomp::FLConfig c;
    c.devices = j.value("devices", 40);
    c.selected = j.value("selected", 4);
    c.users = j.value("users", 4);
    c.tau = j.value("tau", 5);
    c.eta = j.value("eta", 0.1);
    c.rounds = j.value("rounds", 100);
    c.batch = j.value("batch", 32);
    c.snr_db = j.value("snr_db", 10.0);
    c.trace_sum_ber = j.value("trace_sum_ber", 0.0);
    c.quant.bits = j.value("quant_bits", 8);
    c.quant.range = j.value("quant_range", 0.25);
    c.ldpc = ldpc;
    c.ldpc_iterations = j.value("ldpc_iterations", 40);
    c.analog_repeats = j.value("analog_repeats", 16);
    c.analog_subcarriers = j.value("analog_subcarriers", 2);
    c.max_cfo_hz = j.value("max_cfo_hz", 350.0);
    c.train_samples = j.value("train_samples", size_t{4000});
    c.test_samples = j.value("test_samples", size_t{2000});
    c.seed = seed;
    return c;
}

int cmd_fl(const ConfigFile& cf, uint64_t seed, const std::string& out_dir) {
    const json& j = cf.data;
    std::unique_ptr<aircomp::ParityCheckMatrix> ldpc;
    if (j.contains("ldpc_matrix"))
        ldpc = std::make_unique<aircomp::ParityCheckMatrix>(
            aircomp::ParityCheckMatrix::load(j.at("ldpc_matrix").get<std::string>()));
    std::vector<std::string> modes = j.value("modes", std::vector<std::string>{"error-free"});

    auto summary = open_output(out_dir, "fl_summary.csv");
    summary << "# " << aircomp::kToolVersion << " seed=" << seed
            << " config=" << aircomp::to_hex(cf.digest) << "\n";
    summary << "mode,snr_db,final_train_loss,final_test_acc\n";
    for (const auto& mode : modes) {
        auto cfg = fl_config_from_json(j, ldpc.get(), seed);
        cfg.mode = aircomp::channel_mode_from_name(mode);
        auto records = aircomp::run_fl(cfg);
        auto f = open_output(out_dir, "fl_" + mode + ".csv");
        aircomp::write_fl_csv(f, records, seed, cf.digest);
        const auto& last = records.back();
        summary << mode << ',' << last.snr_db << ',' << last.train_loss << ',' << last.test_acc
                << "\n";
    }
    return 0;
}

int cmd_bound(const ConfigFile& cf, uint64_t seed, const std::string& out_dir) {
    const json& j = cf.data;
    aircomp::ConvergenceParams cp;
    cp.mu = j.value("mu", 1.0);
    cp.l_smooth = j.value("l_smooth", 1.0);
    cp.gamma = j.value("gamma", 10.0);
    cp.tau = j.value("tau", 1);
    cp.g2 = j.value("g2", 1.0);
    cp.gamma_div = j.value("heterogeneity", 0.0);
    cp.sigma2 = j.value("sigma2", std::vector<double>{1.0});
    cp.p = j.value("p", std::vector<double>{1.0});
    cp.rounds = j.value("rounds", 100);
    cp.dim = j.value("dim", 64);
    aircomp::RoundError re;
    re.bits = j.value("quant_bits", 8);
    re.span = j.value("span", 2.0);
    re.alpha = j.value("alpha", 0.0);
    cp.round_err = aircomp::ConvergenceParams::uniform_rounds(cp.rounds, cp.p.size(), re);
    const double w0_gap = j.value("w0_gap", 1.0);

    auto bounds = aircomp::theorem1_bound(cp, w0_gap);
    auto f = open_output(out_dir, "bound.csv");
    f << "# " << aircomp::kToolVersion << " seed=" << seed
      << " config=" << aircomp::to_hex(cf.digest) << "\n";
    f << "round,total,first_term,quant_term,k_term\n";
    f.precision(12);
    for (size_t t = 0; t < bounds.size(); ++t)
        f << (t + 1) << ',' << bounds[t].total() << ',' << bounds[t].first_term << ','
          << bounds[t].quant_term << ',' << bounds[t].k_term << "\n";
    return 0;
}

bool report(const char* name, bool ok) {
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << name << "\n";
    return ok;
}

int cmd_validate(uint64_t seed) {
    using namespace aircomp;
    bool all = true;

    // 1. FSJD vs exhaustive joint ML on a toy code.
    {
        ConvCode toy{3, {05, 07}, true};
        bool ok = true;
        for (int inst = 0; inst < 50 && ok; ++inst) {
            Rng rng(mix_seed(seed, 0x10, inst));
            const size_t k = 10;
            LikelihoodGrid lh(2, (k + 2) * 2);
            std::uniform_real_distribution<double> unif(0.01, 1.0);
            for (size_t n = 0; n < lh.positions(); ++n)
                for (size_t b = 0; b < 4; ++b) lh.at(n)[b] = unif(rng);
            auto fs = fsjd_decode_detail(lh, toy, 2);
            auto ex = oracle::exhaustive_joint_ml(lh, toy, 2);
            ok = std::abs(fs.cost - ex.cost) <= 1e-9 && (ex.tie || fs.sum == ex.sum);
        }
        all &= report("fsjd matches exhaustive joint ML (50 instances)", ok);
    }

    // 2. Joint BP posteriors vs brute-force marginalization on a cycle-free code.
    {
        auto h = ParityCheckMatrix::from_checks(9, 5, {{0, 1, 2}, {2, 3, 4}, {4, 5, 6}, {6, 7, 8}});
        bool ok = true;
        for (int inst = 0; inst < 20 && ok; ++inst) {
            Rng rng(mix_seed(seed, 0x20, inst));
            LikelihoodGrid lh(2, 9);
            std::uniform_real_distribution<double> unif(0.01, 1.0);
            for (size_t n = 0; n < 9; ++n)
                for (size_t b = 0; b < 4; ++b) lh.at(n)[b] = unif(rng);
            auto bp = ldpc_jt_posteriors(lh, h, 2, 40);
            auto ref = oracle::brute_joint_posteriors(lh, h, 2);
            for (size_t v = 0; v < 9 && ok; ++v)
                for (size_t b = 0; b < 4; ++b) ok &= std::abs(bp[v][b] - ref[v][b]) <= 1e-9;
        }
        all &= report("joint BP equals brute-force marginalization on a tree", ok);
    }

    // 3. Closed-form SUM BER vs Monte-Carlo.
    {
        bool ok = true;
        for (int n = 2; n <= 4 && ok; ++n) {
            const double alpha = 0.01;
            const size_t bits = 1000000;
            const double beta = analytic_sum_ber(alpha, n);
            const double mc = oracle::mc_sum_ber(alpha, n, bits, mix_seed(seed, 0x30, n));
            const double sigma = std::sqrt(beta * (1 - beta) / double(bits));
            ok = std::abs(mc - beta) <= 3 * sigma;
        }
        all &= report("closed-form SUM BER matches Monte-Carlo (alpha=0.01, n=2..4)", ok);
    }

    // 4. Quantizer unbiasedness.
    {
        QuantizerConfig q{4, 1.0};
        const double v = 0.3;
        const size_t n = 100000;
        double mean = 0.0, var = 0.0;
        for (size_t i = 0; i < n; ++i) {
            auto qb = quantize_stochastic({v}, q, mix_seed(seed, 0x40, i));
            const double x = dequantize(qb)[0];
            mean += x;
            var += (x - v) * (x - v);
        }
        mean /= double(n);
        var /= double(n);
        const bool ok = std::abs(mean - v) <= 4.0 * std::sqrt(var / double(n));
        all &= report("stochastic quantizer is unbiased (1e5 draws)", ok);
    }

    return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(aircomp::kToolVersion) +
                 " - digital over-the-air computation simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    uint64_t seed = 1;
    int jobs = 1;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        if (needs_config)
            sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--seed", seed, "master RNG seed");
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--jobs", jobs, "worker threads for Monte-Carlo points");
    };

    auto* sumber = app.add_subcommand("sumber", "SUM BER vs SNR sweeps");
    add_common(sumber, true);
    auto* phase = app.add_subcommand("phase-sweep", "fixed phase-offset grid");
    add_common(phase, true);
    auto* fl = app.add_subcommand("fl", "federated-learning simulation");
    add_common(fl, true);
    auto* bound = app.add_subcommand("bound", "convergence bound evaluation");
    add_common(bound, true);
    auto* validate = app.add_subcommand("validate", "brute-force oracle self-checks");
    add_common(validate, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate->parsed()) return cmd_validate(seed);
        const ConfigFile cf = load_config(config_path);
        if (sumber->parsed()) return cmd_sumber(cf, seed, out_dir, jobs);
        if (phase->parsed()) return cmd_phase_sweep(cf, seed, out_dir, jobs);
        if (fl->parsed()) return cmd_fl(cf, seed, out_dir);
        if (bound->parsed()) return cmd_bound(cf, seed, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
