#include "mambaest_cli/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "mambaest/checkpoint.hpp"
#include "mambaest/config.hpp"
#include "mambaest/eval.hpp"
#include "mambaest/mambanet.hpp"
#include "mambaest/rng.hpp"
#include "mambaest/selftest.hpp"
#include "mambaest/training.hpp"

namespace fs = std::filesystem;

namespace mambaest::cli {

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
    std::string profile = "paper";
    std::optional<std::size_t> workers;
    std::string data_path;
    std::string checkpoint_path;
};

struct Context {
    std::string command;
    RunConfig cfg;
    fs::path out_dir;
    std::ostream& out;
    std::ostream& err;

    std::string header() const {
        return "mambaest " + tool_version() + " command=" + command + " profile=" + profile_name(cfg.profile) +
               " config_hash=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed);
    }

    std::map<std::string, std::string> header_map() const {
        std::map<std::string, std::string> h{{"tool", "mambaest"},
                                             {"version", tool_version()},
                                             {"command", command},
                                             {"profile", profile_name(cfg.profile)},
                                             {"config_hash", cfg.hash_hex()},
                                             {"seed", std::to_string(cfg.seed)}};
        // Worker count never changes results, so it stays out of artifacts.
        for (const auto& [k, v] : cfg.to_kv())
            if (k != "run.workers") h["config." + k] = v;
        return h;
    }

    fs::path artifact(const std::string& name) const {
        fs::create_directories(out_dir);
        return out_dir / name;
    }
};

std::ofstream open_text(const fs::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

RunConfig resolve_config(const Options& o) {
    RunConfig cfg = RunConfig::for_profile(parse_profile(o.profile));
    if (!o.config_path.empty()) cfg = load_config(o.config_path, cfg);
    if (o.seed) cfg.seed = *o.seed;
    if (o.workers) cfg.workers = *o.workers;
    cfg.validate();
    return cfg;
}

Dataset dataset_for(const Context& ctx, const std::string& data_path) {
    if (!data_path.empty()) {
        Dataset data = load_dataset(data_path);
        if (data.n_f != ctx.cfg.baseband.n_f || data.n_s != ctx.cfg.baseband.n_s) {
            throw ConfigError("--data: dataset grid " + std::to_string(data.n_f) + "x" + std::to_string(data.n_s) +
                              " does not match the configuration");
        }
        return data;
    }
    return generate_dataset(ctx.cfg.dataset_spec(), ctx.cfg.baseband, ctx.cfg.pdp(), derive_seed(ctx.cfg.seed, {0xda7a}),
                            ctx.cfg.workers);
}

int cmd_gen_data(const Context& ctx) {
    const Dataset data = dataset_for(ctx, "");
    const auto path = ctx.artifact("dataset.bin");
    save_dataset(path, data, ctx.header_map());
    ctx.out << "wrote " << data.samples.size() << " samples (" << data.n_train << " train, "
            << data.samples.size() - data.n_train << " validation) to " << path.string() << '\n';
    return kOk;
}

int cmd_train(const Context& ctx, const std::string& data_path) {
    const Dataset data = dataset_for(ctx, data_path);
    const MambaNetConfig net = ctx.cfg.net_config();
    ParameterSet params = init_parameters(net, derive_seed(ctx.cfg.seed, {0x1a17}));
    ctx.out << "training on " << data.n_train << " samples, validating on " << data.samples.size() - data.n_train
            << ", " << params.numel() << " parameters\n";
    const TrainResult result = train(params, net, data, ctx.cfg.train_config(), [&](const EpochRecord& r) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "epoch %3zu  lr %.3e  train %.6e  val %.6e\n", r.epoch, r.lr, r.train_loss,
                      r.val_loss);
        ctx.out << buf << std::flush;
    });

    auto header = ctx.header_map();
    header["best_epoch"] = std::to_string(result.best_epoch);
    save_checkpoint(ctx.artifact("model.ckpt"), result.best, header);
    auto hist = open_text(ctx.artifact("history.csv"));
    write_history_csv(hist, result.history, ctx.header());
    ctx.out << "best epoch " << result.best_epoch << ", checkpoint " << (ctx.out_dir / "model.ckpt").string() << '\n';
    return kOk;
}

ParameterSet load_model(const fs::path& path, const MambaNetConfig& net) {
    Checkpoint ck = load_checkpoint(path);
    const auto specs = parameter_specs(net);
    if (ck.params.size() != specs.size()) {
        throw ConfigError("--checkpoint: " + path.string() + " does not match the network configuration");
    }
    for (const auto& s : specs) {
        if (!ck.params.contains(s.name) || ck.params.get(s.name).shape() != s.shape) {
            throw ConfigError("--checkpoint: parameter '" + s.name + "' missing or mis-shaped in " + path.string());
        }
    }
    return ck.params;
}

int cmd_eval(const Context& ctx, const std::string& checkpoint_path) {
    const auto& cfg = ctx.cfg;
    const auto pdp = cfg.pdp();
    std::vector<Estimator> ests{ls_estimator(cfg.baseband), mmse_estimator(cfg.baseband, pdp, cfg.eval.snr_db),
                                perfect_csi_estimator()};
    fs::path ckpt = checkpoint_path;
    if (ckpt.empty() && fs::exists(ctx.out_dir / "model.ckpt")) ckpt = ctx.out_dir / "model.ckpt";
    if (!ckpt.empty()) ests.push_back(mambanet_estimator(load_model(ckpt, cfg.net_config()), cfg.net_config()));

    const SweepReport report = monte_carlo_sweep(ests, cfg.sweep_config(), cfg.baseband, pdp,
                                                 derive_seed(cfg.seed, {0xe7a1}));
    std::string header = ctx.header();
    if (!ckpt.empty()) header += " checkpoint=" + ckpt.filename().string();
    auto csv = open_text(ctx.artifact("sweep.csv"));
    write_sweep_csv(csv, report, header);
    if (cfg.eval.keep_trials) {
        auto trials = open_text(ctx.artifact("trials.csv"));
        write_trials_csv(trials, report, header);
    }
    write_sweep_table(ctx.out, report);
    write_runtime_table(ctx.out, report);
    return kOk;
}

int cmd_selftest(const Context& ctx) {
    const auto results = run_selftests(&ctx.out);
    std::size_t failed = 0;
    for (const auto& r : results) failed += !r.passed;
    ctx.out << (results.size() - failed) << "/" << results.size() << " checks passed\n";
    return failed ? kCheckFailure : kOk;
}

int cmd_bench_scan(const Context& ctx) {
    const ScanScaling s = bench_scan_scaling(ctx.cfg.eval.bench_lengths, ctx.cfg.eval.bench_reps,
                                             ctx.cfg.net.c_spread);
    auto csv = open_text(ctx.artifact("bench_scan.csv"));
    write_scan_csv(csv, s, ctx.header());
    write_scan_csv(ctx.out, s, ctx.header());
    return kOk;
}

int cmd_count_params(const Context& ctx) {
    const auto c = count_parameters(ctx.cfg.net_config());
    std::ostringstream os;
    os << "# " << ctx.header() << '\n';
    os << "item,count\n";
    os << "total," << c.total << '\n';
    for (const auto& [module, n] : c.by_module) os << "module." << module << ',' << n << '\n';
    os << "attention_in_projection," << c.attention_in_projection << '\n';
    os << "quadratic_in_length," << c.quadratic << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", c.quadratic_exponent);
    os << "quadratic_growth_exponent," << buf << '\n';
    auto csv = open_text(ctx.artifact("params.csv"));
    csv << os.str();
    ctx.out << os.str();
    std::snprintf(buf, sizeof(buf), "%.3fM", static_cast<double>(c.total) / 1e6);
    ctx.out << "total " << buf << " vs published 0.35M\n";
    return kOk;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"OFDM channel-estimation workbench", args.empty() ? "mambaest" : args[0]};
    app.require_subcommand(1);
    Options o;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "Configuration file (section.key = value lines)");
        sub->add_option("--seed", o.seed, "Global seed");
        sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--profile", o.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}))->capture_default_str();
        sub->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
    };
    auto* gen = app.add_subcommand("gen-data", "Generate a training dataset");
    auto* tr = app.add_subcommand("train", "Train the estimator");
    tr->add_option("--data", o.data_path, "Dataset file from gen-data (default: generate from the configuration)");
    auto* ev = app.add_subcommand("eval", "Monte Carlo MSE/BER sweep");
    ev->add_option("--checkpoint", o.checkpoint_path, "Trained model (default: <out>/model.ckpt when present)");
    auto* st = app.add_subcommand("selftest", "Run the invariant checks");
    auto* bs = app.add_subcommand("bench-scan", "Time scan and attention scaling");
    auto* cp = app.add_subcommand("count-params", "Print the parameter count breakdown");
    for (auto* sub : {gen, tr, ev, st, bs, cp}) add_common(sub);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    if (argv.empty()) argv.push_back("mambaest");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kConfigError;
    }

    CLI::App* chosen = app.get_subcommands().front();
    try {
        Context ctx{chosen->get_name(), resolve_config(o), fs::path(o.out_dir), out, err};
        if (chosen == gen) return cmd_gen_data(ctx);
        if (chosen == tr) return cmd_train(ctx, o.data_path);
        if (chosen == ev) return cmd_eval(ctx, o.checkpoint_path);
        if (chosen == st) return cmd_selftest(ctx);
        if (chosen == bs) return cmd_bench_scan(ctx);
        return cmd_count_params(ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace mambaest::cli
