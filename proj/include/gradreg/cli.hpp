#pragma once
// Command-line front end: generate / train / sweep / validate / check.
// Exit codes: 0 ok, 1 usage error, 2 validation or configuration failure,
// 3 runtime abort. Relative output directories resolve against
// GRADREG_OUTPUT_ROOT when that variable is set.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gradreg/config.hpp"
#include "gradreg/sweep.hpp"
#include "gradreg/validate.hpp"

namespace gradreg {

namespace cli_detail {

inline std::filesystem::path resolve_out_dir(const std::string& dir) {
    std::filesystem::path p(dir);
    if (p.is_relative()) {
        if (const char* root = std::getenv("GRADREG_OUTPUT_ROOT")) return std::filesystem::path(root) / p;
    }
    return p;
}

// Shared data/model/train flags for train, sweep and check. File values are
// applied first, then the preset, then explicitly passed flags; the preset's
// sigma_0-from-sigma_p rule is re-resolved after flag overrides unless
// sigma_0 was given explicitly.
struct ConfigFlags {
    std::string config_path;
    std::string preset;
    ExperimentConfig flags;  // bound targets for CLI11
    CLI::Option* o_d = nullptr; CLI::Option* o_n = nullptr; CLI::Option* o_mu = nullptr;
    CLI::Option* o_sp = nullptr; CLI::Option* o_m = nullptr; CLI::Option* o_s0 = nullptr;
    CLI::Option* o_eta = nullptr; CLI::Option* o_epochs = nullptr; CLI::Option* o_mode = nullptr;
    CLI::Option* o_lambda = nullptr; CLI::Option* o_cutoff = nullptr; CLI::Option* o_log = nullptr;
    CLI::Option* o_cf = nullptr; CLI::Option* o_ts = nullptr; CLI::Option* o_dseed = nullptr;
    CLI::Option* o_iseed = nullptr; CLI::Option* o_tseed = nullptr; CLI::Option* o_out = nullptr;
    CLI::Option* o_plot = nullptr; CLI::Option* o_coeffs = nullptr; CLI::Option* o_rho = nullptr;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key = value config file (dotted sections)");
        cmd->add_option("--preset", preset, "named preset: paper-6.1")
            ->check(CLI::IsMember({"paper-6.1"}));
        o_d = cmd->add_option("--d", flags.d, "patch dimension");
        o_n = cmd->add_option("--n", flags.n, "training set size");
        o_mu = cmd->add_option("--mu-norm", flags.mu_norm, "signal norm |mu|");
        o_sp = cmd->add_option("--sigma-p", flags.sigma_p, "noise scale sigma_p");
        o_m = cmd->add_option("--m", flags.m, "network width");
        o_s0 = cmd->add_option("--sigma-0", flags.sigma_0, "init scale sigma_0");
        o_eta = cmd->add_option("--eta", flags.eta, "learning rate");
        o_epochs = cmd->add_option("--epochs", flags.epochs, "full-batch steps");
        o_mode = cmd->add_option("--mode", flags.mode, "standard | pegr | fgr");
        o_lambda = cmd->add_option("--lambda", flags.lambda, "regularization weight");
        o_cutoff = cmd->add_option("--cutoff", flags.cutoff, "epoch N, theory:<delta>, or never");
        o_log = cmd->add_option("--log-every", flags.log_every, "record cadence in epochs");
        o_cf = cmd->add_option("--closed-form", flags.use_closed_form_pegr,
                               "use the closed-form standard/PEGR step");
        o_ts = cmd->add_option("--test-samples", flags.test_samples, "test stream size (0 = off)");
        o_dseed = cmd->add_option("--data-seed", flags.data_seed, "data seed");
        o_iseed = cmd->add_option("--init-seed", flags.init_seed, "init seed");
        o_tseed = cmd->add_option("--test-seed", flags.test_seed, "test stream seed");
        o_out = cmd->add_option("--out-dir", flags.directory, "output directory");
        o_plot = cmd->add_flag("--plot", flags.plot, "write SVG training curves");
        o_coeffs = cmd->add_flag("--dump-coeffs", flags.dump_coeffs,
                                 "write coeffs.csv with the tracked gamma per (epoch, j, r)");
        o_rho = cmd->add_flag("--dump-rho", flags.dump_rho,
                              "include the n per-example rho columns in coeffs.csv");
    }

    ExperimentConfig resolve() const {
        ExperimentConfig cfg;
        if (!config_path.empty()) cfg.load_file(config_path);
        if (preset == "paper-6.1") cfg.apply_preset_61();
        auto took = [](CLI::Option* o) { return o != nullptr && o->count() > 0; };
        if (took(o_d)) cfg.d = flags.d;
        if (took(o_n)) cfg.n = flags.n;
        if (took(o_mu)) cfg.mu_norm = flags.mu_norm;
        if (took(o_sp)) cfg.sigma_p = flags.sigma_p;
        if (took(o_m)) cfg.m = flags.m;
        if (took(o_s0)) { cfg.sigma_0 = flags.sigma_0; cfg.sigma_0_explicit = true; }
        if (took(o_eta)) cfg.eta = flags.eta;
        if (took(o_epochs)) cfg.epochs = flags.epochs;
        if (took(o_mode)) cfg.mode = flags.mode;
        if (took(o_lambda)) cfg.lambda = flags.lambda;
        if (took(o_cutoff)) cfg.cutoff = flags.cutoff;
        if (took(o_log)) cfg.log_every = flags.log_every;
        if (took(o_cf)) cfg.use_closed_form_pegr = flags.use_closed_form_pegr;
        if (took(o_ts)) cfg.test_samples = flags.test_samples;
        if (took(o_dseed)) cfg.data_seed = flags.data_seed;
        if (took(o_iseed)) cfg.init_seed = flags.init_seed;
        if (took(o_tseed)) cfg.test_seed = flags.test_seed;
        if (took(o_out)) cfg.directory = flags.directory;
        if (took(o_plot)) cfg.plot = flags.plot;
        if (took(o_coeffs)) cfg.dump_coeffs = flags.dump_coeffs;
        if (took(o_rho)) cfg.dump_rho = flags.dump_rho;
        if (preset == "paper-6.1" && !cfg.sigma_0_explicit)
            cfg.sigma_0 = ExperimentConfig::preset_61_sigma_0(cfg.sigma_p);
        return cfg;
    }
};

inline int do_train(const ExperimentConfig& cfg, const std::string& dataset_path) {
    cfg.validate();
    const std::filesystem::path dir = resolve_out_dir(cfg.directory);
    std::filesystem::create_directories(dir);

    Dataset ds = [&] {
        if (!dataset_path.empty()) {
            std::ifstream in(dataset_path);
            if (!in) throw std::runtime_error("cannot open dataset '" + dataset_path + "'");
            return Dataset::load(in);
        }
        return Dataset::generate(cfg.data_spec(), cfg.n, cfg.data_seed);
    }();

    const ModelParams init = init_gaussian(cfg.m, ds.d(), cfg.sigma_0, cfg.init_seed);
    TrainConfig tc = cfg.train_config();
    tc.abort_dump_path = (dir / "abort_checkpoint.txt").string();
    const TrainTrace trace = train(init, ds, tc);

    {
        std::ofstream out(dir / "trace.csv");
        write_trace_csv(trace, out);
    }
    {
        std::ofstream out(dir / "checkpoint.txt");
        save_checkpoint(trace.final_params, out);
    }
    if (cfg.dump_coeffs || cfg.dump_rho) {
        std::ofstream out(dir / "coeffs.csv");
        write_coefficients_csv(trace, out, cfg.dump_rho);
    }
    if (cfg.plot) {
        std::ifstream back(dir / "trace.csv");
        write_trace_plots(read_trace_csv(back), dir, "trace");
    }

    const EpochRecord& last = trace.records.back();
    std::cout << "epochs=" << last.epoch << " mode=" << cfg.mode
              << " final_train_loss=" << fmt_g17(last.train_loss)
              << " final_test_error=" << fmt_g17(last.test_error)
              << " signal=" << fmt_g17(last.signal) << " noise=" << fmt_g17(last.noise_max) << '\n';
    std::cout << "diagnostics: coefficient_bound_violations=" << trace.bound_violation_total
              << " grad_bound_violations=" << trace.grad_bound_violation_total
              << " monotonicity_violations=" << trace.monotonicity_violation_total
              << " loss_increase_steps=" << trace.loss_increase_steps
              << " rho_bar_up_steps=" << trace.rho_bar_up_steps
              << " rho_bar_down_steps=" << trace.rho_bar_down_steps
              << " beta=" << fmt_g17(trace.beta) << '\n';
    std::cout << "wrote " << (dir / "trace.csv").string() << '\n';
    return 0;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    CLI::App app{"signal-noise training laboratory for gradient regularization"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "sample a dataset and write the text format");
    int gen_d = 0, gen_n = 0;
    double gen_sp = 0.0, gen_mu = 1.0;
    std::uint64_t gen_seed = 1;
    std::string gen_out = "dataset.txt";
    gen->add_option("--d", gen_d, "patch dimension")->required();
    gen->add_option("--n", gen_n, "number of points")->required();
    gen->add_option("--sigma-p", gen_sp, "noise scale")->required();
    gen->add_option("--mu-norm", gen_mu, "signal norm");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--out", gen_out, "output file");

    // train
    auto* tr = app.add_subcommand("train", "run one training and write the trace CSV");
    cli_detail::ConfigFlags tr_flags;
    tr_flags.attach(tr);
    std::string tr_dataset;
    tr->add_option("--dataset", tr_dataset, "load training data from file instead of generating");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run a sigma_p x mode x seed grid");
    cli_detail::ConfigFlags sw_flags;
    sw_flags.attach(sw);
    std::vector<double> sw_sps;
    std::vector<std::string> sw_modes;
    int sw_reps = 0, sw_workers = 1;
    sw->add_option("--sigma-p-list", sw_sps, "sigma_p grid values")->delimiter(',');
    sw->add_option("--modes", sw_modes, "mode grid values")->delimiter(',');
    sw->add_option("--replicates", sw_reps, "seed replicates per cell");
    sw->add_option("--workers", sw_workers, "concurrent cells");

    // validate
    auto* va = app.add_subcommand("validate", "run the numerical self-check battery");
    va->set_help_flag("--help", "print help and exit");  // frees -h for the step size
    ValidationOptions vopts;
    va->add_option("--only", vopts.only, "run only the named checks")
        ->check(CLI::IsMember({"grad-fd", "closed-form", "decomposition", "concentration"}));
    va->add_option("--h", vopts.h, "finite-difference step");
    va->add_option("--instances", vopts.fd_instances, "finite-difference instances");
    va->add_option("--trials", vopts.concentration_trials, "concentration trials");
    va->add_option("--seed", vopts.seed, "base seed");
    va->add_flag("--inject-grad-perturbation", vopts.inject_grad_perturbation,
                 "fault-injection hook: corrupt one gradient component");

    // check
    auto* ch = app.add_subcommand("check", "report the training-regime condition clauses");
    cli_detail::ConfigFlags ch_flags;
    ch_flags.attach(ch);
    TheoryParams theory;
    ch->add_option("--alpha", theory.alpha, "condition exponent alpha");
    ch->add_option("--delta", theory.delta, "confidence delta");
    ch->add_option("--epsilon", theory.epsilon, "target loss epsilon");
    ch->add_option("--t-star", theory.t_star, "diagnostic horizon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (app.got_subcommand(gen)) {
            const SignalNoiseSpec spec = SignalNoiseSpec::axis(gen_d, gen_mu, gen_sp);
            const Dataset ds = Dataset::generate(spec, gen_n, gen_seed);
            const std::filesystem::path out = cli_detail::resolve_out_dir(gen_out);
            if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
            std::ofstream f(out);
            if (!f) throw std::runtime_error("cannot write '" + out.string() + "'");
            ds.save(f);
            std::cout << "wrote " << out.string() << " (n=" << ds.n() << ", d=" << ds.d() << ")\n";
            return 0;
        }
        if (app.got_subcommand(tr)) return cli_detail::do_train(tr_flags.resolve(), tr_dataset);
        if (app.got_subcommand(sw)) {
            SweepSpec spec;
            spec.base = sw_flags.resolve();
            const bool preset = sw_flags.preset == "paper-6.1";
            if (preset) {
                spec.sigma_p_values = {0.1, 0.5, 1.0, 1.5};
                spec.modes = {"standard", "pegr", "fgr"};
                spec.replicates = 5;
            }
            if (!sw_sps.empty()) spec.sigma_p_values = sw_sps;
            if (!sw_modes.empty()) spec.modes = sw_modes;
            if (sw_reps > 0) spec.replicates = sw_reps;
            spec.base.validate();
            const std::filesystem::path dir = cli_detail::resolve_out_dir(spec.base.directory);
            const SweepResult res = run_sweep(spec, preset, dir, sw_workers, spec.base.plot);
            std::cout << "cells=" << res.rows.size() << " failures=" << res.failures << '\n';
            std::cout << "wrote " << (dir / "summary.csv").string() << " and "
                      << (dir / "medians.csv").string() << '\n';
            return res.failures == 0 ? 0 : 3;
        }
        if (app.got_subcommand(va)) {
            const auto results = run_validation(vopts);
            bool all = true;
            for (const auto& r : results) {
                std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name
                          << ": measured=" << fmt_g17(r.measured) << " tolerated=" << fmt_g17(r.tolerance);
                if (!r.detail.empty()) std::cout << "  " << r.detail;
                std::cout << '\n';
                all = all && r.pass;
            }
            return all ? 0 : 2;
        }
        if (app.got_subcommand(ch)) {
            const ExperimentConfig cfg = ch_flags.resolve();
            cfg.validate();
            theory.validate();
            const ConditionReport rep =
                check_condition(cfg.data_spec(), cfg.n, cfg.m, cfg.eta, cfg.sigma_0, theory);
            std::cout << rep.table() << '\n' << rep.machine_lines();
            return 0;
        }
    } catch (const TrainAbortError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const RegimeViolation& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}

}  // namespace gradreg
