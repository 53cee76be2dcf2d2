// Benchmark harness CLI: runs experiment configs, parameter sweeps and
// noise robustness evaluations, writing per-trial CSV rows plus a summary.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "snn/config.hpp"
#include "snn/experiments.hpp"

namespace {

void print_criterion(const snn::ExperimentSpec& spec) {
    std::printf("experiment       : %s\n", spec.id.c_str());
    std::printf("topology         : %zu-%zu-%zu, %zu sub-connections\n", spec.net.n_inputs, spec.net.n_hidden,
                spec.net.n_outputs, spec.net.sub_connections());
    std::printf("grid             : dt=%g ms, window=%g ms\n", spec.net.grid.dt, spec.net.grid.window);
    std::printf("trials           : %zu (master seed %llu)\n", spec.trials,
                static_cast<unsigned long long>(spec.master_seed));
    std::printf("convergence      : %s error <= %g%s", spec.conv.per_pattern ? "per-pattern" : "total",
                spec.conv.error_threshold, spec.conv.per_pattern ? " per pattern" : "");
    if (spec.conv.min_train_accuracy >= 0)
        std::printf(" AND train accuracy >= %g%%", spec.conv.min_train_accuracy);
    if (spec.conv.min_validation_accuracy >= 0)
        std::printf(" AND noisy-validation accuracy >= %g%%", spec.conv.min_validation_accuracy);
    std::printf("\nmax iterations   : %zu\n", spec.learn.max_iterations);
    if (spec.run_noise_eval)
        std::printf("noise evaluation : sigma %g..%g ms, %zu tests per level\n", spec.noise_sigma_lo,
                    spec.noise_sigma_hi, spec.noise_tests);
}

void write_outputs(const snn::ExperimentResult& result, const std::string& out_path) {
    {
        std::ofstream os(out_path);
        if (!os) throw std::runtime_error("cannot open output file " + out_path);
        snn::write_csv(os, result);
    }
    {
        std::ofstream os(out_path + ".summary");
        snn::write_summary(os, result);
    }
    if (!result.noise.empty()) {
        std::ofstream os(out_path + ".noise.csv");
        snn::write_noise_csv(os, result);
    }
    std::printf("%s: %zu trials, %.0f%% converged, mean iterations %.1f +- %.1f\n", result.spec.id.c_str(),
                result.summary.trials, result.summary.convergence_pct, result.summary.mean_iterations,
                result.summary.sem_iterations);
    if (result.summary.mean_test_accuracy >= 0)
        std::printf("mean test accuracy over converged trials: %.1f%%\n", result.summary.mean_test_accuracy);
    for (const auto& nr : result.noise)
        std::printf("noise sigma %4.1f ms: accuracy %.1f%% (%zu tests)\n", nr.sigma, nr.accuracy, nr.tests);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilayer-ReSuMe spiking network benchmarks"};
    app.require_subcommand(1);

    // --- run ---
    auto* run = app.add_subcommand("run", "Run all trials of one experiment config");
    std::string config_path, out_path = "results.csv", save_dir;
    std::size_t workers = 1;
    long long trials_override = -1, seed_override = -1;
    bool full_scale = false, dry_run = false;
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_option("--trials", trials_override, "override trial count");
    run->add_option("--seed", seed_override, "override master seed");
    run->add_option("--out", out_path, "per-trial CSV output path");
    run->add_option("--workers", workers, "worker threads for trial-level parallelism");
    run->add_flag("--full-scale", full_scale, "run the full-size trial and noise-test counts");
    run->add_flag("--dry-run", dry_run, "print the resolved config and convergence criterion, do not run");
    run->add_option("--save-trials", save_dir,
                    "directory for per-trial weight checkpoints and pattern dumps");

    // --- sweep ---
    auto* sweep = app.add_subcommand("sweep", "Sweep one config key over a value list");
    std::string sweep_config, sweep_param, sweep_values, sweep_out = "sweep.csv";
    std::size_t sweep_workers = 1;
    bool sweep_full_scale = false;
    long long sweep_trials = -1, sweep_seed = -1;
    sweep->add_option("config", sweep_config, "experiment config file")->required();
    sweep->add_option("--param", sweep_param, "config key to vary")->required();
    sweep->add_option("--values", sweep_values, "comma-separated values")->required();
    sweep->add_option("--out", sweep_out, "sweep summary CSV path");
    sweep->add_option("--workers", sweep_workers, "worker threads");
    sweep->add_option("--trials", sweep_trials, "override trial count");
    sweep->add_option("--seed", sweep_seed, "override master seed");
    sweep->add_flag("--full-scale", sweep_full_scale, "run the full-size trial counts");

    // --- noise-eval ---
    auto* noise = app.add_subcommand("noise-eval", "Jitter sweep over a saved network and pattern set");
    std::string ckpt_path, patterns_path, noise_config, sigma_range = "1:10", noise_out;
    std::size_t noise_tests = 100;
    long long noise_seed = 1;
    noise->add_option("checkpoint", ckpt_path, "weight checkpoint")->required();
    noise->add_option("patterns", patterns_path, "pattern-set dump")->required();
    noise->add_option("--config", noise_config, "experiment config supplying grid and neuron parameters")
        ->required();
    noise->add_option("--sigma-range", sigma_range, "lo:hi jitter range in ms");
    noise->add_option("--tests", noise_tests, "test patterns per sigma level");
    noise->add_option("--seed", noise_seed, "rng seed");
    noise->add_option("--out", noise_out, "accuracy-vs-jitter CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            snn::KeyValues kv = snn::KeyValues::from_file(config_path);
            snn::ExperimentSpec spec = snn::make_spec(kv);
            if (full_scale) snn::apply_full_scale(spec);
            if (trials_override >= 0) spec.trials = static_cast<std::size_t>(trials_override);
            if (seed_override >= 0) spec.master_seed = static_cast<std::uint64_t>(seed_override);
            if (dry_run) {
                print_criterion(spec);
                return 0;
            }
            snn::TrialSink sink;
            if (!save_dir.empty()) {
                std::filesystem::create_directories(save_dir);
                sink = [&](const snn::TrialResult& row, const std::vector<snn::PatternPair>& patterns) {
                    const std::string stem = save_dir + "/trial_" + std::to_string(row.trial);
                    snn::save_weights(stem + ".weights", row.weights, spec.net.delays);
                    std::ofstream os(stem + ".patterns");
                    snn::save_patterns(os, patterns, spec.net.grid.window);
                };
            }
            write_outputs(snn::run_experiment(spec, workers, sink), out_path);
        } else if (*sweep) {
            snn::KeyValues kv = snn::KeyValues::from_file(sweep_config);
            std::ofstream os(sweep_out);
            if (!os) throw std::runtime_error("cannot open output file " + sweep_out);
            os << "param,value,convergence_pct,mean_iterations,sem_iterations,"
                  "mean_train_acc,mean_test_acc\n";
            std::istringstream values(sweep_values);
            std::string value;
            while (std::getline(values, value, ',')) {
                kv.set(sweep_param, value);
                snn::ExperimentSpec spec = snn::make_spec(kv);
                if (sweep_full_scale) snn::apply_full_scale(spec);
                if (sweep_trials >= 0) spec.trials = static_cast<std::size_t>(sweep_trials);
                if (sweep_seed >= 0) spec.master_seed = static_cast<std::uint64_t>(sweep_seed);
                const snn::ExperimentResult r = snn::run_experiment(spec, sweep_workers);
                char buf[160];
                std::snprintf(buf, sizeof(buf), "%s,%s,%.6g,%.6g,%.6g,%.6g,%.6g\n", sweep_param.c_str(),
                              value.c_str(), r.summary.convergence_pct, r.summary.mean_iterations,
                              r.summary.sem_iterations, r.summary.mean_train_accuracy,
                              r.summary.mean_test_accuracy);
                os << buf;
                std::printf("%s = %s -> %.0f%% converged, %.1f +- %.1f iterations\n", sweep_param.c_str(),
                            value.c_str(), r.summary.convergence_pct, r.summary.mean_iterations,
                            r.summary.sem_iterations);
            }
        } else if (*noise) {
            snn::KeyValues kv = snn::KeyValues::from_file(noise_config);
            snn::ExperimentSpec spec = snn::make_spec(kv);
            spec.noise_tests = noise_tests;
            const snn::Checkpoint cp = snn::load_weights(ckpt_path);
            if (cp.weights.n_inputs != spec.net.n_inputs || cp.weights.n_hidden != spec.net.n_hidden ||
                cp.weights.n_outputs != spec.net.n_outputs || cp.weights.m != spec.net.sub_connections())
                throw std::runtime_error("noise-eval: checkpoint dimensions do not match the config");
            std::ifstream pis(patterns_path);
            if (!pis) throw std::runtime_error("cannot open " + patterns_path);
            const std::vector<snn::PatternPair> patterns = snn::load_patterns(pis);

            double lo = 1.0, hi = 10.0;
            if (std::sscanf(sigma_range.c_str(), "%lf:%lf", &lo, &hi) != 2)
                throw std::runtime_error("bad --sigma-range, expected lo:hi");
            std::vector<double> sigmas;
            for (double s = lo; s <= hi + 1e-9; s += 1.0) sigmas.push_back(s);

            snn::Rng rng(static_cast<std::uint64_t>(noise_seed));
            std::vector<std::size_t> correct(sigmas.size(), 0), total(sigmas.size(), 0);
            snn::noise_eval_accumulate(spec, cp.weights, patterns, sigmas, rng, correct, total);
            std::ostringstream table;
            table << "sigma,accuracy,tests\n";
            for (std::size_t si = 0; si < sigmas.size(); ++si) {
                const double acc =
                    total[si] ? 100.0 * static_cast<double>(correct[si]) / static_cast<double>(total[si]) : 0.0;
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%zu\n", sigmas[si], acc, total[si]);
                table << buf;
            }
            std::cout << table.str();
            if (!noise_out.empty()) {
                std::ofstream os(noise_out);
                os << table.str();
            }
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
