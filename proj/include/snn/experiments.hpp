#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "snn/config.hpp"
#include "snn/learning.hpp"
#include "snn/metrics.hpp"
#include "snn/network.hpp"
#include "snn/rng.hpp"
#include "snn/spike_train.hpp"

namespace snn {

/// One benchmark definition: network, learning and convergence parameters
/// plus trial bookkeeping. Built from a flat config file over per-experiment
/// defaults.
struct ExperimentSpec {
    std::string id; // xor-timing | iris | xor-spiketrain | patterns | generalise
    NetworkConfig net;
    LearningParams learn;
    ConvergenceSpec conv;
    std::size_t trials = 20;
    std::uint64_t master_seed = 1;
    std::string iris_path = "data/iris.csv";
    std::size_t n_patterns = 10;     // patterns experiment
    double train_jitter = 2.0;       // generalise: input jitter during learning, ms
    double target_jitter = 1.0;      // generalise: target jitter during learning, ms
    std::size_t validation_patterns = 30;
    std::size_t noise_tests = 100;   // test patterns per jitter level
    double noise_sigma_lo = 1.0, noise_sigma_hi = 10.0;
    bool run_noise_eval = false;
    bool init_from_teacher = false;  // scale the initial weights by the teacher's gain
};

struct TrialResult {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    bool converged = false;
    std::size_t iterations = 0;
    double final_error = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = -1.0; // experiments without a test set report -1
    WeightStore weights;
};

struct NoiseRow {
    double sigma = 0.0;
    double accuracy = 0.0; // percent, pooled over converged trials
    std::size_t tests = 0;
};

struct Summary {
    std::size_t trials = 0;
    double convergence_pct = 0.0;
    double mean_iterations = 0.0; // over successful trials
    double sem_iterations = 0.0;
    double mean_train_accuracy = 0.0;
    double mean_test_accuracy = -1.0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<TrialResult> rows;
    std::vector<NoiseRow> noise;
    Summary summary;
};

// ---------------------------------------------------------------------------
// Pattern builders
// ---------------------------------------------------------------------------

/// XOR with single-spike latency coding: "1" fires at 0 ms, "0" at 6 ms, plus
/// a reference input firing at 0 ms in every pattern. Targets fire at 10 ms
/// (XOR true) or 16 ms (XOR false).
inline std::vector<PatternPair> build_xor_timing(double window = 30.0) {
    auto spike = [window](double t) { return SpikeTrain({t}, window); };
    std::vector<PatternPair> patterns;
    for (int x = 0; x <= 1; ++x) {
        for (int y = 0; y <= 1; ++y) {
            PatternPair p;
            p.inputs = {spike(x ? 0.0 : 6.0), spike(y ? 0.0 : 6.0), spike(0.0)};
            const int label = x ^ y;
            p.targets = {spike(label ? 10.0 : 16.0)};
            p.label = label;
            patterns.push_back(std::move(p));
        }
    }
    return patterns;
}

struct IrisSample {
    double features[4];
    int species; // 0 setosa, 1 versicolor, 2 virginica
};

inline std::vector<IrisSample> load_iris(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("iris: cannot open " + path);
    std::vector<IrisSample> samples;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::istringstream row(line);
        IrisSample s{};
        std::string field;
        for (int f = 0; f < 4; ++f) {
            if (!std::getline(row, field, ','))
                throw std::runtime_error("iris: malformed row " + std::to_string(lineno));
            try {
                s.features[f] = std::stod(field);
            } catch (const std::exception&) {
                throw std::runtime_error("iris: bad feature value at row " + std::to_string(lineno));
            }
            if (s.features[f] < 0.0 || s.features[f] > 8.0)
                throw std::runtime_error("iris: feature outside [0,8] at row " + std::to_string(lineno));
        }
        if (!std::getline(row, field))
            throw std::runtime_error("iris: missing species at row " + std::to_string(lineno));
        if (field.find("setosa") != std::string::npos) s.species = 0;
        else if (field.find("versicolor") != std::string::npos) s.species = 1;
        else if (field.find("virginica") != std::string::npos) s.species = 2;
        else throw std::runtime_error("iris: unknown species at row " + std::to_string(lineno));
        samples.push_back(s);
    }
    if (samples.size() != 150)
        throw std::runtime_error("iris: expected 150 rows, got " + std::to_string(samples.size()));
    return samples;
}

inline PatternPair encode_iris(const IrisSample& s, double window = 30.0) {
    PatternPair p;
    for (double f : s.features) p.inputs.push_back(SpikeTrain({f}, window));
    static constexpr double target_times[3] = {10.0, 14.0, 18.0};
    p.targets = {SpikeTrain({target_times[s.species]}, window)};
    p.label = s.species;
    return p;
}

/// Random 75/25 split (floor on the training side: 112/38 for 150 rows).
inline std::pair<std::vector<PatternPair>, std::vector<PatternPair>>
build_iris(const std::vector<IrisSample>& samples, Rng& rng, double window = 30.0) {
    std::vector<std::size_t> order(samples.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
    std::shuffle(order.begin(), order.end(), rng.engine());
    const std::size_t n_train = samples.size() * 3 / 4;
    std::vector<PatternPair> train, test;
    for (std::size_t j = 0; j < order.size(); ++j)
        (j < n_train ? train : test).push_back(encode_iris(samples[order[j]], window));
    return {std::move(train), std::move(test)};
}

namespace detail {

// Poisson generation with a count constraint. When the dead-time corrected
// expected count is far outside [min,max], whole-train rejection cannot
// succeed; fall back to a rate calibrated so the expected count sits at the
// middle of the band.
inline SpikeTrain poisson_with_count(double rate, double window, double min_isi,
                                     std::size_t min_spikes, std::optional<std::size_t> max_spikes,
                                     double dt, Rng& rng) {
    PoissonOptions opt;
    opt.min_isi = min_isi;
    opt.min_spikes = min_spikes;
    opt.max_spikes = max_spikes;
    opt.dt = dt;
    const double expected = rate / (1.0 + rate * min_isi) * window;
    const double slack = 2.0 * std::sqrt(std::max(expected, 1.0));
    const bool reachable = expected + slack >= static_cast<double>(min_spikes) &&
                           (!max_spikes || expected - slack <= static_cast<double>(*max_spikes));
    double use_rate = rate;
    if (!reachable) {
        const double mid = max_spikes ? 0.5 * (static_cast<double>(min_spikes) + static_cast<double>(*max_spikes))
                                      : static_cast<double>(min_spikes) + 1.0;
        use_rate = mid / (window - mid * min_isi);
    }
    return generate_poisson(use_rate, window, opt, rng);
}

} // namespace detail

/// XOR over spike-train population codes: two groups of 20 input neurons, one
/// per logical value. Each neuron's symbol trains come from splitting one
/// Poisson parent; targets are the two 3-spike children of a faster parent.
inline std::vector<PatternPair> build_xor_spiketrain(const ExperimentSpec& spec, Rng& rng) {
    const double pattern_window = 30.0;
    const double dt = spec.net.grid.dt;
    const std::size_t group = spec.net.n_inputs / 2;

    // Per input neuron: parent train split into the "0" and "1" symbol trains,
    // both required nonempty.
    std::vector<SpikeTrain> symbol0(spec.net.n_inputs), symbol1(spec.net.n_inputs);
    for (std::size_t i = 0; i < spec.net.n_inputs; ++i) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 10000) throw std::runtime_error("xor-spiketrain: cannot build symbol trains");
            PoissonOptions opt{.min_isi = 3.0, .min_spikes = 2, .dt = dt};
            const SpikeTrain parent = generate_poisson(0.06, pattern_window, opt, rng);
            auto [a, b] = split_train(parent, rng);
            if (!a.empty() && !b.empty()) {
                symbol0[i] = std::move(a);
                symbol1[i] = std::move(b);
                break;
            }
        }
    }

    // Target trains: split a rate-0.2 parent until both children have exactly
    // three spikes (rejection on the children).
    SpikeTrain target0, target1;
    for (int attempt = 0;; ++attempt) {
        if (attempt >= 10000) throw std::runtime_error("xor-spiketrain: cannot build target trains");
        PoissonOptions opt{.min_isi = 3.0, .min_spikes = 6, .max_spikes = 6, .dt = dt};
        const SpikeTrain parent = generate_poisson(0.2, pattern_window, opt, rng);
        auto [a, b] = split_train(parent, rng);
        if (a.count() == 3 && b.count() == 3) {
            target0 = std::move(a);
            target1 = std::move(b);
            break;
        }
    }

    std::vector<PatternPair> patterns;
    for (int x = 0; x <= 1; ++x) {
        for (int y = 0; y <= 1; ++y) {
            PatternPair p;
            p.inputs.reserve(spec.net.n_inputs);
            for (std::size_t i = 0; i < group; ++i) p.inputs.push_back(x ? symbol1[i] : symbol0[i]);
            for (std::size_t i = group; i < spec.net.n_inputs; ++i) p.inputs.push_back(y ? symbol1[i] : symbol0[i]);
            p.label = x ^ y;
            p.targets = {p.label ? target1 : target0};
            patterns.push_back(std::move(p));
        }
    }
    return patterns;
}

/// Random classification patterns for the sequence-learning and
/// generalisation experiments: Poisson inputs, targets taken from the output
/// of a freshly initialised teacher network with the same topology,
/// regenerated until the target spike-count constraint holds.
inline std::vector<PatternPair> build_random_classification(const ExperimentSpec& spec, Rng& rng,
                                                            double* teacher_gain = nullptr) {
    const bool generalise = spec.id == "generalise";
    const double window = spec.net.grid.window;
    const double dt = spec.net.grid.dt;
    const double rate = generalise ? 0.1 : 0.05;
    const double min_isi = generalise ? 5.0 : 0.0;
    const std::size_t in_min = generalise ? 15 : 1;
    const std::optional<std::size_t> in_max = generalise ? std::optional<std::size_t>(20) : std::nullopt;
    const std::size_t tgt_min = generalise ? 5 : 2;
    const std::size_t tgt_max = generalise ? 7 : 4;
    const std::size_t n_patterns = generalise ? 3 : spec.n_patterns;

    NetworkConfig teacher_cfg = spec.net;
    teacher_cfg.init_fan_in = true;

    // The teacher's working point (a few output spikes per window) sits
    // between a silent fan-in-normalised draw and a saturated raw draw; a
    // global gain on the random weights is adjusted until the output count
    // lands in the band. The gain carries over between patterns.
    double gain = 1.0;

    std::vector<PatternPair> patterns;
    for (std::size_t pi = 0; pi < n_patterns; ++pi) {
        PatternPair p;
        p.label = static_cast<int>(pi);
        for (std::size_t i = 0; i < spec.net.n_inputs; ++i)
            p.inputs.push_back(detail::poisson_with_count(rate, window, min_isi, in_min, in_max, dt, rng));
        bool done = false;
        for (int attempt = 0; attempt < 200 && !done; ++attempt) {
            const WeightStore base = init_weights(teacher_cfg, rng);
            for (int adj = 0; adj < 40 && !done; ++adj) {
                WeightStore scaled = base;
                for (double& v : scaled.hidden_w) v *= gain;
                for (double& v : scaled.output_w) v *= gain;
                ForwardResult fwd = forward(teacher_cfg, scaled, p.inputs);
                const std::size_t n = fwd.outputs[0].count();
                if (n >= tgt_min && n <= tgt_max) {
                    p.targets = {std::move(fwd.outputs[0])};
                    done = true;
                } else if (n < tgt_min) {
                    gain *= 1.15;
                } else {
                    gain /= 1.17; // asymmetric steps avoid bouncing between the same two gains
                }
            }
        }
        if (!done) throw std::runtime_error("random-classification: cannot satisfy target spike counts");
        patterns.push_back(std::move(p));
    }
    if (teacher_gain) *teacher_gain = gain;
    return patterns;
}

// ---------------------------------------------------------------------------
// Spec construction from config files
// ---------------------------------------------------------------------------

inline ExperimentSpec make_spec(const KeyValues& kv) {
    ExperimentSpec s;
    s.id = kv.require("experiment");

    // Per-experiment defaults; any key in the file overrides them.
    std::size_t m = 1;
    if (s.id == "xor-timing") {
        s.net.n_inputs = 3; s.net.n_hidden = 5; s.net.n_outputs = 1;
        m = 12;
        s.net.grid = {0.1, 30.0};
        s.conv = {.error_threshold = 0.2, .per_pattern = false};
        s.learn.r_max = 3;
    } else if (s.id == "iris") {
        s.net.n_inputs = 4; s.net.n_hidden = 10; s.net.n_outputs = 1;
        m = 10;
        s.net.grid = {0.1, 30.0};
        s.conv = {.error_threshold = 0.2, .per_pattern = true, .min_train_accuracy = 95.0};
        s.learn.r_max = 3;
    } else if (s.id == "xor-spiketrain") {
        s.net.n_inputs = 40; s.net.n_hidden = 90; s.net.n_outputs = 1;
        s.net.grid = {0.5, 50.0};
        s.net.hidden_neuron.abs_refractory = s.net.output_neuron.abs_refractory = 3.0;
        s.conv = {.error_threshold = 3.0, .per_pattern = false, .min_train_accuracy = 100.0};
        s.learn.r_max = 5;
    } else if (s.id == "patterns") {
        s.net.n_inputs = 100; s.net.n_hidden = 260; s.net.n_outputs = 1;
        s.net.grid = {0.5, 100.0};
        s.net.hidden_neuron.abs_refractory = s.net.output_neuron.abs_refractory = 3.0;
        s.net.init_fan_in = true;
        s.conv = {.error_threshold = 0.5, .per_pattern = true, .min_train_accuracy = 90.0};
        s.learn.r_max = 6;
        s.run_noise_eval = true;
    } else if (s.id == "generalise") {
        s.net.n_inputs = 100; s.net.n_hidden = 210; s.net.n_outputs = 1;
        s.net.grid = {0.5, 500.0};
        s.net.hidden_neuron.abs_refractory = s.net.output_neuron.abs_refractory = 3.0;
        s.net.init_fan_in = true;
        s.conv = {.error_threshold = 0.6, .per_pattern = true};
        s.conv.min_validation_accuracy = 80.0;
        s.learn.r_max = 9;
        s.run_noise_eval = true;
    } else {
        throw std::runtime_error("unknown experiment id: " + s.id);
    }

    m = static_cast<std::size_t>(kv.get_int("sub_connections", static_cast<std::int64_t>(m)));
    s.net.delays = kv.get_doubles("delays");
    if (s.net.delays.empty())
        for (std::size_t k = 0; k < m; ++k) s.net.delays.push_back(static_cast<double>(k));

    s.net.n_inputs = static_cast<std::size_t>(kv.get_int("inputs", static_cast<std::int64_t>(s.net.n_inputs)));
    s.net.n_hidden = static_cast<std::size_t>(kv.get_int("hidden", static_cast<std::int64_t>(s.net.n_hidden)));
    s.net.n_outputs = static_cast<std::size_t>(kv.get_int("outputs", static_cast<std::int64_t>(s.net.n_outputs)));
    s.net.grid.dt = kv.get_double("dt", s.net.grid.dt);
    s.net.grid.window = kv.get_double("window", s.net.grid.window);
    for (NeuronParams* np : {&s.net.hidden_neuron, &s.net.output_neuron}) {
        np->threshold = kv.get_double("threshold", np->threshold);
        np->tau_psp = kv.get_double("tau_psp", np->tau_psp);
        np->tau_refr = kv.get_double("tau_refr", np->tau_refr);
        np->abs_refractory = kv.get_double("abs_refractory", np->abs_refractory);
    }
    s.net.init_lo = kv.get_double("init_lo", s.net.init_lo);
    s.net.init_hi = kv.get_double("init_hi", s.net.init_hi);
    s.net.init_fan_in = kv.get_bool("init_fan_in", s.net.init_fan_in);

    s.learn.a_plus = kv.get_double("a_plus", s.learn.a_plus);
    s.learn.a_minus = kv.get_double("a_minus", s.learn.a_minus);
    s.learn.tau_plus = kv.get_double("tau_plus", s.learn.tau_plus);
    s.learn.tau_minus = kv.get_double("tau_minus", s.learn.tau_minus);
    s.learn.bias = kv.get_double("bias", s.learn.bias);
    s.learn.scaling = kv.get_double("scaling", s.learn.scaling);
    s.learn.r_min = kv.get_double("r_min", s.learn.r_min);
    s.learn.r_max = kv.get_double("r_max", s.learn.r_max);
    s.learn.max_iterations = static_cast<std::size_t>(kv.get_int("max_iterations", 2000));

    s.conv.error_threshold = kv.get_double("error_threshold", s.conv.error_threshold);
    s.conv.per_pattern = kv.get_bool("error_per_pattern", s.conv.per_pattern);
    s.conv.min_train_accuracy = kv.get_double("min_train_accuracy", s.conv.min_train_accuracy);
    s.conv.min_validation_accuracy = kv.get_double("min_validation_accuracy", s.conv.min_validation_accuracy);
    s.conv.tau_c = kv.get_double("tau_c", s.conv.tau_c);

    s.trials = static_cast<std::size_t>(kv.get_int("trials", 20));
    s.master_seed = static_cast<std::uint64_t>(kv.get_int("seed", 1));
    s.iris_path = kv.get("iris_path", s.iris_path);
    s.n_patterns = static_cast<std::size_t>(kv.get_int("n_patterns", 10));
    s.train_jitter = kv.get_double("train_jitter", s.train_jitter);
    s.target_jitter = kv.get_double("target_jitter", s.target_jitter);
    s.noise_tests = static_cast<std::size_t>(kv.get_int("noise_tests", s.id == "generalise" ? 60 : 100));
    s.validation_patterns = static_cast<std::size_t>(kv.get_int("validation_patterns", 30));
    s.run_noise_eval = kv.get_bool("noise_eval", s.run_noise_eval);
    s.init_from_teacher = kv.get_bool("init_from_teacher", s.init_from_teacher);

    s.net.validate();
    return s;
}

/// Restore the original study's trial and noise-test counts.
inline void apply_full_scale(ExperimentSpec& s) {
    s.trials = s.id == "xor-timing" ? 100 : 50;
    s.noise_tests = s.id == "generalise" ? 150 : 500;
}

// ---------------------------------------------------------------------------
// Trial execution
// ---------------------------------------------------------------------------

namespace detail {

inline TrialResult run_one_trial(const ExperimentSpec& spec, std::size_t trial,
                                 const std::vector<IrisSample>* iris,
                                 std::vector<PatternPair>* patterns_out = nullptr) {
    TrialResult row;
    row.trial = trial;
    row.seed = Rng::derive_seed(spec.master_seed, trial);
    Rng rng(row.seed);

    std::vector<PatternPair> patterns, test_set;
    NetworkConfig net = spec.net;
    ConvergenceSpec conv = spec.conv;
    PatternAugment augment;
    double teacher_gain = 1.0;

    if (spec.id == "xor-timing") {
        patterns = build_xor_timing(spec.net.grid.window);
    } else if (spec.id == "iris") {
        auto split = build_iris(*iris, rng, spec.net.grid.window);
        patterns = std::move(split.first);
        test_set = std::move(split.second);
    } else if (spec.id == "xor-spiketrain") {
        patterns = build_xor_spiketrain(spec, rng);
    } else if (spec.id == "patterns") {
        patterns = build_random_classification(spec, rng, &teacher_gain);
    } else if (spec.id == "generalise") {
        patterns = build_random_classification(spec, rng, &teacher_gain);
        const double dt = spec.net.grid.dt;
        const double in_sigma = spec.train_jitter, tgt_sigma = spec.target_jitter;
        augment = [in_sigma, tgt_sigma, dt](const std::vector<PatternPair>& base, Rng& r) {
            std::vector<PatternPair> noisy = base;
            for (auto& p : noisy) {
                for (auto& t : p.inputs) t = jitter_train(t, in_sigma, r, dt);
                for (auto& t : p.targets) t = jitter_train(t, tgt_sigma, r, dt);
            }
            return noisy;
        };
        const auto cands = candidate_targets(patterns);
        const auto base = patterns;
        const std::size_t n_val = spec.validation_patterns;
        const double tau_c = spec.conv.tau_c;
        conv.validation = [base, cands, in_sigma, dt, n_val, tau_c](const NetworkConfig& cfg,
                                                                    const WeightStore& w, Rng& r) {
            const double T = integration_horizon(cfg.grid.window, tau_c);
            std::size_t correct = 0;
            for (std::size_t v = 0; v < n_val; ++v) {
                const auto& p = base[r.engine()() % base.size()];
                std::vector<SpikeTrain> noisy;
                for (const auto& t : p.inputs) noisy.push_back(jitter_train(t, in_sigma, r, dt));
                const ForwardResult fwd = forward(cfg, w, noisy);
                if (classify(fwd.outputs, cands, tau_c, T) == p.label) ++correct;
            }
            return 100.0 * static_cast<double>(correct) / static_cast<double>(n_val);
        };
    } else {
        throw std::runtime_error("unknown experiment id: " + spec.id);
    }

    if (spec.init_from_teacher) {
        net.init_lo *= teacher_gain;
        net.init_hi *= teacher_gain;
    }
    TrainOutcome outcome = train(net, spec.learn, patterns, conv, rng, augment);
    row.converged = outcome.converged;
    row.iterations = outcome.iterations;
    row.final_error = outcome.final_error;
    row.train_accuracy = outcome.train_accuracy;
    row.weights = std::move(outcome.weights);

    if (!test_set.empty()) {
        const auto cands = candidate_targets(patterns);
        const double T = integration_horizon(spec.net.grid.window, conv.tau_c);
        std::size_t correct = 0;
        for (const auto& p : test_set) {
            const ForwardResult fwd = forward(spec.net, row.weights, p.inputs);
            if (classify(fwd.outputs, cands, conv.tau_c, T) == p.label) ++correct;
        }
        row.test_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(test_set.size());
    }
    if (patterns_out) *patterns_out = std::move(patterns);
    return row;
}

} // namespace detail

inline Summary summarize(const std::vector<TrialResult>& rows) {
    Summary s;
    s.trials = rows.size();
    std::vector<double> iters;
    double train_acc = 0.0, test_acc = 0.0;
    std::size_t with_test = 0;
    for (const auto& r : rows) {
        if (!r.converged) continue;
        iters.push_back(static_cast<double>(r.iterations));
        train_acc += r.train_accuracy;
        if (r.test_accuracy >= 0) {
            test_acc += r.test_accuracy;
            ++with_test;
        }
    }
    const auto n_ok = iters.size();
    s.convergence_pct = rows.empty() ? 0.0 : 100.0 * static_cast<double>(n_ok) / static_cast<double>(rows.size());
    if (n_ok > 0) {
        double mean = 0.0;
        for (double v : iters) mean += v;
        mean /= static_cast<double>(n_ok);
        double var = 0.0;
        for (double v : iters) var += (v - mean) * (v - mean);
        s.mean_iterations = mean;
        s.sem_iterations = n_ok > 1 ? std::sqrt(var / static_cast<double>(n_ok - 1)) /
                                          std::sqrt(static_cast<double>(n_ok))
                                    : 0.0;
        s.mean_train_accuracy = train_acc / static_cast<double>(n_ok);
        if (with_test > 0) s.mean_test_accuracy = test_acc / static_cast<double>(with_test);
    }
    return s;
}

/// Jitter sweep over a trained network: classify noise_tests jittered copies
/// of randomly chosen training patterns at each sigma level. Counts pooled
/// into the caller's accumulators.
inline void noise_eval_accumulate(const ExperimentSpec& spec, const WeightStore& weights,
                                  const std::vector<PatternPair>& patterns,
                                  const std::vector<double>& sigmas, Rng& rng,
                                  std::vector<std::size_t>& correct, std::vector<std::size_t>& total) {
    const auto cands = candidate_targets(patterns);
    const double T = integration_horizon(spec.net.grid.window, spec.conv.tau_c);
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        for (std::size_t v = 0; v < spec.noise_tests; ++v) {
            const auto& p = patterns[rng.engine()() % patterns.size()];
            std::vector<SpikeTrain> noisy;
            for (const auto& t : p.inputs) noisy.push_back(jitter_train(t, sigmas[si], rng, spec.net.grid.dt));
            const ForwardResult fwd = forward(spec.net, weights, noisy);
            if (classify(fwd.outputs, cands, spec.conv.tau_c, T) == p.label) ++correct[si];
            ++total[si];
        }
    }
}

/// Run all trials of one experiment. Trials are independent; worker threads
/// pick trial indices off an atomic counter and results are kept in trial
/// order. The noise evaluation (when the experiment defines one) pools
/// classifications over all converged trials.
using TrialSink = std::function<void(const TrialResult&, const std::vector<PatternPair>&)>;

inline ExperimentResult run_experiment(const ExperimentSpec& spec, std::size_t workers = 1,
                                       const TrialSink& on_trial = nullptr) {
    ExperimentResult result;
    result.spec = spec;
    result.rows.resize(spec.trials);

    std::vector<IrisSample> iris;
    if (spec.id == "iris") iris = load_iris(spec.iris_path);

    std::vector<double> sigmas;
    if (spec.run_noise_eval)
        for (double s = spec.noise_sigma_lo; s <= spec.noise_sigma_hi + 1e-9; s += 1.0) sigmas.push_back(s);
    std::vector<std::size_t> noise_correct(sigmas.size(), 0), noise_total(sigmas.size(), 0);
    std::mutex noise_mutex;

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t trial = next.fetch_add(1);
            if (trial >= spec.trials) return;
            std::vector<PatternPair> patterns;
            TrialResult row = detail::run_one_trial(spec, trial, &iris, &patterns);
            if (on_trial) {
                const std::lock_guard<std::mutex> lock(noise_mutex);
                on_trial(row, patterns);
            }
            if (spec.run_noise_eval && row.converged) {
                Rng noise_rng(Rng::derive_seed(spec.master_seed ^ 0x6e6f697365ULL, trial));
                std::vector<std::size_t> correct(sigmas.size(), 0), total(sigmas.size(), 0);
                noise_eval_accumulate(spec, row.weights, patterns, sigmas, noise_rng, correct, total);
                const std::lock_guard<std::mutex> lock(noise_mutex);
                for (std::size_t si = 0; si < sigmas.size(); ++si) {
                    noise_correct[si] += correct[si];
                    noise_total[si] += total[si];
                }
            }
            result.rows[trial] = std::move(row);
        }
    };

    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        NoiseRow nr;
        nr.sigma = sigmas[si];
        nr.tests = noise_total[si];
        nr.accuracy = noise_total[si] ? 100.0 * static_cast<double>(noise_correct[si]) /
                                            static_cast<double>(noise_total[si])
                                      : 0.0;
        result.noise.push_back(nr);
    }
    result.summary = summarize(result.rows);
    return result;
}

// ---------------------------------------------------------------------------
// CSV and pattern-file output
// ---------------------------------------------------------------------------

inline void write_csv(std::ostream& os, const ExperimentResult& r) {
    os << "experiment,trial,seed,converged,iterations,final_error,train_acc,test_acc\n";
    char buf[64];
    for (const auto& row : r.rows) {
        os << r.spec.id << ',' << row.trial << ',' << row.seed << ',' << (row.converged ? 1 : 0) << ','
           << row.iterations << ',';
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g\n", row.final_error, row.train_accuracy,
                      row.test_accuracy);
        os << buf;
    }
}

inline void write_summary(std::ostream& os, const ExperimentResult& r) {
    const Summary& s = r.summary;
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "trials %zu\nconvergence_pct %.6g\nmean_iterations %.6g\nsem_iterations %.6g\n"
                  "mean_train_accuracy %.6g\nmean_test_accuracy %.6g\n",
                  s.trials, s.convergence_pct, s.mean_iterations, s.sem_iterations, s.mean_train_accuracy,
                  s.mean_test_accuracy);
    os << buf;
}

inline void write_noise_csv(std::ostream& os, const ExperimentResult& r) {
    os << "sigma,accuracy,tests\n";
    char buf[64];
    for (const auto& nr : r.noise) {
        std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%zu\n", nr.sigma, nr.accuracy, nr.tests);
        os << buf;
    }
}

/// Pattern-set dump: one `pattern <label>` header per pair, then the standard
/// spike-train lines prefixed `in`/`out`.
inline void save_patterns(std::ostream& os, const std::vector<PatternPair>& patterns, double window) {
    os << "window " << window << '\n';
    for (const auto& p : patterns) {
        os << "pattern " << p.label << '\n';
        for (std::size_t i = 0; i < p.inputs.size(); ++i) os << "in " << to_line(i, p.inputs[i]) << '\n';
        for (std::size_t o = 0; o < p.targets.size(); ++o) os << "out " << to_line(o, p.targets[o]) << '\n';
    }
}

inline std::vector<PatternPair> load_patterns(std::istream& is, double* window_out = nullptr) {
    std::string tag;
    double window = 0.0;
    if (!(is >> tag >> window) || tag != "window")
        throw std::runtime_error("patterns: missing window header");
    if (window_out) *window_out = window;
    std::vector<PatternPair> patterns;
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream head(line);
        head >> tag;
        if (tag == "pattern") {
            PatternPair p;
            head >> p.label;
            patterns.push_back(std::move(p));
        } else if (tag == "in" || tag == "out") {
            if (patterns.empty()) throw std::runtime_error("patterns: train before first pattern header");
            std::string rest;
            std::getline(head, rest);
            auto [idx, train] = parse_line(rest, window);
            auto& dst = tag == "in" ? patterns.back().inputs : patterns.back().targets;
            if (idx != dst.size()) throw std::runtime_error("patterns: neuron index out of order");
            dst.push_back(std::move(train));
        } else {
            throw std::runtime_error("patterns: unknown line tag '" + tag + "'");
        }
    }
    return patterns;
}

} // namespace snn
