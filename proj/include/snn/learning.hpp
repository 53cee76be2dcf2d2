#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "snn/metrics.hpp"
#include "snn/network.hpp"
#include "snn/rng.hpp"
#include "snn/spike_train.hpp"

namespace snn {

/// Multilayer ReSuMe parameters. The learning rate is fixed to 1; the window
/// amplitudes set the step length.
struct LearningParams {
    double a_plus = 1.2;     // window amplitude, post after pre
    double a_minus = 0.5;    // window amplitude, post before pre
    double tau_plus = 5.0;   // ms
    double tau_minus = 5.0;  // ms
    double bias = 0.05;      // non-Hebbian term a
    double scaling = 0.005;  // synaptic scaling factor magnitude
    double r_min = 1.0;      // spikes per pattern window
    double r_max = 3.0;
    std::size_t max_iterations = 2000;
};

/// STDP learning window W(s), s = post spike time minus pre spike time.
inline double learning_window(double s, const LearningParams& p) {
    if (s > 0.0) return p.a_plus * std::exp(-s / p.tau_plus);
    return -p.a_minus * std::exp(s / p.tau_minus);
}

namespace detail {

// All-pairs STDP sum: sum over post and pre spikes of W(t_post - t_pre - delay).
inline double stdp_sum(const std::vector<double>& post, const std::vector<double>& pre,
                       double delay, const LearningParams& p) {
    double s = 0.0;
    for (double tp : post)
        for (double tq : pre) s += learning_window(tp - tq - delay, p);
    return s;
}

} // namespace detail

/// Weight changes for the hidden->output connections after one pattern:
/// STDP between hidden and target spikes, anti-STDP between hidden and actual
/// spikes, plus the non-Hebbian spike-count term, per delayed sub-connection.
inline WeightDelta output_layer_delta(const std::vector<SpikeTrain>& hidden,
                                      const std::vector<SpikeTrain>& actual,
                                      const std::vector<SpikeTrain>& target,
                                      const NetworkConfig& config, const LearningParams& params) {
    WeightDelta d(config);
    const std::size_t m = config.sub_connections();
    const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(config.n_hidden));
    for (std::size_t o = 0; o < config.n_outputs; ++o) {
        const double count_term =
            params.bias * (static_cast<double>(target[o].count()) - static_cast<double>(actual[o].count()));
        for (std::size_t h = 0; h < config.n_hidden; ++h) {
            for (std::size_t k = 0; k < m; ++k) {
                const double dk = config.delays[k];
                const double stdp = detail::stdp_sum(target[o].times, hidden[h].times, dk, params) -
                                    detail::stdp_sum(actual[o].times, hidden[h].times, dk, params);
                d.output(o, h, k) = norm * (count_term + stdp);
            }
        }
    }
    return d;
}

/// Weight changes for the input->hidden connections: the backpropagated error
/// runs over all backward paths (all outputs, all sub-connections) through
/// the absolute values of the output weights.
inline WeightDelta hidden_layer_delta(const std::vector<SpikeTrain>& inputs,
                                      const std::vector<SpikeTrain>& actual,
                                      const std::vector<SpikeTrain>& target,
                                      const WeightStore& weights, const NetworkConfig& config,
                                      const LearningParams& params) {
    WeightDelta d(config);
    const std::size_t m = config.sub_connections();
    const double norm = 1.0 / (static_cast<double>(m) * static_cast<double>(m) *
                               static_cast<double>(config.n_inputs) * static_cast<double>(config.n_hidden));

    // abs_w[h][o] = sum_l |w_oh^l|, shared by all (i, k).
    std::vector<double> abs_w(config.n_hidden * config.n_outputs, 0.0);
    for (std::size_t o = 0; o < config.n_outputs; ++o)
        for (std::size_t h = 0; h < config.n_hidden; ++h)
            for (std::size_t l = 0; l < m; ++l)
                abs_w[h * config.n_outputs + o] += std::abs(weights.output(o, h, l));

    // bracket[o][i][k]: count term + STDP/anti-STDP between input and
    // target/actual output spikes, independent of the hidden neuron.
    std::vector<double> bracket(config.n_outputs * config.n_inputs * m);
    for (std::size_t o = 0; o < config.n_outputs; ++o) {
        const double count_term =
            params.bias * (static_cast<double>(target[o].count()) - static_cast<double>(actual[o].count()));
        for (std::size_t i = 0; i < config.n_inputs; ++i) {
            for (std::size_t k = 0; k < m; ++k) {
                const double dk = config.delays[k];
                const double stdp = detail::stdp_sum(target[o].times, inputs[i].times, dk, params) -
                                    detail::stdp_sum(actual[o].times, inputs[i].times, dk, params);
                bracket[(o * config.n_inputs + i) * m + k] = count_term + stdp;
            }
        }
    }

    for (std::size_t h = 0; h < config.n_hidden; ++h) {
        for (std::size_t i = 0; i < config.n_inputs; ++i) {
            for (std::size_t k = 0; k < m; ++k) {
                double acc = 0.0;
                for (std::size_t o = 0; o < config.n_outputs; ++o)
                    acc += abs_w[h * config.n_outputs + o] * bracket[(o * config.n_inputs + i) * m + k];
                d.hidden(h, i, k) = norm * acc;
            }
        }
    }
    return d;
}

/// Homeostatic scaling: every hidden/output neuron whose spike count over the
/// pattern window left [r_min, r_max] has all incoming weights scaled once,
/// excitatory by (1+f), inhibitory by 1/(1+f), with f = +scaling when the
/// rate is too low and f = -scaling when too high. Signs never flip.
inline void apply_synaptic_scaling(WeightStore& weights, const std::vector<SpikeTrain>& hidden,
                                   const std::vector<SpikeTrain>& outputs,
                                   const LearningParams& params, const NetworkConfig& config) {
    auto factor_for = [&](std::size_t spike_count) -> double {
        const double r = static_cast<double>(spike_count);
        if (r < params.r_min) return 1.0 + params.scaling;
        if (r > params.r_max) return 1.0 - params.scaling;
        return 1.0;
    };
    const std::size_t m = config.sub_connections();
    for (std::size_t h = 0; h < config.n_hidden; ++h) {
        const double f = factor_for(hidden[h].count());
        if (f == 1.0) continue;
        for (std::size_t i = 0; i < config.n_inputs; ++i)
            for (std::size_t k = 0; k < m; ++k) {
                double& w = weights.hidden(h, i, k);
                w = w > 0.0 ? w * f : w / f;
            }
    }
    for (std::size_t o = 0; o < config.n_outputs; ++o) {
        const double f = factor_for(outputs[o].count());
        if (f == 1.0) continue;
        for (std::size_t h = 0; h < config.n_hidden; ++h)
            for (std::size_t k = 0; k < m; ++k) {
                double& w = weights.output(o, h, k);
                w = w > 0.0 ? w * f : w / f;
            }
    }
}

/// Per-experiment stopping rules.
struct ConvergenceSpec {
    double error_threshold = 0.2;   // squared van Rossum units
    bool per_pattern = false;       // threshold applies to the per-pattern average
    double min_train_accuracy = -1; // percent over the presented patterns; < 0 disables
    double tau_c = 10.0;            // ms, filter constant for error and classification

    // Optional external validation (fresh noisy set each iteration); returns
    // accuracy percent. Convergence additionally requires it to reach
    // min_validation_accuracy.
    std::function<double(const NetworkConfig&, const WeightStore&, Rng&)> validation;
    double min_validation_accuracy = -1;
};

struct TrainOutcome {
    bool converged = false;
    std::size_t iterations = 0; // iterations actually run
    double final_error = 0.0;   // summed over patterns
    double train_accuracy = 0.0;
    double validation_accuracy = -1.0;
    WeightStore weights;
};

/// Candidate target set for nearest-target classification: one entry per
/// distinct label, taken from the first pattern carrying it.
inline std::vector<LabeledTargets> candidate_targets(const std::vector<PatternPair>& patterns) {
    std::vector<LabeledTargets> cands;
    for (const auto& p : patterns) {
        bool seen = false;
        for (const auto& c : cands) seen = seen || c.label == p.label;
        if (!seen) cands.push_back({p.label, p.targets});
    }
    return cands;
}

/// Optional per-iteration pattern transform (e.g. fresh jitter for training
/// with noise). Applied to the whole pattern set before each iteration.
using PatternAugment = std::function<std::vector<PatternPair>(const std::vector<PatternPair>&, Rng&)>;

/// Full training loop: per iteration, present all patterns in random order;
/// per pattern, simulate forward, compute both layers' deltas from the
/// pre-update weights, apply them, then apply synaptic scaling. Convergence
/// is checked on the summed network error plus any classification criteria.
/// Non-convergence is a normal result.
inline TrainOutcome train(const NetworkConfig& config, const LearningParams& params,
                          const std::vector<PatternPair>& patterns, const ConvergenceSpec& conv,
                          Rng& rng, const PatternAugment& augment = nullptr) {
    if (patterns.empty()) throw std::invalid_argument("train: no patterns");
    config.validate();
    const double T = integration_horizon(config.grid.window, conv.tau_c);

    TrainOutcome out;
    out.weights = init_weights(config, rng);
    std::vector<std::size_t> order(patterns.size());
    for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;

    for (std::size_t iter = 1; iter <= params.max_iterations; ++iter) {
        const std::vector<PatternPair>& present = augment ? augment(patterns, rng) : patterns;
        std::shuffle(order.begin(), order.end(), rng.engine());

        for (std::size_t idx : order) {
            const PatternPair& p = present[idx];
            const ForwardResult fwd = forward(config, out.weights, p.inputs);
            const WeightDelta d_out = output_layer_delta(fwd.hidden, fwd.outputs, p.targets, config, params);
            const WeightDelta d_hid =
                hidden_layer_delta(p.inputs, fwd.outputs, p.targets, out.weights, config, params);
            out.weights += d_out;
            out.weights += d_hid;
            apply_synaptic_scaling(out.weights, fwd.hidden, fwd.outputs, params, config);
        }

        // End-of-iteration evaluation on the base (un-augmented) patterns;
        // against freshly jittered targets the error floor would sit above
        // any useful threshold.
        const auto cands = candidate_targets(patterns);
        double total_error = 0.0;
        std::size_t correct = 0;
        for (const auto& p : patterns) {
            const ForwardResult fwd = forward(config, out.weights, p.inputs);
            total_error += network_error(fwd.outputs, p.targets, conv.tau_c, T);
            if (classify(fwd.outputs, cands, conv.tau_c, T) == p.label) ++correct;
        }
        out.iterations = iter;
        out.final_error = total_error;
        out.train_accuracy = 100.0 * static_cast<double>(correct) / static_cast<double>(patterns.size());

        const double limit =
            conv.per_pattern ? conv.error_threshold * static_cast<double>(patterns.size()) : conv.error_threshold;
        bool ok = total_error <= limit;
        if (ok && conv.min_train_accuracy >= 0) ok = out.train_accuracy >= conv.min_train_accuracy;
        if (ok && conv.validation) {
            out.validation_accuracy = conv.validation(config, out.weights, rng);
            ok = out.validation_accuracy >= conv.min_validation_accuracy;
        }
        if (ok) {
            out.converged = true;
            return out;
        }
    }
    return out;
}

} // namespace snn
