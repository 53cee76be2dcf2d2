#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "snn/spike_train.hpp"

namespace snn {

/// Spike Response Model constants. Resting potential is fixed at 0.
struct NeuronParams {
    double threshold = 0.7;       // firing threshold
    double tau_psp = 7.0;         // PSP kernel time constant, ms
    double tau_refr = 12.0;       // after-potential time constant, ms
    double abs_refractory = 0.0;  // ms
};

struct SimGrid {
    double dt = 0.1;      // ms
    double window = 30.0; // ms, integer multiple of dt

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(window / dt)); }
};

/// PSP kernel: (t/tau) * exp(1 - t/tau) for t > 0, 0 otherwise. Peaks at 1 for t = tau.
inline double psp_kernel(double t, double tau) {
    if (t <= 0.0) return 0.0;
    return (t / tau) * std::exp(1.0 - t / tau);
}

/// After-potential kernel restarted at the neuron's own last spike:
/// -threshold * exp(-t/tau_refr) for t > 0, 0 otherwise.
inline double after_potential(double t, double threshold, double tau_refr) {
    if (t <= 0.0) return 0.0;
    return -threshold * std::exp(-t / tau_refr);
}

struct SynapticInput {
    const SpikeTrain* train = nullptr;
    double weight = 0.0;
    double delay = 0.0; // ms
};

/// Simulate one SRM neuron over the grid. The membrane potential is
///   u(t) = eta(t - t_last) + sum over synapses w * sum_f eps(t - t_f - d)
/// with only the most recent own spike contributing eta. A spike is emitted
/// when u crosses the threshold from below outside the absolute refractory
/// period; at most one spike per step.
///
/// The PSP sum is evaluated with an exact two-variable exponential recurrence
/// over grid-snapped arrival times, so cost is O(steps + spikes) per neuron.
inline SpikeTrain simulate_neuron(std::span<const SynapticInput> incoming,
                                  const NeuronParams& params, const SimGrid& grid) {
    struct Arrival {
        std::size_t step;
        double weight;
    };
    const std::size_t steps = grid.steps();
    std::vector<Arrival> arrivals;
    for (const auto& syn : incoming) {
        if (syn.delay < 0.0) throw std::invalid_argument("simulate_neuron: negative delay");
        if (syn.weight == 0.0) continue;
        for (double t : syn.train->times) {
            const auto step = static_cast<std::size_t>(std::llround((t + syn.delay) / grid.dt));
            if (step < steps) arrivals.push_back({step, syn.weight});
        }
    }
    std::sort(arrivals.begin(), arrivals.end(),
              [](const Arrival& a, const Arrival& b) { return a.step < b.step; });

    const double decay_psp = std::exp(-grid.dt / params.tau_psp);
    const double decay_refr = std::exp(-grid.dt / params.tau_refr);
    const double psp_scale = std::exp(1.0) / params.tau_psp;

    // a = sum w*exp(-(t-arr)/tau), b = sum w*(t-arr)*exp(-(t-arr)/tau);
    // PSP sum = psp_scale * b, exact on the grid.
    double a = 0.0, b = 0.0;
    double eta = 0.0;
    double prev_u = 0.0;
    bool prev_blocked = false;
    double last_spike = -1e300;
    std::size_t next_arrival = 0;
    SpikeTrain out({}, grid.window);

    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * grid.dt;
        if (n > 0) {
            b = (b + grid.dt * a) * decay_psp;
            a *= decay_psp;
            eta *= decay_refr;
        }
        while (next_arrival < arrivals.size() && arrivals[next_arrival].step == n)
            a += arrivals[next_arrival++].weight;

        const double u = eta + psp_scale * b;
        const bool refractory_ok = out.empty() || (t - last_spike >= params.abs_refractory);
        // A crossing that happened while the neuron was refractory fires at
        // the first free step, so sustained drive yields refractory-limited
        // periodic firing instead of a stall.
        const bool crossing = prev_u < params.threshold || prev_blocked;
        if (u >= params.threshold && crossing && refractory_ok) {
            out.times.push_back(t);
            last_spike = t;
            eta = -params.threshold; // after-potential restarts
            prev_u = psp_scale * b + eta;
        } else {
            prev_u = u;
        }
        prev_blocked = !refractory_ok;
    }
    return out;
}

} // namespace snn
