#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "snn/rng.hpp"

namespace snn {

/// Spike times of one neuron over one pattern window, in ms, strictly
/// increasing, all within [0, window_end).
struct SpikeTrain {
    std::vector<double> times;
    double window_end = 0.0;

    SpikeTrain() = default;
    SpikeTrain(std::vector<double> t, double window) : times(std::move(t)), window_end(window) {}

    std::size_t count() const { return times.size(); }
    bool empty() const { return times.empty(); }

    bool operator==(const SpikeTrain&) const = default;
};

/// One training example: input trains (one per input neuron), target trains
/// (one per output neuron) and an integer class id.
struct PatternPair {
    std::vector<SpikeTrain> inputs;
    std::vector<SpikeTrain> targets;
    int label = 0;
};

struct PoissonOptions {
    double min_isi = 0.0;           // ms
    std::size_t min_spikes = 0;
    std::optional<std::size_t> max_spikes = std::nullopt;
    double dt = 0.1;                // generation grid, ms
    int max_attempts = 10000;
};

/// Pseudo-Poisson train: Bernoulli per grid step with probability rate*dt,
/// steps within min_isi of the last spike skipped. Whole-train rejection
/// until the spike count lies in [min_spikes, max_spikes].
inline SpikeTrain generate_poisson(double rate, double window, const PoissonOptions& opt, Rng& rng) {
    if (rate <= 0.0 || window <= 0.0)
        throw std::invalid_argument("generate_poisson: rate and window must be positive");
    if (opt.max_spikes && opt.min_spikes > *opt.max_spikes)
        throw std::invalid_argument("generate_poisson: min_spikes > max_spikes");
    if (opt.max_spikes && *opt.max_spikes == 0)
        return SpikeTrain({}, window);

    const auto steps = static_cast<std::size_t>(std::llround(window / opt.dt));
    const double p = rate * opt.dt;
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
        std::vector<double> spikes;
        double last = -1e300;
        for (std::size_t n = 0; n < steps; ++n) {
            const double t = static_cast<double>(n) * opt.dt;
            if (t - last < opt.min_isi && !spikes.empty()) continue;
            if (rng.bernoulli(p)) {
                spikes.push_back(t);
                last = t;
                if (opt.max_spikes && spikes.size() > *opt.max_spikes) break;
            }
        }
        if (spikes.size() >= opt.min_spikes && (!opt.max_spikes || spikes.size() <= *opt.max_spikes))
            return SpikeTrain(std::move(spikes), window);
    }
    throw std::runtime_error("generate_poisson: spike-count constraints unsatisfiable after " +
                             std::to_string(opt.max_attempts) + " attempts");
}

/// Distribute every parent spike to one of two children with probability 1/2.
inline std::pair<SpikeTrain, SpikeTrain> split_train(const SpikeTrain& parent, Rng& rng) {
    if (parent.empty()) throw std::invalid_argument("split_train: parent is empty");
    SpikeTrain a({}, parent.window_end), b({}, parent.window_end);
    for (double t : parent.times) (rng.coin() ? a : b).times.push_back(t);
    return {std::move(a), std::move(b)};
}

/// Move each spike by N(0, sigma^2), clamp into [0, window_end), re-sort and
/// merge spikes that collide within merge_window (one simulation step).
inline SpikeTrain jitter_train(const SpikeTrain& train, double sigma, Rng& rng, double merge_window = 0.0) {
    if (sigma < 0.0) throw std::invalid_argument("jitter_train: sigma < 0");
    if (sigma == 0.0) return train;
    SpikeTrain out({}, train.window_end);
    out.times.reserve(train.count());
    const double hi = std::nextafter(train.window_end, 0.0);
    for (double t : train.times)
        out.times.push_back(std::clamp(t + rng.normal(0.0, sigma), 0.0, hi));
    std::sort(out.times.begin(), out.times.end());
    auto last = std::unique(out.times.begin(), out.times.end(), [merge_window](double x, double y) {
        return y - x <= merge_window;
    });
    out.times.erase(last, out.times.end());
    return out;
}

/// Line format for dataset dumps: `neuron_index: t1 t2 t3 ...` (ms, 3 decimals).
inline std::string to_line(std::size_t neuron_index, const SpikeTrain& train) {
    std::string line = std::to_string(neuron_index) + ":";
    char buf[32];
    for (double t : train.times) {
        std::snprintf(buf, sizeof(buf), " %.3f", t);
        line += buf;
    }
    return line;
}

inline std::pair<std::size_t, SpikeTrain> parse_line(const std::string& line, double window_end) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw std::runtime_error("parse_line: missing ':' in \"" + line + "\"");
    const std::size_t index = std::stoul(line.substr(0, colon));
    SpikeTrain train({}, window_end);
    std::istringstream rest(line.substr(colon + 1));
    double t;
    while (rest >> t) train.times.push_back(t);
    if (!std::is_sorted(train.times.begin(), train.times.end()))
        throw std::runtime_error("parse_line: spike times not increasing");
    return {index, std::move(train)};
}

} // namespace snn
