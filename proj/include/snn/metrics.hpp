#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

#include "snn/spike_train.hpp"

namespace snn {

/// Integration horizon covering all kernel tails: pattern window + 5 tau_c.
inline double integration_horizon(double window, double tau_c) { return window + 5.0 * tau_c; }

namespace detail {

// Integral over [0, T] of the product of two causal exponentials
// exp(-(t-a)/tau) H(t-a) * exp(-(t-b)/tau) H(t-b), divided by tau.
inline double pair_integral(double a, double b, double tau, double T) {
    const double later = a > b ? a : b;
    if (later >= T) return 0.0;
    return 0.5 * (std::exp(-std::abs(a - b) / tau) - std::exp((a + b - 2.0 * T) / tau));
}

} // namespace detail

/// Squared van Rossum distance between two spike trains: (1/tau_c) times the
/// squared L2 distance of the exponentially filtered trains over [0, T].
/// Closed form over spike pairs, exact for the truncated window.
inline double van_rossum_sq(const SpikeTrain& x, const SpikeTrain& y, double tau_c, double T) {
    if (tau_c <= 0.0) throw std::invalid_argument("van_rossum_sq: tau_c must be positive");
    if (x.times == y.times) return 0.0; // avoid cancellation noise on identical trains
    double d2 = 0.0;
    for (double a : x.times)
        for (double b : x.times) d2 += detail::pair_integral(a, b, tau_c, T);
    for (double a : y.times)
        for (double b : y.times) d2 += detail::pair_integral(a, b, tau_c, T);
    for (double a : x.times)
        for (double b : y.times) d2 -= 2.0 * detail::pair_integral(a, b, tau_c, T);
    return d2 < 0.0 ? 0.0 : d2;
}

/// Network error for one pattern: sum of squared van Rossum distances over
/// output neurons.
inline double network_error(const std::vector<SpikeTrain>& actual, const std::vector<SpikeTrain>& target,
                            double tau_c, double T) {
    if (actual.size() != target.size())
        throw std::invalid_argument("network_error: output/target counts differ");
    double e = 0.0;
    for (std::size_t o = 0; o < actual.size(); ++o)
        e += van_rossum_sq(actual[o], target[o], tau_c, T);
    return e;
}

struct LabeledTargets {
    int label = 0;
    std::vector<SpikeTrain> trains;
};

/// Nearest-target classification: the label whose target trains minimise the
/// summed squared van Rossum distance. Ties go to the lowest label.
inline int classify(const std::vector<SpikeTrain>& output, const std::vector<LabeledTargets>& candidates,
                    double tau_c, double T) {
    if (candidates.empty()) throw std::invalid_argument("classify: no candidates");
    int best_label = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cand : candidates) {
        const double d = network_error(output, cand.trains, tau_c, T);
        if (d < best || (d == best && cand.label < best_label)) {
            best = d;
            best_label = cand.label;
        }
    }
    return best_label;
}

} // namespace snn
