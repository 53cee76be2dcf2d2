#pragma once

#include <cstddef>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "snn/rng.hpp"
#include "snn/spike_train.hpp"
#include "snn/srm.hpp"

namespace snn {

/// Fully connected feed-forward topology with one hidden layer. Every neuron
/// pair is linked through m delayed sub-connections sharing one delay set.
struct NetworkConfig {
    std::size_t n_inputs = 0;
    std::size_t n_hidden = 0;
    std::size_t n_outputs = 0;
    std::vector<double> delays{0.0}; // one entry per sub-connection, ms, distinct
    SimGrid grid;
    NeuronParams hidden_neuron;
    NeuronParams output_neuron;

    // Weight initialisation: uniform [init_lo, init_hi] divided by the number
    // of sub-connections, optionally also by the layer fan-in.
    double init_lo = -0.2;
    double init_hi = 0.8;
    bool init_fan_in = false;

    std::size_t sub_connections() const { return delays.size(); }

    void validate() const {
        if (n_inputs == 0 || n_hidden == 0 || n_outputs == 0)
            throw std::invalid_argument("NetworkConfig: all layers need at least one neuron");
        if (delays.empty()) throw std::invalid_argument("NetworkConfig: need at least one sub-connection");
        for (double d : delays)
            if (d < 0.0) throw std::invalid_argument("NetworkConfig: negative delay");
    }
};

/// One weight per (post, pre, sub-connection) triple for both layers.
struct WeightStore {
    std::size_t n_inputs = 0, n_hidden = 0, n_outputs = 0, m = 1;
    std::vector<double> hidden_w; // [h][i][k]
    std::vector<double> output_w; // [o][h][k]

    WeightStore() = default;
    explicit WeightStore(const NetworkConfig& c)
        : n_inputs(c.n_inputs), n_hidden(c.n_hidden), n_outputs(c.n_outputs), m(c.sub_connections()),
          hidden_w(c.n_hidden * c.n_inputs * m, 0.0),
          output_w(c.n_outputs * c.n_hidden * m, 0.0) {}

    double& hidden(std::size_t h, std::size_t i, std::size_t k) { return hidden_w[(h * n_inputs + i) * m + k]; }
    double hidden(std::size_t h, std::size_t i, std::size_t k) const { return hidden_w[(h * n_inputs + i) * m + k]; }
    double& output(std::size_t o, std::size_t h, std::size_t k) { return output_w[(o * n_hidden + h) * m + k]; }
    double output(std::size_t o, std::size_t h, std::size_t k) const { return output_w[(o * n_hidden + h) * m + k]; }

    WeightStore& operator+=(const WeightStore& d) {
        for (std::size_t j = 0; j < hidden_w.size(); ++j) hidden_w[j] += d.hidden_w[j];
        for (std::size_t j = 0; j < output_w.size(); ++j) output_w[j] += d.output_w[j];
        return *this;
    }
};

/// Accumulated per-pattern weight changes; same layout as WeightStore.
using WeightDelta = WeightStore;

inline WeightStore init_weights(const NetworkConfig& config, double lo, double hi, Rng& rng) {
    if (lo >= hi) throw std::invalid_argument("init_weights: lo >= hi");
    config.validate();
    WeightStore w(config);
    const double m = static_cast<double>(config.sub_connections());
    const double hidden_div = m * (config.init_fan_in ? static_cast<double>(config.n_inputs) : 1.0);
    const double output_div = m * (config.init_fan_in ? static_cast<double>(config.n_hidden) : 1.0);
    for (double& v : w.hidden_w) v = rng.uniform(lo, hi) / hidden_div;
    for (double& v : w.output_w) v = rng.uniform(lo, hi) / output_div;
    return w;
}

inline WeightStore init_weights(const NetworkConfig& config, Rng& rng) {
    return init_weights(config, config.init_lo, config.init_hi, rng);
}

struct ForwardResult {
    std::vector<SpikeTrain> hidden;
    std::vector<SpikeTrain> outputs;
};

namespace detail {

inline std::vector<SpikeTrain> forward_layer(const std::vector<SpikeTrain>& pre,
                                             std::size_t n_post, std::size_t m,
                                             const std::vector<double>& delays,
                                             const std::vector<double>& w, // [post][pre][k]
                                             const NeuronParams& params, const SimGrid& grid) {
    std::vector<SpikeTrain> post(n_post);
    std::vector<SynapticInput> syn;
    syn.reserve(pre.size() * m);
    for (std::size_t j = 0; j < n_post; ++j) {
        syn.clear();
        for (std::size_t i = 0; i < pre.size(); ++i)
            for (std::size_t k = 0; k < m; ++k)
                syn.push_back({&pre[i], w[(j * pre.size() + i) * m + k], delays[k]});
        post[j] = simulate_neuron(syn, params, grid);
    }
    return post;
}

} // namespace detail

/// Full forward simulation input -> hidden -> output. Returns both layers'
/// trains; the learner needs the hidden ones.
inline ForwardResult forward(const NetworkConfig& config, const WeightStore& weights,
                             const std::vector<SpikeTrain>& inputs) {
    if (inputs.size() != config.n_inputs)
        throw std::invalid_argument("forward: input count does not match network");
    ForwardResult r;
    r.hidden = detail::forward_layer(inputs, config.n_hidden, config.sub_connections(),
                                     config.delays, weights.hidden_w, config.hidden_neuron, config.grid);
    r.outputs = detail::forward_layer(r.hidden, config.n_outputs, config.sub_connections(),
                                      config.delays, weights.output_w, config.output_neuron, config.grid);
    return r;
}

// --- checkpoint format: text, dims header + delays + row-major values ---

inline void save_weights(std::ostream& os, const WeightStore& w, const std::vector<double>& delays) {
    os << "snn-weights 1\n";
    os << w.n_inputs << ' ' << w.n_hidden << ' ' << w.n_outputs << ' ' << w.m << '\n';
    os.precision(17);
    for (std::size_t k = 0; k < delays.size(); ++k) os << (k ? " " : "") << delays[k];
    os << '\n';
    for (double v : w.hidden_w) os << v << '\n';
    for (double v : w.output_w) os << v << '\n';
}

inline void save_weights(const std::string& path, const WeightStore& w, const std::vector<double>& delays) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("save_weights: cannot open " + path);
    save_weights(os, w, delays);
}

struct Checkpoint {
    WeightStore weights;
    std::vector<double> delays;
};

inline Checkpoint load_weights(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "snn-weights" || version != 1)
        throw std::runtime_error("load_weights: not a weight checkpoint");
    Checkpoint cp;
    WeightStore& w = cp.weights;
    if (!(is >> w.n_inputs >> w.n_hidden >> w.n_outputs >> w.m))
        throw std::runtime_error("load_weights: bad dimension header");
    cp.delays.resize(w.m);
    for (double& d : cp.delays)
        if (!(is >> d)) throw std::runtime_error("load_weights: truncated delay list");
    w.hidden_w.resize(w.n_hidden * w.n_inputs * w.m);
    w.output_w.resize(w.n_outputs * w.n_hidden * w.m);
    for (double& v : w.hidden_w)
        if (!(is >> v)) throw std::runtime_error("load_weights: truncated hidden block");
    for (double& v : w.output_w)
        if (!(is >> v)) throw std::runtime_error("load_weights: truncated output block");
    return cp;
}

inline Checkpoint load_weights(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_weights: cannot open " + path);
    return load_weights(is);
}

} // namespace snn
