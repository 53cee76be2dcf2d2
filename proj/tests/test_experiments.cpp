#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "snn/experiments.hpp"

using namespace snn;

TEST_CASE("xor timing pattern table") {
    const auto patterns = build_xor_timing();
    REQUIRE(patterns.size() == 4);
    // order: (x,y) = 00, 01, 10, 11
    const int labels[4] = {0, 1, 1, 0};
    for (int j = 0; j < 4; ++j) {
        const auto& p = patterns[j];
        REQUIRE(p.label == labels[j]);
        REQUIRE(p.inputs.size() == 3);
        const int x = j >> 1, y = j & 1;
        REQUIRE(p.inputs[0].times == std::vector<double>{x ? 0.0 : 6.0});
        REQUIRE(p.inputs[1].times == std::vector<double>{y ? 0.0 : 6.0});
        REQUIRE(p.inputs[2].times == std::vector<double>{0.0}); // reference
        REQUIRE(p.targets.size() == 1);
        REQUIRE(p.targets[0].times == std::vector<double>{labels[j] ? 10.0 : 16.0});
    }
}

TEST_CASE("iris loads, encodes and splits 112/38") {
    const auto samples = load_iris("data/iris.csv");
    REQUIRE(samples.size() == 150);
    int per_class[3] = {0, 0, 0};
    for (const auto& s : samples) {
        REQUIRE(s.species >= 0);
        REQUIRE(s.species <= 2);
        ++per_class[s.species];
        for (double f : s.features) {
            REQUIRE(f >= 0.0);
            REQUIRE(f <= 8.0);
        }
    }
    REQUIRE(per_class[0] == 50);
    REQUIRE(per_class[1] == 50);
    REQUIRE(per_class[2] == 50);

    const PatternPair p = encode_iris(samples[0]);
    REQUIRE(p.inputs.size() == 4);
    for (int f = 0; f < 4; ++f) REQUIRE(p.inputs[f].times == std::vector<double>{samples[0].features[f]});
    const double expected_target[3] = {10.0, 14.0, 18.0};
    REQUIRE(p.targets[0].times == std::vector<double>{expected_target[samples[0].species]});

    Rng rng(6);
    auto [train, test] = build_iris(samples, rng);
    REQUIRE(train.size() == 112);
    REQUIRE(test.size() == 38);
}

TEST_CASE("iris loader rejects malformed files") {
    REQUIRE_THROWS_AS(load_iris("/nonexistent/iris.csv"), std::runtime_error);
}

TEST_CASE("spike-train xor builder obeys its construction rules") {
    ExperimentSpec spec;
    spec.id = "xor-spiketrain";
    spec.net.n_inputs = 8;
    spec.net.n_hidden = 4;
    spec.net.n_outputs = 1;
    spec.net.delays = {0.0};
    spec.net.grid = {0.1, 50.0};
    Rng rng(12);
    const auto patterns = build_xor_spiketrain(spec, rng);
    REQUIRE(patterns.size() == 4);

    for (const auto& p : patterns) {
        REQUIRE(p.inputs.size() == 8);
        for (const auto& t : p.inputs) REQUIRE_FALSE(t.empty()); // both symbol children nonempty
        REQUIRE(p.targets.size() == 1);
        REQUIRE(p.targets[0].count() == 3);
    }

    // group 0 encodes x, group 1 encodes y; same symbol implies same trains
    REQUIRE(patterns[0].inputs[0] == patterns[1].inputs[0]); // x=0 in both
    REQUIRE(patterns[0].inputs[4] == patterns[2].inputs[4]); // y=0 in both
    REQUIRE_FALSE(patterns[0].inputs[0] == patterns[2].inputs[0]); // x flips

    // symbol children of one parent never share a spike time
    for (int i = 0; i < 4; ++i) {
        for (double s0 : patterns[0].inputs[i].times)
            for (double s1 : patterns[2].inputs[i].times) REQUIRE(s0 != s1);
    }
    // the two targets come from splitting a single 6-spike parent
    for (double s0 : patterns[0].targets[0].times)
        for (double s1 : patterns[1].targets[0].times) REQUIRE(s0 != s1);
    // label 0 patterns share their target, same for label 1
    REQUIRE(patterns[0].targets == patterns[3].targets);
    REQUIRE(patterns[1].targets == patterns[2].targets);
}

TEST_CASE("random classification builder satisfies spike-count bands") {
    ExperimentSpec spec;
    spec.id = "patterns";
    spec.net.n_inputs = 10;
    spec.net.n_hidden = 20;
    spec.net.n_outputs = 1;
    spec.net.delays = {0.0, 3.0};
    spec.net.grid = {0.5, 100.0};
    spec.net.hidden_neuron.abs_refractory = 3.0;
    spec.net.output_neuron.abs_refractory = 3.0;
    spec.n_patterns = 5;
    Rng rng(14);
    const auto patterns = build_random_classification(spec, rng);
    REQUIRE(patterns.size() == 5);
    for (std::size_t j = 0; j < patterns.size(); ++j) {
        REQUIRE(patterns[j].label == static_cast<int>(j));
        for (const auto& t : patterns[j].inputs) REQUIRE(t.count() >= 1);
        REQUIRE(patterns[j].targets[0].count() >= 2);
        REQUIRE(patterns[j].targets[0].count() <= 4);
    }

    spec.id = "generalise";
    spec.net.grid = {0.5, 500.0};
    const auto gen = build_random_classification(spec, rng);
    REQUIRE(gen.size() == 3);
    for (const auto& p : gen) {
        for (const auto& t : p.inputs) {
            REQUIRE(t.count() >= 15);
            REQUIRE(t.count() <= 20);
            for (std::size_t k = 1; k < t.count(); ++k) REQUIRE(t.times[k] - t.times[k - 1] >= 5.0);
        }
        REQUIRE(p.targets[0].count() >= 5);
        REQUIRE(p.targets[0].count() <= 7);
    }
}

TEST_CASE("config files fill specs over experiment defaults") {
    std::istringstream cfg("experiment = xor-timing\n"
                           "# comment\n"
                           "trials = 7\n"
                           "seed = 99\n"
                           "error_threshold = 0.25\n"
                           "max_iterations = 123\n");
    const ExperimentSpec s = make_spec(KeyValues::parse(cfg));
    REQUIRE(s.id == "xor-timing");
    REQUIRE(s.net.n_inputs == 3);
    REQUIRE(s.net.n_hidden == 5);
    REQUIRE(s.net.delays.size() == 12);
    REQUIRE(s.net.delays.front() == 0.0);
    REQUIRE(s.net.delays.back() == 11.0);
    REQUIRE(s.trials == 7);
    REQUIRE(s.master_seed == 99);
    REQUIRE(s.conv.error_threshold == 0.25);
    REQUIRE(s.learn.max_iterations == 123);

    std::istringstream bad("experiment = frobnicate\n");
    REQUIRE_THROWS_AS(make_spec(KeyValues::parse(bad)), std::runtime_error);
}

TEST_CASE("shipped configs parse") {
    for (const char* path : {"configs/xor_timing.cfg", "configs/iris.cfg", "configs/xor_spiketrain.cfg",
                             "configs/patterns.cfg", "configs/generalise.cfg"}) {
        std::ifstream is(path);
        REQUIRE(is);
        REQUIRE_NOTHROW(make_spec(KeyValues::parse(is)));
    }
}

TEST_CASE("experiment runs are deterministic in the seed") {
    std::istringstream cfg("experiment = xor-timing\ntrials = 2\nseed = 5\nmax_iterations = 15\n");
    const ExperimentSpec spec = make_spec(KeyValues::parse(cfg));
    const ExperimentResult a = run_experiment(spec);
    const ExperimentResult b = run_experiment(spec);
    std::ostringstream csv_a, csv_b;
    write_csv(csv_a, a);
    write_csv(csv_b, b);
    REQUIRE(csv_a.str() == csv_b.str());
    REQUIRE(csv_a.str().rfind("experiment,trial,seed,converged,iterations,final_error,train_acc,test_acc\n",
                              0) == 0);
    for (std::size_t j = 0; j < a.rows.size(); ++j) {
        REQUIRE(a.rows[j].seed == b.rows[j].seed);
        REQUIRE(a.rows[j].iterations == b.rows[j].iterations);
        REQUIRE(a.rows[j].weights.hidden_w == b.rows[j].weights.hidden_w);
    }
    REQUIRE(a.rows[0].seed != a.rows[1].seed);
}

TEST_CASE("summary recomputes from the rows") {
    std::vector<TrialResult> rows(4);
    rows[0].converged = true;
    rows[0].iterations = 10;
    rows[0].train_accuracy = 100.0;
    rows[0].test_accuracy = 80.0;
    rows[1].converged = true;
    rows[1].iterations = 30;
    rows[1].train_accuracy = 90.0;
    rows[1].test_accuracy = 60.0;
    rows[2].converged = false;
    rows[2].iterations = 500;
    rows[3].converged = false;
    const Summary s = summarize(rows);
    REQUIRE(s.trials == 4);
    REQUIRE(s.convergence_pct == 50.0);
    REQUIRE(s.mean_iterations == 20.0);
    // sample sd of {10,30} is sqrt(200); sem = sqrt(200)/sqrt(2) = 10
    REQUIRE_THAT(s.sem_iterations, Catch::Matchers::WithinRel(10.0, 1e-12));
    REQUIRE(s.mean_train_accuracy == 95.0);
    REQUIRE(s.mean_test_accuracy == 70.0);
}

TEST_CASE("pattern files round-trip") {
    std::vector<PatternPair> patterns(2);
    patterns[0].label = 0;
    patterns[0].inputs = {SpikeTrain({0.0, 3.5}, 30.0), SpikeTrain({}, 30.0)};
    patterns[0].targets = {SpikeTrain({10.0}, 30.0)};
    patterns[1].label = 1;
    patterns[1].inputs = {SpikeTrain({6.0}, 30.0), SpikeTrain({1.25}, 30.0)};
    patterns[1].targets = {SpikeTrain({16.0}, 30.0)};

    std::stringstream ss;
    save_patterns(ss, patterns, 30.0);
    double window = 0.0;
    const auto back = load_patterns(ss, &window);
    REQUIRE(window == 30.0);
    REQUIRE(back.size() == 2);
    for (int j = 0; j < 2; ++j) {
        REQUIRE(back[j].label == patterns[j].label);
        REQUIRE(back[j].inputs == patterns[j].inputs);
        REQUIRE(back[j].targets == patterns[j].targets);
    }

    std::stringstream bad("no header here");
    REQUIRE_THROWS_AS(load_patterns(bad), std::runtime_error);
}
