#include <gtest/gtest.h>

#include "outage/case_io.hpp"
#include "outage/detector.hpp"
#include "outage/error.hpp"
#include "outage/experiment.hpp"
#include "outage/simulator.hpp"
#include "support/oracles.hpp"

using namespace outage;

namespace {

NetworkCase load(const char* name) { return parse_case(oracle::data_dir() / name); }

Eigen::MatrixXd increments(const SimulatedStream& s) {
    Eigen::MatrixXd d(static_cast<Eigen::Index>(s.records.size() - 1), s.records.front().angles.size());
    for (std::size_t t = 1; t < s.records.size(); ++t)
        d.row(static_cast<Eigen::Index>(t - 1)) = (s.records[t].angles - s.records[t - 1].angles).transpose();
    return d;
}

}  // namespace

TEST(Seeds, DerivedSeedsDiffer) {
    EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
    EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
    EXPECT_EQ(derive_seed(9, 3), derive_seed(9, 3));
}

TEST(SampleIncrement, VarianceOfScaledIdentity) {
    const JacobianSnapshot j(2.0 * Eigen::MatrixXd::Identity(3, 3));
    Rng rng(5);
    const int n = 200000;
    Eigen::Vector3d sum_sq = Eigen::Vector3d::Zero();
    for (int i = 0; i < n; ++i) sum_sq += sample_increment(j, 0.005, rng).array().square().matrix();
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(sum_sq[i] / n, 0.005 / 4, 0.02 * 0.005 / 4);
}

TEST(Generate, DeterministicPerSeed) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    const PmuPlacement p = PmuPlacement::full(net);
    SimConfig c;
    c.duration = 50;
    c.outage_sample = 20;
    c.outage_scenario = 3;
    const auto a = generate_stream(net, set.scenarios, p, c);
    const auto b = generate_stream(net, set.scenarios, p, c);
    ASSERT_EQ(a.records.size(), 50u);
    for (std::size_t t = 0; t < a.records.size(); ++t) EXPECT_EQ(a.records[t].angles, b.records[t].angles);
    EXPECT_EQ(a.records[19].truth, Truth::pre_outage);
    EXPECT_EQ(a.records[20].truth, Truth::post_outage);
    EXPECT_EQ(a.truth.scenario, 3);
    c.seed = 2;
    EXPECT_NE(generate_stream(net, set.scenarios, p, c).records[5].angles, a.records[5].angles);
}

TEST(Generate, ZeroVarianceIsConstant) {
    const NetworkCase net = load("triangle.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig c;
    c.sigma2 = 0.0;
    c.noise_fraction = 0.0;
    c.duration = 10;
    const auto s = generate_stream(net, set.scenarios, PmuPlacement::full(net), c);
    for (const auto& r : s.records) EXPECT_EQ(r.angles, s.records.front().angles);
}

TEST(Generate, LimitedPlacementRecordsSubset) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig c;
    c.duration = 5;
    c.voltage = VoltageProfile::case_magnitudes;
    const PmuPlacement p(net, {4, 8, 31});
    const auto s = generate_stream(net, set.scenarios, p, c);
    EXPECT_EQ(s.buses, (std::vector<BusId>{4, 8}));
    ASSERT_TRUE(s.records[0].vmag);
    EXPECT_EQ((*s.records[0].vmag)[0], net.voltage_magnitudes()[static_cast<Eigen::Index>(net.bus_index(4))]);
}

TEST(Generate, InitialAnglesAndJitter) {
    const NetworkCase net = load("triangle.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig c;
    c.duration = 1;
    c.initial_angles = Eigen::Vector3d(0.0, -0.2, 0.1);
    c.load_perturbation = 0.05;
    const auto s = generate_stream(net, set.scenarios, PmuPlacement::full(net), c);
    EXPECT_NEAR(s.records[0].angles[0], -0.2, 0.2 * 0.05 + 1e-15);
    EXPECT_NE(s.records[0].angles[0], -0.2);
    c.load_perturbation = 0.0;
    EXPECT_EQ(generate_stream(net, set.scenarios, PmuPlacement::full(net), c).records[0].angles[1], 0.1);
}

TEST(Generate, ConfigValidation) {
    SimConfig c;
    c.outage_sample = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c.outage_scenario = 1;
    c.duration = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c.duration = 10;
    EXPECT_NO_THROW(c.validate());
    c.noise_fraction = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);

    const NetworkCase net = load("triangle.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig bad;
    bad.outage_sample = 2;
    bad.outage_scenario = 99;
    EXPECT_THROW(generate_stream(net, set.scenarios, PmuPlacement::full(net), bad), ConfigError);
}

TEST(Noise, ZeroFractionAndConstantStreamsUnchanged) {
    const NetworkCase net = load("triangle.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig c;
    c.noise_fraction = 0.0;
    c.duration = 20;
    const auto clean = generate_stream(net, set.scenarios, PmuPlacement::full(net), c);
    Rng rng(1);
    const auto same = add_measurement_noise(clean.records, 0.0, rng);
    for (std::size_t t = 0; t < same.size(); ++t) EXPECT_EQ(same[t].angles, clean.records[t].angles);

    std::vector<StreamRecord> flat(5, clean.records.front());
    const auto still = add_measurement_noise(flat, 0.1, rng);
    for (const auto& r : still) EXPECT_EQ(r.angles, flat.front().angles);
}

TEST(Noise, StandardDeviationIsFractionOfMeanIncrement) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    SimConfig c;
    c.noise_fraction = 0.0;
    c.duration = 40001;
    c.fixed_jacobian = true;
    const auto clean = generate_stream(net, set.scenarios, PmuPlacement::full(net), c);
    Rng rng(8);
    const auto noisy = add_measurement_noise(clean.records, 0.10, rng);

    SimulatedStream noisy_stream = clean;
    noisy_stream.records = noisy;
    const Eigen::MatrixXd d_clean = increments(clean);
    const Eigen::MatrixXd err = increments(noisy_stream) - d_clean;
    for (Eigen::Index b = 0; b < err.cols(); ++b) {
        const double target = 0.10 * d_clean.col(b).cwiseAbs().mean();
        const double measured = std::sqrt(err.col(b).squaredNorm() / static_cast<double>(err.rows()));
        EXPECT_NEAR(measured, target, 0.02 * target) << "bus column " << b;
        EXPECT_NEAR(err.col(b).mean(), 0.0, 0.05 * target);
    }
}

// With matching model and no noise the scenario that generated the stream
// has positive mean log-likelihood ratio after the outage.
TEST(Consistency, PositiveDriftTowardsTrueScenario) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    const PmuPlacement p = PmuPlacement::full(net);
    for (int scenario : {1, 12, 30}) {
        SimConfig c;
        c.noise_fraction = 0.0;
        c.duration = 400;
        c.outage_sample = 100;
        c.outage_scenario = scenario;
        c.seed = static_cast<std::uint64_t>(scenario);
        const auto s = generate_stream(net, set.scenarios, p, c);
        GlrConfig g;
        g.threshold = 1e12;
        GlrMonitor m(net, set.scenarios, p, g);
        double post = 0.0, pre = 0.0;
        for (const auto& r : s.records) {
            m.push(to_angle_state(r, net, p));
            if (r.sample_index == 0) continue;
            const double z = m.last_increments()[scenario - 1];
            (r.sample_index >= 100 ? post : pre) += z;
        }
        EXPECT_GT(post / 300.0, 0.0) << "scenario " << scenario;
        EXPECT_LT(pre / 99.0, 0.0) << "scenario " << scenario;
    }
}

TEST(Experiment, ParallelForCoversEveryIndexOnce) {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; }, 4);
    EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
    EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 7) throw ConfigError("boom"); }, 3), ConfigError);
}

TEST(Experiment, TrialThresholdsAreMonotone) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    const PmuPlacement p = PmuPlacement::full(net);
    SimConfig c;
    c.noise_fraction = 0.0;
    c.duration = 200;
    c.outage_sample = 90;
    c.outage_scenario = 5;
    GlrConfig g = GlrConfig::from_arl(1.0, 39);
    const std::vector<double> thresholds{10.0, 18.43, 25.0};
    const TrialOutcome t = run_trial(net, set.scenarios, p, c, g, thresholds);
    ASSERT_EQ(t.alarms.size(), 3u);
    for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
        if (t.alarms[i + 1]) {
            ASSERT_TRUE(t.alarms[i]);
            EXPECT_LE(t.alarms[i]->alarm_sample, t.alarms[i + 1]->alarm_sample);
        }
    ASSERT_TRUE(detection_delay(t, 1));
    EXPECT_GE(*detection_delay(t, 1), 0);
}

TEST(Experiment, NullRunLengthGrowthMatchesOneLongStream) {
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    const PmuPlacement p = PmuPlacement::full(net);
    SimConfig c;
    c.noise_fraction = 0.0;
    c.seed = 2;
    GlrConfig g;
    g.threshold = std::log(3600.0 * 39);
    const auto grown = null_run_length(net, set.scenarios, p, c, g, 20000);

    c.duration = 20001;
    const auto stream = generate_stream(net, set.scenarios, p, c);
    const RunResult once = run_stream(std::span<const StreamRecord>(stream.records), net, set.scenarios, p, g);
    ASSERT_EQ(grown.has_value(), once.first_alarm() != nullptr);
    if (grown) EXPECT_EQ(*grown, once.first_alarm()->alarm_sample);
}
