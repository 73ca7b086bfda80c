#include "outage/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "outage/error.hpp"

namespace outage {

namespace {

enum SeedTag : std::uint64_t { kIncrements = 1, kNoise = 2, kInitialState = 3 };

using Index = Eigen::Index;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

void SimConfig::validate() const {
    if (!(sigma2 >= 0.0)) throw ConfigError("sigma2 must be non-negative");
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw ConfigError("noise fraction must lie in [0, 1)");
    if (duration < 1) throw ConfigError("duration must be at least one sample");
    if (!(load_perturbation >= 0.0 && load_perturbation < 1.0))
        throw ConfigError("load perturbation must lie in [0, 1)");
    if (outage_sample.has_value() != outage_scenario.has_value())
        throw ConfigError("outage sample and outage scenario must be set together");
    if (outage_sample && (*outage_sample < 1 || *outage_sample >= duration))
        throw ConfigError("outage sample must lie within 1..duration-1");
}

Eigen::VectorXd sample_increment(const JacobianSnapshot& snapshot, double sigma2, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    const double scale = std::sqrt(sigma2);
    Eigen::VectorXd dp(static_cast<Index>(snapshot.dimension()));
    for (Index i = 0; i < dp.size(); ++i) dp[i] = scale * normal(rng);
    return snapshot.solve(dp);
}

std::vector<StreamRecord> add_measurement_noise(std::span<const StreamRecord> stream, double noise_fraction,
                                                Rng& rng) {
    if (!(noise_fraction >= 0.0 && noise_fraction < 1.0)) throw ConfigError("noise fraction must lie in [0, 1)");
    std::vector<StreamRecord> out(stream.begin(), stream.end());
    if (noise_fraction == 0.0 || stream.size() < 2) return out;

    const Index k = stream.front().angles.size();
    Eigen::VectorXd mean_abs = Eigen::VectorXd::Zero(k);
    for (std::size_t t = 1; t < stream.size(); ++t)
        mean_abs += (stream[t].angles - stream[t - 1].angles).cwiseAbs();
    mean_abs /= static_cast<double>(stream.size() - 1);
    const Eigen::VectorXd stddev = noise_fraction * mean_abs;

    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t t = 1; t < stream.size(); ++t) {
        Eigen::VectorXd delta = stream[t].angles - stream[t - 1].angles;
        for (Index i = 0; i < k; ++i) delta[i] += stddev[i] * normal(rng);
        out[t].angles = out[t - 1].angles + delta;
    }
    return out;
}

SimulatedStream generate_stream(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                                const PmuPlacement& placement, const SimConfig& config) {
    config.validate();
    const auto n = static_cast<Index>(net.bus_count());

    const AdmittanceMatrix intact = base_admittance(net);
    const AdmittanceMatrix* outage = nullptr;
    if (config.outage_scenario) {
        auto it = std::find_if(scenarios.begin(), scenarios.end(),
                               [&](const OutageScenario& s) { return s.scenario_id == *config.outage_scenario; });
        if (it == scenarios.end())
            throw ConfigError("outage scenario " + std::to_string(*config.outage_scenario) + " is not admissible");
        outage = &it->admittance;
    }

    Rng increments(derive_seed(config.seed, kIncrements));
    Rng noise(derive_seed(config.seed, kNoise));
    Rng initial(derive_seed(config.seed, kInitialState));

    AngleState state = AngleState::flat(net);
    if (config.initial_angles) {
        if (config.initial_angles->size() != n) throw DimensionMismatch("initial angles must have one entry per bus");
        state.theta = *config.initial_angles;
    }
    std::uniform_real_distribution<double> jitter(-config.load_perturbation, config.load_perturbation);
    for (Index i = 0; i < n; ++i) state.theta[i] *= 1.0 + jitter(initial);
    state.theta[static_cast<Index>(net.reference_index())] = 0.0;
    if (config.voltage == VoltageProfile::case_magnitudes) state.vmag = net.voltage_magnitudes();

    const PmuPlacement everywhere = PmuPlacement::full(net);
    const bool report_vmag = config.voltage != VoltageProfile::flat;

    auto record_of = [&](long k, bool post) {
        StreamRecord r;
        r.sample_index = k;
        r.angles = placement.select(state.theta);
        if (report_vmag) r.vmag = placement.select(state.vmag);
        r.truth = post ? Truth::post_outage : Truth::pre_outage;
        return r;
    };

    auto jacobian_at = [&](const AdmittanceMatrix& y, long k, bool post) {
        try {
            return evaluate_jacobian(net, y, state, everywhere);
        } catch (const SingularJacobian& e) {
            throw SingularJacobian("simulation aborted at sample " + std::to_string(k) + " (" +
                                   (post ? "post" : "pre") + "-outage): " + e.what());
        }
    };

    std::optional<JacobianSnapshot> fixed_intact;
    std::optional<JacobianSnapshot> fixed_outage;
    if (config.fixed_jacobian) {
        fixed_intact.emplace(jacobian_at(intact, 0, false));
        if (outage) fixed_outage.emplace(jacobian_at(*outage, 0, true));
    }

    SimulatedStream out;
    out.buses = placement.bus_ids();
    out.truth = {config.outage_sample, config.outage_scenario, config.seed};
    out.records.reserve(static_cast<std::size_t>(config.duration));
    out.records.push_back(record_of(0, false));

    const auto& monitored = everywhere.bus_indices();
    for (long k = 1; k < config.duration; ++k) {
        const bool post = config.outage_sample && k >= *config.outage_sample;
        Eigen::VectorXd delta;
        if (config.fixed_jacobian) {
            delta = sample_increment(post ? *fixed_outage : *fixed_intact, config.sigma2, increments);
        } else {
            delta = sample_increment(jacobian_at(post ? *outage : intact, k, post), config.sigma2, increments);
        }
        for (std::size_t i = 0; i < monitored.size(); ++i) state.theta[static_cast<Index>(monitored[i])] += delta[static_cast<Index>(i)];
        state.sample_index = k;
        out.records.push_back(record_of(k, post));
    }

    if (config.noise_fraction > 0.0) out.records = add_measurement_noise(out.records, config.noise_fraction, noise);
    return out;
}

}  // namespace outage
