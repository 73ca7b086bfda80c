#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "outage/jacobian.hpp"
#include "outage/network.hpp"
#include "outage/stream.hpp"

namespace outage {

using Rng = std::mt19937_64;

/// Deterministic sub-seed derivation (splitmix64 of seed and stream tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

enum class VoltageProfile {
    flat,  // V = 1.0 p.u. on every bus
    case_magnitudes,  // V from the case's bus magnitudes
};

struct SimConfig {
    double sigma2 = 0.005;
    double noise_fraction = 0.10;
    std::optional<long> outage_sample;
    std::optional<int> outage_scenario;
    /// Number of records, including the initial sample 0.
    long duration = 300;
    std::uint64_t seed = 1;
    /// Relative jitter applied to each non-reference initial angle,
    /// theta0 *= 1 + U(-x, x). No effect on a flat start.
    double load_perturbation = 0.05;
    VoltageProfile voltage = VoltageProfile::flat;
    /// Initial angles in bus-index order (radians); flat start when empty.
    std::optional<Eigen::VectorXd> initial_angles;
    /// Evaluate the Jacobians once at theta0 instead of at every sample.
    bool fixed_jacobian = false;

    void validate() const;
};

struct SimulatedStream {
    std::vector<BusId> buses;  // monitored buses, column order of `records`
    std::vector<StreamRecord> records;
    StreamTruth truth;
};

/// Draws dP ~ N(0, sigma2 I) and solves J dtheta = dP with the snapshot's
/// factorization.
Eigen::VectorXd sample_increment(const JacobianSnapshot& snapshot, double sigma2, Rng& rng);

/// Perturbs each angle increment of bus i by N(0, (fraction * mean|dtheta_i|)^2)
/// and re-accumulates the angles from the first record.
std::vector<StreamRecord> add_measurement_noise(std::span<const StreamRecord> stream, double noise_fraction, Rng& rng);

/// Synthetic PMU angle stream from the Brownian power-injection model.
///
/// The whole network evolves: before the outage sample the increment of
/// every non-reference angle is drawn with the intact Jacobian evaluated at
/// the previous state, from the outage sample on with the scenario's
/// Jacobian. Records hold the monitored buses only; measurement noise is
/// applied last.
SimulatedStream generate_stream(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                                const PmuPlacement& placement, const SimConfig& config);

}  // namespace outage
