#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "outage/jacobian.hpp"
#include "outage/network.hpp"
#include "outage/stream.hpp"

namespace outage {

enum class DetectorMode { ac_dynamic, dc_static };

std::string to_string(DetectorMode mode);
DetectorMode detector_mode_from_string(const std::string& text);

/// Threshold c = ln(ARL0 * p) with ARL0 counted in samples:
/// arl0_days * 86400 * sample_rate_hz.
double threshold_from_arl(double arl0_days, double sample_rate_hz, int pmu_count);

/// Largest gap (in missing samples) the detector bridges.
inline constexpr long kMaxMissingSamples = 5;

struct GlrConfig {
    double sigma2 = 0.005;
    double threshold = 0.0;
    int pmu_count = 1;
    double sample_rate_hz = 30.0;
    std::optional<double> arl0_days;
    DetectorMode mode = DetectorMode::ac_dynamic;
    /// Reset every statistic to zero after an alarm and keep monitoring.
    bool continue_after_alarm = false;
    /// Record per-scenario statistics at every sample.
    bool keep_trace = false;
    /// AC mode: score scenarios as low-rank updates of the factorized base
    /// Jacobian instead of factorizing every scenario Jacobian. Same values
    /// up to rounding.
    bool low_rank = true;

    static GlrConfig from_arl(double arl0_days, int pmu_count, double sample_rate_hz = 30.0, double sigma2 = 0.005);
    void validate() const;
};

struct ScoredScenario {
    int scenario_id = 0;
    double statistic = 0.0;
    bool operator==(const ScoredScenario&) const = default;
};

/// Per-scenario CUSUM-style statistics W and the last accepted sample.
struct GlrState {
    std::vector<int> scenario_ids;
    std::vector<double> statistics;
    long sample_index = 0;
    std::optional<AngleState> last_state;

    static GlrState initial(std::vector<int> scenario_ids);
    double overall() const;
};

struct DetectionEvent {
    long alarm_sample = 0;
    double overall_statistic = 0.0;
    std::vector<ScoredScenario> top3;
};

/// Largest three statistics (fewer when there are fewer scenarios), ties
/// broken by ascending scenario id. Throws ConfigError on an empty set.
std::vector<ScoredScenario> identify_top3(const GlrState& state);

/// Z = ln|J_l| - ln|J_0| + (|J_0 d|^2 - |J_l d|^2) / (2 sigma2).
double log_likelihood_ratio(const Eigen::VectorXd& delta_theta, const JacobianSnapshot& base,
                            const JacobianSnapshot& scenario, double sigma2);

struct StepOutcome {
    GlrState state;
    std::optional<DetectionEvent> event;
    /// Z_k per scenario; NaN where the scenario Jacobian was singular.
    Eigen::VectorXd increments;
};

/// Advances the recursion by one sample.
///
/// `scenarios` aligns with state.scenario_ids and must be evaluated at
/// state.last_state (nullopt marks a singular scenario, whose W carries
/// over). A jump of g > 1 sample indices treats the angle change as one
/// Brownian increment with variance g * sigma2; more than kMaxMissingSamples
/// missing samples, or a non-increasing index, throws StreamError.
StepOutcome step(const GlrState& state, const AngleState& sample, const JacobianSnapshot& base,
                 std::span<const std::optional<JacobianSnapshot>> scenarios, const PmuPlacement& placement,
                 const GlrConfig& config);

/// Z_k for every scenario, factorizing only the base Jacobian at `previous`.
///
/// With J_l = J_0 + E_S D E_S^T (see scenario_support), the determinant
/// lemma gives ln|J_l| - ln|J_0| = ln|det(I + D (J_0^-1)_SS)| and
/// J_l d = J_0 d + E_S D d_S. A scenario whose update factor is numerically
/// zero is re-checked by direct factorization; NaN marks a singular one.
/// Throws SingularJacobian when the base Jacobian is singular.
Eigen::VectorXd low_rank_increments(const NetworkCase& net, const AdmittanceMatrix& base,
                                    std::span<const OutageScenario> scenarios,
                                    std::span<const std::vector<std::size_t>> supports, const AngleState& previous,
                                    const Eigen::VectorXd& delta_theta, const PmuPlacement& placement,
                                    double sigma2);

struct RunTrace {
    std::vector<long> samples;
    std::vector<double> overall;
    /// statistics[i][s]: W of scenario s after samples[i].
    std::vector<std::vector<double>> statistics;
};

struct RunResult {
    std::vector<DetectionEvent> events;
    std::optional<RunTrace> trace;
    /// Wall-clock seconds spent on each processed sample (Jacobians + update).
    std::vector<double> step_seconds;
    long samples_processed = 0;
    std::vector<int> scenario_ids;

    const DetectionEvent* first_alarm() const { return events.empty() ? nullptr : &events.front(); }
};

/// Online detector: evaluates Jacobians at the previous sample and applies
/// `step` for each new measurement.
class GlrMonitor {
public:
    GlrMonitor(const NetworkCase& net, std::span<const OutageScenario> scenarios, PmuPlacement placement,
               GlrConfig config);

    /// Feeds one sample; the first sample only seeds the state.
    std::optional<DetectionEvent> push(const AngleState& sample);

    const GlrState& state() const { return state_; }
    const Eigen::VectorXd& last_increments() const { return last_increments_; }
    const PmuPlacement& placement() const { return placement_; }
    const GlrConfig& config() const { return config_; }

    void reset_statistics();

private:
    const NetworkCase& net_;
    std::span<const OutageScenario> scenarios_;
    PmuPlacement placement_;
    GlrConfig config_;
    AdmittanceMatrix base_admittance_;
    std::optional<JacobianSnapshot> dc_base_;
    std::vector<std::optional<JacobianSnapshot>> dc_scenarios_;
    std::vector<std::vector<std::size_t>> supports_;
    GlrState state_;
    Eigen::VectorXd last_increments_;
};

/// Runs the monitor over a sorted stream. Stops at the first alarm unless
/// config.continue_after_alarm is set.
RunResult run_stream(std::span<const AngleState> stream, const NetworkCase& net,
                     std::span<const OutageScenario> scenarios, const PmuPlacement& placement,
                     const GlrConfig& config);

RunResult run_stream(std::span<const StreamRecord> stream, const NetworkCase& net,
                     std::span<const OutageScenario> scenarios, const PmuPlacement& placement,
                     const GlrConfig& config);

/// First sample of a trace whose overall statistic reaches `threshold`, with
/// the top-3 identification at that sample. Equivalent to stopping a run
/// with that threshold, provided the trace was recorded without resets.
std::optional<DetectionEvent> first_crossing(const RunTrace& trace, std::span<const int> scenario_ids,
                                             double threshold);

}  // namespace outage
