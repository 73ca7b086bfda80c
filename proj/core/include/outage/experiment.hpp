#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "outage/detector.hpp"
#include "outage/simulator.hpp"

namespace outage {

/// Runs fn(0..count-1) on up to `threads` workers (0 = hardware concurrency).
/// Each index runs exactly once; callers write results by index, so output
/// order never depends on scheduling.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, unsigned threads = 0);

/// One simulated stream scored at several thresholds.
struct TrialOutcome {
    std::uint64_t seed = 0;
    std::optional<int> true_scenario;
    std::optional<long> outage_sample;
    /// First alarm per threshold (same order as the requested thresholds).
    std::vector<std::optional<DetectionEvent>> alarms;
    double mean_step_seconds = 0.0;
    long samples_processed = 0;
};

/// Simulates one stream with `sim` and runs the detector once with the
/// largest threshold, keeping the trace; smaller thresholds are read off the
/// same trace.
TrialOutcome run_trial(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                       const PmuPlacement& placement, const SimConfig& sim, const GlrConfig& detector,
                       std::span<const double> thresholds);

/// Detection delay in samples for an alarm at or after the outage sample.
/// Alarms before the outage (false alarms) and missed detections yield nullopt.
std::optional<long> detection_delay(const TrialOutcome& trial, std::size_t threshold_index);

bool top3_contains(const DetectionEvent& event, int scenario_id);

/// Run length of a null (no-outage) stream: alarm sample, or nullopt when
/// the stream of `max_samples` ends without an alarm. Noise-free streams are
/// grown by doubling, which re-simulates the same prefix.
std::optional<long> null_run_length(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                                    const PmuPlacement& placement, SimConfig sim, const GlrConfig& detector,
                                    long max_samples);

}  // namespace outage
