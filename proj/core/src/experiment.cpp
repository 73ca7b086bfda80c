#include "outage/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "outage/error.hpp"

namespace outage {

void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn, unsigned threads) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

TrialOutcome run_trial(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                       const PmuPlacement& placement, const SimConfig& sim, const GlrConfig& detector,
                       std::span<const double> thresholds) {
    if (thresholds.empty()) throw ConfigError("at least one threshold is required");
    const SimulatedStream stream = generate_stream(net, scenarios, placement, sim);

    GlrConfig config = detector;
    config.threshold = *std::max_element(thresholds.begin(), thresholds.end());
    config.arl0_days.reset();
    config.keep_trace = true;
    config.continue_after_alarm = false;
    const RunResult run = run_stream(std::span<const StreamRecord>(stream.records), net, scenarios, placement, config);

    TrialOutcome out;
    out.seed = sim.seed;
    out.true_scenario = sim.outage_scenario;
    out.outage_sample = sim.outage_sample;
    out.samples_processed = run.samples_processed;
    if (!run.step_seconds.empty())
        out.mean_step_seconds = std::accumulate(run.step_seconds.begin(), run.step_seconds.end(), 0.0) /
                                static_cast<double>(run.step_seconds.size());
    for (double c : thresholds) out.alarms.push_back(first_crossing(*run.trace, run.scenario_ids, c));
    return out;
}

std::optional<long> detection_delay(const TrialOutcome& trial, std::size_t threshold_index) {
    const auto& alarm = trial.alarms.at(threshold_index);
    if (!alarm || !trial.outage_sample || alarm->alarm_sample < *trial.outage_sample) return std::nullopt;
    return alarm->alarm_sample - *trial.outage_sample;
}

bool top3_contains(const DetectionEvent& event, int scenario_id) {
    return std::any_of(event.top3.begin(), event.top3.end(),
                       [&](const ScoredScenario& s) { return s.scenario_id == scenario_id; });
}

std::optional<long> null_run_length(const NetworkCase& net, std::span<const OutageScenario> scenarios,
                                    const PmuPlacement& placement, SimConfig sim, const GlrConfig& detector,
                                    long max_samples) {
    if (max_samples < 1) throw ConfigError("max_samples must be at least 1");
    sim.outage_sample.reset();
    sim.outage_scenario.reset();

    GlrConfig config = detector;
    config.keep_trace = false;
    config.continue_after_alarm = false;

    // Without measurement noise a longer stream with the same seed extends a
    // shorter one sample for sample, so the length can grow geometrically.
    long length = sim.noise_fraction == 0.0 ? std::min<long>(max_samples, 4096) : max_samples;
    for (;;) {
        sim.duration = length + 1;
        const SimulatedStream stream = generate_stream(net, scenarios, placement, sim);
        const RunResult run =
            run_stream(std::span<const StreamRecord>(stream.records), net, scenarios, placement, config);
        if (const DetectionEvent* alarm = run.first_alarm()) return alarm->alarm_sample;
        if (length == max_samples) return std::nullopt;
        length = std::min(max_samples, 2 * length);
    }
}

}  // namespace outage
