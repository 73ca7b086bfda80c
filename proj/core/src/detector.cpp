#include "outage/detector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "outage/error.hpp"

namespace outage {

std::string to_string(DetectorMode mode) { return mode == DetectorMode::ac_dynamic ? "ac" : "dc"; }

DetectorMode detector_mode_from_string(const std::string& text) {
    if (text == "ac" || text == "ac-dynamic") return DetectorMode::ac_dynamic;
    if (text == "dc" || text == "dc-static") return DetectorMode::dc_static;
    throw ConfigError("unknown detector mode '" + text + "' (expected ac or dc)");
}

double threshold_from_arl(double arl0_days, double sample_rate_hz, int pmu_count) {
    if (!(arl0_days > 0.0)) throw ConfigError("ARL0 must be positive");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    if (pmu_count < 1) throw ConfigError("PMU count must be at least 1");
    return std::log(arl0_days * 86400.0 * sample_rate_hz * static_cast<double>(pmu_count));
}

GlrConfig GlrConfig::from_arl(double arl0_days, int pmu_count, double sample_rate_hz, double sigma2) {
    GlrConfig c;
    c.sigma2 = sigma2;
    c.pmu_count = pmu_count;
    c.sample_rate_hz = sample_rate_hz;
    c.arl0_days = arl0_days;
    c.threshold = threshold_from_arl(arl0_days, sample_rate_hz, pmu_count);
    return c;
}

void GlrConfig::validate() const {
    if (!(sigma2 > 0.0)) throw ConfigError("sigma2 must be positive");
    if (!(threshold > 0.0)) throw ConfigError("threshold must be positive");
    if (pmu_count < 1) throw ConfigError("PMU count must be at least 1");
    if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
    if (arl0_days && std::abs(threshold - threshold_from_arl(*arl0_days, sample_rate_hz, pmu_count)) > 1e-9)
        throw ConfigError("threshold does not match ln(ARL0 * p) for the configured ARL0");
}

GlrState GlrState::initial(std::vector<int> scenario_ids) {
    GlrState s;
    s.statistics.assign(scenario_ids.size(), 0.0);
    s.scenario_ids = std::move(scenario_ids);
    return s;
}

double GlrState::overall() const {
    if (statistics.empty()) return 0.0;
    return *std::max_element(statistics.begin(), statistics.end());
}

namespace {

std::vector<ScoredScenario> top_three(std::span<const int> ids, std::span<const double> w) {
    if (ids.empty()) throw ConfigError("top-3 identification needs at least one scenario");
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = std::min<std::size_t>(3, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) { return w[a] != w[b] ? w[a] > w[b] : ids[a] < ids[b]; });
    std::vector<ScoredScenario> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back({ids[order[i]], w[order[i]]});
    return out;
}

}  // namespace

std::vector<ScoredScenario> identify_top3(const GlrState& state) {
    return top_three(state.scenario_ids, state.statistics);
}

double log_likelihood_ratio(const Eigen::VectorXd& delta_theta, const JacobianSnapshot& base,
                            const JacobianSnapshot& scenario, double sigma2) {
    const auto k = static_cast<Eigen::Index>(base.dimension());
    if (static_cast<Eigen::Index>(scenario.dimension()) != k || delta_theta.size() != k)
        throw DimensionMismatch("angle increment and Jacobians must share one dimension");
    const double quadratic = base.quadratic_form(delta_theta) - scenario.quadratic_form(delta_theta);
    return scenario.log_abs_det() - base.log_abs_det() + quadratic / (2.0 * sigma2);
}

namespace {

/// Index jump from the last accepted sample; enforces the gap policy.
long checked_jump(const GlrState& state, const AngleState& sample) {
    if (!state.last_state) throw StreamError("detector state has no previous sample");
    const long jump = sample.sample_index - state.sample_index;
    if (jump < 1)
        throw StreamError("sample index " + std::to_string(sample.sample_index) + " does not follow " +
                          std::to_string(state.sample_index));
    if (jump - 1 > kMaxMissingSamples)
        throw StreamError("gap of " + std::to_string(jump - 1) + " missing samples before sample " +
                          std::to_string(sample.sample_index) + " exceeds the limit of " +
                          std::to_string(kMaxMissingSamples));
    return jump;
}

StepOutcome apply_increments(const GlrState& state, const AngleState& sample, Eigen::VectorXd increments,
                             const GlrConfig& config) {
    StepOutcome out{state, std::nullopt, std::move(increments)};
    for (std::size_t i = 0; i < state.statistics.size(); ++i) {
        const double z = out.increments[static_cast<Eigen::Index>(i)];
        if (std::isnan(z)) continue;
        out.state.statistics[i] = std::max(0.0, state.statistics[i] + z);
    }
    out.state.sample_index = sample.sample_index;
    out.state.last_state = sample;

    const double overall = out.state.overall();
    if (overall >= config.threshold)
        out.event = DetectionEvent{sample.sample_index, overall, identify_top3(out.state)};
    return out;
}

}  // namespace

StepOutcome step(const GlrState& state, const AngleState& sample, const JacobianSnapshot& base,
                 std::span<const std::optional<JacobianSnapshot>> scenarios, const PmuPlacement& placement,
                 const GlrConfig& config) {
    if (scenarios.size() != state.scenario_ids.size())
        throw DimensionMismatch("scenario snapshots do not match the monitored scenario set");
    const long jump = checked_jump(state, sample);

    const Eigen::VectorXd delta = placement.select(sample.theta) - placement.select(state.last_state->theta);
    const double variance = config.sigma2 * static_cast<double>(jump);

    Eigen::VectorXd z = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(scenarios.size()),
                                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        if (!scenarios[i]) continue;
        if (scenarios[i]->scenario_id() != state.scenario_ids[i])
            throw DimensionMismatch("scenario snapshot order does not match the detector state");
        z[static_cast<Eigen::Index>(i)] = log_likelihood_ratio(delta, base, *scenarios[i], variance);
    }
    return apply_increments(state, sample, std::move(z), config);
}

Eigen::VectorXd low_rank_increments(const NetworkCase& net, const AdmittanceMatrix& base,
                                    std::span<const OutageScenario> scenarios,
                                    std::span<const std::vector<std::size_t>> supports, const AngleState& previous,
                                    const Eigen::VectorXd& delta_theta, const PmuPlacement& placement,
                                    double sigma2) {
    if (supports.size() != scenarios.size()) throw DimensionMismatch("one support per scenario is required");
    const JacobianSnapshot j0 = evaluate_jacobian(net, base, previous, placement);
    if (delta_theta.size() != static_cast<Eigen::Index>(j0.dimension()))
        throw DimensionMismatch("angle increment does not match the placement");
    const Eigen::MatrixXd inverse = j0.inverse();
    const Eigen::VectorXd r0 = j0.matrix() * delta_theta;
    const double q0 = r0.squaredNorm();

    Eigen::VectorXd z(static_cast<Eigen::Index>(scenarios.size()));
    for (std::size_t i = 0; i < scenarios.size(); ++i) {
        const auto& support = supports[i];
        const auto s = static_cast<Eigen::Index>(support.size());
        if (s == 0) {
            z[static_cast<Eigen::Index>(i)] = 0.0;
            continue;
        }
        Eigen::MatrixXd d = reduced_jacobian_block(net, scenarios[i].admittance, previous, placement, support);
        Eigen::MatrixXd inverse_block(s, s);
        Eigen::VectorXd delta_block(s);
        for (Eigen::Index a = 0; a < s; ++a) {
            delta_block[a] = delta_theta[static_cast<Eigen::Index>(support[static_cast<std::size_t>(a)])];
            for (Eigen::Index b = 0; b < s; ++b) {
                const auto ra = static_cast<Eigen::Index>(support[static_cast<std::size_t>(a)]);
                const auto rb = static_cast<Eigen::Index>(support[static_cast<std::size_t>(b)]);
                d(a, b) -= j0.matrix()(ra, rb);
                inverse_block(a, b) = inverse(ra, rb);
            }
        }
        const double factor = (Eigen::MatrixXd::Identity(s, s) + d * inverse_block).determinant();
        if (!(std::abs(factor) > 1e-10)) {
            try {
                const JacobianSnapshot jl =
                    evaluate_jacobian(net, scenarios[i].admittance, previous, placement, scenarios[i].scenario_id);
                z[static_cast<Eigen::Index>(i)] = log_likelihood_ratio(delta_theta, j0, jl, sigma2);
            } catch (const SingularJacobian&) {
                z[static_cast<Eigen::Index>(i)] = std::numeric_limits<double>::quiet_NaN();
            }
            continue;
        }
        Eigen::VectorXd rl = r0;
        const Eigen::VectorXd correction = d * delta_block;
        for (Eigen::Index a = 0; a < s; ++a) rl[static_cast<Eigen::Index>(support[static_cast<std::size_t>(a)])] += correction[a];
        z[static_cast<Eigen::Index>(i)] = std::log(std::abs(factor)) + (q0 - rl.squaredNorm()) / (2.0 * sigma2);
    }
    return z;
}

// ---------------------------------------------------------------------------
// GlrMonitor

GlrMonitor::GlrMonitor(const NetworkCase& net, std::span<const OutageScenario> scenarios, PmuPlacement placement,
                       GlrConfig config)
    : net_(net),
      scenarios_(scenarios),
      placement_(std::move(placement)),
      config_(config),
      base_admittance_(base_admittance(net)) {
    config_.validate();
    if (scenarios_.empty()) throw ConfigError("detector needs at least one outage scenario");
    std::vector<int> ids;
    ids.reserve(scenarios_.size());
    for (const OutageScenario& s : scenarios_) ids.push_back(s.scenario_id);
    state_ = GlrState::initial(std::move(ids));
    for (const OutageScenario& s : scenarios_) supports_.push_back(scenario_support(net_, s, placement_));

    if (config_.mode == DetectorMode::dc_static) {
        dc_base_.emplace(dc_matrix(net_, base_admittance_, placement_));
        for (const OutageScenario& s : scenarios_) {
            try {
                dc_scenarios_.emplace_back(dc_matrix(net_, s.admittance, placement_, s.scenario_id));
            } catch (const SingularJacobian&) {
                dc_scenarios_.emplace_back(std::nullopt);
            }
        }
    }
}

std::optional<DetectionEvent> GlrMonitor::push(const AngleState& sample) {
    if (!state_.last_state) {
        state_.last_state = sample;
        state_.sample_index = sample.sample_index;
        return std::nullopt;
    }

    auto compute = [&] {
        if (config_.mode == DetectorMode::dc_static)
            return step(state_, sample, *dc_base_, dc_scenarios_, placement_, config_);
        const AngleState& previous = *state_.last_state;
        if (config_.low_rank) {
            const long jump = checked_jump(state_, sample);
            const Eigen::VectorXd delta = placement_.select(sample.theta) - placement_.select(previous.theta);
            return apply_increments(state_, sample,
                                    low_rank_increments(net_, base_admittance_, scenarios_, supports_, previous, delta,
                                                        placement_, config_.sigma2 * static_cast<double>(jump)),
                                    config_);
        }
        const JacobianSnapshot base = evaluate_jacobian(net_, base_admittance_, previous, placement_);
        const auto scenario_snapshots = evaluate_scenario_jacobians(net_, scenarios_, previous, placement_);
        return step(state_, sample, base, scenario_snapshots, placement_, config_);
    };
    StepOutcome outcome = [&] {
        try {
            return compute();
        } catch (const SingularJacobian& e) {
            if (placement_.is_full()) throw;
            throw SingularJacobian(std::string(e.what()) +
                                   " (with a limited placement every group of adjacent monitored buses must border "
                                   "the reference bus, since unobserved neighbours drop out of the diagonal)");
        }
    }();

    state_ = std::move(outcome.state);
    last_increments_ = std::move(outcome.increments);
    return outcome.event;
}

void GlrMonitor::reset_statistics() { std::fill(state_.statistics.begin(), state_.statistics.end(), 0.0); }

// ---------------------------------------------------------------------------
// Stream runs

RunResult run_stream(std::span<const AngleState> stream, const NetworkCase& net,
                     std::span<const OutageScenario> scenarios, const PmuPlacement& placement,
                     const GlrConfig& config) {
    GlrMonitor monitor(net, scenarios, placement, config);
    RunResult result;
    result.scenario_ids = monitor.state().scenario_ids;
    if (config.keep_trace) result.trace.emplace();
    result.step_seconds.reserve(stream.size());

    for (const AngleState& sample : stream) {
        const bool seeding = !monitor.state().last_state.has_value();
        const auto start = std::chrono::steady_clock::now();
        auto event = monitor.push(sample);
        const auto stop = std::chrono::steady_clock::now();
        ++result.samples_processed;
        if (seeding) continue;

        result.step_seconds.push_back(std::chrono::duration<double>(stop - start).count());
        if (result.trace) {
            result.trace->samples.push_back(sample.sample_index);
            result.trace->overall.push_back(monitor.state().overall());
            result.trace->statistics.push_back(monitor.state().statistics);
        }
        if (event) {
            result.events.push_back(std::move(*event));
            if (!config.continue_after_alarm) break;
            monitor.reset_statistics();
        }
    }
    return result;
}

RunResult run_stream(std::span<const StreamRecord> stream, const NetworkCase& net,
                     std::span<const OutageScenario> scenarios, const PmuPlacement& placement,
                     const GlrConfig& config) {
    std::vector<AngleState> states;
    states.reserve(stream.size());
    for (const StreamRecord& r : stream) states.push_back(to_angle_state(r, net, placement));
    return run_stream(std::span<const AngleState>(states), net, scenarios, placement, config);
}

std::optional<DetectionEvent> first_crossing(const RunTrace& trace, std::span<const int> scenario_ids,
                                             double threshold) {
    for (std::size_t i = 0; i < trace.overall.size(); ++i) {
        if (trace.overall[i] >= threshold)
            return DetectionEvent{trace.samples[i], trace.overall[i], top_three(scenario_ids, trace.statistics[i])};
    }
    return std::nullopt;
}

}  // namespace outage
