#include "app.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "outage/case_io.hpp"
#include "outage/detector.hpp"
#include "outage/error.hpp"
#include "outage/experiment.hpp"
#include "outage/network.hpp"
#include "outage/simulator.hpp"
#include "outage/stream.hpp"

namespace outagewatch {

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace outage;

double parse_days(const std::string& text) {
    auto number = [&](const std::string& part) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(part, &used);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse ARL0 value '" + text + "'");
        }
        if (used != part.size()) throw ConfigError("cannot parse ARL0 value '" + text + "'");
        return v;
    };
    const auto slash = text.find('/');
    const double value =
        slash == std::string::npos ? number(text) : number(text.substr(0, slash)) / number(text.substr(slash + 1));
    if (!(value > 0.0) || !std::isfinite(value)) throw ConfigError("ARL0 must be positive, got '" + text + "'");
    return value;
}

namespace {

const std::vector<std::string> kTableDays = {"1/24", "1/4", "1/2", "1", "2", "7", "30"};
const std::vector<int> kTablePmus = {10, 39, 1000};

std::string join(const std::vector<int>& ids, const char* sep = ",") {
    std::ostringstream out;
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? sep : "") << ids[i];
    return out.str();
}

std::vector<int> parse_id_list(const std::string& text) {
    std::vector<int> ids;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse id '" + item + "'");
        }
        if (used != item.size()) throw ConfigError("cannot parse id '" + item + "'");
        ids.push_back(v);
    }
    return ids;
}

PmuPlacement make_placement(const NetworkCase& net, const std::string& spec) {
    if (spec.empty() || spec == "all") return PmuPlacement::full(net);
    return PmuPlacement(net, parse_id_list(spec));
}

/// Placement implied by a stream's columns. Covering every non-reference bus
/// counts as a PMU on every bus.
PmuPlacement placement_from_columns(const NetworkCase& net, const std::vector<BusId>& columns) {
    std::vector<BusId> sorted = columns;
    std::sort(sorted.begin(), sorted.end());
    std::vector<BusId> non_reference;
    for (const Bus& b : net.buses())
        if (b.id != net.reference_bus()) non_reference.push_back(b.id);
    std::sort(non_reference.begin(), non_reference.end());
    if (sorted == non_reference) {
        std::vector<BusId> all = columns;
        all.push_back(net.reference_bus());
        return PmuPlacement(net, all);
    }
    return PmuPlacement(net, columns);
}

Eigen::VectorXd read_initial_angles(const NetworkCase& net, const std::string& path, bool degrees) {
    const StreamTable table = read_stream_csv(fs::path(path), degrees);
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.bus_count()));
    std::vector<bool> seen(net.bus_count(), false);
    for (std::size_t c = 0; c < table.buses.size(); ++c) {
        const std::size_t i = net.bus_index(table.buses[c]);
        theta[static_cast<Eigen::Index>(i)] = table.records.front().angles[static_cast<Eigen::Index>(c)];
        seen[i] = true;
    }
    for (std::size_t i = 0; i < net.bus_count(); ++i)
        if (!seen[i] && i != net.reference_index())
            throw ConfigError("initial angle file has no column for bus " + std::to_string(net.buses()[i].id));
    const double ref = theta[static_cast<Eigen::Index>(net.reference_index())];
    theta.array() -= ref;
    return theta;
}

fs::path sidecar_path(const fs::path& stream) {
    fs::path p = stream;
    p.replace_extension(".truth.json");
    return p;
}

std::string lines_of(const ScenarioSet& set, int scenario_id) {
    const OutageScenario* s = set.find(scenario_id);
    return s ? join(s->removed_lines, "+") : std::string("?");
}

json top3_json(const ScenarioSet& set, const std::vector<ScoredScenario>& top3) {
    json arr = json::array();
    for (const auto& s : top3) {
        const OutageScenario* sc = set.find(s.scenario_id);
        arr.push_back({{"scenario", s.scenario_id},
                       {"lines", sc ? json(sc->removed_lines) : json::array()},
                       {"W", s.statistic}});
    }
    return arr;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(values.size())));
    return values[std::clamp<std::size_t>(rank, 1, values.size()) - 1];
}

double median(std::vector<double> values) {
    if (values.empty()) return std::nan("");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DetectorOptions {
    std::string mode = "ac";
    double sigma2 = 0.005;
    double rate = 30.0;
    std::string arl0_days = "1";
    double threshold = 0.0;  // 0 = derive from ARL0
    int pmu_count = 0;       // 0 = from placement
    bool direct = false;

    void add(CLI::App& cmd) {
        cmd.add_option("--mode", mode, "Detector model: ac (time-variant Jacobian) or dc (static -B)")
            ->check(CLI::IsMember({"ac", "dc"}))
            ->capture_default_str();
        cmd.add_option("--sigma2", sigma2, "Variance of active power increments per sample (p.u.^2)")
            ->capture_default_str();
        cmd.add_option("--rate", rate, "PMU sample rate in Hz")->capture_default_str();
        cmd.add_option("--arl0-days", arl0_days, "Target mean time to false alarm in days (e.g. 1/24)")
            ->capture_default_str();
        cmd.add_option("--threshold", threshold, "Explicit threshold c; overrides --arl0-days");
        cmd.add_option("--pmu-count", pmu_count, "PMU count p used in c = ln(ARL0 * p); default from placement");
        cmd.add_flag("--direct-jacobians", direct,
                     "Factorize every scenario Jacobian instead of using low-rank updates of the base one");
    }

    GlrConfig config(const PmuPlacement& placement) const {
        const int p = pmu_count > 0 ? pmu_count : placement.pmu_count();
        GlrConfig c = GlrConfig::from_arl(parse_days(arl0_days), p, rate, sigma2);
        if (threshold > 0.0) {
            c.threshold = threshold;
            c.arl0_days.reset();
        }
        c.mode = detector_mode_from_string(mode);
        c.low_rank = !direct;
        return c;
    }
};

struct SimOptions {
    double sigma2 = 0.005;
    double noise = 0.10;
    long outage_sample = -1;
    int outage_line = 0;
    int outage_scenario = 0;
    long duration = 300;
    std::uint64_t seed = 1;
    double load_perturbation = 0.05;
    std::string voltage = "flat";
    std::string theta0;
    bool fixed_jacobian = false;

    void add(CLI::App& cmd) {
        cmd.add_option("--sigma2", sigma2, "Variance of active power increments per sample (p.u.^2)")
            ->capture_default_str();
        cmd.add_option("--noise", noise, "Measurement noise as a fraction of mean |dtheta| per bus")
            ->capture_default_str();
        cmd.add_option("--outage-sample", outage_sample, "Sample index at which the outage starts");
        cmd.add_option("--outage-line", outage_line, "Line id of a single-line outage to inject");
        cmd.add_option("--outage-scenario", outage_scenario, "Scenario id of the outage to inject");
        cmd.add_option("--duration", duration, "Number of samples, including sample 0")->capture_default_str();
        cmd.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
        cmd.add_option("--load-perturbation", load_perturbation, "Relative jitter of the initial angles")
            ->capture_default_str();
        cmd.add_option("--voltage", voltage, "Voltage profile: flat (1.0 p.u.) or case (bus magnitudes)")
            ->check(CLI::IsMember({"flat", "case"}))
            ->capture_default_str();
        cmd.add_option("--theta0", theta0, "Initial angles: one-row stream CSV with bus_<id> columns");
        cmd.add_flag("--fixed-jacobian", fixed_jacobian, "Evaluate the Jacobians once at the initial state");
    }

    SimConfig config(const NetworkCase& net, const ScenarioSet& set, bool degrees) const {
        SimConfig c;
        c.sigma2 = sigma2;
        c.noise_fraction = noise;
        c.duration = duration;
        c.seed = seed;
        c.load_perturbation = load_perturbation;
        c.voltage = voltage == "case" ? VoltageProfile::case_magnitudes : VoltageProfile::flat;
        c.fixed_jacobian = fixed_jacobian;
        if (!theta0.empty()) c.initial_angles = read_initial_angles(net, theta0, degrees);
        if (outage_line > 0 && outage_scenario > 0)
            throw ConfigError("use either --outage-line or --outage-scenario, not both");
        if (outage_line > 0) {
            const OutageScenario* s = set.find_by_lines({outage_line});
            if (!s) throw ConfigError("line " + std::to_string(outage_line) + " has no admissible outage scenario");
            c.outage_scenario = s->scenario_id;
        } else if (outage_scenario > 0) {
            c.outage_scenario = outage_scenario;
        }
        if (c.outage_scenario) {
            if (outage_sample < 0) throw ConfigError("--outage-sample is required with an outage");
            c.outage_sample = outage_sample;
        } else if (outage_sample >= 0) {
            throw ConfigError("--outage-sample needs --outage-line or --outage-scenario");
        }
        return c;
    }
};

// ---------------------------------------------------------------------------
// Subcommands

int cmd_calibrate(std::ostream& out, bool table, const std::string& days, double rate, int pmus) {
    if (table) {
        out << "arl0_days";
        for (int p : kTablePmus) out << ",pmus_" << p;
        out << '\n' << std::fixed << std::setprecision(2);
        for (const auto& d : kTableDays) {
            out << d;
            for (int p : kTablePmus) out << ',' << threshold_from_arl(parse_days(d), rate, p);
            out << '\n';
        }
        return kExitOk;
    }
    out << std::fixed << std::setprecision(2) << threshold_from_arl(parse_days(days), rate, pmus) << '\n';
    return kExitOk;
}

int cmd_scenarios(std::ostream& out, std::ostream& err, const std::string& case_path, int max_simultaneous,
                  bool as_json) {
    std::vector<std::string> warnings;
    const NetworkCase net = parse_case(case_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const ScenarioSet set = enumerate_scenarios(net, max_simultaneous);

    if (as_json) {
        json doc;
        doc["buses"] = net.bus_count();
        doc["lines"] = net.branch_count();
        json admissible = json::array();
        for (const auto& s : set.scenarios) admissible.push_back({{"scenario", s.scenario_id}, {"lines", s.removed_lines}});
        json excluded = json::array();
        for (const auto& e : set.excluded)
            excluded.push_back({{"lines", e.removed_lines}, {"isolated_buses", e.isolated_buses}, {"reason", e.reason}});
        doc["admissible"] = std::move(admissible);
        doc["excluded"] = std::move(excluded);
        out << doc.dump(2) << '\n';
        return kExitOk;
    }

    out << "case: " << net.bus_count() << " buses, " << net.branch_count() << " lines, reference bus "
        << net.reference_bus() << '\n';
    out << "admissible scenarios: " << set.scenarios.size() << '\n';
    for (const auto& s : set.scenarios) out << "  scenario " << s.scenario_id << ": line(s) " << join(s.removed_lines) << '\n';
    out << "excluded: " << set.excluded.size() << '\n';
    for (const auto& e : set.excluded) out << "  line(s) " << join(e.removed_lines) << ": " << e.reason << '\n';
    return kExitOk;
}

int cmd_convert(std::ostream& out, std::ostream& err, const std::string& in_path, const std::string& out_path,
                const std::string& theta0_path) {
    if (fs::path(in_path).extension() != ".m") throw ConfigError("convert expects a MATPOWER .m case");
    const MatpowerImport imported = import_matpower_file(in_path);
    for (const auto& w : imported.warnings) err << "warning: " << w << '\n';
    open_output(out_path) << write_case_json(imported.network);
    if (!theta0_path.empty()) {
        std::vector<BusId> ids;
        for (const Bus& b : imported.network.buses()) ids.push_back(b.id);
        StreamRecord r;
        r.angles = imported.solved_angles;
        write_stream_csv(fs::path(theta0_path), ids, {r});
    }
    out << "wrote " << out_path << " (" << imported.network.bus_count() << " buses, "
        << imported.network.branch_count() << " lines)\n";
    return kExitOk;
}

int cmd_simulate(std::ostream& out, std::ostream& err, const std::string& case_path, const std::string& pmus,
                 const SimOptions& options, int max_simultaneous, const std::string& stream_path,
                 std::string truth_path, bool degrees) {
    std::vector<std::string> warnings;
    const NetworkCase net = parse_case(case_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const ScenarioSet set = enumerate_scenarios(net, max_simultaneous);
    const PmuPlacement placement = make_placement(net, pmus);
    const SimConfig config = options.config(net, set, degrees);

    const SimulatedStream stream = generate_stream(net, set.scenarios, placement, config);
    write_stream_csv(fs::path(stream_path), stream.buses, stream.records);
    if (truth_path.empty()) truth_path = sidecar_path(stream_path).string();
    write_truth(truth_path, stream.truth);

    out << "wrote " << stream.records.size() << " samples for " << stream.buses.size() << " buses to "
        << stream_path << '\n';
    if (config.outage_scenario)
        out << "outage: scenario " << *config.outage_scenario << " (line(s) " << lines_of(set, *config.outage_scenario)
            << ") at sample " << *config.outage_sample << '\n';
    out << "truth: " << truth_path << '\n';
    return kExitOk;
}

struct DetectOutputs {
    std::string report;
    std::string trace;
    std::string plot_data;
    std::string truth;
};

int cmd_detect(std::ostream& out, std::ostream& err, const std::string& case_path, const std::string& pmus,
               const std::string& stream_path, const DetectorOptions& options, int max_simultaneous,
               bool continue_after_alarm, bool degrees, const DetectOutputs& outputs) {
    std::vector<std::string> warnings;
    const NetworkCase net = parse_case(case_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const ScenarioSet set = enumerate_scenarios(net, max_simultaneous);

    const StreamTable table = read_stream_csv(fs::path(stream_path), degrees);
    const PmuPlacement placement = pmus.empty() ? placement_from_columns(net, table.buses) : make_placement(net, pmus);
    const std::vector<StreamRecord> records = align_to_placement(table, placement);

    GlrConfig config = options.config(placement);
    config.continue_after_alarm = continue_after_alarm;
    config.keep_trace = !outputs.trace.empty() || !outputs.plot_data.empty();
    const RunResult result = run_stream(std::span<const StreamRecord>(records), net, set.scenarios, placement, config);

    std::optional<StreamTruth> truth;
    const fs::path truth_path = outputs.truth.empty() ? sidecar_path(stream_path) : fs::path(outputs.truth);
    if (!outputs.truth.empty() || fs::exists(truth_path)) truth = read_truth(truth_path);

    json report;
    report["config"] = {{"case", case_path},
                        {"stream", stream_path},
                        {"mode", to_string(config.mode)},
                        {"sigma2", config.sigma2},
                        {"threshold", config.threshold},
                        {"arl0_days", config.arl0_days ? json(*config.arl0_days) : json(nullptr)},
                        {"pmu_count", config.pmu_count},
                        {"monitored_buses", placement.bus_ids()},
                        {"sample_rate_hz", config.sample_rate_hz},
                        {"scenarios", set.scenarios.size()},
                        {"continue_after_alarm", config.continue_after_alarm}};
    report["samples_processed"] = result.samples_processed;

    const DetectionEvent* alarm = result.first_alarm();
    report["alarm"] = alarm != nullptr;
    report["alarm_sample"] = alarm ? json(alarm->alarm_sample) : json(nullptr);
    report["overall_W"] = alarm ? json(alarm->overall_statistic) : json(nullptr);
    report["top3"] = alarm ? top3_json(set, alarm->top3) : json::array();
    if (result.events.size() > 1) {
        json all = json::array();
        for (const auto& e : result.events) all.push_back({{"sample", e.alarm_sample}, {"overall_W", e.overall_statistic}});
        report["alarms"] = std::move(all);
    }

    report["outage_sample"] = nullptr;
    report["delay_samples"] = nullptr;
    report["delay_seconds"] = nullptr;
    if (truth) {
        report["outage_sample"] = truth->outage_sample ? json(*truth->outage_sample) : json(nullptr);
        report["truth_scenario"] = truth->scenario ? json(*truth->scenario) : json(nullptr);
        if (alarm && truth->outage_sample) {
            const long delay = alarm->alarm_sample - *truth->outage_sample;
            report["false_alarm"] = delay < 0;
            if (delay >= 0) {
                report["delay_samples"] = delay;
                report["delay_seconds"] = static_cast<double>(delay) / config.sample_rate_hz;
            }
        }
        if (alarm && truth->scenario) report["truth_in_top3"] = top3_contains(*alarm, *truth->scenario);
    }

    const double mean = result.step_seconds.empty()
                            ? 0.0
                            : std::accumulate(result.step_seconds.begin(), result.step_seconds.end(), 0.0) /
                                  static_cast<double>(result.step_seconds.size());
    report["latency"] = {{"samples", result.step_seconds.size()},
                         {"mean_ms", 1e3 * mean},
                         {"p99_ms", 1e3 * percentile(result.step_seconds, 0.99)}};
    report["trace_path"] = outputs.trace.empty() ? json(nullptr) : json(outputs.trace);

    if (!outputs.trace.empty()) {
        auto trace_out = open_output(outputs.trace);
        const RunTrace& trace = *result.trace;
        for (std::size_t i = 0; i < trace.samples.size(); ++i) {
            GlrState row;
            row.scenario_ids = result.scenario_ids;
            row.statistics = trace.statistics[i];
            json top = json::array();
            for (const auto& s : identify_top3(row)) top.push_back({s.scenario_id, s.statistic});
            json line = {{"sample", trace.samples[i]},
                         {"overall_W", trace.overall[i]},
                         {"alarm", trace.overall[i] >= config.threshold},
                         {"top3", std::move(top)}};
            trace_out << line.dump() << '\n';
        }
    }
    if (!outputs.plot_data.empty()) {
        auto plot = open_output(outputs.plot_data);
        const RunTrace& trace = *result.trace;
        plot << "sample,time_s,overall_W";
        for (int id : result.scenario_ids) plot << ",W_" << id;
        plot << '\n' << std::setprecision(10);
        for (std::size_t i = 0; i < trace.samples.size(); ++i) {
            plot << trace.samples[i] << ',' << static_cast<double>(trace.samples[i]) / config.sample_rate_hz << ','
                 << trace.overall[i];
            for (double w : trace.statistics[i]) plot << ',' << w;
            plot << '\n';
        }
    }

    if (outputs.report.empty() || outputs.report == "-") {
        out << report.dump(2) << '\n';
    } else {
        open_output(outputs.report) << report.dump(2) << '\n';
        out << (alarm ? "alarm at sample " + std::to_string(alarm->alarm_sample) : std::string("no alarm"));
        if (alarm && !alarm->top3.empty())
            out << ", top scenario " << alarm->top3.front().scenario_id << " (line(s) "
                << lines_of(set, alarm->top3.front().scenario_id) << ")";
        out << "; report written to " << outputs.report << '\n';
    }
    return alarm ? kExitAlarm : kExitOk;
}

struct BatchOptions {
    int runs = 10;
    std::vector<std::string> arl0_days = kTableDays;
    std::string lines;  // empty = every admissible single-line scenario
    unsigned threads = 0;
    std::string out_dir = ".";
};

int cmd_batch(std::ostream& out, std::ostream& err, const std::string& case_path, const std::string& pmus,
              const SimOptions& sim_options, const DetectorOptions& det_options, const BatchOptions& batch,
              bool degrees) {
    std::vector<std::string> warnings;
    const NetworkCase net = parse_case(case_path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const ScenarioSet set = enumerate_scenarios(net, 1);
    const PmuPlacement placement = make_placement(net, pmus);
    if (batch.runs < 1) throw ConfigError("--runs must be at least 1");
    if (batch.arl0_days.empty()) throw ConfigError("--arl0-days needs at least one value");

    std::vector<int> targets;
    if (batch.lines.empty()) {
        for (const auto& s : set.scenarios) targets.push_back(s.scenario_id);
    } else {
        for (int line : parse_id_list(batch.lines)) {
            const OutageScenario* s = set.find_by_lines({line});
            if (!s) throw ConfigError("line " + std::to_string(line) + " has no admissible outage scenario");
            targets.push_back(s->scenario_id);
        }
    }

    GlrConfig detector = det_options.config(placement);
    std::vector<double> days;
    std::vector<double> thresholds;
    for (const auto& d : batch.arl0_days) {
        days.push_back(parse_days(d));
        thresholds.push_back(threshold_from_arl(days.back(), detector.sample_rate_hz, detector.pmu_count));
    }

    const long outage_sample = sim_options.outage_sample < 0 ? 90 : sim_options.outage_sample;
    SimOptions base = sim_options;
    base.outage_sample = -1;
    base.outage_line = 0;
    base.outage_scenario = 0;
    const SimConfig sim_template = base.config(net, set, degrees);

    const std::size_t total = targets.size() * static_cast<std::size_t>(batch.runs);
    std::vector<TrialOutcome> trials(total);
    parallel_for(
        total,
        [&](std::size_t i) {
            SimConfig sim = sim_template;
            sim.outage_scenario = targets[i / static_cast<std::size_t>(batch.runs)];
            sim.outage_sample = outage_sample;
            sim.seed = derive_seed(sim_options.seed, i);
            trials[i] = run_trial(net, set.scenarios, placement, sim, detector, thresholds);
        },
        batch.threads);

    fs::create_directories(batch.out_dir);
    const fs::path delays_path = fs::path(batch.out_dir) / "batch_delays.csv";
    const fs::path heatmap_path = fs::path(batch.out_dir) / "batch_heatmap.csv";
    auto delays = open_output(delays_path.string());
    delays << "true_scenario,true_lines,run,seed,arl0_days,threshold,alarm_sample,delay_samples,delay_seconds,"
              "false_alarm,top1,top2,top3,in_top3\n";
    std::map<std::tuple<std::size_t, int, int>, int> heat;
    for (std::size_t i = 0; i < total; ++i) {
        const TrialOutcome& t = trials[i];
        for (std::size_t c = 0; c < thresholds.size(); ++c) {
            const auto& alarm = t.alarms[c];
            const auto delay = detection_delay(t, c);
            delays << *t.true_scenario << ',' << lines_of(set, *t.true_scenario) << ','
                   << i % static_cast<std::size_t>(batch.runs) << ',' << t.seed << ',' << days[c] << ','
                   << thresholds[c] << ',';
            delays << (alarm ? std::to_string(alarm->alarm_sample) : "") << ',';
            delays << (delay ? std::to_string(*delay) : "") << ',';
            delays << (delay ? std::to_string(static_cast<double>(*delay) / detector.sample_rate_hz) : "") << ',';
            delays << (alarm && !delay ? 1 : 0);
            for (std::size_t r = 0; r < 3; ++r)
                delays << ',' << (alarm && r < alarm->top3.size() ? std::to_string(alarm->top3[r].scenario_id) : "");
            delays << ',' << (alarm ? int(top3_contains(*alarm, *t.true_scenario)) : 0) << '\n';
            if (alarm && delay)
                for (const auto& s : alarm->top3) ++heat[{c, *t.true_scenario, s.scenario_id}];
        }
    }
    auto heatmap = open_output(heatmap_path.string());
    heatmap << "arl0_days,true_scenario,true_lines,identified_scenario,identified_lines,count,fraction\n";
    for (const auto& [key, count] : heat) {
        const auto& [c, truth, identified] = key;
        heatmap << days[c] << ',' << truth << ',' << lines_of(set, truth) << ',' << identified << ','
                << lines_of(set, identified) << ',' << count << ','
                << static_cast<double>(count) / batch.runs << '\n';
    }

    out << "batch: " << targets.size() << " scenario(s) x " << batch.runs << " run(s), placement of "
        << placement.size() << " monitored buses, mode " << to_string(detector.mode) << '\n';
    out << "arl0_days,threshold,detected,false_alarms,median_delay_s,top3_accuracy\n";
    out << std::fixed << std::setprecision(4);
    for (std::size_t c = 0; c < thresholds.size(); ++c) {
        std::size_t detected = 0, false_alarms = 0, hits = 0;
        std::vector<double> seconds;
        for (const auto& t : trials) {
            const auto delay = detection_delay(t, c);
            if (t.alarms[c] && !delay) ++false_alarms;
            if (!delay) continue;
            ++detected;
            seconds.push_back(static_cast<double>(*delay) / detector.sample_rate_hz);
            if (top3_contains(*t.alarms[c], *t.true_scenario)) ++hits;
        }
        out << batch.arl0_days[c] << ',' << thresholds[c] << ',' << detected << '/' << total << ',' << false_alarms
            << ',' << median(seconds) << ',' << (detected ? static_cast<double>(hits) / detected : 0.0) << '\n';
    }
    out << "wrote " << delays_path.string() << " and " << heatmap_path.string() << '\n';
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"outagewatch: streaming line outage detection from PMU phase angles"};
    app.set_config("--config", "", "Flat key=value configuration file; command line flags take precedence");
    app.require_subcommand(1);
    bool degrees = false;
    app.add_flag("--degrees", degrees, "Angle inputs (streams, initial angles) are in degrees");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "Threshold c = ln(ARL0 * p) from a false alarm target");
    bool table = false;
    std::string cal_days = "1";
    double cal_rate = 30.0;
    int cal_pmus = 39;
    calibrate->add_flag("--table", table, "Print thresholds for the standard ARL0 x PMU-count grid");
    calibrate->add_option("--arl0-days", cal_days, "Mean time to false alarm in days (e.g. 1/24)")->capture_default_str();
    calibrate->add_option("--rate", cal_rate, "PMU sample rate in Hz")->capture_default_str();
    calibrate->add_option("--pmus", cal_pmus, "Number of installed PMUs")->capture_default_str();

    // scenarios
    auto* scenarios = app.add_subcommand("scenarios", "List admissible outage scenarios and exclusions");
    std::string case_path;
    int max_simultaneous = 1;
    bool as_json = false;
    scenarios->add_option("--case", case_path, "Network case (.json or MATPOWER .m)")->required();
    scenarios->add_option("--max-simultaneous", max_simultaneous, "Largest number of lines out at once")
        ->capture_default_str();
    scenarios->add_flag("--json", as_json, "Print JSON instead of text");

    // convert
    auto* convert = app.add_subcommand("convert", "Convert a MATPOWER case to the JSON case schema");
    std::string convert_out;
    std::string theta0_out;
    convert->add_option("--case", case_path, "MATPOWER .m case")->required();
    convert->add_option("--out", convert_out, "Output JSON case")->required();
    convert->add_option("--theta0-out", theta0_out, "Also write the solved angles as an initial-angle CSV");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic PMU angle stream");
    std::string pmus;
    std::string stream_path;
    std::string truth_path;
    SimOptions sim_options;
    simulate->add_option("--case", case_path, "Network case (.json or MATPOWER .m)")->required();
    simulate->add_option("--pmus", pmus, "PMU buses: comma-separated ids or 'all'");
    simulate->add_option("--out", stream_path, "Output stream CSV")->required();
    simulate->add_option("--truth", truth_path, "Ground-truth sidecar JSON (default <out>.truth.json)");
    simulate->add_option("--max-simultaneous", max_simultaneous, "Largest number of lines out at once")
        ->capture_default_str();
    sim_options.add(*simulate);

    // detect
    auto* detect = app.add_subcommand("detect", "Run the detector over a stream; exit 2 on alarm");
    DetectorOptions det_options;
    DetectOutputs outputs;
    bool continue_after_alarm = false;
    detect->add_option("--case", case_path, "Network case (.json or MATPOWER .m)")->required();
    detect->add_option("--stream", stream_path, "Stream CSV")->required();
    detect->add_option("--pmus", pmus, "PMU buses: comma-separated ids or 'all' (default: stream columns)");
    detect->add_option("--truth", outputs.truth, "Ground-truth sidecar (default <stream>.truth.json if present)");
    detect->add_option("--report", outputs.report, "Run report JSON path ('-' or empty: stdout)");
    detect->add_option("--trace", outputs.trace, "Per-sample trace as JSON lines");
    detect->add_option("--plot-data", outputs.plot_data, "Per-sample statistics of every scenario as CSV");
    detect->add_option("--max-simultaneous", max_simultaneous, "Largest number of lines out at once")
        ->capture_default_str();
    detect->add_flag("--continue-after-alarm", continue_after_alarm, "Reset statistics after an alarm and continue");
    det_options.add(*detect);

    // batch
    auto* batch_cmd = app.add_subcommand("batch", "Monte-Carlo delay and identification study");
    BatchOptions batch;
    SimOptions batch_sim;
    DetectorOptions batch_det;
    batch_sim.duration = 391;
    batch_cmd->add_option("--case", case_path, "Network case (.json or MATPOWER .m)")->required();
    batch_cmd->add_option("--pmus", pmus, "PMU buses: comma-separated ids or 'all'");
    batch_cmd->add_option("--runs", batch.runs, "Runs per outage line")->capture_default_str();
    batch_cmd->add_option("--lines", batch.lines, "Comma-separated line ids (default: every admissible line)");
    batch_cmd->add_option("--threads", batch.threads, "Worker threads (0 = all cores)")->capture_default_str();
    batch_cmd->add_option("--out-dir", batch.out_dir, "Directory for batch_delays.csv and batch_heatmap.csv")
        ->capture_default_str();
    batch_sim.add(*batch_cmd);
    batch_cmd->remove_option(batch_cmd->get_option("--sigma2"));
    batch_det.add(*batch_cmd);
    batch_cmd->remove_option(batch_cmd->get_option("--arl0-days"));
    batch_cmd->add_option("--arl0-days", batch.arl0_days, "ARL0 sweep in days (e.g. 1/24 1 30)")
        ->expected(1, -1)
        ->capture_default_str();

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitError;
    }

    try {
        if (*calibrate) return cmd_calibrate(out, table, cal_days, cal_rate, cal_pmus);
        if (*scenarios) return cmd_scenarios(out, err, case_path, max_simultaneous, as_json);
        if (*convert) return cmd_convert(out, err, case_path, convert_out, theta0_out);
        if (*simulate)
            return cmd_simulate(out, err, case_path, pmus, sim_options, max_simultaneous, stream_path, truth_path,
                                degrees);
        if (*detect)
            return cmd_detect(out, err, case_path, pmus, stream_path, det_options, max_simultaneous,
                              continue_after_alarm, degrees, outputs);
        if (*batch_cmd) {
            batch_det.sigma2 = batch_sim.sigma2;
            return cmd_batch(out, err, case_path, pmus, batch_sim, batch_det, batch, degrees);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}

}  // namespace outagewatch
