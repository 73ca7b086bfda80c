#include "outage/stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "outage/error.hpp"

namespace outage {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& text, long line_no) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last)
        throw StreamError("line " + std::to_string(line_no) + ": cannot parse '" + text + "'");
    return value;
}

std::optional<BusId> column_bus(const std::string& name, const std::string& prefix) {
    if (name.rfind(prefix, 0) != 0) return std::nullopt;
    const std::string digits = name.substr(prefix.size());
    BusId id{};
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
        throw StreamError("bad column name '" + name + "'");
    return id;
}

}  // namespace

void write_stream_csv(std::ostream& out, const std::vector<BusId>& buses, const std::vector<StreamRecord>& records) {
    const bool with_vmag = !records.empty() && std::all_of(records.begin(), records.end(),
                                                           [](const StreamRecord& r) { return r.vmag.has_value(); });
    out << "sample";
    for (BusId id : buses) out << ",bus_" << id;
    if (with_vmag)
        for (BusId id : buses) out << ",vm_" << id;
    out << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const StreamRecord& r : records) {
        if (r.angles.size() != static_cast<Eigen::Index>(buses.size()))
            throw StreamError("record " + std::to_string(r.sample_index) + " has the wrong number of angles");
        out << r.sample_index;
        for (Eigen::Index i = 0; i < r.angles.size(); ++i) out << ',' << r.angles[i];
        if (with_vmag)
            for (Eigen::Index i = 0; i < r.vmag->size(); ++i) out << ',' << (*r.vmag)[i];
        out << '\n';
    }
}

void write_stream_csv(const std::filesystem::path& path, const std::vector<BusId>& buses,
                      const std::vector<StreamRecord>& records) {
    std::ofstream out(path);
    if (!out) throw StreamError("cannot write stream file '" + path.string() + "'");
    write_stream_csv(out, buses, records);
}

StreamTable read_stream_csv(std::istream& in, bool degrees) {
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line != "\r") break;
    }
    if (line.empty()) throw StreamError("stream file is empty");

    const auto header = split_csv(line);
    if (header.empty() || header[0] != "sample") throw StreamError("stream header must start with 'sample'");

    StreamTable table;
    std::vector<BusId> vm_buses;
    for (std::size_t i = 1; i < header.size(); ++i) {
        if (auto id = column_bus(header[i], "bus_")) {
            if (!vm_buses.empty()) throw StreamError("angle columns must precede magnitude columns");
            if (std::find(table.buses.begin(), table.buses.end(), *id) != table.buses.end())
                throw StreamError("duplicate column " + header[i]);
            table.buses.push_back(*id);
        } else if (auto vm = column_bus(header[i], "vm_")) {
            vm_buses.push_back(*vm);
        } else {
            throw StreamError("unknown stream column '" + header[i] + "'");
        }
    }
    if (table.buses.empty()) throw StreamError("stream has no bus_<id> columns");
    if (!vm_buses.empty() && vm_buses != table.buses)
        throw StreamError("vm_<id> columns must list the same buses as bus_<id> columns");

    const double scale = degrees ? std::numbers::pi / 180.0 : 1.0;
    const std::size_t k = table.buses.size();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv(line);
        if (fields.size() != header.size())
            throw StreamError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                              " fields, got " + std::to_string(fields.size()));
        StreamRecord r;
        r.sample_index = parse_number<long>(fields[0], line_no);
        r.angles.resize(static_cast<Eigen::Index>(k));
        for (std::size_t i = 0; i < k; ++i)
            r.angles[static_cast<Eigen::Index>(i)] = scale * parse_number<double>(fields[1 + i], line_no);
        if (!vm_buses.empty()) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(k));
            for (std::size_t i = 0; i < k; ++i)
                v[static_cast<Eigen::Index>(i)] = parse_number<double>(fields[1 + k + i], line_no);
            r.vmag = std::move(v);
        }
        table.records.push_back(std::move(r));
    }
    if (table.records.empty()) throw StreamError("stream file has a header but no samples");
    return table;
}

StreamTable read_stream_csv(const std::filesystem::path& path, bool degrees) {
    std::ifstream in(path);
    if (!in) throw StreamError("cannot open stream file '" + path.string() + "'");
    return read_stream_csv(in, degrees);
}

std::string truth_to_json(const StreamTruth& truth) {
    nlohmann::json doc;
    doc["outage_sample"] = truth.outage_sample ? nlohmann::json(*truth.outage_sample) : nlohmann::json(nullptr);
    doc["scenario"] = truth.scenario ? nlohmann::json(*truth.scenario) : nlohmann::json(nullptr);
    doc["seed"] = truth.seed;
    return doc.dump() + "\n";
}

StreamTruth truth_from_json(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        StreamTruth t;
        if (doc.contains("outage_sample") && !doc["outage_sample"].is_null())
            t.outage_sample = doc["outage_sample"].get<long>();
        if (doc.contains("scenario") && !doc["scenario"].is_null()) t.scenario = doc["scenario"].get<int>();
        t.seed = doc.value("seed", std::uint64_t{0});
        return t;
    } catch (const nlohmann::json::exception& e) {
        throw StreamError(std::string("malformed truth sidecar: ") + e.what());
    }
}

void write_truth(const std::filesystem::path& path, const StreamTruth& truth) {
    std::ofstream out(path);
    if (!out) throw StreamError("cannot write truth file '" + path.string() + "'");
    out << truth_to_json(truth);
}

StreamTruth read_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw StreamError("cannot open truth file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return truth_from_json(buf.str());
}

std::vector<StreamRecord> align_to_placement(const StreamTable& table, const PmuPlacement& placement) {
    const auto& want = placement.bus_ids();
    std::vector<BusId> have_sorted = table.buses;
    std::vector<BusId> want_sorted = want;
    std::sort(have_sorted.begin(), have_sorted.end());
    std::sort(want_sorted.begin(), want_sorted.end());
    if (have_sorted != want_sorted) {
        std::ostringstream msg;
        msg << "stream columns do not match the PMU placement: stream has " << table.buses.size()
            << " bus columns, placement monitors " << want.size() << " buses";
        throw StreamError(msg.str());
    }

    std::vector<Eigen::Index> source(want.size());
    for (std::size_t k = 0; k < want.size(); ++k)
        source[k] = std::find(table.buses.begin(), table.buses.end(), want[k]) - table.buses.begin();

    std::vector<StreamRecord> out;
    out.reserve(table.records.size());
    for (const StreamRecord& r : table.records) {
        StreamRecord a;
        a.sample_index = r.sample_index;
        a.truth = r.truth;
        a.angles.resize(static_cast<Eigen::Index>(want.size()));
        for (std::size_t k = 0; k < want.size(); ++k) a.angles[static_cast<Eigen::Index>(k)] = r.angles[source[k]];
        if (r.vmag) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(want.size()));
            for (std::size_t k = 0; k < want.size(); ++k) v[static_cast<Eigen::Index>(k)] = (*r.vmag)[source[k]];
            a.vmag = std::move(v);
        }
        out.push_back(std::move(a));
    }
    return out;
}

AngleState to_angle_state(const StreamRecord& record, const NetworkCase& net, const PmuPlacement& placement) {
    if (record.angles.size() != static_cast<Eigen::Index>(placement.size()))
        throw DimensionMismatch("record has " + std::to_string(record.angles.size()) + " angles, placement monitors " +
                                std::to_string(placement.size()) + " buses");
    const auto n = static_cast<Eigen::Index>(net.bus_count());
    AngleState s;
    s.sample_index = record.sample_index;
    s.theta = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    s.vmag = Eigen::VectorXd::Ones(n);
    const auto ref = static_cast<Eigen::Index>(net.reference_index());
    s.theta[ref] = 0.0;
    const auto& indices = placement.bus_indices();
    for (std::size_t k = 0; k < indices.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(indices[k]);
        s.theta[i] = record.angles[static_cast<Eigen::Index>(k)];
        s.vmag[i] = record.vmag ? (*record.vmag)[static_cast<Eigen::Index>(k)] : 1.0;
    }
    return s;
}

}  // namespace outage
