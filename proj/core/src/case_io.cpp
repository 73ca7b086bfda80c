#include "outage/case_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <sstream>

#include "json.hpp"

#include "outage/error.hpp"

namespace outage {

namespace {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CaseError("cannot open case file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename T>
T require(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw CaseError(where + ": missing field '" + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw CaseError(where + ": field '" + key + "' has the wrong type");
    }
}

// Extracts the rows of `mpc.<name> = [ ... ];` as numeric vectors.
std::vector<std::vector<double>> matpower_table(std::string_view text, const std::string& name) {
    const std::string src(text);
    const std::regex start("mpc\\." + name + "\\s*=\\s*\\[");
    std::smatch m;
    if (!std::regex_search(src, m, start)) throw CaseError("MATPOWER file has no mpc." + name + " table");
    const auto begin = static_cast<std::size_t>(m.position(0) + m.length(0));
    const auto end = src.find(']', begin);
    if (end == std::string::npos) throw CaseError("unterminated mpc." + name + " table");

    std::vector<std::vector<double>> rows;
    std::istringstream body(src.substr(begin, end - begin));
    std::string line;
    while (std::getline(body, line)) {
        if (auto pct = line.find('%'); pct != std::string::npos) line.erase(pct);
        std::replace(line.begin(), line.end(), '\t', ' ');
        std::string statement;
        std::istringstream parts(line);
        while (std::getline(parts, statement, ';')) {
            std::istringstream fields(statement);
            std::vector<double> row;
            std::string token;
            while (fields >> token) {
                try {
                    std::size_t used = 0;
                    row.push_back(std::stod(token, &used));
                    if (used != token.size()) throw std::invalid_argument(token);
                } catch (const std::exception&) {
                    throw CaseError("mpc." + name + ": cannot parse number '" + token + "'");
                }
            }
            if (!row.empty()) rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace

NetworkCase parse_case_json(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CaseError(std::string("malformed case JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CaseError("case JSON must be an object");
    if (!doc.contains("version")) throw CaseError("case JSON: missing field 'version'");

    const auto reference = require<BusId>(doc, "reference_bus", "case");
    const auto& bus_array = doc.value("buses", json::array());
    const auto& branch_array = doc.value("branches", json::array());
    if (!bus_array.is_array() || !branch_array.is_array())
        throw CaseError("case JSON: 'buses' and 'branches' must be arrays");

    std::vector<Bus> buses;
    for (const auto& item : bus_array) {
        Bus bus;
        bus.id = require<BusId>(item, "id", "bus");
        const std::string where = "bus " + std::to_string(bus.id);
        bus.kind = bus_kind_from_string(require<std::string>(item, "kind", where));
        bus.voltage_magnitude = item.contains("v_mag") ? require<double>(item, "v_mag", where) : 1.0;
        buses.push_back(bus);
    }

    std::vector<Branch> branches;
    for (const auto& item : branch_array) {
        Branch br;
        br.id = require<BranchId>(item, "id", "branch");
        const std::string where = "branch " + std::to_string(br.id);
        br.from_bus = require<BusId>(item, "from", where);
        br.to_bus = require<BusId>(item, "to", where);
        br.series_admittance = {require<double>(item, "g", where), require<double>(item, "b", where)};
        branches.push_back(br);
    }
    std::sort(branches.begin(), branches.end(), [](const Branch& a, const Branch& b) { return a.id < b.id; });

    return NetworkCase(std::move(buses), std::move(branches), reference);
}

std::string write_case_json(const NetworkCase& net) {
    json doc;
    doc["version"] = 1;
    doc["reference_bus"] = net.reference_bus();
    json buses = json::array();
    for (const Bus& b : net.buses())
        buses.push_back({{"id", b.id}, {"kind", to_string(b.kind)}, {"v_mag", b.voltage_magnitude}});
    json branches = json::array();
    for (const Branch& br : net.branches())
        branches.push_back({{"id", br.id},
                            {"from", br.from_bus},
                            {"to", br.to_bus},
                            {"g", br.series_admittance.real()},
                            {"b", br.series_admittance.imag()}});
    doc["buses"] = std::move(buses);
    doc["branches"] = std::move(branches);
    return doc.dump(2) + "\n";
}

MatpowerImport import_matpower(std::string_view text) {
    const auto bus_rows = matpower_table(text, "bus");
    const auto branch_rows = matpower_table(text, "branch");
    std::vector<std::string> warnings;

    std::vector<Bus> buses;
    std::vector<double> angles_deg;
    std::optional<BusId> reference;
    bool dropped_shunt = false;
    for (const auto& row : bus_rows) {
        if (row.size() < 9) throw CaseError("mpc.bus rows need at least 9 columns");
        Bus bus;
        bus.id = static_cast<BusId>(row[0]);
        switch (static_cast<int>(row[1])) {
            case 1: bus.kind = BusKind::load; break;
            case 2: bus.kind = BusKind::generator; break;
            case 3:
                bus.kind = BusKind::reference;
                if (reference) throw CaseError("MATPOWER case has more than one reference bus");
                reference = bus.id;
                break;
            default: throw CaseError("bus " + std::to_string(bus.id) + " has unsupported type " + std::to_string(row[1]));
        }
        if (row[4] != 0.0 || row[5] != 0.0) dropped_shunt = true;
        bus.voltage_magnitude = row[7];
        if (bus.kind == BusKind::reference && bus.voltage_magnitude != 1.0) {
            warnings.push_back("reference bus " + std::to_string(bus.id) + " magnitude " +
                               std::to_string(bus.voltage_magnitude) + " p.u. reset to 1.0");
            bus.voltage_magnitude = 1.0;
        }
        angles_deg.push_back(row[8]);
        buses.push_back(bus);
    }
    if (!reference) throw CaseError("MATPOWER case has no reference bus (type 3)");
    if (dropped_shunt) warnings.push_back("bus shunt elements (GS/BS) dropped");

    std::vector<Branch> branches;
    int skipped = 0;
    bool dropped_charging = false;
    bool dropped_tap = false;
    for (const auto& row : branch_rows) {
        if (row.size() < 4) throw CaseError("mpc.branch rows need at least 4 columns");
        if (row.size() > 10 && row[10] == 0.0) {
            ++skipped;
            continue;
        }
        const Complex z{row[2], row[3]};
        if (z == Complex{0.0, 0.0}) throw CaseError("branch with zero impedance in MATPOWER case");
        if (row.size() > 4 && row[4] != 0.0) dropped_charging = true;
        if (row.size() > 8 && row[8] != 0.0 && row[8] != 1.0) dropped_tap = true;
        if (row.size() > 9 && row[9] != 0.0) dropped_tap = true;
        Branch br;
        br.id = static_cast<BranchId>(branches.size() + 1);
        br.from_bus = static_cast<BusId>(row[0]);
        br.to_bus = static_cast<BusId>(row[1]);
        br.series_admittance = 1.0 / z;
        branches.push_back(br);
    }
    if (skipped) warnings.push_back(std::to_string(skipped) + " out-of-service branch(es) skipped");
    if (dropped_charging) warnings.push_back("line charging susceptance dropped");
    if (dropped_tap) warnings.push_back("transformer tap ratios and phase shifts dropped");

    NetworkCase net(std::move(buses), std::move(branches), *reference);
    Eigen::VectorXd angles(static_cast<Eigen::Index>(angles_deg.size()));
    const double ref_deg = angles_deg[net.reference_index()];
    for (std::size_t i = 0; i < angles_deg.size(); ++i)
        angles[static_cast<Eigen::Index>(i)] = (angles_deg[i] - ref_deg) * std::numbers::pi / 180.0;
    return {std::move(net), std::move(angles), std::move(warnings)};
}

MatpowerImport import_matpower_file(const std::filesystem::path& path) { return import_matpower(read_file(path)); }

NetworkCase parse_case(const std::filesystem::path& path, std::vector<std::string>* warnings) {
    const std::string text = read_file(path);
    if (path.extension() == ".m") {
        auto imported = import_matpower(text);
        if (warnings) warnings->insert(warnings->end(), imported.warnings.begin(), imported.warnings.end());
        return std::move(imported.network);
    }
    return parse_case_json(text);
}

}  // namespace outage
