#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "outage/network.hpp"

namespace outage {

/// Reads a network case. `.m` files go through the MATPOWER importer,
/// everything else is parsed as the JSON case schema:
///
///   {"version": 1, "reference_bus": 1,
///    "buses":    [{"id": 1, "kind": "reference", "v_mag": 1.0}, ...],
///    "branches": [{"id": 1, "from": 1, "to": 2, "g": 0.0, "b": -10.0}, ...]}
///
/// Importer warnings (dropped shunts, taps, line charging) are appended to
/// `warnings` when it is non-null.
NetworkCase parse_case(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

NetworkCase parse_case_json(std::string_view text);
std::string write_case_json(const NetworkCase& net);

struct MatpowerImport {
    NetworkCase network;
    /// Solved voltage angles (column VA), radians, bus-index order,
    /// shifted so the reference bus sits at 0.
    Eigen::VectorXd solved_angles;
    std::vector<std::string> warnings;
};

/// Imports the `mpc.bus` / `mpc.branch` tables of a MATPOWER case file.
/// Series admittance is 1/(r + jx); shunts, line charging and off-nominal
/// taps are dropped with a warning, out-of-service branches are skipped and
/// the remaining branches are renumbered 1..L in file order.
MatpowerImport import_matpower(std::string_view text);
MatpowerImport import_matpower_file(const std::filesystem::path& path);

}  // namespace outage
