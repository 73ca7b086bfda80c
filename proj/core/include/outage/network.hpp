#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace outage {

using BusId = int;
using BranchId = int;
using Complex = std::complex<double>;

enum class BusKind { reference, generator, load };

std::string to_string(BusKind kind);
BusKind bus_kind_from_string(const std::string& text);

struct Bus {
    BusId id = 0;
    double voltage_magnitude = 1.0;  // p.u.
    BusKind kind = BusKind::load;
};

struct Branch {
    BranchId id = 0;
    BusId from_bus = 0;
    BusId to_bus = 0;
    Complex series_admittance;  // g + jb, p.u.
};

/// Buses, branches and the reference bus of a transmission network.
///
/// The constructor validates the whole case: unique bus ids, exactly one
/// reference bus (magnitude 1.0 p.u.), positive magnitudes, branch endpoints
/// that exist and differ, non-zero series admittances, dense branch ids 1..L
/// and a connected graph. Instances are immutable afterwards.
class NetworkCase {
public:
    NetworkCase(std::vector<Bus> buses, std::vector<Branch> branches, BusId reference_bus);

    const std::vector<Bus>& buses() const { return buses_; }
    const std::vector<Branch>& branches() const { return branches_; }
    BusId reference_bus() const { return reference_bus_; }
    std::size_t reference_index() const { return reference_index_; }

    std::size_t bus_count() const { return buses_.size(); }
    std::size_t branch_count() const { return branches_.size(); }

    /// Row index of a bus in every N-dimensional vector and matrix.
    std::size_t bus_index(BusId id) const;
    std::optional<std::size_t> find_bus_index(BusId id) const;

    const Branch& branch(BranchId id) const;

    /// Voltage magnitudes in bus-index order.
    Eigen::VectorXd voltage_magnitudes() const;

private:
    std::vector<Bus> buses_;
    std::vector<Branch> branches_;
    BusId reference_bus_;
    std::size_t reference_index_ = 0;
    std::unordered_map<BusId, std::size_t> index_;
};

/// Bus-to-branch incidence matrix, N x L over {-1, 0, +1}.
///
/// Stored column-wise: a line column has +1 at its from-bus row and -1 at its
/// to-bus row; a removed line has an all-zero column.
class IncidenceMatrix {
public:
    struct Column {
        std::size_t from_row = 0;
        std::size_t to_row = 0;
        bool active = true;
    };

    IncidenceMatrix(std::size_t rows, std::vector<Column> columns);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return columns_.size(); }
    const std::vector<Column>& columns() const { return columns_; }

    int entry(std::size_t row, std::size_t col) const;

    /// Copy with the given columns zeroed (0-based column indices).
    IncidenceMatrix with_zeroed_columns(std::span<const std::size_t> cols) const;

    Eigen::MatrixXi dense() const;

private:
    std::size_t rows_;
    std::vector<Column> columns_;
};

/// Symmetric complex bus admittance matrix with a polar cache.
///
/// Storage is compressed by row. Each stored entry carries G + jB together
/// with its magnitude Y and angle alpha so that Y e^{j alpha} = G + jB.
class AdmittanceMatrix {
public:
    struct Entry {
        std::size_t col = 0;
        Complex value;
        double magnitude = 0.0;
        double angle = 0.0;  // radians
    };

    struct Triplet {
        std::size_t row;
        std::size_t col;
        Complex value;
    };

    AdmittanceMatrix() = default;

    /// Duplicate (row, col) triplets are summed in their input order.
    AdmittanceMatrix(std::size_t size, std::vector<Triplet> triplets);

    std::size_t size() const { return size_; }
    std::size_t nonzeros() const { return entries_.size(); }

    Complex entry(std::size_t row, std::size_t col) const;
    double magnitude(std::size_t row, std::size_t col) const;
    double angle(std::size_t row, std::size_t col) const;

    /// Stored entries of one row, ascending by column.
    std::span<const Entry> row(std::size_t r) const {
        return {entries_.data() + row_start_[r], entries_.data() + row_start_[r + 1]};
    }

    Eigen::MatrixXcd dense() const;
    Eigen::MatrixXd susceptance() const;  // imaginary part, dense

private:
    const Entry* find(std::size_t row, std::size_t col) const;

    std::size_t size_ = 0;
    std::vector<std::size_t> row_start_{0};
    std::vector<Entry> entries_;
};

struct OutageScenario {
    int scenario_id = 0;
    std::vector<BranchId> removed_lines;  // sorted
    AdmittanceMatrix admittance;
};

struct ScenarioExclusion {
    std::vector<BranchId> removed_lines;
    std::vector<BusId> isolated_buses;  // buses cut off from the reference bus
    std::string reason;
};

struct ScenarioSet {
    std::vector<OutageScenario> scenarios;
    std::vector<ScenarioExclusion> excluded;

    const OutageScenario* find(int scenario_id) const;
    /// Scenario removing exactly this set of lines, if admissible.
    const OutageScenario* find_by_lines(std::vector<BranchId> lines) const;
};

IncidenceMatrix build_incidence(const NetworkCase& net);

/// Y = A [y] A^T. Columns of the incidence matrix align with `branches`.
AdmittanceMatrix build_admittance(const IncidenceMatrix& incidence, std::span<const Branch> branches);

/// Admittance matrix of the intact network.
AdmittanceMatrix base_admittance(const NetworkCase& net);

/// Admittance matrix with the given lines zeroed out of the incidence matrix.
AdmittanceMatrix outage_admittance(const NetworkCase& net, std::span<const BranchId> removed);

bool is_connected(const NetworkCase& net, std::span<const BranchId> removed);

/// Buses not reachable from the reference bus once `removed` lines are out.
std::vector<BusId> isolated_buses(const NetworkCase& net, std::span<const BranchId> removed);

/// Every combination of 1..max_simultaneous lines whose removal keeps the
/// graph connected. Scenario ids are dense from 1 in ascending lexicographic
/// order of the sorted removed-line tuples; islanding combinations are
/// reported in `excluded`.
ScenarioSet enumerate_scenarios(const NetworkCase& net, int max_simultaneous = 1);

}  // namespace outage
