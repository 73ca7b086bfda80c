#include "outage/network.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "outage/error.hpp"

namespace outage {

std::string to_string(BusKind kind) {
    switch (kind) {
        case BusKind::reference: return "reference";
        case BusKind::generator: return "generator";
        case BusKind::load: return "load";
    }
    return "load";
}

BusKind bus_kind_from_string(const std::string& text) {
    if (text == "reference" || text == "ref" || text == "slack") return BusKind::reference;
    if (text == "generator" || text == "gen" || text == "pv") return BusKind::generator;
    if (text == "load" || text == "pq") return BusKind::load;
    throw CaseError("unknown bus kind '" + text + "'");
}

namespace {

// Union-find over bus indices.
class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

std::vector<bool> removal_mask(std::size_t branch_count, std::span<const BranchId> removed) {
    std::vector<bool> mask(branch_count, false);
    for (BranchId id : removed) {
        if (id < 1 || static_cast<std::size_t>(id) > branch_count)
            throw CaseError("removed line " + std::to_string(id) + " does not exist");
        mask[static_cast<std::size_t>(id - 1)] = true;
    }
    return mask;
}

std::string join_ids(std::span<const int> ids) {
    std::ostringstream out;
    for (std::size_t i = 0; i < ids.size(); ++i) out << (i ? "," : "") << ids[i];
    return out.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// NetworkCase

NetworkCase::NetworkCase(std::vector<Bus> buses, std::vector<Branch> branches, BusId reference_bus)
    : buses_(std::move(buses)), branches_(std::move(branches)), reference_bus_(reference_bus) {
    if (buses_.empty()) throw CaseError("case has no buses");

    for (std::size_t i = 0; i < buses_.size(); ++i) {
        const Bus& bus = buses_[i];
        if (!index_.emplace(bus.id, i).second)
            throw CaseError("duplicate bus id " + std::to_string(bus.id));
        if (!(bus.voltage_magnitude > 0.0))
            throw CaseError("bus " + std::to_string(bus.id) + " has non-positive voltage magnitude");
    }

    const auto references = std::count_if(buses_.begin(), buses_.end(),
                                           [](const Bus& b) { return b.kind == BusKind::reference; });
    if (references == 0) throw CaseError("case has no reference bus");
    if (references > 1) throw CaseError("case has " + std::to_string(references) + " reference buses");

    auto ref = index_.find(reference_bus_);
    if (ref == index_.end())
        throw CaseError("reference bus " + std::to_string(reference_bus_) + " does not exist");
    reference_index_ = ref->second;
    if (buses_[reference_index_].kind != BusKind::reference)
        throw CaseError("bus " + std::to_string(reference_bus_) + " is named as reference but has kind " +
                        to_string(buses_[reference_index_].kind));
    if (buses_[reference_index_].voltage_magnitude != 1.0)
        throw CaseError("reference bus voltage magnitude must be 1.0 p.u.");

    for (std::size_t i = 0; i < branches_.size(); ++i) {
        const Branch& br = branches_[i];
        if (br.id != static_cast<BranchId>(i + 1))
            throw CaseError("branch ids must be dense 1..L in order; found " + std::to_string(br.id) +
                            " at position " + std::to_string(i + 1));
        if (!index_.contains(br.from_bus))
            throw CaseError("branch " + std::to_string(br.id) + " references missing bus " +
                            std::to_string(br.from_bus));
        if (!index_.contains(br.to_bus))
            throw CaseError("branch " + std::to_string(br.id) + " references missing bus " +
                            std::to_string(br.to_bus));
        if (br.from_bus == br.to_bus)
            throw CaseError("branch " + std::to_string(br.id) + " is a self loop");
        if (br.series_admittance == Complex{0.0, 0.0})
            throw CaseError("branch " + std::to_string(br.id) + " has zero series admittance");
    }

    if (!is_connected(*this, {}))
        throw CaseError("network graph is disconnected; isolated buses: " +
                        join_ids(isolated_buses(*this, {})));
}

std::size_t NetworkCase::bus_index(BusId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw CaseError("unknown bus id " + std::to_string(id));
    return it->second;
}

std::optional<std::size_t> NetworkCase::find_bus_index(BusId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const Branch& NetworkCase::branch(BranchId id) const {
    if (id < 1 || static_cast<std::size_t>(id) > branches_.size())
        throw CaseError("unknown branch id " + std::to_string(id));
    return branches_[static_cast<std::size_t>(id - 1)];
}

Eigen::VectorXd NetworkCase::voltage_magnitudes() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(buses_.size()));
    for (std::size_t i = 0; i < buses_.size(); ++i) v[static_cast<Eigen::Index>(i)] = buses_[i].voltage_magnitude;
    return v;
}

// ---------------------------------------------------------------------------
// IncidenceMatrix

IncidenceMatrix::IncidenceMatrix(std::size_t rows, std::vector<Column> columns)
    : rows_(rows), columns_(std::move(columns)) {
    for (const Column& c : columns_) {
        if (c.from_row >= rows_ || c.to_row >= rows_)
            throw DimensionMismatch("incidence column refers to a row outside the matrix");
    }
}

int IncidenceMatrix::entry(std::size_t row, std::size_t col) const {
    const Column& c = columns_.at(col);
    if (!c.active) return 0;
    if (row == c.from_row) return 1;
    if (row == c.to_row) return -1;
    return 0;
}

IncidenceMatrix IncidenceMatrix::with_zeroed_columns(std::span<const std::size_t> cols) const {
    IncidenceMatrix out = *this;
    for (std::size_t c : cols) out.columns_.at(c).active = false;
    return out;
}

Eigen::MatrixXi IncidenceMatrix::dense() const {
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(rows_),
                                              static_cast<Eigen::Index>(columns_.size()));
    for (std::size_t l = 0; l < columns_.size(); ++l) {
        const Column& c = columns_[l];
        if (!c.active) continue;
        a(static_cast<Eigen::Index>(c.from_row), static_cast<Eigen::Index>(l)) = 1;
        a(static_cast<Eigen::Index>(c.to_row), static_cast<Eigen::Index>(l)) = -1;
    }
    return a;
}

// ---------------------------------------------------------------------------
// AdmittanceMatrix

AdmittanceMatrix::AdmittanceMatrix(std::size_t size, std::vector<Triplet> triplets) : size_(size) {
    for (const Triplet& t : triplets) {
        if (t.row >= size || t.col >= size)
            throw DimensionMismatch("admittance triplet outside an " + std::to_string(size) + "-bus matrix");
    }
    std::stable_sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    row_start_.assign(size + 1, 0);
    entries_.reserve(triplets.size());
    std::size_t i = 0;
    for (std::size_t r = 0; r < size; ++r) {
        row_start_[r] = entries_.size();
        while (i < triplets.size() && triplets[i].row == r) {
            const std::size_t c = triplets[i].col;
            Complex sum{0.0, 0.0};
            for (; i < triplets.size() && triplets[i].row == r && triplets[i].col == c; ++i)
                sum += triplets[i].value;
            entries_.push_back({c, sum, std::abs(sum), std::arg(sum)});
        }
    }
    row_start_[size] = entries_.size();
}

const AdmittanceMatrix::Entry* AdmittanceMatrix::find(std::size_t row, std::size_t col) const {
    if (row >= size_ || col >= size_) throw DimensionMismatch("admittance index out of range");
    auto entries = this->row(row);
    auto it = std::lower_bound(entries.begin(), entries.end(), col,
                               [](const Entry& e, std::size_t c) { return e.col < c; });
    if (it == entries.end() || it->col != col) return nullptr;
    return &*it;
}

Complex AdmittanceMatrix::entry(std::size_t row, std::size_t col) const {
    const Entry* e = find(row, col);
    return e ? e->value : Complex{0.0, 0.0};
}

double AdmittanceMatrix::magnitude(std::size_t row, std::size_t col) const {
    const Entry* e = find(row, col);
    return e ? e->magnitude : 0.0;
}

double AdmittanceMatrix::angle(std::size_t row, std::size_t col) const {
    const Entry* e = find(row, col);
    return e ? e->angle : 0.0;
}

Eigen::MatrixXcd AdmittanceMatrix::dense() const {
    const auto n = static_cast<Eigen::Index>(size_);
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (std::size_t r = 0; r < size_; ++r)
        for (const Entry& e : row(r)) y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(e.col)) = e.value;
    return y;
}

Eigen::MatrixXd AdmittanceMatrix::susceptance() const { return dense().imag(); }

// ---------------------------------------------------------------------------
// Construction

IncidenceMatrix build_incidence(const NetworkCase& net) {
    std::vector<IncidenceMatrix::Column> columns;
    columns.reserve(net.branch_count());
    for (const Branch& br : net.branches())
        columns.push_back({net.bus_index(br.from_bus), net.bus_index(br.to_bus), true});
    return IncidenceMatrix(net.bus_count(), std::move(columns));
}

AdmittanceMatrix build_admittance(const IncidenceMatrix& incidence, std::span<const Branch> branches) {
    if (incidence.cols() != branches.size())
        throw DimensionMismatch("incidence has " + std::to_string(incidence.cols()) + " columns but " +
                                std::to_string(branches.size()) + " branches were given");

    std::vector<AdmittanceMatrix::Triplet> triplets;
    triplets.reserve(4 * branches.size());
    for (std::size_t l = 0; l < branches.size(); ++l) {
        const auto& col = incidence.columns()[l];
        if (!col.active) continue;
        const Complex y = branches[l].series_admittance;
        // Column l contributes a_l y_l a_l^T: +y on both diagonals, -y off-diagonal.
        const std::size_t rows[2] = {col.from_row, col.to_row};
        const double signs[2] = {1.0, -1.0};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) triplets.push_back({rows[i], rows[j], signs[i] * y * signs[j]});
    }
    return AdmittanceMatrix(incidence.rows(), std::move(triplets));
}

AdmittanceMatrix base_admittance(const NetworkCase& net) {
    return build_admittance(build_incidence(net), net.branches());
}

AdmittanceMatrix outage_admittance(const NetworkCase& net, std::span<const BranchId> removed) {
    std::vector<std::size_t> cols;
    cols.reserve(removed.size());
    for (BranchId id : removed) {
        net.branch(id);  // validates
        cols.push_back(static_cast<std::size_t>(id - 1));
    }
    return build_admittance(build_incidence(net).with_zeroed_columns(cols), net.branches());
}

std::vector<BusId> isolated_buses(const NetworkCase& net, std::span<const BranchId> removed) {
    const auto mask = removal_mask(net.branch_count(), removed);
    DisjointSets sets(net.bus_count());
    for (std::size_t l = 0; l < net.branch_count(); ++l) {
        if (mask[l]) continue;
        const Branch& br = net.branches()[l];
        sets.unite(net.bus_index(br.from_bus), net.bus_index(br.to_bus));
    }
    const std::size_t root = sets.find(net.reference_index());
    std::vector<BusId> isolated;
    for (std::size_t i = 0; i < net.bus_count(); ++i)
        if (sets.find(i) != root) isolated.push_back(net.buses()[i].id);
    std::sort(isolated.begin(), isolated.end());
    return isolated;
}

bool is_connected(const NetworkCase& net, std::span<const BranchId> removed) {
    return isolated_buses(net, removed).empty();
}

const OutageScenario* ScenarioSet::find(int scenario_id) const {
    auto it = std::find_if(scenarios.begin(), scenarios.end(),
                           [&](const OutageScenario& s) { return s.scenario_id == scenario_id; });
    return it == scenarios.end() ? nullptr : &*it;
}

const OutageScenario* ScenarioSet::find_by_lines(std::vector<BranchId> lines) const {
    std::sort(lines.begin(), lines.end());
    auto it = std::find_if(scenarios.begin(), scenarios.end(),
                           [&](const OutageScenario& s) { return s.removed_lines == lines; });
    return it == scenarios.end() ? nullptr : &*it;
}

ScenarioSet enumerate_scenarios(const NetworkCase& net, int max_simultaneous) {
    if (max_simultaneous < 1) throw ConfigError("max_simultaneous must be at least 1");

    const int lines = static_cast<int>(net.branch_count());
    const int depth = std::min(max_simultaneous, lines);

    // Depth-first generation of increasing tuples visits them in lexicographic order.
    std::vector<std::vector<BranchId>> combos;
    std::vector<BranchId> current;
    auto extend = [&](auto&& self, BranchId next) -> void {
        for (BranchId id = next; id <= lines; ++id) {
            current.push_back(id);
            combos.push_back(current);
            if (static_cast<int>(current.size()) < depth) self(self, id + 1);
            current.pop_back();
        }
    };
    extend(extend, 1);

    ScenarioSet set;
    const IncidenceMatrix incidence = build_incidence(net);
    int next_id = 1;
    for (auto& combo : combos) {
        auto isolated = isolated_buses(net, combo);
        if (!isolated.empty()) {
            std::string reason = "islanding: removing line(s) " + join_ids(combo) + " isolates bus(es) " +
                                 join_ids(isolated);
            set.excluded.push_back({std::move(combo), std::move(isolated), std::move(reason)});
            continue;
        }
        std::vector<std::size_t> cols;
        for (BranchId id : combo) cols.push_back(static_cast<std::size_t>(id - 1));
        AdmittanceMatrix y = build_admittance(incidence.with_zeroed_columns(cols), net.branches());
        set.scenarios.push_back({next_id++, std::move(combo), std::move(y)});
    }
    return set;
}

}  // namespace outage
