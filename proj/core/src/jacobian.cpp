#include "outage/jacobian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "outage/error.hpp"

namespace outage {

namespace {

constexpr double kPivotFloor = 1e-12;

using Index = Eigen::Index;

Index idx(std::size_t i) { return static_cast<Index>(i); }

void check_state(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state) {
    const auto n = idx(net.bus_count());
    if (state.theta.size() != n || state.vmag.size() != n)
        throw DimensionMismatch("angle state has " + std::to_string(state.theta.size()) + " angles and " +
                                std::to_string(state.vmag.size()) + " magnitudes for a " + std::to_string(n) +
                                "-bus case");
    if (y.size() != net.bus_count()) throw DimensionMismatch("admittance matrix does not match the case");
}

double checked_log_abs_det(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu, const Eigen::MatrixXd& matrix) {
    if (matrix.rows() == 0) return 0.0;
    const double scale = matrix.rowwise().norm().maxCoeff();
    const auto& packed = lu.matrixLU();
    double sum = 0.0;
    for (Index i = 0; i < packed.rows(); ++i) {
        const double pivot = std::abs(packed(i, i));
        if (!(pivot >= kPivotFloor * scale) || scale == 0.0)
            throw SingularJacobian("pivot " + std::to_string(i) + " magnitude " + std::to_string(pivot) +
                                   " is below the singularity floor");
        sum += std::log(pivot);
    }
    return sum;
}

}  // namespace

AngleState AngleState::flat(const NetworkCase& net, long sample_index) {
    const auto n = idx(net.bus_count());
    return {sample_index, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Ones(n)};
}

// ---------------------------------------------------------------------------
// PmuPlacement

PmuPlacement::PmuPlacement(const NetworkCase& net, std::vector<BusId> pmu_buses)
    : position_(net.bus_count(), -1), known_(net.bus_count(), false) {
    known_[net.reference_index()] = true;
    std::vector<bool> seen(net.bus_count(), false);
    for (BusId id : pmu_buses) {
        const auto index = net.find_bus_index(id);
        if (!index) throw ConfigError("PMU placed on unknown bus " + std::to_string(id));
        if (seen[*index]) throw ConfigError("PMU bus " + std::to_string(id) + " listed twice");
        seen[*index] = true;
        ++pmu_count_;
        if (*index == net.reference_index()) continue;
        position_[*index] = static_cast<long>(ids_.size());
        known_[*index] = true;
        ids_.push_back(id);
        indices_.push_back(*index);
    }
    if (ids_.empty()) throw ConfigError("placement must monitor at least one non-reference bus");
}

PmuPlacement PmuPlacement::full(const NetworkCase& net) {
    std::vector<BusId> ids;
    ids.reserve(net.bus_count());
    for (const Bus& b : net.buses()) ids.push_back(b.id);
    return PmuPlacement(net, std::move(ids));
}

std::optional<std::size_t> PmuPlacement::position(std::size_t bus_index) const {
    const long p = position_.at(bus_index);
    if (p < 0) return std::nullopt;
    return static_cast<std::size_t>(p);
}

Eigen::VectorXd PmuPlacement::select(const Eigen::VectorXd& per_bus) const {
    if (per_bus.size() != idx(position_.size()))
        throw DimensionMismatch("per-bus vector length does not match the case");
    Eigen::VectorXd out(idx(indices_.size()));
    for (std::size_t k = 0; k < indices_.size(); ++k) out[idx(k)] = per_bus[idx(indices_[k])];
    return out;
}

// ---------------------------------------------------------------------------
// Determinants and snapshots

double log_abs_det(const Eigen::MatrixXd& matrix) {
    if (matrix.rows() != matrix.cols()) throw DimensionMismatch("log_abs_det needs a square matrix");
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(matrix);
    return checked_log_abs_det(lu, matrix);
}

JacobianSnapshot::JacobianSnapshot(Eigen::MatrixXd matrix, std::optional<int> scenario_id)
    : matrix_(std::move(matrix)), scenario_id_(scenario_id) {
    if (matrix_.rows() != matrix_.cols()) throw DimensionMismatch("Jacobian snapshot must be square");
    lu_.compute(matrix_);
    try {
        log_abs_det_ = checked_log_abs_det(lu_, matrix_);
    } catch (const SingularJacobian& e) {
        const std::string who = scenario_id_ ? "scenario " + std::to_string(*scenario_id_) : std::string("base");
        throw SingularJacobian(who + " Jacobian is singular: " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Power flow quantities

Eigen::VectorXd active_power_injection(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state) {
    check_state(net, y, state);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(idx(net.bus_count()));
    for (std::size_t m = 0; m < net.bus_count(); ++m) {
        double sum = 0.0;
        for (const auto& e : y.row(m))
            sum += state.vmag[idx(e.col)] * e.magnitude *
                   std::cos(state.theta[idx(m)] - state.theta[idx(e.col)] - e.angle);
        p[idx(m)] = state.vmag[idx(m)] * sum;
    }
    return p;
}

Eigen::MatrixXd full_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state) {
    check_state(net, y, state);
    const auto n = idx(net.bus_count());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t m = 0; m < net.bus_count(); ++m) {
        double diagonal = 0.0;
        for (const auto& e : y.row(m)) {
            if (e.col == m) continue;
            const double term = state.vmag[idx(m)] * state.vmag[idx(e.col)] * e.magnitude *
                                std::sin(state.theta[idx(m)] - state.theta[idx(e.col)] - e.angle);
            j(idx(m), idx(e.col)) = term;
            diagonal -= term;
        }
        j(idx(m), idx(m)) = diagonal;
    }
    return j;
}

Eigen::MatrixXd reduced_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state,
                                 const PmuPlacement& placement) {
    check_state(net, y, state);
    if (placement.bus_count() != net.bus_count()) throw DimensionMismatch("placement belongs to another case");

    const auto k = idx(placement.size());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(k, k);
    const auto& rows = placement.bus_indices();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t m = rows[r];
        double diagonal = 0.0;
        for (const auto& e : y.row(m)) {
            if (e.col == m || !placement.is_known(e.col)) continue;
            const double term = state.vmag[idx(m)] * state.vmag[idx(e.col)] * e.magnitude *
                                std::sin(state.theta[idx(m)] - state.theta[idx(e.col)] - e.angle);
            diagonal -= term;
            if (auto c = placement.position(e.col)) j(idx(r), idx(*c)) = term;
        }
        j(idx(r), idx(r)) = diagonal;
    }
    return j;
}

JacobianSnapshot evaluate_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state,
                                   const PmuPlacement& placement, std::optional<int> scenario_id) {
    return JacobianSnapshot(reduced_jacobian(net, y, state, placement), scenario_id);
}

std::vector<std::optional<JacobianSnapshot>> evaluate_scenario_jacobians(
    const NetworkCase& net, std::span<const OutageScenario> scenarios, const AngleState& state,
    const PmuPlacement& placement) {
    std::vector<std::optional<JacobianSnapshot>> out;
    out.reserve(scenarios.size());
    for (const OutageScenario& s : scenarios) {
        try {
            out.emplace_back(evaluate_jacobian(net, s.admittance, state, placement, s.scenario_id));
        } catch (const SingularJacobian&) {
            out.emplace_back(std::nullopt);
        }
    }
    return out;
}

std::vector<std::size_t> scenario_support(const NetworkCase& net, const OutageScenario& scenario,
                                          const PmuPlacement& placement) {
    std::vector<std::size_t> out;
    for (BranchId id : scenario.removed_lines) {
        const Branch& b = net.branch(id);
        for (BusId bus : {b.from_bus, b.to_bus})
            if (auto p = placement.position(net.bus_index(bus))) out.push_back(*p);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

Eigen::MatrixXd reduced_jacobian_block(const NetworkCase& /*net*/, const AdmittanceMatrix& y, const AngleState& state,
                                       const PmuPlacement& placement, std::span<const std::size_t> positions) {
    const auto s = idx(positions.size());
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(s, s);
    const auto& rows = placement.bus_indices();
    for (Index a = 0; a < s; ++a) {
        const std::size_t m = rows.at(positions[static_cast<std::size_t>(a)]);
        double diagonal = 0.0;
        for (const auto& e : y.row(m)) {
            if (e.col == m || !placement.is_known(e.col)) continue;
            const double term = state.vmag[idx(m)] * state.vmag[idx(e.col)] * e.magnitude *
                                std::sin(state.theta[idx(m)] - state.theta[idx(e.col)] - e.angle);
            diagonal -= term;
            for (Index b = 0; b < s; ++b)
                if (rows[positions[static_cast<std::size_t>(b)]] == e.col) block(a, b) = term;
        }
        block(a, a) = diagonal;
    }
    return block;
}

JacobianSnapshot dc_matrix(const NetworkCase& net, const AdmittanceMatrix& y, const PmuPlacement& placement,
                           std::optional<int> scenario_id) {
    if (y.size() != net.bus_count()) throw DimensionMismatch("admittance matrix does not match the case");
    const auto k = idx(placement.size());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(k, k);
    const auto& rows = placement.bus_indices();
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (const auto& e : y.row(rows[r]))
            if (auto c = placement.position(e.col)) j(idx(r), idx(*c)) = -e.value.imag();
    return JacobianSnapshot(std::move(j), scenario_id);
}

}  // namespace outage
