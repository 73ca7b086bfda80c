#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "outage/network.hpp"

namespace outage {

/// Bus voltage angles and magnitudes at one sample, in bus-index order.
///
/// The reference-bus angle is 0. Entries of buses without a PMU are not
/// read by anything that evaluates a limited placement and may hold NaN.
struct AngleState {
    long sample_index = 0;
    Eigen::VectorXd theta;  // radians
    Eigen::VectorXd vmag;   // p.u.

    /// theta = 0, vmag = 1 everywhere.
    static AngleState flat(const NetworkCase& net, long sample_index = 0);
};

/// Ordered set of monitored buses. The reference bus is never part of the
/// monitored vector; listing it only counts towards the PMU total.
class PmuPlacement {
public:
    PmuPlacement(const NetworkCase& net, std::vector<BusId> pmu_buses);

    /// A PMU on every bus; monitors the N-1 non-reference buses.
    static PmuPlacement full(const NetworkCase& net);

    /// Monitored bus ids, in monitoring order (K entries).
    const std::vector<BusId>& bus_ids() const { return ids_; }
    /// Bus indices matching bus_ids().
    const std::vector<std::size_t>& bus_indices() const { return indices_; }
    std::size_t size() const { return ids_.size(); }

    /// Number of installed PMUs, including one on the reference bus if listed.
    int pmu_count() const { return pmu_count_; }
    std::size_t bus_count() const { return position_.size(); }

    /// Position of a bus index in the monitored vector.
    std::optional<std::size_t> position(std::size_t bus_index) const;

    /// True when a bus's V and theta are available: monitored, or the reference.
    bool is_known(std::size_t bus_index) const { return known_[bus_index]; }

    bool is_full() const { return ids_.size() + 1 == position_.size(); }

    /// Angles of the monitored buses, in monitoring order.
    Eigen::VectorXd select(const Eigen::VectorXd& per_bus) const;

private:
    std::vector<BusId> ids_;
    std::vector<std::size_t> indices_;
    std::vector<long> position_;
    std::vector<bool> known_;
    int pmu_count_ = 0;
};

/// ln|det(matrix)| from a partial-pivot LU. Throws SingularJacobian when any
/// pivot magnitude is below 1e-12 times the largest row norm.
double log_abs_det(const Eigen::MatrixXd& matrix);

/// An evaluated, factorized (reduced) Jacobian.
class JacobianSnapshot {
public:
    /// Factorizes `matrix`; throws SingularJacobian on the pivot floor.
    explicit JacobianSnapshot(Eigen::MatrixXd matrix, std::optional<int> scenario_id = std::nullopt);

    const Eigen::MatrixXd& matrix() const { return matrix_; }
    double log_abs_det() const { return log_abs_det_; }
    std::size_t dimension() const { return static_cast<std::size_t>(matrix_.rows()); }

    /// Empty for the base (pre-outage) Jacobian.
    std::optional<int> scenario_id() const { return scenario_id_; }

    /// J^T J.
    Eigen::MatrixXd gram() const { return matrix_.transpose() * matrix_; }

    /// x^T J^T J x evaluated as |J x|^2.
    double quadratic_form(const Eigen::VectorXd& x) const { return (matrix_ * x).squaredNorm(); }

    /// Solves J x = rhs with the stored factorization.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const { return lu_.solve(rhs); }
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return lu_.solve(rhs); }

    /// J^-1 from the stored factorization.
    Eigen::MatrixXd inverse() const { return lu_.inverse(); }

private:
    Eigen::MatrixXd matrix_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
    double log_abs_det_ = 0.0;
    std::optional<int> scenario_id_;
};

/// P_m = V_m sum_n V_n Y_mn cos(theta_m - theta_n - alpha_mn) for every bus.
Eigen::VectorXd active_power_injection(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state);

/// dP/dtheta over all N buses, reference included (rows sum to zero).
Eigen::MatrixXd full_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state);

/// dP/dtheta restricted to the monitored buses, without factorizing.
///
/// Off-diagonal (m, n) is V_m V_n Y_mn sin(theta_m - theta_n - alpha_mn);
/// the diagonal is minus the sum of those terms over neighbours whose V and
/// theta are known. Terms of unmonitored neighbours count as zero.
Eigen::MatrixXd reduced_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state,
                                 const PmuPlacement& placement);

JacobianSnapshot evaluate_jacobian(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state,
                                   const PmuPlacement& placement,
                                   std::optional<int> scenario_id = std::nullopt);

/// One entry per scenario, all evaluated at the same state. A scenario whose
/// Jacobian is singular at this state yields std::nullopt.
std::vector<std::optional<JacobianSnapshot>> evaluate_scenario_jacobians(
    const NetworkCase& net, std::span<const OutageScenario> scenarios, const AngleState& state,
    const PmuPlacement& placement);

/// Monitored positions of the removed lines' endpoints, sorted. A scenario
/// Jacobian differs from the base one only on these rows and columns, so
/// J_l = J_0 + E_S D E_S^T with D of size |S| x |S|.
std::vector<std::size_t> scenario_support(const NetworkCase& net, const OutageScenario& scenario,
                                          const PmuPlacement& placement);

/// The |S| x |S| block of reduced_jacobian at the given monitored positions,
/// computed without forming the whole matrix.
Eigen::MatrixXd reduced_jacobian_block(const NetworkCase& net, const AdmittanceMatrix& y, const AngleState& state,
                                       const PmuPlacement& placement, std::span<const std::size_t> positions);

/// -B restricted to the monitored buses (static DC-flow matrix).
JacobianSnapshot dc_matrix(const NetworkCase& net, const AdmittanceMatrix& y, const PmuPlacement& placement,
                           std::optional<int> scenario_id = std::nullopt);

}  // namespace outage
