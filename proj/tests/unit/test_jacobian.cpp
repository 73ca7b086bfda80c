#include <gtest/gtest.h>

#include <random>

#include "outage/case_io.hpp"
#include "outage/detector.hpp"
#include "outage/error.hpp"
#include "outage/jacobian.hpp"
#include "support/oracles.hpp"

using namespace outage;

namespace {

NetworkCase load(const char* name) { return parse_case(oracle::data_dir() / name); }

AngleState random_state(const NetworkCase& net, std::mt19937_64& rng, double spread = 0.3) {
    std::uniform_real_distribution<double> angle(-spread, spread);
    std::uniform_real_distribution<double> mag(0.95, 1.06);
    AngleState s = AngleState::flat(net);
    for (Eigen::Index i = 0; i < s.theta.size(); ++i) {
        s.theta[i] = angle(rng);
        s.vmag[i] = mag(rng);
    }
    s.theta[static_cast<Eigen::Index>(net.reference_index())] = 0.0;
    s.vmag[static_cast<Eigen::Index>(net.reference_index())] = 1.0;
    return s;
}

}  // namespace

TEST(Jacobian, TwoBusValues) {
    const NetworkCase net = load("two_bus.json");
    const AdmittanceMatrix y = base_admittance(net);
    AngleState s = AngleState::flat(net);
    s.theta[1] = -0.1;
    EXPECT_NEAR(active_power_injection(net, y, s)[0], 10.0 * std::sin(0.1), 1e-14);

    const JacobianSnapshot flat = evaluate_jacobian(net, y, AngleState::flat(net), PmuPlacement::full(net));
    ASSERT_EQ(flat.dimension(), 1u);
    EXPECT_DOUBLE_EQ(flat.matrix()(0, 0), 10.0);
    EXPECT_NEAR(flat.log_abs_det(), std::log(10.0), 1e-15);
    EXPECT_NEAR(reduced_jacobian(net, y, s, PmuPlacement::full(net))(0, 0), 10.0 * std::cos(0.1), 1e-14);
}

TEST(Jacobian, FullRowsSumToZero) {
    std::mt19937_64 rng(11);
    const NetworkCase net = load("case39.json");
    const AdmittanceMatrix y = base_admittance(net);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::MatrixXd j = full_jacobian(net, y, random_state(net, rng));
        for (Eigen::Index r = 0; r < j.rows(); ++r)
            EXPECT_LE(std::abs(j.row(r).sum()), 1e-9 * j.row(r).cwiseAbs().maxCoeff());
    }
}

TEST(Jacobian, CentralDifferenceOfInjections) {
    std::mt19937_64 rng(12);
    const NetworkCase net = load("triangle.json");
    const AdmittanceMatrix y = base_admittance(net);
    const double h = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        const AngleState s = random_state(net, rng);
        const Eigen::MatrixXd j = full_jacobian(net, y, s);
        for (Eigen::Index c = 0; c < j.cols(); ++c) {
            AngleState up = s, down = s;
            up.theta[c] += h;
            down.theta[c] -= h;
            const Eigen::VectorXd fd =
                (active_power_injection(net, y, up) - active_power_injection(net, y, down)) / (2 * h);
            EXPECT_LT((fd - j.col(c)).norm(), 1e-6 * j.norm());
        }
    }
}

TEST(Jacobian, FullPlacementDropsReferenceRowAndColumn) {
    std::mt19937_64 rng(13);
    const NetworkCase net = load("case39.json");
    const AdmittanceMatrix y = base_admittance(net);
    const AngleState s = random_state(net, rng);
    const Eigen::MatrixXd full = full_jacobian(net, y, s);
    const PmuPlacement p = PmuPlacement::full(net);
    const Eigen::MatrixXd reduced = reduced_jacobian(net, y, s, p);
    for (std::size_t a = 0; a < p.size(); ++a)
        for (std::size_t b = 0; b < p.size(); ++b)
            EXPECT_DOUBLE_EQ(reduced(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                             full(static_cast<Eigen::Index>(p.bus_indices()[a]),
                                  static_cast<Eigen::Index>(p.bus_indices()[b])));
}

TEST(Jacobian, LimitedPlacementIgnoresUnknownNeighbours) {
    std::mt19937_64 rng(14);
    const NetworkCase net = load("case39.json");
    const AdmittanceMatrix y = base_admittance(net);
    const PmuPlacement p(net, {2, 3, 4, 5, 14, 16, 17, 18, 25, 26, 39});
    for (int trial = 0; trial < 5; ++trial) {
        const AngleState s = random_state(net, rng);
        const Eigen::MatrixXd full = full_jacobian(net, y, s);
        const Eigen::MatrixXd got = reduced_jacobian(net, y, s, p);
        for (std::size_t a = 0; a < p.size(); ++a) {
            const auto m = static_cast<Eigen::Index>(p.bus_indices()[a]);
            // add back the contribution of every neighbour whose state is unknown
            double diagonal = full(m, m);
            for (Eigen::Index n = 0; n < full.cols(); ++n)
                if (n != m && !p.is_known(static_cast<std::size_t>(n))) diagonal += full(m, n);
            EXPECT_NEAR(got(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)), diagonal,
                        1e-12 * full.row(m).cwiseAbs().sum());
            for (std::size_t b = 0; b < p.size(); ++b)
                if (a != b)
                    EXPECT_EQ(got(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                              full(m, static_cast<Eigen::Index>(p.bus_indices()[b])));
        }
    }
}

TEST(Jacobian, FlatStartEqualsNegativeSusceptance) {
    const NetworkCase net = load("triangle.json");  // has conductances
    const AdmittanceMatrix y = base_admittance(net);
    const PmuPlacement p = PmuPlacement::full(net);
    const Eigen::MatrixXd ac = reduced_jacobian(net, y, AngleState::flat(net), p);
    const Eigen::MatrixXd dc = dc_matrix(net, y, p).matrix();
    EXPECT_LT((ac - dc).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_DOUBLE_EQ(dc(0, 0), 8.0 + 10.0);
}

TEST(LogDet, MatchesSingularValues) {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> normal;
    for (int k = 1; k <= 12; ++k) {
        Eigen::MatrixXd m(k, k);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        EXPECT_NEAR(log_abs_det(m), oracle::log_abs_det_svd(m), 1e-10 * (1 + std::abs(oracle::log_abs_det_svd(m))));
    }
}

TEST(LogDet, SingularThrows) {
    Eigen::MatrixXd m(2, 2);
    m << 1, 2, 2, 4;
    EXPECT_THROW(log_abs_det(m), SingularJacobian);
    EXPECT_THROW(JacobianSnapshot(Eigen::MatrixXd::Zero(3, 3)), SingularJacobian);
    EXPECT_THROW(log_abs_det(Eigen::MatrixXd::Ones(2, 3)), DimensionMismatch);
}

TEST(Snapshot, QuadraticFormAndSolve) {
    Eigen::MatrixXd m(2, 2);
    m << 3, 1, -1, 2;
    const JacobianSnapshot s(m, 4);
    const Eigen::Vector2d x(0.5, -2.0);
    EXPECT_NEAR(s.quadratic_form(x), x.dot(s.gram() * x), 1e-12);
    EXPECT_LT((m * s.solve(Eigen::VectorXd(x)) - x).norm(), 1e-14);
    EXPECT_LT((s.inverse() * m - Eigen::Matrix2d::Identity()).norm(), 1e-14);
    EXPECT_EQ(s.scenario_id(), 4);
}

TEST(Placement, Validation) {
    const NetworkCase net = load("case39.json");
    EXPECT_THROW(PmuPlacement(net, {99}), ConfigError);
    EXPECT_THROW(PmuPlacement(net, {2, 2}), ConfigError);
    EXPECT_THROW(PmuPlacement(net, {31}), ConfigError);  // reference only
    const PmuPlacement p(net, {31, 5, 2});
    EXPECT_EQ(p.pmu_count(), 3);
    EXPECT_EQ(p.size(), 2u);
    EXPECT_EQ(p.bus_ids(), (std::vector<BusId>{5, 2}));
    EXPECT_TRUE(p.is_known(net.reference_index()));
    EXPECT_FALSE(p.is_known(net.bus_index(3)));
    EXPECT_TRUE(PmuPlacement::full(net).is_full());
    EXPECT_EQ(PmuPlacement::full(net).pmu_count(), 39);
}

TEST(LowRank, SupportCoversEveryChangedEntry) {
    std::mt19937_64 rng(16);
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net);
    const AdmittanceMatrix y = base_admittance(net);
    for (const PmuPlacement& p : {PmuPlacement::full(net), PmuPlacement(net, {1, 2, 3, 4, 9, 25, 26, 39})}) {
        const AngleState s = random_state(net, rng);
        const Eigen::MatrixXd j0 = reduced_jacobian(net, y, s, p);
        for (const auto& sc : set.scenarios) {
            const auto support = scenario_support(net, sc, p);
            const Eigen::MatrixXd jl = reduced_jacobian(net, sc.admittance, s, p);
            const Eigen::MatrixXd diff = jl - j0;
            for (Eigen::Index r = 0; r < diff.rows(); ++r)
                for (Eigen::Index c = 0; c < diff.cols(); ++c) {
                    const bool inside = std::count(support.begin(), support.end(), r) &&
                                        std::count(support.begin(), support.end(), c);
                    if (!inside) EXPECT_EQ(diff(r, c), 0.0);
                }
            const Eigen::MatrixXd block = reduced_jacobian_block(net, sc.admittance, s, p, support);
            for (std::size_t a = 0; a < support.size(); ++a)
                for (std::size_t b = 0; b < support.size(); ++b)
                    EXPECT_EQ(block(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)),
                              jl(static_cast<Eigen::Index>(support[a]), static_cast<Eigen::Index>(support[b])));
        }
    }
    const NetworkCase tri = load("triangle.json");
    const ScenarioSet tri_set = enumerate_scenarios(tri);
    EXPECT_EQ(scenario_support(tri, tri_set.scenarios[0], PmuPlacement::full(tri)).size(), 1u);  // 1-2, 1 is reference
    EXPECT_EQ(scenario_support(tri, tri_set.scenarios[1], PmuPlacement::full(tri)).size(), 2u);
}

TEST(LowRank, IncrementsMatchDirectFactorization) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    const NetworkCase net = load("case39.json");
    const ScenarioSet set = enumerate_scenarios(net, 2);  // includes double-line scenarios
    const AdmittanceMatrix y = base_admittance(net);
    for (const PmuPlacement& p : {PmuPlacement::full(net), PmuPlacement(net, {1, 2, 3, 4, 5, 6, 7, 8, 9, 25, 26, 39})}) {
        std::vector<std::vector<std::size_t>> supports;
        for (const auto& sc : set.scenarios) supports.push_back(scenario_support(net, sc, p));
        for (int trial = 0; trial < 3; ++trial) {
            const AngleState s = random_state(net, rng);
            Eigen::VectorXd d(static_cast<Eigen::Index>(p.size()));
            for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = 0.01 * normal(rng);
            const Eigen::VectorXd fast = low_rank_increments(net, y, set.scenarios, supports, s, d, p, 0.005);
            const JacobianSnapshot j0 = evaluate_jacobian(net, y, s, p);
            const auto direct = evaluate_scenario_jacobians(net, set.scenarios, s, p);
            for (std::size_t i = 0; i < set.scenarios.size(); ++i) {
                if (!direct[i]) {
                    EXPECT_TRUE(std::isnan(fast[static_cast<Eigen::Index>(i)]));
                    continue;
                }
                const double z = log_likelihood_ratio(d, j0, *direct[i], 0.005);
                EXPECT_NEAR(fast[static_cast<Eigen::Index>(i)], z, 1e-8 * (1 + std::abs(z))) << "scenario " << i + 1;
            }
        }
    }
}
