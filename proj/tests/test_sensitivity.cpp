#include "doctest.h"

#include "test_util.hpp"
#include "vvc/errors.hpp"
#include "vvc/powerflow.hpp"
#include "vvc/sensitivity.hpp"

using namespace vvc;

namespace {

// Shared-reactance oracle: walk both root paths and add up common lines.
Eigen::MatrixXd common_path_oracle(const Network& net) {
    const int n = net.node_count();
    auto path = [&](int node) {
        std::vector<int> p;
        for (int k = node; k != 0; k = net.tree().parent[k]) p.push_back(k);
        return p;
    };
    Eigen::MatrixXd X(n, n);
    for (int i = 1; i <= n; ++i) {
        const auto pi = path(i);
        for (int j = 1; j <= n; ++j) {
            const auto pj = path(j);
            double sum = 0.0;
            for (int a : pi)
                if (std::find(pj.begin(), pj.end(), a) != pj.end()) sum += net.feeder_impedance(a).imag();
            X(i - 1, j - 1) = sum;
        }
    }
    return X;
}

}  // namespace

TEST_CASE("chain sensitivity and spectrum") {
    const Network net({{0, 1, 0.01, 0.1}, {1, 2, 0.01, 0.05}});
    const auto model = build_x_lindistflow(net);
    CHECK(model.X(0, 0) == doctest::Approx(0.1));
    CHECK(model.X(0, 1) == doctest::Approx(0.1));
    CHECK(model.X(1, 0) == doctest::Approx(0.1));
    CHECK(model.X(1, 1) == doctest::Approx(0.15));
    // roots of l^2 - 0.25 l + 0.005
    const double disc = std::sqrt(0.25 * 0.25 - 4 * 0.005);
    const auto lam = model.eigenvalues_real();
    CHECK(lam(0) == doctest::Approx((0.25 - disc) / 2).epsilon(1e-12));
    CHECK(lam(1) == doctest::Approx((0.25 + disc) / 2).epsilon(1e-12));
    CHECK(lam(1) == doctest::Approx(0.22808).epsilon(1e-4));
    CHECK(lam(0) == doctest::Approx(0.02192).epsilon(1e-3));
    const Eigen::MatrixXcd rebuilt = model.eig.P * model.eig.lambda.asDiagonal() * model.eig.P_inv;
    CHECK((rebuilt.real() - model.X).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(model.symmetric);
}

TEST_CASE("single line and isotropic matrices") {
    const auto one = build_x_lindistflow(Network({{0, 1, 0.0, 0.1}}));
    CHECK(one.X(0, 0) == doctest::Approx(0.1));
    CHECK(one.lambda_min() == doctest::Approx(0.1));
    CHECK(std::abs(std::abs(one.eig.P(0, 0)) - 1.0) < 1e-15);

    const auto iso = make_sensitivity_model(0.3 * Eigen::MatrixXd::Identity(4, 4));
    CHECK((iso.eig.lambda.real().array() - 0.3).abs().maxCoeff() < 1e-15);
    const Eigen::MatrixXcd PtP = iso.eig.P.adjoint() * iso.eig.P;
    CHECK((PtP - Eigen::MatrixXcd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("common-path construction matches the path oracle") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 25; ++trial) {
        const auto net = testutil::random_feeder(rng, 2 + trial);
        const auto model = build_x_lindistflow(net);
        CHECK((model.X - common_path_oracle(net)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(model.lambda_min() > 0.0);
        CHECK((model.X - model.X.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        const Eigen::MatrixXd P = model.eig.P.real();
        CHECK((P.transpose() * P - Eigen::MatrixXd::Identity(P.rows(), P.cols())).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("finite-difference voltage response matches X within 15%") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        const int n = 6;
        const auto net = testutil::random_feeder(rng, n);
        const DerFleet fleet(
            [&] {
                std::vector<Der> d;
                for (int i = 1; i <= n; ++i) d.push_back({i, i, 1.0, -1.0, 1.0});
                return d;
            }(),
            n);
        const auto model = build_x_lindistflow(net);
        auto z = InjectionState::zeros(n, fleet);
        const auto base = solve_pf(net, z).v;
        const double eps = 1e-3;
        for (int i = 0; i < n; ++i) {
            auto pert = z;
            pert.q_ctrl(i) = eps;
            const Eigen::VectorXd col = (solve_pf(net, pert).v - base) / eps;
            CHECK((col - model.X.col(i)).norm() <= 0.15 * model.X.col(i).norm());
        }
    }
}

TEST_CASE("reduction to DER nodes") {
    const Network net({{0, 1, 0.01, 0.1}, {1, 2, 0.01, 0.05}});
    const auto model = build_x_lindistflow(net);
    const auto red = reduce_to_der_nodes(model, DerFleet({{1, 2, 0.3, -0.3, 0.3}}, 2));
    REQUIRE(red.size() == 1);
    CHECK(red.X(0, 0) == doctest::Approx(0.15));
    CHECK(red.reduced);
    CHECK(red.nodes[0] == 1);

    const auto same = reduce_to_der_nodes(model, DerFleet({{1, 1, 0.3, -0.3, 0.3}, {2, 2, 0.3, -0.3, 0.3}}, 2));
    CHECK((same.X - model.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK_FALSE(same.reduced);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto m = build_x_lindistflow(testutil::random_feeder(rng, 10));
        const auto r = reduce_to_der_nodes(m, DerFleet({{1, 2, 0.3, -0.3, 0.3}, {2, 5, 0.3, -0.3, 0.3}, {3, 9, 0.3, -0.3, 0.3}}, 10));
        CHECK(r.lambda_min() > 0.0);
        CHECK(r.lambda_min() >= m.lambda_min() - 1e-14);
    }
}

TEST_CASE("matrix files") {
    const auto dir = testutil::scratch_dir("xfile");
    const auto ident = load_x_matrix(testutil::write_file(dir / "i.csv", "1,0,0\n0,1,0\n0,0,1\n"));
    CHECK(ident.norm2 == doctest::Approx(1.0));
    CHECK(ident.lambda_min() == doctest::Approx(1.0));
    CHECK(ident.lambda_max() == doctest::Approx(1.0));

    CHECK_THROWS_AS(load_x_matrix(testutil::write_file(dir / "z.csv", "1,0\n0,0\n")), NotPositiveDefinite);
    CHECK_THROWS_AS(load_x_matrix(testutil::write_file(dir / "r.csv", "1,0\n0\n")), SchemaError);

    // Three-phase toy: SPD plus a small skew part keeps the symmetric part PD.
    std::mt19937_64 rng(21);
    const Eigen::MatrixXd S = testutil::random_spd(rng, 9, 0.05, 0.3);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(9, 9);
    std::normal_distribution<double> nd(0.0, 0.01);
    for (int i = 0; i < 9; ++i)
        for (int j = i + 1; j < 9; ++j) {
            K(i, j) = nd(rng);
            K(j, i) = -K(i, j);
        }
    const Eigen::MatrixXd X = S + K;
    write_x_matrix(dir / "mp.csv", X);
    const auto mp = load_x_matrix(dir / "mp.csv");
    CHECK_FALSE(mp.symmetric);
    CHECK((mp.X - X).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::MatrixXcd rebuilt = mp.eig.P * mp.eig.lambda.asDiagonal() * mp.eig.P_inv;
    CHECK((rebuilt - X.cast<cplx>()).cwiseAbs().maxCoeff() <= 1e-10);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
    CHECK(mp.norm2 == doctest::Approx(svd.singularValues()(0)).epsilon(1e-10));
}
