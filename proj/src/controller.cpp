#include "vvc/controller.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "vvc/errors.hpp"

namespace vvc {

Eigen::Vector2d Gains::x() const {
    if (!(eta > 0.0)) throw DomainError("x is undefined for eta = 0");
    return {alpha / eta, -alpha};
}

bool Gains::valid() const noexcept { return eta >= 0.0 && eta <= 1.0 && alpha >= 0.0; }

Gains gains_from_x(const Eigen::Vector2d& x, double lambda_max) {
    Gains g;
    g.alpha = std::max(0.0, -x(1));
    if (x(0) > 0.0 && g.alpha > 0.0) {
        g.eta = std::min(1.0, g.alpha / x(0));
    } else {
        g.alpha = 0.0;
        g.eta = std::min(1.0 - 1e-6, (2.0 - 1e-6) / lambda_max);
    }
    return g;
}

Eigen::VectorXd step_unprojected(const Eigen::VectorXd& q, const Eigen::VectorXd& v, const Gains& g) {
    if (q.size() != v.size()) throw DomainError("q and v differ in length");
    return q + g.eta * (Eigen::VectorXd::Ones(v.size()) - v) - (1.0 - g.eta) * g.alpha * q;
}

Eigen::VectorXd step_projected(const Eigen::VectorXd& q, const Eigen::VectorXd& v, const Gains& g,
                               const Eigen::VectorXd& q_min, const Eigen::VectorXd& q_max) {
    return step_unprojected(q, v, g).cwiseMax(q_min).cwiseMin(q_max);
}

double apply_reactive_priority(double p_prev, double q_next, double s_rated) {
    const double excess = std::abs(q_next) - s_rated;
    if (excess > 1e-12 * std::max(1.0, s_rated)) {
        throw DomainError(fmt::format("|q| = {} exceeds the rated size {}", std::abs(q_next), s_rated));
    }
    const double headroom = std::sqrt(std::max(0.0, s_rated * s_rated - q_next * q_next));
    return std::max(0.0, std::min(p_prev, headroom));
}

Equilibrium equilibrium(const Gains& g, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho) {
    if (g.eta == 0.0 && g.alpha == 0.0) throw SingularSystem("eta = alpha = 0 leaves the equilibrium undefined");
    const auto n = X.rows();
    const Eigen::MatrixXd K = g.eta * X + (1.0 - g.eta) * g.alpha * Eigen::MatrixXd::Identity(n, n);
    const Eigen::VectorXd rhs = g.eta * (Eigen::VectorXd::Ones(n) - rho);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    if (std::abs(lu.determinant()) < 1e-300) throw SingularSystem("equilibrium system is singular");
    Equilibrium eq;
    eq.q = lu.solve(rhs);
    eq.nu = X * eq.q + rho;
    return eq;
}

Equilibrium equilibrium_from_x(const Eigen::Vector2d& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho) {
    const auto n = X.rows();
    const Eigen::MatrixXd K = X + x.sum() * Eigen::MatrixXd::Identity(n, n);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);
    Equilibrium eq;
    eq.q = lu.solve(Eigen::VectorXd::Ones(n) - rho);
    eq.nu = X * eq.q + rho;
    return eq;
}

Eigen::MatrixXd closed_loop_matrix(const Gains& g, const Eigen::MatrixXd& X) {
    const auto n = X.rows();
    return (1.0 - (1.0 - g.eta) * g.alpha) * Eigen::MatrixXd::Identity(n, n) - g.eta * X;
}

namespace {

Eigen::VectorXd modal_values(const Gains& g, const Eigen::VectorXd& lambda) {
    return ((1.0 - g.eta) * g.alpha) * Eigen::VectorXd::Ones(lambda.size()) + g.eta * lambda;
}

}  // namespace

double stability_margin(const Gains& g, const Eigen::VectorXd& lambda) {
    const Eigen::VectorXd m = modal_values(g, lambda);
    return std::min(2.0 - m.maxCoeff(), m.minCoeff());
}

Stability classify_stability(const Gains& g, const Eigen::VectorXd& lambda) {
    if (g.eta == 0.0 && g.alpha == 0.0) return Stability::Marginal;
    return stability_margin(g, lambda) > 0.0 ? Stability::Stable : Stability::Unstable;
}

double closed_loop_spectral_radius(const Gains& g, const Eigen::VectorXd& lambda) {
    const Eigen::VectorXd m = modal_values(g, lambda);
    return (Eigen::VectorXd::Ones(m.size()) - m).cwiseAbs().maxCoeff();
}

bool stability_check_multiphase(const Gains& g, double norm2_X) {
    const double t = g.x().sum();
    return t - norm2_X > 0.0 && t - 2.0 + norm2_X < 0.0;
}

LinearTrajectory simulate_linear_loop(const Gains& g, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho,
                                      const Eigen::VectorXd& q0, int steps, double divergence_threshold) {
    const Eigen::MatrixXd A = closed_loop_matrix(g, X);
    const Eigen::VectorXd B = g.eta * (Eigen::VectorXd::Ones(rho.size()) - rho);
    LinearTrajectory traj;
    traj.q.reserve(static_cast<std::size_t>(steps) + 1);
    traj.q.push_back(q0);
    Eigen::VectorXd q = q0;
    for (int k = 0; k < steps; ++k) {
        q = A * q + B;
        traj.q.push_back(q);
        if (!q.allFinite() || q.cwiseAbs().maxCoeff() > divergence_threshold) {
            traj.diverged = true;
            break;
        }
    }
    return traj;
}

}  // namespace vvc
