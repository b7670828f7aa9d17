#pragma once

#include <vector>

#include <Eigen/Dense>

namespace vvc {

/// Controller gains. The reparametrization x = [alpha/eta, -alpha] exists
/// only for eta > 0.
struct Gains {
    double eta = 0.0;
    double alpha = 0.0;

    [[nodiscard]] Eigen::Vector2d x() const;
    [[nodiscard]] bool valid() const noexcept;
};

/// Inverse of Gains::x. When x1 == 0 the pair collapses; alpha is set to 0
/// and eta to the largest value in (0,1) with eta * lambda_max < 2 - 1e-6.
Gains gains_from_x(const Eigen::Vector2d& x, double lambda_max);

Eigen::VectorXd step_unprojected(const Eigen::VectorXd& q, const Eigen::VectorXd& v, const Gains& g);

Eigen::VectorXd step_projected(const Eigen::VectorXd& q, const Eigen::VectorXd& v, const Gains& g,
                               const Eigen::VectorXd& q_min, const Eigen::VectorXd& q_max);

/// min(p_prev, sqrt(s^2 - q^2)); throws DomainError if |q| > s.
double apply_reactive_priority(double p_prev, double q_next, double s_rated);

struct Equilibrium {
    Eigen::VectorXd q;
    Eigen::VectorXd nu;
};

/// q* = [eta X + (1-eta) alpha I]^-1 eta (1 - rho), nu* = X q* + rho.
/// Throws SingularSystem for eta = alpha = 0.
Equilibrium equilibrium(const Gains& g, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho);

/// Same fixed point through x: q = [X + (1'x) I]^-1 (1 - rho).
Equilibrium equilibrium_from_x(const Eigen::Vector2d& x, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho);

/// A = (1 - (1-eta) alpha) I - eta X.
Eigen::MatrixXd closed_loop_matrix(const Gains& g, const Eigen::MatrixXd& X);

enum class Stability { Stable, Marginal, Unstable };

/// min(2 - max_n m_n, min_n m_n) with m_n = (1-eta) alpha + eta lambda_n.
/// Positive exactly when every eigenvalue of A lies inside the unit circle.
double stability_margin(const Gains& g, const Eigen::VectorXd& lambda);
Stability classify_stability(const Gains& g, const Eigen::VectorXd& lambda);
/// max_n |1 - m_n|, the spectral radius of A for symmetric X.
double closed_loop_spectral_radius(const Gains& g, const Eigen::VectorXd& lambda);

/// Sufficient test for non-symmetric X: 1'x - |X| > 0 and 1'x - 2 + |X| < 0.
bool stability_check_multiphase(const Gains& g, double norm2_X);

struct LinearTrajectory {
    std::vector<Eigen::VectorXd> q;  // q_0 .. q_steps (truncated on divergence)
    bool diverged = false;
};

/// Iterates q_{k+1} = A q_k + eta (1 - rho). Stops early and flags divergence
/// once |q|_inf exceeds `divergence_threshold`.
LinearTrajectory simulate_linear_loop(const Gains& g, const Eigen::MatrixXd& X, const Eigen::VectorXd& rho,
                                      const Eigen::VectorXd& q0, int steps, double divergence_threshold = 1e3);

}  // namespace vvc
