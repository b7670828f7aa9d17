#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vvc/controller.hpp"
#include "vvc/sensitivity.hpp"

namespace vvc {

/// Constraint families of the design problem.
enum class Family : int { QMax = 0, QMin = 1, VMax = 2, VMin = 3 };
const char* family_name(Family f);

/// Which linear stability constraints bound 1'x.
enum class StabilityForm {
    Spectral,   // 1'x <= 2 - lambda_max, 1'x >= 0
    NormBound,  // |X| <= 1'x <= 2 - |X|, for non-symmetric X
};

struct StepRule {
    enum class Kind { Diminishing, Constant } kind = Kind::Diminishing;
    double exponent = 0.6;  // gamma_p = (1 + p)^-exponent
    double gamma = 0.5;     // constant mode
    [[nodiscard]] double at(int p) const;
};

struct DesignSpec {
    Eigen::VectorXd q_min, q_max;    // per model row
    Eigen::VectorXd nu_min, nu_max;  // per model row
    /// Violation probability per family. Values >= 1 drop the family.
    std::array<double, 4> epsilon{1.0 - 1e-9, 1.0 - 1e-9, 0.05, 0.05};
    double xi = 1e-4;
    double d = 1.0;
    double e = 1e-6;
    int max_outer = 200;
    StepRule step;
    std::optional<StabilityForm> stability;  // default: Spectral for symmetric X
};

/// Sensitivity model plus no-control voltage samples rho[m][s] over the
/// model rows.
struct DesignProblem {
    SensitivityModel model;
    std::vector<std::vector<Eigen::VectorXd>> rho;
    DesignSpec spec;

    [[nodiscard]] int intervals() const noexcept { return static_cast<int>(rho.size()); }
    [[nodiscard]] int samples(int m) const { return static_cast<int>(rho.at(m).size()); }
    [[nodiscard]] StabilityForm stability_form() const;
    /// Validates dimensions and DesignSpec invariants; throws DomainError/ConfigError.
    void validate() const;
};

/// Builds a problem from full-network samples, keeping the model rows only.
DesignProblem make_design_problem(const SensitivityModel& model,
                                  const std::vector<std::vector<Eigen::VectorXd>>& rho_full, const DesignSpec& spec);

// ---------------------------------------------------------------------------
// Building blocks

/// q(x) = [X + (1'x) I]^-1 (1 - rho) through the eigendecomposition.
Eigen::VectorXd q_of_x(const Eigen::Vector2d& x, const SensitivityModel& model, const Eigen::VectorXd& rho);

/// 2 x N matrix; both rows equal P diag(-1/(1'x + lambda)^2) P^-1 (1 - rho).
Eigen::MatrixXd grad_q(const Eigen::Vector2d& x, const SensitivityModel& model, const Eigen::VectorXd& rho);

struct HValues {
    double h0 = 0.0;
    std::array<Eigen::VectorXd, 4> h;  // families QMax..VMin
    Eigen::VectorXd h5;
    double h6 = 0.0, h7 = 0.0, h8 = 0.0;
    Eigen::VectorXd q;
};

HValues eval_h(const Eigen::Vector2d& x, const DesignProblem& problem, const Eigen::VectorXd& rho);

/// Smooth hinge 1/2 (y + sqrt(xi^2 + y^2)) at y = h + u, minus u eps.
double smooth_g(double h, double u, double eps, double xi);

/// Sample average of smooth_g over the interval's samples.
double cvar_constraint_estimate(const Eigen::Vector2d& x, double u, Family family, int n, int m,
                                const DesignProblem& problem);

/// Minimizes a sample-averaged smooth hinge over u >= 0 for fixed h values.
struct HingeMinimum {
    double u = 0.0;
    double value = 0.0;
};
HingeMinimum minimize_hinge_over_u(const Eigen::VectorXd& h, double eps, double xi);

/// Curvature bounds m[f][m](n): the surrogate adds m * |x - x_p|^2, which is
/// 1/2 (x - x_p)' M (x - x_p) with M = 2 diag(max(0, cbar)).
using Majorizers = std::array<std::vector<Eigen::VectorXd>, 4>;
Majorizers majorizer_matrices(const DesignProblem& problem);

struct LinearRow {
    Eigen::Vector2d a;
    double b = 0.0;  // a . x <= b
    std::string name;
};
std::vector<LinearRow> linear_constraints(const DesignProblem& problem);

/// Convex model of the problem anchored at x_p.
struct Surrogates {
    Eigen::Vector2d x_p = Eigen::Vector2d::Zero();
    // Objective: a2 dt^2 + a1 dt + a0 + prox |dx|^2 with dt = 1'(x - x_p).
    double a2 = 0.0, a1 = 0.0, a0 = 0.0, prox = 0.0;

    struct Constraint {
        Family family = Family::VMax;
        int node = 0;      // model row
        int interval = 0;  // m
        double eps = 0.0;
        double curvature = 0.0;  // m in m |dx|^2
        Eigen::VectorXd h;       // h_s(x_p)
        Eigen::VectorXd slope;   // d h_s / d(1'x) at x_p
    };
    std::vector<Constraint> constraints;
    std::vector<LinearRow> linear;
    double xi = 1e-4;

    [[nodiscard]] double objective(const Eigen::Vector2d& x) const;
    [[nodiscard]] double h_tilde(std::size_t c, int s, const Eigen::Vector2d& x) const;
    [[nodiscard]] double g_tilde(std::size_t c, const Eigen::Vector2d& x, double u) const;
};

Surrogates build_surrogates(const Eigen::Vector2d& x_p, const DesignProblem& problem, const Majorizers& maj);
Surrogates build_surrogates(const Eigen::Vector2d& x_p, const DesignProblem& problem);

/// Original (non-convexified) constraint value matching Surrogates::constraints[c].
double g_original(const Surrogates::Constraint& c, const Eigen::Vector2d& x, double u, const DesignProblem& problem);

struct SubproblemOptions {
    double gap_tol = 1e-10;
    double barrier_growth = 20.0;
    int max_newton = 2000;  // per barrier stage
};

struct SubproblemResult {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    Eigen::VectorXd u;
    Eigen::VectorXd multipliers;         // one per surrogate constraint
    Eigen::VectorXd linear_multipliers;  // one per linear row
    double kkt_residual = 0.0;
    double max_violation = 0.0;
    int newton_iterations = 0;
};

/// Barrier-Newton solve of the strongly convex surrogate problem from a
/// strictly feasible start (x_p, u_start). Throws SubproblemInfeasible when
/// the start is not strictly feasible and MaxNewtonIterations when a
/// centering stage stalls.
SubproblemResult solve_subproblem(const Surrogates& s, const Eigen::VectorXd& u_start,
                                  const SubproblemOptions& options = {});

struct InitialPoint {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    Gains gains;
    Eigen::VectorXd u;  // per surrogate constraint, in build_surrogates order
    int increments = 0;
};

/// Walks (eta, alpha) from (0.5, 3.5) towards larger eta and smaller alpha
/// until every constraint holds. Throws NoFeasibleStart.
InitialPoint initial_point(const DesignProblem& problem);

struct IterateRecord {
    double step = 0.0;
    double objective = 0.0;
    double t = 0.0;  // 1'x
    bool deterministic_ok = true;
};

struct ViolationStat {
    Family family = Family::VMax;
    int node = 0;
    int interval = 0;
    double rate = 0.0;   // empirical frequency of h > 0
    double cvar = 0.0;   // smoothed estimate at the returned u
    double worst = 0.0;  // largest h over samples
};

struct DesignSolution {
    Eigen::Vector2d x = Eigen::Vector2d::Zero();
    Gains gains;
    Eigen::VectorXd u;
    int iterations = 0;
    double final_step = 0.0;
    bool converged = false;
    std::string warning;
    double objective = 0.0;  // sum over intervals of mean |q|^2
    double stability_margin = 0.0;
    InitialPoint start;
    std::vector<IterateRecord> history;
    std::vector<ViolationStat> violations;
    std::vector<double> interval_violation_rate;  // max over constraints, per m
    bool reduced_model = false;
};

DesignSolution ogd_sca(const DesignProblem& problem, const SubproblemOptions& options = {});

/// Design report as JSON text.
std::string design_report_json(const DesignSolution& sol, const DesignProblem& problem);

}  // namespace vvc
