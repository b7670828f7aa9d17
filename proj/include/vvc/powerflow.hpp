#pragma once

#include <vector>

#include <Eigen/Dense>

#include "vvc/netmodel.hpp"

namespace vvc {

/// Non-controllable injections z = (p_av, p_l, q_l) per node plus the DER
/// setpoints. All values in p.u.; vectors over nodes have length N.
struct InjectionState {
    Eigen::VectorXd p_av;    // available non-controllable active injection
    Eigen::VectorXd p_l;     // active load
    Eigen::VectorXd q_l;     // reactive load
    Eigen::VectorXd q_ctrl;  // per DER
    Eigen::VectorXd p_ctrl;  // per DER; empty means "no curtailment, use p_av"
    std::vector<int> der_nodes;  // 0-based node index of each DER

    /// Zero injections for a network of `n` nodes and the given fleet.
    static InjectionState zeros(int n, const DerFleet& fleet = {});

    /// Net complex injection s per node.
    [[nodiscard]] Eigen::VectorXcd net_injection() const;
};

struct PfOptions {
    double tol = 1e-8;
    int max_iter = 200;
    double damping = 1.0;
};

struct PfSolution {
    Eigen::VectorXcd u;               // node phasors
    Eigen::VectorXd v;                // magnitudes
    Eigen::VectorXcd branch_current;  // current on the line feeding node i+1, parent -> child
    int iterations = 0;
    double residual = 0.0;            // max |s_calc - s|

    /// Active power drawn from the slack bus.
    [[nodiscard]] double slack_active_power(const Network& net) const;
    /// Sum of |I|^2 r over all lines.
    [[nodiscard]] double line_losses(const Network& net) const;
};

/// Fixed-point backward/forward sweep from the flat profile u = V0·1, which
/// converges to the high-voltage (practical) solution. Throws NoConvergence
/// when the iteration does not settle within `max_iter` sweeps or lands
/// outside the 0.5–1.5 p.u. band.
PfSolution solve_pf(const Network& net, const InjectionState& inj, const PfOptions& options = {});

/// Voltage magnitudes with all DER reactive setpoints forced to zero.
Eigen::VectorXd compute_rho(const Network& net, const InjectionState& z, const PfOptions& options = {});

/// Residual of the bus-injection equations s = diag(u)(y*V0 + Y*u*),
/// computed from the admittance matrices (independent of the sweep).
double power_flow_residual(const Admittance& adm, double v0, const Eigen::VectorXcd& u, const Eigen::VectorXcd& s);

}  // namespace vvc
