#include "vvc/powerflow.hpp"

#include <cmath>

#include <fmt/format.h>

#include "vvc/errors.hpp"

namespace vvc {

InjectionState InjectionState::zeros(int n, const DerFleet& fleet) {
    InjectionState inj;
    inj.p_av = Eigen::VectorXd::Zero(n);
    inj.p_l = Eigen::VectorXd::Zero(n);
    inj.q_l = Eigen::VectorXd::Zero(n);
    inj.q_ctrl = Eigen::VectorXd::Zero(fleet.size());
    inj.der_nodes = fleet.node_indices();
    return inj;
}

Eigen::VectorXcd InjectionState::net_injection() const {
    const auto n = p_av.size();
    Eigen::VectorXd p = p_av - p_l;
    Eigen::VectorXd q = -q_l;
    if (q_ctrl.size() != static_cast<Eigen::Index>(der_nodes.size())) {
        throw DomainError(fmt::format("{} reactive setpoints for {} DERs", q_ctrl.size(), der_nodes.size()));
    }
    for (std::size_t g = 0; g < der_nodes.size(); ++g) q(der_nodes[g]) += q_ctrl(static_cast<Eigen::Index>(g));
    if (p_ctrl.size() > 0) {
        // Curtailable DERs replace the available injection at their node.
        std::vector<bool> replaced(static_cast<std::size_t>(n), false);
        for (std::size_t g = 0; g < der_nodes.size(); ++g) {
            const int node = der_nodes[g];
            if (!replaced[node]) {
                p(node) -= p_av(node);
                replaced[node] = true;
            }
            p(node) += p_ctrl(static_cast<Eigen::Index>(g));
        }
    }
    Eigen::VectorXcd s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = cplx(p(i), q(i));
    return s;
}

double PfSolution::slack_active_power(const Network& net) const {
    double p = 0.0;
    const cplx v0(net.slack_voltage(), 0.0);
    for (int c : net.tree().children[0]) p += (v0 * std::conj(branch_current(c - 1))).real();
    return p;
}

double PfSolution::line_losses(const Network& net) const {
    double loss = 0.0;
    for (int i = 1; i <= net.node_count(); ++i) loss += std::norm(branch_current(i - 1)) * net.feeder_impedance(i).real();
    return loss;
}

namespace {

struct SweepState {
    Eigen::VectorXcd u;
    Eigen::VectorXcd branch;
};

// Branch currents from voltages by Ohm's law, then the worst power mismatch.
double mismatch(const Network& net, const Eigen::VectorXcd& s, SweepState& st) {
    const auto& tree = net.tree();
    const int n = net.node_count();
    const cplx v0(net.slack_voltage(), 0.0);
    for (int i = 1; i <= n; ++i) {
        const int p = tree.parent[i];
        const cplx up = p == 0 ? v0 : st.u(p - 1);
        st.branch(i - 1) = (up - st.u(i - 1)) / net.feeder_impedance(i);
    }
    double worst = 0.0;
    for (int i = 1; i <= n; ++i) {
        cplx injected = -st.branch(i - 1);
        for (int c : tree.children[i]) injected += st.branch(c - 1);
        const cplx s_calc = st.u(i - 1) * std::conj(injected);
        worst = std::max(worst, std::abs(s_calc - s(i - 1)));
    }
    return worst;
}

}  // namespace

PfSolution solve_pf(const Network& net, const InjectionState& inj, const PfOptions& options) {
    if (!(options.tol > 0.0)) throw DomainError("power flow tolerance must be positive");
    const int n = net.node_count();
    if (inj.p_av.size() != n || inj.p_l.size() != n || inj.q_l.size() != n) {
        throw DomainError(fmt::format("injection vectors must have {} entries", n));
    }
    const Eigen::VectorXcd s = inj.net_injection();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s(i).real()) || !std::isfinite(s(i).imag())) throw DomainError("non-finite injection");
    }

    const auto& tree = net.tree();
    const cplx v0(net.slack_voltage(), 0.0);
    SweepState st{Eigen::VectorXcd::Constant(n, v0), Eigen::VectorXcd::Zero(n)};
    Eigen::VectorXcd acc(n);
    Eigen::VectorXcd next(n);

    double omega = options.damping;
    double previous = mismatch(net, s, st);
    int it = 0;
    while (it < options.max_iter) {
        ++it;
        // Backward: accumulate currents from the leaves towards the slack.
        for (auto k = tree.order.size(); k-- > 1;) {
            const int i = tree.order[k];
            cplx current = -std::conj(s(i - 1) / st.u(i - 1));
            for (int c : tree.children[i]) current += acc(c - 1);
            acc(i - 1) = current;
        }
        // Forward: voltage drops from the slack outwards.
        for (std::size_t k = 1; k < tree.order.size(); ++k) {
            const int i = tree.order[k];
            const int p = tree.parent[i];
            const cplx up = p == 0 ? v0 : next(p - 1);
            next(i - 1) = up - net.feeder_impedance(i) * acc(i - 1);
        }
        const Eigen::VectorXcd before = st.u;
        st.u = before + omega * (next - before);
        const double current = mismatch(net, s, st);
        if (!std::isfinite(current) || current > 10.0 * previous + 1.0) {
            // Diverging: back off and restart from the flat profile.
            omega *= 0.5;
            if (omega < 1.0 / 64.0) break;
            st.u.setConstant(v0);
            previous = mismatch(net, s, st);
            continue;
        }
        previous = current;
        if (current <= options.tol) break;
    }
    if (!(previous <= options.tol)) {
        throw NoConvergence(fmt::format("power flow did not converge in {} iterations (mismatch {:.3e})",
                                        options.max_iter, previous));
    }

    PfSolution sol;
    sol.u = st.u;
    sol.v = st.u.cwiseAbs();
    sol.branch_current = st.branch;
    sol.iterations = std::max(it, 1);
    sol.residual = previous;
    const double lo = 0.5 * net.slack_voltage();
    const double hi = 1.5 * net.slack_voltage();
    if (sol.v.minCoeff() < lo || sol.v.maxCoeff() > hi) {
        throw NoConvergence(fmt::format("power flow landed outside the practical band ({:.3f}..{:.3f} p.u.)",
                                        sol.v.minCoeff(), sol.v.maxCoeff()));
    }
    return sol;
}

Eigen::VectorXd compute_rho(const Network& net, const InjectionState& z, const PfOptions& options) {
    InjectionState zero_q = z;
    zero_q.q_ctrl.setZero();
    return solve_pf(net, zero_q, options).v;
}

double power_flow_residual(const Admittance& adm, double v0, const Eigen::VectorXcd& u, const Eigen::VectorXcd& s) {
    const Eigen::VectorXcd current = adm.y * v0 + adm.Y * u;
    const Eigen::VectorXcd s_calc = u.cwiseProduct(current.conjugate());
    return (s_calc - s).cwiseAbs().maxCoeff();
}

}  // namespace vvc
