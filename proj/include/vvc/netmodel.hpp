#pragma once

#include <complex>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace vvc {

using cplx = std::complex<double>;

struct Line {
    int from = 0;
    int to = 0;
    double r = 0.0;  // p.u.
    double x = 0.0;  // p.u.
};

/// Radial tree over nodes {0..N} rooted at the slack bus.
struct RadialTree {
    std::vector<int> parent;       // parent[0] == -1
    std::vector<int> parent_line;  // index into Network::lines, -1 for the root
    std::vector<int> order;        // breadth-first order starting with 0
    std::vector<std::vector<int>> children;
};

/// Single-phase radial feeder in per-unit. Node 0 is the slack bus; the
/// remaining N nodes are indexed 1..N and map to vector entries 0..N-1.
class Network {
public:
    Network() = default;
    /// Validates topology and units; throws TopologyError or UnitError.
    Network(std::vector<Line> lines, double slack_voltage = 1.0, double base_kva = 100.0, double base_kv = 0.4);

    [[nodiscard]] int node_count() const noexcept { return static_cast<int>(lines_.size()); }
    [[nodiscard]] const std::vector<Line>& lines() const noexcept { return lines_; }
    [[nodiscard]] const RadialTree& tree() const noexcept { return tree_; }
    [[nodiscard]] double slack_voltage() const noexcept { return slack_voltage_; }
    [[nodiscard]] double base_kva() const noexcept { return base_kva_; }
    [[nodiscard]] double base_kv() const noexcept { return base_kv_; }

    /// Impedance of the line feeding `node` (node >= 1).
    [[nodiscard]] cplx feeder_impedance(int node) const;

    /// Same network with every impedance multiplied by `factor`.
    [[nodiscard]] Network scaled(double factor) const;

private:
    std::vector<Line> lines_;
    RadialTree tree_;
    double slack_voltage_ = 1.0;
    double base_kva_ = 100.0;
    double base_kv_ = 0.4;
};

/// Builds the tree for nodes {0..N}; throws TopologyError for anything that
/// is not a connected tree (cycles, parallel lines, self loops, islands).
RadialTree build_radial_tree(const std::vector<Line>& lines);

struct NetworkConfig {
    double base_kva = 100.0;
    double base_kv = 0.4;
    double slack_voltage = 1.0;
};

NetworkConfig load_network_config(const std::filesystem::path& json_path);

/// Reads `from,to,r_pu,x_pu`.
Network load_network(const std::filesystem::path& csv_path, const NetworkConfig& config = {});

/// Bus admittance partition over the non-slack nodes: injected currents are
/// `y * V0 + Y * u`.
struct Admittance {
    Eigen::VectorXcd y;
    Eigen::MatrixXcd Y;
};

Admittance build_admittance(const Network& net);

// ---------------------------------------------------------------------------
// DER fleet

struct Der {
    int id = 0;
    int node = 1;
    double s_rated = 0.0;  // p.u.
    double q_min = 0.0;    // p.u.
    double q_max = 0.0;    // p.u.
};

/// DERs with their placement. After aggregation every DER sits on its own
/// node and `members` lists the original DERs it stands for.
class DerFleet {
public:
    DerFleet() = default;
    DerFleet(std::vector<Der> ders, int node_count);

    [[nodiscard]] const std::vector<Der>& ders() const noexcept { return ders_; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(ders_.size()); }
    [[nodiscard]] int node_count() const noexcept { return node_count_; }

    /// N x G placement matrix.
    [[nodiscard]] Eigen::MatrixXd placement() const;
    [[nodiscard]] bool one_per_node() const;
    /// 0-based vector indices (node - 1) of the DER nodes, in DER order.
    [[nodiscard]] std::vector<int> node_indices() const;

    [[nodiscard]] Eigen::VectorXd q_min() const;
    [[nodiscard]] Eigen::VectorXd q_max() const;
    [[nodiscard]] Eigen::VectorXd rated() const;

    struct Member {
        int original_index;
        double share;  // rated size fraction inside the aggregate
    };
    [[nodiscard]] const std::vector<std::vector<Member>>& members() const noexcept { return members_; }

    /// Splits per-aggregate setpoints back onto the original DERs
    /// proportionally to rated size.
    [[nodiscard]] Eigen::VectorXd disaggregate(const Eigen::VectorXd& aggregate_setpoints) const;

private:
    friend DerFleet aggregate_colocated_ders(const DerFleet& fleet);
    std::vector<Der> ders_;
    std::vector<std::vector<Member>> members_;
    int node_count_ = 0;
    int original_count_ = 0;
};

DerFleet aggregate_colocated_ders(const DerFleet& fleet);

/// Reads `id,node,s_kva,qmin_kvar,qmax_kvar` and converts to p.u.
DerFleet load_ders(const std::filesystem::path& csv_path, const Network& net);

}  // namespace vvc
