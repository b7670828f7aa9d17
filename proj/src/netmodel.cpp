#include "vvc/netmodel.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>

#include <fmt/format.h>
#include "json.hpp"

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

RadialTree build_radial_tree(const std::vector<Line>& lines) {
    const int n = static_cast<int>(lines.size());
    if (n == 0) throw TopologyError("network has no lines");

    std::vector<std::vector<std::pair<int, int>>> adj(n + 1);  // (neighbour, line)
    std::vector<int> uf(n + 1);
    std::iota(uf.begin(), uf.end(), 0);
    auto find = [&](int a) {
        while (uf[a] != a) a = uf[a] = uf[uf[a]];
        return a;
    };

    for (int l = 0; l < n; ++l) {
        const auto& line = lines[l];
        if (line.from == line.to) throw TopologyError(fmt::format("line {} is a self loop at node {}", l, line.from));
        if (line.from < 0 || line.to < 0 || line.from > n || line.to > n) {
            throw TopologyError(fmt::format("line {} ({}->{}) references a node outside 0..{} ({} lines imply {} nodes)",
                                            l, line.from, line.to, n, n, n + 1));
        }
        const int a = find(line.from);
        const int b = find(line.to);
        if (a == b) throw TopologyError(fmt::format("line {} ({}->{}) closes a cycle", l, line.from, line.to));
        uf[a] = b;
        adj[line.from].emplace_back(line.to, l);
        adj[line.to].emplace_back(line.from, l);
    }

    RadialTree tree;
    tree.parent.assign(n + 1, -2);
    tree.parent_line.assign(n + 1, -1);
    tree.children.assign(n + 1, {});
    tree.parent[0] = -1;
    std::queue<int> queue;
    queue.push(0);
    while (!queue.empty()) {
        const int node = queue.front();
        queue.pop();
        tree.order.push_back(node);
        for (auto [next, l] : adj[node]) {
            if (tree.parent[next] != -2) continue;
            tree.parent[next] = node;
            tree.parent_line[next] = l;
            tree.children[node].push_back(next);
            queue.push(next);
        }
    }
    if (static_cast<int>(tree.order.size()) != n + 1) {
        throw TopologyError(fmt::format("network is disconnected: {} of {} nodes reachable from the slack",
                                        tree.order.size(), n + 1));
    }
    return tree;
}

Network::Network(std::vector<Line> lines, double slack_voltage, double base_kva, double base_kv)
    : lines_(std::move(lines)), slack_voltage_(slack_voltage), base_kva_(base_kva), base_kv_(base_kv) {
    for (std::size_t l = 0; l < lines_.size(); ++l) {
        const auto& line = lines_[l];
        if (!std::isfinite(line.r) || !std::isfinite(line.x)) {
            throw UnitError(fmt::format("line {} has a non-finite impedance", l));
        }
        if (line.r < 0.0) throw UnitError(fmt::format("line {} has negative resistance {}", l, line.r));
        if (line.x <= 0.0) throw UnitError(fmt::format("line {} has nonpositive reactance {}", l, line.x));
    }
    if (!(slack_voltage_ > 0.0)) throw UnitError("slack voltage must be positive");
    if (!(base_kva_ > 0.0) || !(base_kv_ > 0.0)) throw UnitError("base power and base voltage must be positive");
    tree_ = build_radial_tree(lines_);
}

cplx Network::feeder_impedance(int node) const {
    const auto& line = lines_.at(tree_.parent_line.at(node));
    return {line.r, line.x};
}

Network Network::scaled(double factor) const {
    auto lines = lines_;
    for (auto& line : lines) {
        line.r *= factor;
        line.x *= factor;
    }
    return Network(std::move(lines), slack_voltage_, base_kva_, base_kv_);
}

NetworkConfig load_network_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw ParseError(fmt::format("cannot open '{}'", json_path.string()));
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(fmt::format("{}: {}", json_path.string(), e.what()));
    }
    NetworkConfig cfg;
    cfg.base_kva = j.value("base_power_kva", cfg.base_kva);
    cfg.base_kv = j.value("base_voltage_kv", cfg.base_kv);
    cfg.slack_voltage = j.value("slack_voltage_pu", cfg.slack_voltage);
    return cfg;
}

Network load_network(const std::filesystem::path& csv_path, const NetworkConfig& config) {
    const auto table = csv::read_with_header(csv_path, {"from", "to", "r_pu", "x_pu"});
    std::vector<Line> lines;
    lines.reserve(table.rows.size());
    for (std::size_t row = 0; row < table.rows.size(); ++row) {
        Line line;
        line.from = static_cast<int>(table.integer(row, 0));
        line.to = static_cast<int>(table.integer(row, 1));
        line.r = table.number(row, 2);
        line.x = table.number(row, 3);
        lines.push_back(line);
    }
    return Network(std::move(lines), config.slack_voltage, config.base_kva, config.base_kv);
}

Admittance build_admittance(const Network& net) {
    const int n = net.node_count();
    Admittance adm{Eigen::VectorXcd::Zero(n), Eigen::MatrixXcd::Zero(n, n)};
    for (const auto& line : net.lines()) {
        const cplx ys = 1.0 / cplx(line.r, line.x);
        if (!std::isfinite(ys.real()) || !std::isfinite(ys.imag())) {
            throw SingularityError(fmt::format("line {}->{} has a non-finite admittance", line.from, line.to));
        }
        const int a = line.from - 1;
        const int b = line.to - 1;
        if (a >= 0) adm.Y(a, a) += ys;
        if (b >= 0) adm.Y(b, b) += ys;
        if (a >= 0 && b >= 0) {
            adm.Y(a, b) -= ys;
            adm.Y(b, a) -= ys;
        } else {
            adm.y(a >= 0 ? a : b) -= ys;
        }
    }
    return adm;
}

// ---------------------------------------------------------------------------

DerFleet::DerFleet(std::vector<Der> ders, int node_count)
    : ders_(std::move(ders)), node_count_(node_count), original_count_(static_cast<int>(ders_.size())) {
    members_.resize(ders_.size());
    for (std::size_t g = 0; g < ders_.size(); ++g) {
        const auto& d = ders_[g];
        if (d.node < 1 || d.node > node_count_) {
            throw TopologyError(fmt::format("DER {} sits on node {}, outside 1..{}", d.id, d.node, node_count_));
        }
        if (!(d.s_rated > 0.0)) throw DomainError(fmt::format("DER {} has nonpositive rated size", d.id));
        if (d.q_min > 0.0 || d.q_max < 0.0) {
            throw DomainError(fmt::format("DER {} box [{}, {}] does not contain 0", d.id, d.q_min, d.q_max));
        }
        if (-d.q_min > d.s_rated * (1 + 1e-12) || d.q_max > d.s_rated * (1 + 1e-12)) {
            throw DomainError(fmt::format("DER {} reactive box exceeds its rated size", d.id));
        }
        members_[g] = {{static_cast<int>(g), 1.0}};
    }
}

Eigen::MatrixXd DerFleet::placement() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(node_count_, size());
    for (int g = 0; g < size(); ++g) a(ders_[g].node - 1, g) = 1.0;
    return a;
}

bool DerFleet::one_per_node() const {
    std::vector<int> seen(node_count_ + 1, 0);
    for (const auto& d : ders_) {
        if (seen[d.node]++) return false;
    }
    return true;
}

std::vector<int> DerFleet::node_indices() const {
    std::vector<int> idx;
    idx.reserve(ders_.size());
    for (const auto& d : ders_) idx.push_back(d.node - 1);
    return idx;
}

Eigen::VectorXd DerFleet::q_min() const {
    Eigen::VectorXd v(size());
    for (int g = 0; g < size(); ++g) v(g) = ders_[g].q_min;
    return v;
}

Eigen::VectorXd DerFleet::q_max() const {
    Eigen::VectorXd v(size());
    for (int g = 0; g < size(); ++g) v(g) = ders_[g].q_max;
    return v;
}

Eigen::VectorXd DerFleet::rated() const {
    Eigen::VectorXd v(size());
    for (int g = 0; g < size(); ++g) v(g) = ders_[g].s_rated;
    return v;
}

Eigen::VectorXd DerFleet::disaggregate(const Eigen::VectorXd& aggregate_setpoints) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(original_count_);
    for (int g = 0; g < size(); ++g) {
        for (const auto& m : members_[g]) out(m.original_index) += m.share * aggregate_setpoints(g);
    }
    return out;
}

DerFleet aggregate_colocated_ders(const DerFleet& fleet) {
    std::vector<int> slot(fleet.node_count() + 1, -1);
    std::vector<Der> merged;
    std::vector<std::vector<int>> groups;
    for (int g = 0; g < fleet.size(); ++g) {
        const auto& d = fleet.ders()[g];
        if (slot[d.node] < 0) {
            slot[d.node] = static_cast<int>(merged.size());
            merged.push_back(d);
            groups.push_back({});
        } else {
            auto& agg = merged[slot[d.node]];
            agg.s_rated += d.s_rated;
            agg.q_min += d.q_min;
            agg.q_max += d.q_max;
        }
        // Members refer to the fleet's own original DERs.
        for (const auto& m : fleet.members()[g]) groups[slot[d.node]].push_back(m.original_index);
    }

    DerFleet out;
    out.ders_ = std::move(merged);
    out.node_count_ = fleet.node_count();
    out.original_count_ = fleet.original_count_;
    out.members_.resize(out.ders_.size());
    // Rated sizes of the original DERs, recovered from the input fleet.
    std::vector<double> original_rating(fleet.original_count_, 0.0);
    for (int g = 0; g < fleet.size(); ++g) {
        for (const auto& m : fleet.members()[g]) {
            original_rating[m.original_index] = m.share * fleet.ders()[g].s_rated;
        }
    }
    for (std::size_t g = 0; g < out.ders_.size(); ++g) {
        for (int idx : groups[g]) {
            out.members_[g].push_back({idx, original_rating[idx] / out.ders_[g].s_rated});
        }
    }
    return out;
}

DerFleet load_ders(const std::filesystem::path& csv_path, const Network& net) {
    const auto table = csv::read_with_header(csv_path, {"id", "node", "s_kva", "qmin_kvar", "qmax_kvar"});
    std::vector<Der> ders;
    const double base = net.base_kva();
    for (std::size_t row = 0; row < table.rows.size(); ++row) {
        Der d;
        d.id = static_cast<int>(table.integer(row, 0));
        d.node = static_cast<int>(table.integer(row, 1));
        d.s_rated = table.number(row, 2) / base;
        d.q_min = table.number(row, 3) / base;
        d.q_max = table.number(row, 4) / base;
        ders.push_back(d);
    }
    return DerFleet(std::move(ders), net.node_count());
}

}  // namespace vvc
