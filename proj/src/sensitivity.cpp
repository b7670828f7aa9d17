#include "vvc/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "vvc/csv.hpp"
#include "vvc/errors.hpp"

namespace vvc {

Eigen::VectorXd SensitivityModel::eigenvalues_real() const {
    Eigen::VectorXd re = eig.lambda.real();
    std::sort(re.data(), re.data() + re.size());
    return re;
}

double SensitivityModel::lambda_min() const { return eig.lambda.real().minCoeff(); }

double SensitivityModel::lambda_max() const { return eig.lambda.real().maxCoeff(); }

SensitivityModel build_x_lindistflow(const Network& net) {
    const auto& tree = net.tree();
    const int n = net.node_count();
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n);
    std::vector<int> done;
    done.reserve(n);
    for (std::size_t k = 1; k < tree.order.size(); ++k) {
        const int i = tree.order[k];
        const int p = tree.parent[i];
        const double x = net.feeder_impedance(i).imag();
        if (p == 0) {
            X(i - 1, i - 1) = x;
        } else {
            for (int j : done) {
                X(i - 1, j - 1) = X(p - 1, j - 1);
                X(j - 1, i - 1) = X(i - 1, j - 1);
            }
            X(i - 1, i - 1) = X(p - 1, p - 1) + x;
        }
        done.push_back(i);
    }
    auto model = make_sensitivity_model(X);
    model.nodes.resize(n);
    std::iota(model.nodes.begin(), model.nodes.end(), 0);
    return model;
}

EigenDecomposition eig_decompose(const Eigen::MatrixXd& X) {
    if (X.rows() != X.cols() || X.rows() == 0) throw DomainError("matrix must be square and non-empty");
    if (!X.allFinite()) throw DomainError("matrix has non-finite entries");
    EigenDecomposition d;
    const double scale = std::max(X.cwiseAbs().maxCoeff(), 1e-300);
    d.symmetric = (X - X.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, scale);
    if (d.symmetric) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (X + X.transpose()));
        if (es.info() != Eigen::Success) throw NumericalError("symmetric eigensolver failed");
        d.lambda = es.eigenvalues().cast<cplx>();
        d.P = es.eigenvectors().cast<cplx>();
        d.P_inv = d.P.transpose();
    } else {
        Eigen::EigenSolver<Eigen::MatrixXd> es(X);
        if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
        d.lambda = es.eigenvalues();
        d.P = es.eigenvectors();
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(d.P);
        if (!lu.isInvertible()) throw NumericalError("matrix is not diagonalizable");
        d.P_inv = lu.inverse();
    }
    const Eigen::MatrixXcd rebuilt = d.P * d.lambda.asDiagonal() * d.P_inv;
    const double err = (rebuilt - X.cast<cplx>()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-10 * scale)) {
        throw NumericalError(fmt::format("eigen reconstruction residual {:.3e} exceeds tolerance", err));
    }
    return d;
}

double matrix_norm2(const Eigen::MatrixXd& X) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

SensitivityModel make_sensitivity_model(const Eigen::MatrixXd& X) {
    if (X.rows() != X.cols() || X.rows() == 0) throw DomainError("X must be square and non-empty");
    if (!X.allFinite()) throw DomainError("X has non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (X + X.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym, Eigen::EigenvaluesOnly);
    const double smallest = es.eigenvalues().minCoeff();
    if (!(smallest > 0.0)) {
        throw NotPositiveDefinite(
            fmt::format("smallest eigenvalue of the symmetric part is {:.6g}; the gain design needs a positive "
                        "definite X",
                        smallest));
    }
    SensitivityModel m;
    m.X = X;
    m.eig = eig_decompose(X);
    m.symmetric = m.eig.symmetric;
    m.norm2 = matrix_norm2(X);
    m.nodes.resize(X.rows());
    std::iota(m.nodes.begin(), m.nodes.end(), 0);
    return m;
}

SensitivityModel reduce_to_der_nodes(const SensitivityModel& model, const DerFleet& fleet) {
    if (!fleet.one_per_node()) throw DomainError("fleet must be aggregated to one DER per node");
    const auto idx = fleet.node_indices();
    if (static_cast<int>(idx.size()) == model.size()) {
        bool identity = true;
        for (std::size_t g = 0; g < idx.size(); ++g) identity = identity && idx[g] == static_cast<int>(g);
        if (identity) return model;
    }
    const int g = static_cast<int>(idx.size());
    Eigen::MatrixXd Xr(g, g);
    for (int a = 0; a < g; ++a) {
        for (int b = 0; b < g; ++b) Xr(a, b) = model.X(idx[a], idx[b]);
    }
    auto reduced = make_sensitivity_model(Xr);
    reduced.reduced = true;
    for (int a = 0; a < g; ++a) reduced.nodes[a] = model.nodes[idx[a]];
    return reduced;
}

SensitivityModel load_x_matrix(const std::filesystem::path& path) {
    const auto rows = csv::read_matrix(path);
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) throw ParseError(fmt::format("{}: empty matrix", path.string()));
    Eigen::MatrixXd X(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != n) {
            throw SchemaError(fmt::format("{}: row {} has {} entries, expected {}", path.string(), i + 1,
                                          rows[i].size(), n));
        }
        for (Eigen::Index j = 0; j < n; ++j) X(i, j) = rows[i][j];
    }
    return make_sensitivity_model(X);
}

void write_x_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& X) {
    std::ofstream out(path);
    if (!out) throw ParseError(fmt::format("cannot write '{}'", path.string()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (j) out << ',';
            out << csv::format(X(i, j));
        }
        out << '\n';
    }
}

}  // namespace vvc
