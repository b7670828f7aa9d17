#pragma once

#include <filesystem>

#include <Eigen/Dense>

#include "vvc/netmodel.hpp"

namespace vvc {

/// X = P diag(lambda) P^-1. For symmetric X the factors are real and P is
/// orthogonal; otherwise they come from a general complex eigensolver.
struct EigenDecomposition {
    Eigen::VectorXcd lambda;
    Eigen::MatrixXcd P;
    Eigen::MatrixXcd P_inv;
    bool symmetric = true;
};

/// Linear voltage sensitivity nu ~ X q + rho.
struct SensitivityModel {
    Eigen::MatrixXd X;
    EigenDecomposition eig;
    bool symmetric = true;
    double norm2 = 0.0;        // largest singular value
    bool reduced = false;      // restricted to DER nodes
    std::vector<int> nodes;    // 0-based node index of each row

    [[nodiscard]] int size() const noexcept { return static_cast<int>(X.rows()); }
    /// Real parts of the eigenvalues, ascending.
    [[nodiscard]] Eigen::VectorXd eigenvalues_real() const;
    [[nodiscard]] double lambda_min() const;
    [[nodiscard]] double lambda_max() const;
};

/// X_ij = sum of line reactances shared by the slack->i and slack->j paths.
SensitivityModel build_x_lindistflow(const Network& net);

/// Throws NumericalError if the reconstruction misses X by more than
/// 1e-10 relative.
EigenDecomposition eig_decompose(const Eigen::MatrixXd& X);

/// Validates X (square, finite, positive definite symmetric part) and
/// fills the decomposition and norm. Throws NotPositiveDefinite.
SensitivityModel make_sensitivity_model(const Eigen::MatrixXd& X);

/// Principal submatrix over the DER nodes of an aggregated fleet.
SensitivityModel reduce_to_der_nodes(const SensitivityModel& model, const DerFleet& fleet);

/// Largest singular value.
double matrix_norm2(const Eigen::MatrixXd& X);

SensitivityModel load_x_matrix(const std::filesystem::path& path);
void write_x_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& X);

}  // namespace vvc
