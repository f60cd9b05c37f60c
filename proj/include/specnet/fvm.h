#pragma once

#include <specnet/potentials.h>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <filesystem>
#include <string>

namespace specnet::fvm {

struct Rectangle {
  double x_lo = -3.0, x_hi = 3.0, y_lo = -3.0, y_hi = 3.0;
};

/// Uniform cell-centered grid; cell (i, j) has flat index j * nx + i.
class FvmGrid {
public:
  FvmGrid(Rectangle domain, int nx, int ny);

  const Rectangle &domain() const { return domain_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  Eigen::Index cells() const { return Eigen::Index(nx_) * ny_; }
  Eigen::Index index(int i, int j) const { return Eigen::Index(j) * nx_ + i; }
  double center_x(int i) const { return domain_.x_lo + (i + 0.5) * hx_; }
  double center_y(int j) const { return domain_.y_lo + (j + 0.5) * hy_; }

private:
  Rectangle domain_;
  int nx_, ny_;
  double hx_, hy_;
};

/// S = D^{1/2} (-L_h) D^{-1/2} on a five-point stencil, together with the
/// unsymmetrized generator -L_h and the normalized cell weights D = diag(mu).
struct SparseSymmetricOperator {
  FvmGrid grid;
  double beta;
  Eigen::VectorXd potential; // V at cell centers
  Eigen::VectorXd mu;        // sum(mu) = 1
  Eigen::SparseMatrix<double> symmetric;
  Eigen::SparseMatrix<double> generator; // -L_h

  Eigen::Index dim() const { return symmetric.rows(); }
};

/// Flux scheme with geometric-mean face weights and zero flux through the
/// outer boundary. Throws DomainError naming the cell when V or mu is not
/// usable.
SparseSymmetricOperator assemble(const PotentialSpec &potential,
                                 const FvmGrid &grid, double beta);

struct EigenSolverOptions {
  double tol = 1e-8;
  long long max_iterations = 10000; // block operator applications
  double shift = 0.1;               // factor S + shift * I
  int guard_vectors = 3;
  int krylov_blocks = 6;
  std::uint64_t seed = 12345;
};

struct EigenResult {
  Eigen::VectorXd values;         // ascending, includes the ~0 mode
  Eigen::MatrixXd vectors;        // Euclidean-orthonormal eigenvectors of S
  Eigen::MatrixXd eigenfunctions; // D^{-1/2} vectors, mu-orthonormal
  Eigen::VectorXd residuals;      // ||S v - lambda v||
  long long iterations = 0;
};

/// k smallest eigenpairs by restarted block shift-invert Krylov iteration
/// with a Rayleigh-Ritz projection on S. The mode with the largest |phi| is
/// made positive. Throws NonConvergence with the attained residuals.
EigenResult smallest_eigenpairs(const SparseSymmetricOperator &op, int k,
                                const EigenSolverOptions &options = {});

/// Dense reference solver, limited to dim <= 5000.
EigenResult smallest_eigenpairs_dense(const SparseSymmetricOperator &op, int k);

/// Tabulated eigenfunctions on a grid plus bilinear interpolation between
/// cell centers.
class EigenfunctionTable {
public:
  EigenfunctionTable(FvmGrid grid, Eigen::MatrixXd values);

  struct Sample {
    double value;
    Eigen::Vector2d gradient;
    bool clamped; // point lay outside the rectangle
  };

  const FvmGrid &grid() const { return grid_; }
  Eigen::Index functions() const { return values_.cols(); }
  const Eigen::MatrixXd &values() const { return values_; }

  Sample interpolate(double x, double y, Eigen::Index column) const;

  /// Interpolates every column of a 2 x B state matrix; returns how many
  /// points were clamped.
  Eigen::Index interpolate_batch(const Eigen::Ref<const Eigen::MatrixXd> &states,
                                 Eigen::Index column, Eigen::VectorXd &values,
                                 Eigen::MatrixXd &grads) const;

  /// Rows "x,y,phi_1,...,phi_k".
  void write_csv(const std::filesystem::path &path) const;

private:
  FvmGrid grid_;
  Eigen::MatrixXd values_; // cells x k
};

/// Reads a table written by write_csv; the grid is inferred from the rows.
EigenfunctionTable read_table_csv(const std::filesystem::path &path);

/// Rows "index,lambda,residual" for indices 1..size.
void write_eigenvalue_report(const std::filesystem::path &path,
                             const Eigen::VectorXd &values,
                             const Eigen::VectorXd &residuals);

} // namespace specnet::fvm
