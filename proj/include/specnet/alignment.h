#pragma once

#include <Eigen/Dense>

#include <filesystem>

namespace specnet::alignment {

/// m points in R^3, one per row.
using Configuration = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct AlignmentResult {
  Configuration aligned;
  /// Row-vector convention: aligned_i = (x_i - translation) * rotation.
  Eigen::Matrix3d rotation;
  Eigen::RowVector3d translation;
  double rmsd;
};

/// Optimal proper rotation and translation of `x` onto `ref` (Kabsch).
/// The reference must not be collinear; equal point counts are required.
AlignmentResult kabsch_align(const Configuration &x, const Configuration &ref);

/// Root mean squared deviation without any alignment.
double rmsd(const Configuration &x, const Configuration &ref);

/// Rows "x,y,z", optional header line starting with a letter.
Configuration read_configuration_csv(const std::filesystem::path &path);
void write_configuration_csv(const std::filesystem::path &path,
                             const Configuration &x);

/// Flattens (x_1, ..., x_m) into a 3m vector, point-major.
Eigen::VectorXd flatten(const Configuration &x);

} // namespace specnet::alignment
