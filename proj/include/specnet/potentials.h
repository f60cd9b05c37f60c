#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace specnet {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using ConstVectorRef = Eigen::Ref<const Eigen::VectorXd>;

/// Coefficient data of the generator
///   L f = (1/beta) e^{beta V} div(e^{-beta V} a grad f).
/// `diffusion` may be left empty, meaning a(x) = I.
struct PotentialSpec {
  std::string id;
  int dim = 0;
  double beta = 1.0;
  std::function<double(ConstVectorRef)> value;
  std::function<Vector(ConstVectorRef)> gradient;
  std::function<Matrix(ConstVectorRef)> diffusion;

  bool identity_diffusion() const { return !diffusion; }
  Matrix diffusion_at(ConstVectorRef x) const;
};

namespace potentials {

/// Three-branch double-well angular profile on [-pi, pi).
/// Throws DomainError outside that interval.
double v_angle(double theta);
double v_angle_derivative(double theta);

/// Reduces an arbitrary angle onto [-pi, pi).
double wrap_angle(double theta);

/// Polar angle with atan2(0, 0) = 0.
double polar_angle(double x1, double x2);

double v2(double x1, double x2);
Eigen::Vector2d grad_v2(double x1, double x2);

/// V2 in the first two coordinates plus 2 * sum_{i>=3} x_i^2.
double vd(ConstVectorRef x);
Vector grad_vd(ConstVectorRef x);

/// Built-in potentials: "v2", "vd" (needs dim >= 2), "quadratic2d"
/// (V = 2|x|^2), "zero2d".
PotentialSpec make(const std::string &id, int dim, double beta);

/// Wraps user-supplied evaluators; diffusion may be empty.
PotentialSpec custom(std::string id, int dim, double beta,
                     std::function<double(ConstVectorRef)> value,
                     std::function<Vector(ConstVectorRef)> gradient,
                     std::function<Matrix(ConstVectorRef)> diffusion = {});

} // namespace potentials
} // namespace specnet
