#include <specnet/errors.h>
#include <specnet/potentials.h>

#include <cmath>
#include <numbers>
#include <string>

namespace specnet {

Matrix PotentialSpec::diffusion_at(ConstVectorRef x) const {
  if (diffusion)
    return diffusion(x);
  return Matrix::Identity(dim, dim);
}

namespace potentials {

namespace {
constexpr double pi = std::numbers::pi;

void require_dim(ConstVectorRef x, int expected, const char *who) {
  if (x.size() != expected)
    throw DimensionMismatch(std::string(who) + ": expected dimension " +
                            std::to_string(expected) + ", got " +
                            std::to_string(x.size()));
}
} // namespace

double wrap_angle(double theta) {
  double t = std::fmod(theta + pi, 2.0 * pi);
  if (t < 0.0)
    t += 2.0 * pi;
  double wrapped = t - pi;
  if (wrapped >= pi)
    wrapped -= 2.0 * pi;
  return wrapped;
}

double polar_angle(double x1, double x2) {
  if (x1 == 0.0 && x2 == 0.0)
    return 0.0;
  return wrap_angle(std::atan2(x2, x1));
}

double v_angle(double theta) {
  if (!(theta >= -pi && theta < pi))
    throw DomainError("v_angle: theta must lie in [-pi, pi), got " +
                      std::to_string(theta));
  if (theta < -pi / 3.0) {
    const double u = 3.0 * theta / pi + 1.0;
    const double s = 1.0 - u * u;
    return s * s;
  }
  if (theta < pi / 3.0)
    return (3.0 - 2.0 * std::cos(3.0 * theta)) / 5.0;
  const double u = 3.0 * theta / pi - 1.0;
  const double s = 1.0 - u * u;
  return s * s;
}

double v_angle_derivative(double theta) {
  if (!(theta >= -pi && theta < pi))
    throw DomainError("v_angle_derivative: theta must lie in [-pi, pi)");
  if (theta < -pi / 3.0 || theta >= pi / 3.0) {
    const double u = theta < 0.0 ? 3.0 * theta / pi + 1.0
                                 : 3.0 * theta / pi - 1.0;
    return 2.0 * (1.0 - u * u) * (-2.0 * u) * (3.0 / pi);
  }
  return 1.2 * std::sin(3.0 * theta);
}

double v2(double x1, double x2) {
  const double r = std::hypot(x1, x2);
  const double theta = polar_angle(x1, x2);
  return v_angle(theta) + 2.0 * (r - 1.0) * (r - 1.0) +
         5.0 * std::exp(-5.0 * r * r);
}

Eigen::Vector2d grad_v2(double x1, double x2) {
  const double r2 = x1 * x1 + x2 * x2;
  if (r2 == 0.0)
    return Eigen::Vector2d::Zero();
  const double r = std::sqrt(r2);
  const double theta = polar_angle(x1, x2);
  // d/dr of 2(r-1)^2 + 5 exp(-5 r^2)
  const double dradial = 4.0 * (r - 1.0) - 50.0 * r * std::exp(-5.0 * r2);
  const double dangle = v_angle_derivative(theta);
  return {dradial * x1 / r - dangle * x2 / r2,
          dradial * x2 / r + dangle * x1 / r2};
}

double vd(ConstVectorRef x) {
  if (x.size() < 2)
    throw DimensionMismatch("vd: dimension must be at least 2");
  return v2(x[0], x[1]) + 2.0 * x.tail(x.size() - 2).squaredNorm();
}

Vector grad_vd(ConstVectorRef x) {
  if (x.size() < 2)
    throw DimensionMismatch("grad_vd: dimension must be at least 2");
  Vector g = 4.0 * x;
  g.head<2>() = grad_v2(x[0], x[1]);
  return g;
}

PotentialSpec custom(std::string id, int dim, double beta,
                     std::function<double(ConstVectorRef)> value,
                     std::function<Vector(ConstVectorRef)> gradient,
                     std::function<Matrix(ConstVectorRef)> diffusion) {
  if (dim < 1)
    throw DomainError("potential dimension must be positive");
  if (!(beta > 0.0))
    throw DomainError("inverse temperature must be positive");
  PotentialSpec spec;
  spec.id = std::move(id);
  spec.dim = dim;
  spec.beta = beta;
  spec.value = std::move(value);
  spec.gradient = std::move(gradient);
  spec.diffusion = std::move(diffusion);
  return spec;
}

PotentialSpec make(const std::string &id, int dim, double beta) {
  if (id == "v2") {
    if (dim != 2)
      throw DimensionMismatch("potential v2 is two-dimensional");
    return custom(
        id, 2, beta,
        [](ConstVectorRef x) {
          require_dim(x, 2, "v2");
          return v2(x[0], x[1]);
        },
        [](ConstVectorRef x) -> Vector {
          require_dim(x, 2, "grad_v2");
          return grad_v2(x[0], x[1]);
        });
  }
  if (id == "vd") {
    if (dim < 2)
      throw DimensionMismatch("potential vd needs dim >= 2");
    return custom(
        id, dim, beta,
        [dim](ConstVectorRef x) {
          require_dim(x, dim, "vd");
          return vd(x);
        },
        [dim](ConstVectorRef x) {
          require_dim(x, dim, "grad_vd");
          return grad_vd(x);
        });
  }
  if (id == "quadratic2d") {
    if (dim != 2)
      throw DimensionMismatch("potential quadratic2d is two-dimensional");
    return custom(
        id, 2, beta,
        [](ConstVectorRef x) {
          require_dim(x, 2, "quadratic2d");
          return 2.0 * x.squaredNorm();
        },
        [](ConstVectorRef x) -> Vector {
          require_dim(x, 2, "quadratic2d");
          return 4.0 * x;
        });
  }
  if (id == "zero2d") {
    if (dim != 2)
      throw DimensionMismatch("potential zero2d is two-dimensional");
    return custom(
        id, 2, beta,
        [](ConstVectorRef x) {
          require_dim(x, 2, "zero2d");
          return 0.0;
        },
        [](ConstVectorRef x) -> Vector {
          require_dim(x, 2, "zero2d");
          return Vector::Zero(2);
        });
  }
  throw DomainError("unknown potential id '" + id + "'");
}

} // namespace potentials
} // namespace specnet
