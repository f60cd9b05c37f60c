#pragma once

#include <specnet/potentials.h>

#include <Eigen/Dense>

#include <span>

namespace specnet::estimators {

using ConstValues = Eigen::Ref<const Eigen::VectorXd>;
/// Spatial gradients, one column per batch point (d x B).
using ConstGrads = Eigen::Ref<const Eigen::MatrixXd>;
using ValuesAdjoint = Eigen::Ref<Eigen::VectorXd>;
using GradsAdjoint = Eigen::Ref<Eigen::MatrixXd>;
/// a(x) at each batch point; an empty span means a = I.
using DiffusionSamples = std::span<const Eigen::MatrixXd>;

inline constexpr double kDefaultVarianceFloor = 1e-12;

/// Self-normalized weighted mean sum(f w) / sum(w).
double emean(ConstValues values, ConstValues weights);

/// Weighted covariance E(fg) - E(f)E(g), evaluated in centered form.
/// Requires at least two points.
double ecov(ConstValues f, ConstValues g, ConstValues weights);
double evar(ConstValues f, ConstValues weights);

/// (1/beta) E((a grad f) . grad f).
double energy(ConstGrads grads, DiffusionSamples diffusion, double beta,
              ConstValues weights);

/// Rayleigh quotient energy / variance. Throws DegenerateVariance when the
/// variance is at or below `variance_floor`.
double erq(ConstValues values, ConstGrads grads, DiffusionSamples diffusion,
           double beta, ConstValues weights,
           double variance_floor = kDefaultVarianceFloor);

/// F_{jj'} = (1/beta) E((a grad f_j) . grad f_j'), symmetrized.
Eigen::MatrixXd f_matrix(std::span<const Eigen::MatrixXd> grads,
                         DiffusionSamples diffusion, double beta,
                         ConstValues weights);

// Vector-Jacobian products. Each adds `upstream` times the derivative of the
// estimator with respect to the per-point values (or spatial gradients) to
// the supplied adjoint buffers. Weights are treated as constants.

void emean_vjp(double upstream, ConstValues weights, ValuesAdjoint values_adj);
void ecov_vjp(double upstream, ConstValues f, ConstValues g,
              ConstValues weights, ValuesAdjoint f_adj, ValuesAdjoint g_adj);
void energy_vjp(double upstream, ConstGrads grads, DiffusionSamples diffusion,
                double beta, ConstValues weights, GradsAdjoint grads_adj);
void erq_vjp(double upstream, ConstValues values, ConstGrads grads,
             DiffusionSamples diffusion, double beta, ConstValues weights,
             ValuesAdjoint values_adj, GradsAdjoint grads_adj,
             double variance_floor = kDefaultVarianceFloor);

} // namespace specnet::estimators
