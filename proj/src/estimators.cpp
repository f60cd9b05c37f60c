#include <specnet/errors.h>
#include <specnet/estimators.h>

#include <string>

namespace specnet::estimators {

namespace {

void check_batch(ConstValues values, ConstValues weights, Eigen::Index min_b,
                 const char *who) {
  if (values.size() != weights.size())
    throw DimensionMismatch(std::string(who) +
                            ": values and weights differ in length");
  if (values.size() < min_b)
    throw DomainError(std::string(who) + ": batch needs at least " +
                      std::to_string(min_b) + " points");
}

void check_grads(ConstGrads grads, DiffusionSamples diffusion,
                 ConstValues weights, const char *who) {
  if (grads.cols() != weights.size())
    throw DimensionMismatch(std::string(who) +
                            ": gradients and weights differ in batch size");
  if (!diffusion.empty() &&
      static_cast<Eigen::Index>(diffusion.size()) != weights.size())
    throw DimensionMismatch(std::string(who) +
                            ": diffusion samples and weights differ");
  if (weights.size() < 1)
    throw DomainError(std::string(who) + ": empty batch");
}

// Per-point (a g) for one column.
Eigen::VectorXd apply_diffusion(DiffusionSamples diffusion, ConstGrads grads,
                                Eigen::Index p) {
  if (diffusion.empty())
    return grads.col(p);
  return diffusion[static_cast<std::size_t>(p)] * grads.col(p);
}

} // namespace

double emean(ConstValues values, ConstValues weights) {
  check_batch(values, weights, 1, "emean");
  return values.dot(weights) / weights.sum();
}

double ecov(ConstValues f, ConstValues g, ConstValues weights) {
  check_batch(f, weights, 2, "ecov");
  check_batch(g, weights, 2, "ecov");
  const double wsum = weights.sum();
  const double mf = f.dot(weights) / wsum;
  const double mg = g.dot(weights) / wsum;
  return ((f.array() - mf) * (g.array() - mg) * weights.array()).sum() / wsum;
}

double evar(ConstValues f, ConstValues weights) { return ecov(f, f, weights); }

double energy(ConstGrads grads, DiffusionSamples diffusion, double beta,
              ConstValues weights) {
  check_grads(grads, diffusion, weights, "energy");
  Eigen::VectorXd integrand(weights.size());
  if (diffusion.empty()) {
    integrand = grads.colwise().squaredNorm().transpose();
  } else {
    for (Eigen::Index p = 0; p < weights.size(); ++p)
      integrand[p] = apply_diffusion(diffusion, grads, p).dot(grads.col(p));
  }
  return integrand.dot(weights) / (weights.sum() * beta);
}

double erq(ConstValues values, ConstGrads grads, DiffusionSamples diffusion,
           double beta, ConstValues weights, double variance_floor) {
  const double var = evar(values, weights);
  if (var <= variance_floor)
    throw DegenerateVariance("erq: batch variance " + std::to_string(var) +
                                 " is at or below the floor",
                             var);
  return energy(grads, diffusion, beta, weights) / var;
}

Eigen::MatrixXd f_matrix(std::span<const Eigen::MatrixXd> grads,
                         DiffusionSamples diffusion, double beta,
                         ConstValues weights) {
  const auto k = static_cast<Eigen::Index>(grads.size());
  if (k < 1)
    throw DomainError("f_matrix: need at least one function");
  for (const auto &g : grads)
    check_grads(g, diffusion, weights, "f_matrix");
  const double scale = 1.0 / (weights.sum() * beta);
  Eigen::MatrixXd f(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto &gj = grads[static_cast<std::size_t>(j)];
    Eigen::MatrixXd agj(gj.rows(), gj.cols());
    for (Eigen::Index p = 0; p < weights.size(); ++p)
      agj.col(p) = apply_diffusion(diffusion, gj, p);
    for (Eigen::Index jj = 0; jj < k; ++jj) {
      const auto &gjj = grads[static_cast<std::size_t>(jj)];
      f(j, jj) = (agj.array() * gjj.array()).colwise().sum().matrix().dot(
                     weights.transpose()) *
                 scale;
    }
  }
  return 0.5 * (f + f.transpose());
}

void emean_vjp(double upstream, ConstValues weights, ValuesAdjoint values_adj) {
  values_adj += (upstream / weights.sum()) * weights;
}

void ecov_vjp(double upstream, ConstValues f, ConstValues g,
              ConstValues weights, ValuesAdjoint f_adj, ValuesAdjoint g_adj) {
  const double wsum = weights.sum();
  const double mf = f.dot(weights) / wsum;
  const double mg = g.dot(weights) / wsum;
  const double s = upstream / wsum;
  // The mean terms drop out because sum(w (g - mg)) = 0.
  f_adj.array() += s * weights.array() * (g.array() - mg);
  g_adj.array() += s * weights.array() * (f.array() - mf);
}

void energy_vjp(double upstream, ConstGrads grads, DiffusionSamples diffusion,
                double beta, ConstValues weights, GradsAdjoint grads_adj) {
  check_grads(grads, diffusion, weights, "energy_vjp");
  const double s = upstream / (weights.sum() * beta);
  for (Eigen::Index p = 0; p < weights.size(); ++p) {
    if (diffusion.empty()) {
      grads_adj.col(p) += (2.0 * s * weights[p]) * grads.col(p);
    } else {
      const auto &a = diffusion[static_cast<std::size_t>(p)];
      grads_adj.col(p) += (s * weights[p]) * ((a + a.transpose()) * grads.col(p));
    }
  }
}

void erq_vjp(double upstream, ConstValues values, ConstGrads grads,
             DiffusionSamples diffusion, double beta, ConstValues weights,
             ValuesAdjoint values_adj, GradsAdjoint grads_adj,
             double variance_floor) {
  const double var = evar(values, weights);
  if (var <= variance_floor)
    throw DegenerateVariance("erq_vjp: batch variance is at or below the floor",
                             var);
  const double e = energy(grads, diffusion, beta, weights);
  energy_vjp(upstream / var, grads, diffusion, beta, weights, grads_adj);
  ecov_vjp(-upstream * e / (var * var), values, values, weights, values_adj,
           values_adj);
}

} // namespace specnet::estimators
