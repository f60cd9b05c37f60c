#include <specnet/errors.h>
#include <specnet/estimators.h>
#include <specnet/io_util.h>
#include <specnet/training.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace specnet {

void adam_step(Eigen::VectorXd &params, const Eigen::VectorXd &grads,
               AdamState &state, double learning_rate, long long t,
               const AdamConfig &config) {
  if (t < 1)
    throw DomainError("adam_step: t must be at least 1");
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size())
    throw DimensionMismatch("adam_step: parameter, gradient and moment sizes differ");
  state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads;
  state.v = config.beta2 * state.v +
            (1.0 - config.beta2) * grads.array().square().matrix();
  const double c1 = 1.0 - std::pow(config.beta1, double(t));
  const double c2 = 1.0 - std::pow(config.beta2, double(t));
  params.array() -= learning_rate * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + config.epsilon);
}

void TrainConfig::validate(Eigen::Index n) const {
  if (K < 1)
    throw ConfigError("training.K must be at least 1");
  if (static_cast<int>(omega.size()) != K)
    throw ConfigError("training.omega must have K entries");
  for (int i = 0; i < K; ++i) {
    if (!(omega[i] > 0.0))
      throw ConfigError("training.omega entries must be positive");
    if (i > 0 && !(omega[i] < omega[i - 1]))
      throw ConfigError("training.omega must be strictly decreasing");
  }
  if (!(alpha > 0.0))
    throw ConfigError("training.alpha must be positive");
  if (J < 0)
    throw ConfigError("training.J must be non-negative");
  if (B < 2 || B > n)
    throw ConfigError("training.B must lie in [2, n]");
  if (B_eval < 2 || B_eval > n)
    throw ConfigError("training.B_eval must lie in [2, n]");
  if (!(learning_rate > 0.0))
    throw ConfigError("training.learning_rate must be positive");
  if (final_phase_steps < 0)
    throw ConfigError("training.final_phase_steps must be non-negative");
}

NetworkArchitecture TrainConfig::architecture(int input_dim) const {
  std::vector<int> sizes{input_dim};
  sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
  sizes.push_back(1);
  return NetworkArchitecture(sizes);
}

LossDiagnostics penalized_loss(std::span<const BatchEval> evals,
                               const Eigen::VectorXd &weights, double beta,
                               estimators::DiffusionSamples diffusion,
                               std::span<const double> omega, double alpha,
                               std::vector<BatchEval> *adjoints) {
  const auto k = static_cast<Eigen::Index>(evals.size());
  if (k < 1 || static_cast<Eigen::Index>(omega.size()) != k)
    throw DimensionMismatch("penalized_loss: need one omega per network");
  if (weights.size() < 2)
    throw DomainError("penalized_loss: batch needs at least two points");

  LossDiagnostics diag;
  diag.covariance.resize(k, k);
  diag.erq.resize(k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      diag.covariance(i, j) = estimators::ecov(evals[i].values,
                                               evals[j].values, weights);
      diag.covariance(j, i) = diag.covariance(i, j);
    }
  for (Eigen::Index i = 0; i < k; ++i) {
    const double var = diag.covariance(i, i);
    if (var <= estimators::kDefaultVarianceFloor)
      throw DegenerateVariance("network " + std::to_string(i + 1) +
                                   " has degenerate batch variance",
                               var);
    diag.erq[i] =
        estimators::energy(evals[i].grads, diffusion, beta, weights) / var;
    diag.loss += omega[i] * diag.erq[i];
  }
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      const double r = diag.covariance(i, j) - (i == j ? 1.0 : 0.0);
      diag.penalty += r * r;
    }
  diag.loss += alpha * diag.penalty;

  if (adjoints) {
    adjoints->clear();
    for (const auto &e : evals)
      adjoints->push_back({Eigen::VectorXd::Zero(e.values.size()),
                           Eigen::MatrixXd::Zero(e.grads.rows(), e.grads.cols())});
    for (Eigen::Index i = 0; i < k; ++i)
      estimators::erq_vjp(omega[i], evals[i].values, evals[i].grads, diffusion,
                          beta, weights, (*adjoints)[i].values,
                          (*adjoints)[i].grads);
    for (Eigen::Index i = 0; i < k; ++i)
      for (Eigen::Index j = i; j < k; ++j) {
        const double r = diag.covariance(i, j) - (i == j ? 1.0 : 0.0);
        estimators::ecov_vjp(2.0 * alpha * r, evals[i].values, evals[j].values,
                             weights, (*adjoints)[i].values,
                             (*adjoints)[j].values);
      }
  }
  return diag;
}

namespace {

std::vector<BatchEval> evaluate_all(std::span<const NetworkParams> nets,
                                    const Eigen::Ref<const Eigen::MatrixXd> &states,
                                    std::vector<ForwardTrace> *traces = nullptr) {
  std::vector<BatchEval> evals;
  if (traces)
    traces->resize(nets.size());
  for (std::size_t i = 0; i < nets.size(); ++i)
    evals.push_back(
        forward_batch(nets[i], states, traces ? &(*traces)[i] : nullptr));
  return evals;
}

std::vector<Eigen::MatrixXd>
diffusion_samples(const PotentialSpec &potential,
                  const Eigen::Ref<const Eigen::MatrixXd> &states) {
  std::vector<Eigen::MatrixXd> out;
  if (potential.identity_diffusion())
    return out;
  out.reserve(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index p = 0; p < states.cols(); ++p)
    out.push_back(potential.diffusion(states.col(p)));
  return out;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename T>
void apply_permutation(std::vector<T> &items, const std::vector<int> &perm) {
  std::vector<T> out;
  out.reserve(items.size());
  for (int p : perm)
    out.push_back(std::move(items[static_cast<std::size_t>(p)]));
  items = std::move(out);
}

std::vector<int> ascending_order(const Eigen::VectorXd &values) {
  std::vector<int> perm(static_cast<std::size_t>(values.size()));
  std::iota(perm.begin(), perm.end(), 0);
  std::stable_sort(perm.begin(), perm.end(),
                   [&](int a, int b) { return values[a] < values[b]; });
  return perm;
}

} // namespace

LossDiagnostics loss(std::span<const NetworkParams> nets,
                     const Eigen::Ref<const Eigen::MatrixXd> &states,
                     const Eigen::VectorXd &weights,
                     const PotentialSpec &potential,
                     std::span<const double> omega, double alpha) {
  auto evals = evaluate_all(nets, states);
  auto diff = diffusion_samples(potential, states);
  return penalized_loss(evals, weights, potential.beta, diff, omega, alpha);
}

double penalty_C(std::span<const NetworkParams> nets,
                 const Eigen::Ref<const Eigen::MatrixXd> &states,
                 const Eigen::VectorXd &weights) {
  std::vector<Eigen::VectorXd> values;
  for (const auto &net : nets)
    values.push_back(forward_batch(net, states).values);
  double c = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i)
    for (std::size_t j = i; j < values.size(); ++j) {
      const double r = estimators::ecov(values[i], values[j], weights) -
                       (i == j ? 1.0 : 0.0);
      c += r * r;
    }
  return c;
}

EigenpairEstimate estimate_eigenpairs(std::span<const NetworkParams> nets,
                                      const Eigen::Ref<const Eigen::MatrixXd> &states,
                                      const Eigen::VectorXd &weights,
                                      const PotentialSpec &potential) {
  if (weights.size() < 2)
    throw DomainError("estimate_eigenpairs: batch needs at least two points");
  auto diff = diffusion_samples(potential, states);
  EigenpairEstimate est;
  const auto k = static_cast<Eigen::Index>(nets.size());
  est.lambda.resize(k);
  est.mean_shift.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    BatchEval e = forward_batch(nets[i], states);
    est.lambda[i] = estimators::erq(e.values, e.grads, diff, potential.beta,
                                    weights);
    est.mean_shift[i] = estimators::emean(e.values, weights);
  }
  return est;
}

EigenEstimate train(const TrainConfig &config, const WeightedDataset &dataset,
                    const PotentialSpec &potential, TrainObserver *observer) {
  config.validate(dataset.size());
  if (dataset.dim() != potential.dim)
    throw DimensionMismatch("train: dataset dimension does not match potential");
  const int k = config.K;
  const auto arch = config.architecture(dataset.dim());

  std::vector<NetworkParams> nets;
  std::vector<AdamState> moments;
  for (int i = 0; i < k; ++i) {
    nets.push_back(init_params(arch, splitmix64(config.seed * 1315423911ULL +
                                                std::uint64_t(i) + 1)));
    moments.emplace_back(arch.parameter_count());
  }
  Rng rng(splitmix64(config.seed ^ 0x5bd1e995ULL));

  EigenEstimate out;
  out.lambda_trace.resize(config.J, k);
  out.loss_trace.resize(config.J);
  out.penalty_trace.resize(config.J);

  const long long final_start =
      std::max<long long>(0, config.J - config.final_phase_steps);
  Eigen::MatrixXd states;
  Eigen::VectorXd weights;
  std::vector<ForwardTrace> traces;
  std::vector<BatchEval> adjoints;

  for (long long j = 0; j < config.J; ++j) {
    const Eigen::Index b = j >= final_start ? config.B_eval : config.B;
    gather_batch(dataset, draw_minibatch(dataset.size(), b, rng), states,
                 weights);
    auto diff = diffusion_samples(potential, states);
    auto evals = evaluate_all(nets, states, &traces);

    Eigen::VectorXd lambda(k);
    for (int i = 0; i < k; ++i)
      lambda[i] = estimators::erq(evals[i].values, evals[i].grads, diff,
                                  potential.beta, weights);
    if (config.sort_networks && k > 1) {
      const auto perm = ascending_order(lambda);
      apply_permutation(nets, perm);
      apply_permutation(moments, perm);
      apply_permutation(evals, perm);
      apply_permutation(traces, perm);
      Eigen::VectorXd sorted(k);
      for (int i = 0; i < k; ++i)
        sorted[i] = lambda[perm[static_cast<std::size_t>(i)]];
      lambda = sorted;
    }
    out.lambda_trace.row(j) = lambda.transpose();

    LossDiagnostics diag = penalized_loss(evals, weights, potential.beta, diff,
                                          config.omega, config.alpha, &adjoints);
    if (!std::isfinite(diag.loss))
      throw NonFiniteLoss("train: non-finite loss at step " +
                              std::to_string(j + 1),
                          j + 1);
    out.loss_trace[j] = diag.loss;
    out.penalty_trace[j] = diag.penalty;

    for (int i = 0; i < k; ++i) {
      Eigen::VectorXd g = param_gradient(nets[i], traces[i], adjoints[i].values,
                                         adjoints[i].grads);
      adam_step(nets[i].flat, g, moments[i], config.learning_rate, j + 1,
                config.adam);
    }
    if (observer)
      observer->on_step({j + 1, diag.loss, diag.penalty, lambda}, nets);
  }

  gather_batch(dataset, draw_minibatch(dataset.size(), config.B_eval, rng),
               states, weights);
  EigenpairEstimate final_est =
      estimate_eigenpairs(nets, states, weights, potential);
  if (config.J == 0 && config.sort_networks && k > 1) {
    const auto perm = ascending_order(final_est.lambda);
    apply_permutation(nets, perm);
    Eigen::VectorXd l(k), m(k);
    for (int i = 0; i < k; ++i) {
      l[i] = final_est.lambda[perm[static_cast<std::size_t>(i)]];
      m[i] = final_est.mean_shift[perm[static_cast<std::size_t>(i)]];
    }
    final_est = {l, m};
  }
  out.final_batch_lambda = final_est.lambda;
  out.mean_shift = final_est.mean_shift;

  const long long tail_len = config.J - final_start;
  if (tail_len > 0) {
    auto tail = out.lambda_trace.bottomRows(tail_len);
    out.lambda_mean = tail.colwise().mean().transpose();
    out.lambda_std = Eigen::VectorXd::Zero(k);
    if (tail_len > 1) {
      for (int i = 0; i < k; ++i) {
        const double m = out.lambda_mean[i];
        out.lambda_std[i] = std::sqrt(
            (tail.col(i).array() - m).square().sum() / double(tail_len - 1));
      }
    }
  } else {
    out.lambda_mean = final_est.lambda;
    out.lambda_std = Eigen::VectorXd::Zero(k);
  }
  out.networks = std::move(nets);
  if (observer)
    observer->on_finish(out);
  return out;
}

TrainingLogWriter::TrainingLogWriter(const std::filesystem::path &path, int K)
    : out_(path) {
  if (!out_)
    throw FormatError("cannot open training log " + path.string());
  out_ << "step,loss,penalty_C";
  for (int i = 1; i <= K; ++i)
    out_ << ",lambda_" << i;
  out_ << '\n';
}

void TrainingLogWriter::on_step(const StepRecord &record,
                                std::span<const NetworkParams>) {
  out_ << record.step << ',' << io::format_double(record.loss) << ','
       << io::format_double(record.penalty);
  for (Eigen::Index i = 0; i < record.lambda.size(); ++i)
    out_ << ',' << io::format_double(record.lambda[i]);
  out_ << '\n';
  if (record.step % 10 == 0)
    out_.flush();
}

void TrainingLogWriter::on_finish(const EigenEstimate &) { out_.flush(); }

CheckpointWriter::CheckpointWriter(std::filesystem::path directory,
                                   long long interval)
    : dir_(std::move(directory)), interval_(interval) {
  std::filesystem::create_directories(dir_);
}

std::string CheckpointWriter::network_filename(int index) {
  return "network_" + std::to_string(index) + ".eignet";
}

void CheckpointWriter::on_step(const StepRecord &record,
                               std::span<const NetworkParams> nets) {
  if (interval_ <= 0 || record.step % interval_ != 0)
    return;
  auto sub = dir_ / ("step_" + std::to_string(record.step));
  std::filesystem::create_directories(sub);
  for (std::size_t i = 0; i < nets.size(); ++i)
    save_checkpoint(sub / network_filename(static_cast<int>(i) + 1), nets[i]);
}

void CheckpointWriter::on_finish(const EigenEstimate &estimate) {
  for (std::size_t i = 0; i < estimate.networks.size(); ++i)
    save_checkpoint(dir_ / network_filename(static_cast<int>(i) + 1),
                    estimate.networks[i]);
}

void ObserverList::on_step(const StepRecord &record,
                           std::span<const NetworkParams> nets) {
  for (auto *obs : list_)
    obs->on_step(record, nets);
}

void ObserverList::on_finish(const EigenEstimate &estimate) {
  for (auto *obs : list_)
    obs->on_finish(estimate);
}

} // namespace specnet
