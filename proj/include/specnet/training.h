#pragma once

#include <specnet/estimators.h>
#include <specnet/network.h>
#include <specnet/potentials.h>
#include <specnet/sampling.h>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <vector>

namespace specnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment estimates for one parameter vector.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;

  explicit AdamState(Eigen::Index n = 0)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One bias-corrected Adam update at step t >= 1.
void adam_step(Eigen::VectorXd &params, const Eigen::VectorXd &grads,
               AdamState &state, double learning_rate, long long t,
               const AdamConfig &config = {});

struct TrainConfig {
  int K = 1;
  std::vector<double> omega{1.0};
  double alpha = 20.0;
  long long J = 1000;
  Eigen::Index B = 5000;
  Eigen::Index B_eval = 20000;
  double learning_rate = 5e-3;
  std::uint64_t seed = 0;
  bool sort_networks = true;
  AdamConfig adam;
  long long final_phase_steps = 100;
  std::vector<int> hidden_layers{20, 20, 20};

  /// Throws ConfigError unless omega is positive and strictly decreasing,
  /// alpha > 0 and 2 <= B, B_eval <= n.
  void validate(Eigen::Index n) const;
  NetworkArchitecture architecture(int input_dim) const;
};

/// Batch statistics entering the penalized loss.
struct LossDiagnostics {
  double loss = 0.0;
  double penalty = 0.0;          // sum_{i<=j} (Ecov_ij - delta_ij)^2
  Eigen::VectorXd erq;           // per network
  Eigen::MatrixXd covariance;    // K x K
};

/// Penalized loss sum_i omega_i ERQ_i + alpha * penalty on precomputed batch
/// evaluations. When `adjoints` is non-null it receives d loss / d values and
/// d loss / d spatial gradients for each network.
LossDiagnostics penalized_loss(std::span<const BatchEval> evals,
                               const Eigen::VectorXd &weights, double beta,
                               estimators::DiffusionSamples diffusion,
                               std::span<const double> omega, double alpha,
                               std::vector<BatchEval> *adjoints = nullptr);

/// Convenience wrapper: evaluates the networks on `states` (d x B) first.
LossDiagnostics loss(std::span<const NetworkParams> nets,
                     const Eigen::Ref<const Eigen::MatrixXd> &states,
                     const Eigen::VectorXd &weights,
                     const PotentialSpec &potential,
                     std::span<const double> omega, double alpha);

/// Unscaled constraint residual sum_{i<=j} (Ecov_ij - delta_ij)^2.
double penalty_C(std::span<const NetworkParams> nets,
                 const Eigen::Ref<const Eigen::MatrixXd> &states,
                 const Eigen::VectorXd &weights);

/// lambda_i = ERQ of network i on the batch, m_i = its weighted mean. The
/// centered eigenfunction is x -> realize(net_i, x) - m_i.
struct EigenpairEstimate {
  Eigen::VectorXd lambda;
  Eigen::VectorXd mean_shift;
};
EigenpairEstimate estimate_eigenpairs(std::span<const NetworkParams> nets,
                                      const Eigen::Ref<const Eigen::MatrixXd> &states,
                                      const Eigen::VectorXd &weights,
                                      const PotentialSpec &potential);

struct EigenEstimate {
  Eigen::MatrixXd lambda_trace; // J x K, after the optional sort
  Eigen::VectorXd loss_trace;
  Eigen::VectorXd penalty_trace;
  Eigen::VectorXd lambda_mean;  // over the final phase
  Eigen::VectorXd lambda_std;   // sample standard deviation
  Eigen::VectorXd final_batch_lambda;
  Eigen::VectorXd mean_shift;   // on the final evaluation batch
  std::vector<NetworkParams> networks;
};

struct StepRecord {
  long long step = 0; // 1-based
  double loss = 0.0;
  double penalty = 0.0;
  Eigen::VectorXd lambda;
};

class TrainObserver {
public:
  virtual ~TrainObserver() = default;
  virtual void on_step(const StepRecord &record,
                       std::span<const NetworkParams> nets) = 0;
  virtual void on_finish(const EigenEstimate &) {}
};

/// Minibatch training of K networks with Adam.
EigenEstimate train(const TrainConfig &config, const WeightedDataset &dataset,
                    const PotentialSpec &potential,
                    TrainObserver *observer = nullptr);

/// CSV log "step,loss,penalty_C,lambda_1..lambda_K", flushed every 10 steps.
class TrainingLogWriter : public TrainObserver {
public:
  TrainingLogWriter(const std::filesystem::path &path, int K);
  void on_step(const StepRecord &record,
               std::span<const NetworkParams> nets) override;
  void on_finish(const EigenEstimate &) override;

private:
  std::ofstream out_;
};

/// Writes one EIGNET file per network every `interval` steps into
/// <dir>/step_<j>/ and at termination into <dir>/.
class CheckpointWriter : public TrainObserver {
public:
  CheckpointWriter(std::filesystem::path directory, long long interval);
  void on_step(const StepRecord &record,
               std::span<const NetworkParams> nets) override;
  void on_finish(const EigenEstimate &estimate) override;

  static std::string network_filename(int index);

private:
  std::filesystem::path dir_;
  long long interval_;
};

/// Fans out to several observers in order.
class ObserverList : public TrainObserver {
public:
  void add(TrainObserver *obs) { list_.push_back(obs); }
  void on_step(const StepRecord &record,
               std::span<const NetworkParams> nets) override;
  void on_finish(const EigenEstimate &estimate) override;

private:
  std::vector<TrainObserver *> list_;
};

} // namespace specnet
