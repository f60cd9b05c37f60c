#pragma once

#include <specnet/potentials.h>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

namespace specnet {

/// Layer sizes (N_0, ..., N_L), L >= 1.
class NetworkArchitecture {
public:
  NetworkArchitecture() = default;
  explicit NetworkArchitecture(std::vector<int> layer_sizes);

  const std::vector<int> &layer_sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  /// Sum over layers of N_l (N_{l-1} + 1).
  Eigen::Index parameter_count() const { return offsets_.back(); }
  /// Offset of A_l (row-major) in the flat parameter vector; b_l follows.
  Eigen::Index weight_offset(int layer) const { return offsets_[layer - 1]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer - 1] +
           static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer - 1];
  }

  bool operator==(const NetworkArchitecture &) const = default;

private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
};

/// Componentwise activation with first and second derivatives. The second
/// derivative is needed to differentiate spatial gradients with respect to
/// the parameters.
struct Activation {
  double (*value)(double) = nullptr;
  double (*derivative)(double) = nullptr;
  double (*second_derivative)(double) = nullptr;
  bool is_tanh = false;

  static Activation tanh();
};

using RowMajorMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>;

/// Parameters (A_l, b_l) stored contiguously, layers in order, A_l
/// row-major followed by b_l.
struct NetworkParams {
  NetworkArchitecture arch;
  Eigen::VectorXd flat;
  Activation activation = Activation::tanh();

  NetworkParams() = default;
  explicit NetworkParams(NetworkArchitecture a);

  RowMajorMap weight(int layer);
  ConstRowMajorMap weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
};

double realize(const NetworkParams &net, ConstVectorRef x);

struct ValueAndGrad {
  double value;
  Eigen::VectorXd grad;
};
ValueAndGrad realize_with_spatial_grad(const NetworkParams &net,
                                       ConstVectorRef x);

/// Stored activations of a batch forward pass (points are columns).
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs; // h^{(0)}, ..., h^{(L-1)}
  std::vector<Eigen::MatrixXd> d1;     // rho'(z^{(l)}), l = 1..L-1
  std::vector<Eigen::MatrixXd> d2;     // rho''(z^{(l)}), l = 1..L-1
};

/// Values (B) and spatial gradients (d x B) of one network over a batch.
struct BatchEval {
  Eigen::VectorXd values;
  Eigen::MatrixXd grads;
};

/// Evaluates values and spatial gradients for all columns of `states`,
/// optionally recording the trace needed by `param_gradient`.
BatchEval forward_batch(const NetworkParams &net,
                        const Eigen::Ref<const Eigen::MatrixXd> &states,
                        ForwardTrace *trace = nullptr);

/// Parameter gradient of sum_p (value_adj_p * y_p + grad_adj_p . grad_x y_p)
/// for the batch recorded in `trace`.
Eigen::VectorXd param_gradient(const NetworkParams &net,
                               const ForwardTrace &trace,
                               const Eigen::Ref<const Eigen::VectorXd> &value_adj,
                               const Eigen::Ref<const Eigen::MatrixXd> &grad_adj);

/// Adjoints of a scalar loss with respect to each network's per-point values
/// and spatial gradients.
struct LossWithAdjoints {
  double loss = 0.0;
  std::vector<BatchEval> adjoints;
};

/// Any scalar built from batch estimators of the networks' values and spatial
/// gradients, returning its value and its adjoints.
using LossFunctional = std::function<LossWithAdjoints(
    std::span<const BatchEval> evals, const Eigen::VectorXd &weights)>;

struct LossGradient {
  double loss = 0.0;
  std::vector<Eigen::VectorXd> grads; // one per network
};

LossGradient batch_loss_param_gradient(std::span<const NetworkParams> nets,
                                       const Eigen::Ref<const Eigen::MatrixXd> &states,
                                       const Eigen::VectorXd &weights,
                                       const LossFunctional &loss);

enum class InitScheme {
  /// A_l entries uniform on [-1/sqrt(N_{l-1}), 1/sqrt(N_{l-1})], b_l = 0.
  UniformFanIn,
};

NetworkParams init_params(const NetworkArchitecture &arch, std::uint64_t seed,
                          InitScheme scheme = InitScheme::UniformFanIn);

// EIGNET v1 checkpoint: header line with the architecture, then the flat
// parameter vector as little-endian doubles.
void save_checkpoint(const std::filesystem::path &path,
                     const NetworkParams &net);
NetworkParams load_checkpoint(const std::filesystem::path &path);

} // namespace specnet
