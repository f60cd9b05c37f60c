#pragma once

#include <specnet/potentials.h>

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace specnet {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Rng = std::mt19937_64;

struct DatasetMeta {
  std::string potential_id;
  double beta = 1.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string bias = "none";
};

/// Sampled states (one per row) together with positive importance weights.
struct WeightedDataset {
  RowMatrix states;
  Vector weights;
  DatasetMeta meta;

  Eigen::Index size() const { return states.rows(); }
  int dim() const { return static_cast<int>(states.cols()); }
  /// Throws DomainError when a weight is non-positive or non-finite, or the
  /// arrays disagree in length.
  void validate() const;
};

/// Indices into a dataset, repetitions allowed. Zero-based.
struct Minibatch {
  std::vector<Eigen::Index> indices;
  Eigen::Index size() const {
    return static_cast<Eigen::Index>(indices.size());
  }
};

/// x_l = x_{l-1} - grad V(x_{l-1}) dt + sqrt(2 dt / beta) eta_l.
/// The first `burn_in` steps are discarded; the returned dataset holds the
/// following n states with unit weights. Throws DivergedTrajectory on a
/// non-finite state.
WeightedDataset euler_maruyama(const PotentialSpec &potential,
                               ConstVectorRef x0, double dt, Eigen::Index n,
                               std::uint64_t seed, Eigen::Index burn_in = 0);

struct ReweightResult {
  WeightedDataset dataset;
  /// Number of weights clamped up from zero.
  Eigen::Index underflow_count = 0;
};

/// Sets weights proportional to exp(log_ratio(x)), normalized to mean one.
ReweightResult reweight(const WeightedDataset &dataset,
                        const std::function<double(ConstVectorRef)> &log_ratio);

/// B indices drawn uniformly with replacement from [0, n).
Minibatch draw_minibatch(Eigen::Index n, Eigen::Index batch_size, Rng &rng);

/// Gathers the batch states as columns of a d x B matrix, and their weights.
void gather_batch(const WeightedDataset &dataset, const Minibatch &batch,
                  Matrix &states, Vector &weights);

// EIGDATA v1 container: one header line then little-endian doubles,
// row-major states followed by the weights.
void save_dataset(const std::filesystem::path &path,
                  const WeightedDataset &dataset);
WeightedDataset load_dataset(const std::filesystem::path &path);
void export_dataset_csv(const std::filesystem::path &path,
                        const WeightedDataset &dataset);

/// Weighted 2-D histogram of the first two coordinates, normalized to a
/// probability density. Rows are "x1,x2,density" at bin centers.
struct Histogram2d {
  double x_lo, x_hi, y_lo, y_hi;
  int bins_x, bins_y;
  Eigen::MatrixXd density; // bins_x x bins_y
  double outside_mass = 0.0;
};
Histogram2d histogram2d(const WeightedDataset &dataset, double x_lo,
                        double x_hi, double y_lo, double y_hi, int bins_x,
                        int bins_y);
void write_histogram_csv(const std::filesystem::path &path,
                         const Histogram2d &hist);

} // namespace specnet
