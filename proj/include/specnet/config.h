#pragma once

#include <specnet/fvm.h>
#include <specnet/training.h>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace specnet {

struct PotentialConfig {
  std::string id = "v2";
  int dim = 2;
  double beta = 1.0;
};

struct HistogramConfig {
  std::vector<double> range{-3.0, 3.0, -3.0, 3.0};
  std::vector<int> bins{100, 100};
};

struct SamplingConfig {
  double dt = 1e-3;
  long long n = 1000000;
  std::uint64_t seed = 1;
  long long burn_in = 0;
  std::vector<double> x0; // empty: (1, 0, ..., 0)
  HistogramConfig histogram;
  bool export_csv = false;
};

/// Samples at a different inverse temperature and reweights to the target.
struct ReweightingConfig {
  double sampling_beta = 1.0;
};

struct TrainingSection {
  TrainConfig train;
  long long checkpoint_interval = 1000;
  std::string dataset; // empty: <output>/data.eigdata
};

struct FvmConfig {
  std::vector<double> domain{-3.0, 3.0, -3.0, 3.0};
  int nx = 400;
  int ny = 400;
  int k = 3;
  double tol = 1e-8;
  long long max_iterations = 10000;
  double shift = 0.1;
};

struct EvalGridConfig {
  std::vector<double> domain{-3.0, 3.0, -3.0, 3.0};
  int nx = 101;
  int ny = 101;
};

struct EvalConfig {
  std::vector<std::string> checkpoints; // empty: <output>/network_<i>.eignet
  std::string dataset;                  // empty: <output>/data.eigdata
  std::string reference;                // empty: <output>/fvm_eigenfunctions.csv if present
  long long batch_size = 20000;
  std::uint64_t seed = 7;
  EvalGridConfig grid;
};

struct ExperimentConfig {
  PotentialConfig potential;
  SamplingConfig sampling;
  std::optional<ReweightingConfig> reweighting;
  TrainingSection training;
  FvmConfig fvm;
  EvalConfig eval;
  std::string output = "run";
};

/// Parses a JSON document; unknown keys and malformed values raise
/// ConfigError. Missing keys take the defaults above.
ExperimentConfig parse_config(const nlohmann::json &doc);
ExperimentConfig load_config(const std::filesystem::path &path);

/// Full document with every default expanded.
nlohmann::json to_json(const ExperimentConfig &config);

/// Applies a --seed override to every seeded section.
void override_seed(ExperimentConfig &config, std::uint64_t seed);

/// Fills defaults that depend on other fields: x0 and the input paths that
/// default to files inside the output directory.
void resolve_defaults(ExperimentConfig &config);

} // namespace specnet
