#pragma once

#include <specnet/config.h>

#include <filesystem>
#include <iosfwd>

namespace specnet::commands {

// Each command resolves defaults, writes its outputs under the configured
// output directory through temporary names, and finally writes
// <command>_resolved_config.json. Errors propagate as exceptions.

/// data.eigdata, histogram.csv (and data.csv when requested).
void sample(ExperimentConfig config, std::ostream &log);

/// fvm_eigenvalues.csv and fvm_eigenfunctions.csv for the k nontrivial modes.
void fvm(ExperimentConfig config, std::ostream &log);

/// training_log.csv, network_<i>.eignet, checkpoints/, train_report.json.
void train(ExperimentConfig config, std::ostream &log);

/// nn_eigenfunctions.csv on the reference (or configured) grid and
/// eval_report.json with ERQ, orthonormality and, when a reference table
/// is available, sign-aligned L2(mu) differences.
void eval(ExperimentConfig config, std::ostream &log);

/// aligned.csv and align_report.json for one configuration file.
void align(const std::filesystem::path &input,
           const std::filesystem::path &reference,
           const std::filesystem::path &output_dir, std::ostream &log);

} // namespace specnet::commands
