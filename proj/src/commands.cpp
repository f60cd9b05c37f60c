#include <specnet/alignment.h>
#include <specnet/commands.h>
#include <specnet/errors.h>
#include <specnet/estimators.h>
#include <specnet/fvm.h>
#include <specnet/io_util.h>
#include <specnet/potentials.h>
#include <specnet/sampling.h>
#include <specnet/training.h>

#include <cmath>
#include <fstream>
#include <ostream>

namespace specnet::commands {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void stage_json(io::OutputTransaction &tx, const std::string &name,
                const json &doc) {
  std::ofstream out(tx.stage(name));
  out << doc.dump(2) << '\n';
  if (!out)
    throw FormatError("cannot write " + name);
}

void stage_resolved(io::OutputTransaction &tx, const std::string &command,
                    const ExperimentConfig &config) {
  stage_json(tx, command + "_resolved_config.json", to_json(config));
}

PotentialSpec target_potential(const ExperimentConfig &c) {
  return potentials::make(c.potential.id, c.potential.dim, c.potential.beta);
}

std::vector<double> to_std(const Eigen::VectorXd &v) {
  return {v.data(), v.data() + v.size()};
}

json matrix_json(const Eigen::MatrixXd &m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

fvm::Rectangle rectangle(const std::vector<double> &d) {
  return {d.at(0), d.at(1), d.at(2), d.at(3)};
}

} // namespace

void sample(ExperimentConfig config, std::ostream &log) {
  resolve_defaults(config);
  const auto &s = config.sampling;
  const PotentialSpec target = target_potential(config);
  if (static_cast<int>(s.x0.size()) != target.dim)
    throw ConfigError("sampling.x0 must have potential.dim entries");
  const Vector x0 = Eigen::Map<const Vector>(s.x0.data(),
                                             static_cast<Eigen::Index>(s.x0.size()));

  WeightedDataset ds;
  Eigen::Index underflow = 0;
  if (config.reweighting) {
    const double beta_bar = config.reweighting->sampling_beta;
    const PotentialSpec sampler =
        potentials::make(config.potential.id, config.potential.dim, beta_bar);
    ds = euler_maruyama(sampler, x0, s.dt, s.n, s.seed, s.burn_in);
    const double dbeta = target.beta - beta_bar;
    auto rr = reweight(ds, [&](ConstVectorRef x) { return -dbeta * target.value(x); });
    ds = std::move(rr.dataset);
    underflow = rr.underflow_count;
    ds.meta.bias = "tempered sampling_beta=" + io::format_double(beta_bar);
  } else {
    ds = euler_maruyama(target, x0, s.dt, s.n, s.seed, s.burn_in);
  }
  ds.meta.beta = target.beta;

  io::OutputTransaction tx(config.output);
  save_dataset(tx.stage("data.eigdata"), ds);
  if (ds.dim() >= 2) {
    const auto &h = s.histogram;
    write_histogram_csv(tx.stage("histogram.csv"),
                        histogram2d(ds, h.range[0], h.range[1], h.range[2],
                                    h.range[3], h.bins[0], h.bins[1]));
  }
  if (s.export_csv)
    export_dataset_csv(tx.stage("data.csv"), ds);
  stage_resolved(tx, "sample", config);
  tx.commit();
  log << "sampled " << ds.size() << " states of " << config.potential.id
      << " (d=" << ds.dim() << ")";
  if (config.reweighting)
    log << ", " << underflow << " weights clamped";
  log << '\n';
}

void fvm(ExperimentConfig config, std::ostream &log) {
  resolve_defaults(config);
  const auto &f = config.fvm;
  const PotentialSpec potential = target_potential(config);
  fvm::FvmGrid grid(rectangle(f.domain), f.nx, f.ny);
  const auto op = fvm::assemble(potential, grid, potential.beta);
  fvm::EigenSolverOptions opts;
  opts.tol = f.tol;
  opts.max_iterations = f.max_iterations;
  opts.shift = f.shift;
  const auto res = fvm::smallest_eigenpairs(op, f.k + 1, opts);
  if (std::abs(res.values[0]) > 1e-6)
    log << "warning: lowest eigenvalue " << res.values[0]
        << " is not the expected zero mode\n";

  io::OutputTransaction tx(config.output);
  fvm::write_eigenvalue_report(tx.stage("fvm_eigenvalues.csv"),
                               res.values.tail(f.k), res.residuals.tail(f.k));
  fvm::EigenfunctionTable table(grid, res.eigenfunctions.rightCols(f.k));
  table.write_csv(tx.stage("fvm_eigenfunctions.csv"));
  stage_resolved(tx, "fvm", config);
  tx.commit();
  log << "fvm eigenvalues:";
  for (int i = 1; i <= f.k; ++i)
    log << ' ' << res.values[i];
  log << '\n';
}

void train(ExperimentConfig config, std::ostream &log) {
  resolve_defaults(config);
  const PotentialSpec potential = target_potential(config);
  const WeightedDataset ds = load_dataset(config.training.dataset);
  if (ds.dim() != potential.dim)
    throw ConfigError("dataset dimension does not match potential.dim");
  if (ds.meta.beta != potential.beta)
    throw ConfigError("dataset beta does not match potential.beta");
  const auto &tc = config.training.train;

  io::OutputTransaction tx(config.output);
  EigenEstimate est;
  {
    TrainingLogWriter log_writer(tx.stage("training_log.csv"), tc.K);
    CheckpointWriter checkpoints(fs::path(config.output) / "checkpoints",
                                 config.training.checkpoint_interval);
    ObserverList observers;
    observers.add(&log_writer);
    observers.add(&checkpoints);
    est = specnet::train(tc, ds, potential, &observers);
  }
  for (std::size_t i = 0; i < est.networks.size(); ++i)
    save_checkpoint(
        tx.stage(CheckpointWriter::network_filename(static_cast<int>(i) + 1)),
        est.networks[i]);

  const long long tail = std::min<long long>(500, est.penalty_trace.size());
  json report;
  report["lambda_mean"] = to_std(est.lambda_mean);
  report["lambda_std"] = to_std(est.lambda_std);
  report["final_batch_lambda"] = to_std(est.final_batch_lambda);
  report["mean_shift"] = to_std(est.mean_shift);
  report["steps"] = tc.J;
  if (tail > 0) {
    report["penalty_C_tail_mean"] = est.penalty_trace.tail(tail).mean();
    report["final_loss"] = est.loss_trace[est.loss_trace.size() - 1];
  }
  stage_json(tx, "train_report.json", report);
  stage_resolved(tx, "train", config);
  tx.commit();
  log << "trained " << tc.K << " networks for " << tc.J << " steps; lambda:";
  for (Eigen::Index i = 0; i < est.lambda_mean.size(); ++i)
    log << ' ' << est.lambda_mean[i] << " (" << est.lambda_std[i] << ")";
  log << '\n';
}

void eval(ExperimentConfig config, std::ostream &log) {
  resolve_defaults(config);
  const auto &ec = config.eval;
  if (ec.checkpoints.empty())
    throw ConfigError("eval: no checkpoints given or found in the output directory");
  const PotentialSpec potential = target_potential(config);
  std::vector<NetworkParams> nets;
  for (const auto &p : ec.checkpoints) {
    nets.push_back(load_checkpoint(p));
    if (nets.back().arch.input_dim() != potential.dim)
      throw ConfigError("checkpoint " + p + " does not match potential.dim");
  }
  const auto k = static_cast<Eigen::Index>(nets.size());

  const WeightedDataset ds = load_dataset(ec.dataset);
  if (ds.dim() != potential.dim)
    throw ConfigError("eval dataset dimension does not match potential.dim");
  Rng rng(ec.seed);
  const Eigen::Index b = std::min<Eigen::Index>(ec.batch_size, ds.size());
  if (b < 2)
    throw ConfigError("eval batch needs at least two states");
  Eigen::MatrixXd states;
  Eigen::VectorXd weights;
  gather_batch(ds, draw_minibatch(ds.size(), b, rng), states, weights);

  json report;
  report["batch_size"] = b;
  std::vector<Eigen::VectorXd> values;
  Eigen::VectorXd shift(k);
  json networks = json::array();
  for (Eigen::Index i = 0; i < k; ++i) {
    BatchEval e = forward_batch(nets[i], states);
    const double var = estimators::evar(e.values, weights);
    shift[i] = estimators::emean(e.values, weights);
    json entry;
    entry["checkpoint"] = ec.checkpoints[static_cast<std::size_t>(i)];
    entry["mean_shift"] = shift[i];
    entry["variance"] = var;
    if (var > estimators::kDefaultVarianceFloor) {
      entry["degenerate_variance"] = false;
      entry["lambda"] = estimators::energy(e.grads, {}, potential.beta, weights) / var;
    } else {
      entry["degenerate_variance"] = true;
      entry["lambda"] = nullptr;
    }
    networks.push_back(entry);
    values.push_back(std::move(e.values));
  }
  Eigen::MatrixXd cov(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      cov(i, j) = estimators::ecov(values[i], values[j], weights);
  const Eigen::MatrixXd deviation =
      cov - Eigen::MatrixXd::Identity(k, k);
  report["networks"] = networks;
  report["covariance"] = matrix_json(cov);
  report["max_orthonormality_deviation"] = deviation.cwiseAbs().maxCoeff();

  // Grid on which the eigenfunctions are tabulated.
  std::optional<fvm::EigenfunctionTable> reference;
  std::optional<fvm::FvmGrid> grid;
  if (!ec.reference.empty()) {
    reference = fvm::read_table_csv(ec.reference);
    grid = reference->grid();
  } else {
    grid.emplace(rectangle(ec.grid.domain), ec.grid.nx, ec.grid.ny);
  }
  Eigen::MatrixXd points = Eigen::MatrixXd::Zero(potential.dim, grid->cells());
  for (int j = 0; j < grid->ny(); ++j)
    for (int i = 0; i < grid->nx(); ++i) {
      points(0, grid->index(i, j)) = grid->center_x(i);
      points(1, grid->index(i, j)) = grid->center_y(j);
    }
  Eigen::MatrixXd phi(grid->cells(), k);
  for (Eigen::Index i = 0; i < k; ++i)
    phi.col(i) = forward_batch(nets[i], points).values.array() - shift[i];

  if (reference) {
    Eigen::VectorXd mu(grid->cells());
    for (Eigen::Index p = 0; p < grid->cells(); ++p)
      mu[p] = potential.value(points.col(p));
    mu = (-(potential.beta * (mu.array() - mu.minCoeff()))).exp().matrix();
    mu /= mu.sum();
    auto normalized = [&](Eigen::VectorXd f) -> std::optional<Eigen::VectorXd> {
      f.array() -= mu.dot(f);
      const double norm = std::sqrt(mu.dot(f.cwiseProduct(f)));
      if (!(norm > 0.0))
        return std::nullopt;
      return f / norm;
    };
    json diffs = json::array();
    const Eigen::Index m = std::min<Eigen::Index>(k, reference->functions());
    for (Eigen::Index i = 0; i < m; ++i) {
      auto nn = normalized(phi.col(i));
      auto ref = normalized(reference->values().col(i));
      json entry;
      if (nn && ref) {
        const double overlap = mu.dot(nn->cwiseProduct(*ref));
        const double sign = overlap < 0.0 ? -1.0 : 1.0;
        const Eigen::VectorXd diff = sign * *nn - *ref;
        entry["sign"] = sign;
        entry["overlap"] = std::abs(overlap);
        entry["l2_mu_difference"] = std::sqrt(mu.dot(diff.cwiseProduct(diff)));
      } else {
        entry["l2_mu_difference"] = nullptr;
      }
      diffs.push_back(entry);
    }
    report["reference"] = ec.reference;
    report["reference_comparison"] = diffs;
  }

  io::OutputTransaction tx(config.output);
  fvm::EigenfunctionTable(*grid, phi).write_csv(tx.stage("nn_eigenfunctions.csv"));
  stage_json(tx, "eval_report.json", report);
  stage_resolved(tx, "eval", config);
  tx.commit();
  log << "evaluated " << k << " networks on " << b << " states\n";
}

void align(const fs::path &input, const fs::path &reference,
           const fs::path &output_dir, std::ostream &log) {
  const auto x = alignment::read_configuration_csv(input);
  const auto ref = alignment::read_configuration_csv(reference);
  const auto res = alignment::kabsch_align(x, ref);
  io::OutputTransaction tx(output_dir);
  alignment::write_configuration_csv(tx.stage("aligned.csv"), res.aligned);
  json report;
  report["rmsd_unaligned"] = alignment::rmsd(x, ref);
  report["rmsd"] = res.rmsd;
  report["rotation"] = matrix_json(res.rotation);
  report["translation"] = {res.translation[0], res.translation[1],
                           res.translation[2]};
  report["determinant"] = res.rotation.determinant();
  stage_json(tx, "align_report.json", report);
  tx.commit();
  log << "aligned " << x.rows() << " points, rmsd " << res.rmsd << '\n';
}

} // namespace specnet::commands
