#include <specnet/config.h>
#include <specnet/errors.h>

#include <fstream>
#include <set>

namespace specnet {

using nlohmann::json;

namespace {

void reject_unknown(const json &obj, const std::set<std::string> &known,
                    const std::string &where) {
  if (!obj.is_object())
    throw ConfigError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key '" + where + "." + it.key() + "'");
}

template <typename T>
void read(const json &obj, const char *key, T &target, const std::string &where) {
  auto it = obj.find(key);
  if (it == obj.end())
    return;
  try {
    target = it->get<T>();
  } catch (const json::exception &e) {
    throw ConfigError("invalid value for '" + where + "." + key +
                      "': " + e.what());
  }
}

void parse_potential(const json &j, PotentialConfig &c) {
  reject_unknown(j, {"id", "dim", "beta"}, "potential");
  read(j, "id", c.id, "potential");
  read(j, "dim", c.dim, "potential");
  read(j, "beta", c.beta, "potential");
}

void parse_sampling(const json &j, SamplingConfig &c) {
  reject_unknown(j, {"dt", "n", "seed", "burn_in", "x0", "histogram", "export_csv"},
                 "sampling");
  read(j, "dt", c.dt, "sampling");
  read(j, "n", c.n, "sampling");
  read(j, "seed", c.seed, "sampling");
  read(j, "burn_in", c.burn_in, "sampling");
  read(j, "x0", c.x0, "sampling");
  read(j, "export_csv", c.export_csv, "sampling");
  if (auto it = j.find("histogram"); it != j.end()) {
    reject_unknown(*it, {"range", "bins"}, "sampling.histogram");
    read(*it, "range", c.histogram.range, "sampling.histogram");
    read(*it, "bins", c.histogram.bins, "sampling.histogram");
    if (c.histogram.range.size() != 4 || c.histogram.bins.size() != 2)
      throw ConfigError("sampling.histogram needs 4 range values and 2 bin counts");
  }
}

void parse_training(const json &j, TrainingSection &c) {
  reject_unknown(j,
                 {"K", "omega", "alpha", "J", "B", "B_eval", "learning_rate",
                  "seed", "sort_networks", "adam", "final_phase_steps",
                  "hidden_layers", "checkpoint_interval", "dataset"},
                 "training");
  auto &t = c.train;
  read(j, "K", t.K, "training");
  read(j, "omega", t.omega, "training");
  read(j, "alpha", t.alpha, "training");
  read(j, "J", t.J, "training");
  read(j, "B", t.B, "training");
  read(j, "B_eval", t.B_eval, "training");
  read(j, "learning_rate", t.learning_rate, "training");
  read(j, "seed", t.seed, "training");
  read(j, "sort_networks", t.sort_networks, "training");
  read(j, "final_phase_steps", t.final_phase_steps, "training");
  read(j, "hidden_layers", t.hidden_layers, "training");
  read(j, "checkpoint_interval", c.checkpoint_interval, "training");
  read(j, "dataset", c.dataset, "training");
  if (auto it = j.find("adam"); it != j.end()) {
    reject_unknown(*it, {"beta1", "beta2", "epsilon"}, "training.adam");
    read(*it, "beta1", t.adam.beta1, "training.adam");
    read(*it, "beta2", t.adam.beta2, "training.adam");
    read(*it, "epsilon", t.adam.epsilon, "training.adam");
  }
  if (j.contains("K") && !j.contains("omega") && t.K != 1)
    throw ConfigError("training.omega is required when K != 1");
}

void parse_fvm(const json &j, FvmConfig &c) {
  reject_unknown(j, {"domain", "nx", "ny", "k", "tol", "max_iterations", "shift"},
                 "fvm");
  read(j, "domain", c.domain, "fvm");
  read(j, "nx", c.nx, "fvm");
  read(j, "ny", c.ny, "fvm");
  read(j, "k", c.k, "fvm");
  read(j, "tol", c.tol, "fvm");
  read(j, "max_iterations", c.max_iterations, "fvm");
  read(j, "shift", c.shift, "fvm");
  if (c.domain.size() != 4)
    throw ConfigError("fvm.domain needs four values x_lo, x_hi, y_lo, y_hi");
}

void parse_eval(const json &j, EvalConfig &c) {
  reject_unknown(j, {"checkpoints", "dataset", "reference", "batch_size", "seed",
                     "grid"},
                 "eval");
  read(j, "checkpoints", c.checkpoints, "eval");
  read(j, "dataset", c.dataset, "eval");
  read(j, "reference", c.reference, "eval");
  read(j, "batch_size", c.batch_size, "eval");
  read(j, "seed", c.seed, "eval");
  if (auto it = j.find("grid"); it != j.end()) {
    reject_unknown(*it, {"domain", "nx", "ny"}, "eval.grid");
    read(*it, "domain", c.grid.domain, "eval.grid");
    read(*it, "nx", c.grid.nx, "eval.grid");
    read(*it, "ny", c.grid.ny, "eval.grid");
    if (c.grid.domain.size() != 4)
      throw ConfigError("eval.grid.domain needs four values");
  }
}

} // namespace

ExperimentConfig parse_config(const json &doc) {
  reject_unknown(doc,
                 {"potential", "sampling", "reweighting", "training", "fvm",
                  "eval", "output"},
                 "config");
  ExperimentConfig c;
  if (auto it = doc.find("potential"); it != doc.end())
    parse_potential(*it, c.potential);
  if (auto it = doc.find("sampling"); it != doc.end())
    parse_sampling(*it, c.sampling);
  if (auto it = doc.find("reweighting"); it != doc.end() && !it->is_null()) {
    reject_unknown(*it, {"sampling_beta"}, "reweighting");
    ReweightingConfig r;
    read(*it, "sampling_beta", r.sampling_beta, "reweighting");
    c.reweighting = r;
  }
  if (auto it = doc.find("training"); it != doc.end())
    parse_training(*it, c.training);
  if (auto it = doc.find("fvm"); it != doc.end())
    parse_fvm(*it, c.fvm);
  if (auto it = doc.find("eval"); it != doc.end())
    parse_eval(*it, c.eval);
  if (auto it = doc.find("output"); it != doc.end()) {
    reject_unknown(*it, {"directory"}, "output");
    read(*it, "directory", c.output, "output");
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error &e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig &c) {
  const auto &t = c.training.train;
  json doc;
  doc["potential"] = {{"id", c.potential.id},
                      {"dim", c.potential.dim},
                      {"beta", c.potential.beta}};
  doc["sampling"] = {{"dt", c.sampling.dt},
                     {"n", c.sampling.n},
                     {"seed", c.sampling.seed},
                     {"burn_in", c.sampling.burn_in},
                     {"x0", c.sampling.x0},
                     {"histogram",
                      {{"range", c.sampling.histogram.range},
                       {"bins", c.sampling.histogram.bins}}},
                     {"export_csv", c.sampling.export_csv}};
  if (c.reweighting)
    doc["reweighting"] = {{"sampling_beta", c.reweighting->sampling_beta}};
  else
    doc["reweighting"] = nullptr;
  doc["training"] = {{"K", t.K},
                     {"omega", t.omega},
                     {"alpha", t.alpha},
                     {"J", t.J},
                     {"B", t.B},
                     {"B_eval", t.B_eval},
                     {"learning_rate", t.learning_rate},
                     {"seed", t.seed},
                     {"sort_networks", t.sort_networks},
                     {"adam",
                      {{"beta1", t.adam.beta1},
                       {"beta2", t.adam.beta2},
                       {"epsilon", t.adam.epsilon}}},
                     {"final_phase_steps", t.final_phase_steps},
                     {"hidden_layers", t.hidden_layers},
                     {"checkpoint_interval", c.training.checkpoint_interval},
                     {"dataset", c.training.dataset}};
  doc["fvm"] = {{"domain", c.fvm.domain},
                {"nx", c.fvm.nx},
                {"ny", c.fvm.ny},
                {"k", c.fvm.k},
                {"tol", c.fvm.tol},
                {"max_iterations", c.fvm.max_iterations},
                {"shift", c.fvm.shift}};
  doc["eval"] = {{"checkpoints", c.eval.checkpoints},
                 {"dataset", c.eval.dataset},
                 {"reference", c.eval.reference},
                 {"batch_size", c.eval.batch_size},
                 {"seed", c.eval.seed},
                 {"grid",
                  {{"domain", c.eval.grid.domain},
                   {"nx", c.eval.grid.nx},
                   {"ny", c.eval.grid.ny}}}};
  doc["output"] = {{"directory", c.output}};
  return doc;
}

void override_seed(ExperimentConfig &config, std::uint64_t seed) {
  config.sampling.seed = seed;
  config.training.train.seed = seed;
  config.eval.seed = seed;
}

void resolve_defaults(ExperimentConfig &config) {
  const std::filesystem::path out(config.output);
  if (config.sampling.x0.empty()) {
    config.sampling.x0.assign(static_cast<std::size_t>(config.potential.dim), 0.0);
    if (!config.sampling.x0.empty())
      config.sampling.x0[0] = 1.0;
  }
  if (config.training.dataset.empty())
    config.training.dataset = (out / "data.eigdata").string();
  if (config.eval.dataset.empty())
    config.eval.dataset = (out / "data.eigdata").string();
  if (config.eval.checkpoints.empty())
    for (int i = 1;; ++i) {
      auto p = out / CheckpointWriter::network_filename(i);
      if (!std::filesystem::exists(p))
        break;
      config.eval.checkpoints.push_back(p.string());
    }
  if (config.eval.reference.empty() &&
      std::filesystem::exists(out / "fvm_eigenfunctions.csv"))
    config.eval.reference = (out / "fvm_eigenfunctions.csv").string();
}
} // namespace specnet
