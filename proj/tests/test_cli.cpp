#include <specnet/estimators.h>
#include <specnet/network.h>
#include <specnet/sampling.h>

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Workspace {
  fs::path dir;
  explicit Workspace(const std::string &name)
      : dir(fs::temp_directory_path() / ("specnet_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path write_config(const std::string &name, const json &doc) const {
    const auto p = dir / name;
    std::ofstream(p) << doc.dump(2);
    return p;
  }
};

int run(const std::string &args) {
  const std::string cmd = std::string(SPECNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path &p) { return json::parse(slurp(p)); }

json small_config(const fs::path &out) {
  return json{{"potential", {{"id", "quadratic2d"}}},
              {"sampling", {{"n", 10000}, {"seed", 4}}},
              {"training",
               {{"K", 2}, {"omega", {1.0, 0.5}}, {"J", 20}, {"B", 100}, {"B_eval", 200},
                {"final_phase_steps", 5}, {"hidden_layers", {6}},
                {"checkpoint_interval", 10}}},
              {"fvm", {{"domain", {-2, 2, -2, 2}}, {"nx", 30}, {"ny", 30}, {"k", 3}}},
              {"eval", {{"batch_size", 500}, {"grid", {{"nx", 7}, {"ny", 5}}}}},
              {"output", {{"directory", out.string()}}}};
}

} // namespace

TEST_CASE("sample writes a loadable dataset deterministically") {
  Workspace ws("sample");
  const auto cfg = ws.write_config("c.json", small_config(ws.dir / "a"));
  REQUIRE(run("sample --config " + cfg.string()) == 0);
  const auto ds = specnet::load_dataset(ws.dir / "a" / "data.eigdata");
  CHECK(ds.size() == 10000);
  CHECK(ds.dim() == 2);
  CHECK(fs::exists(ws.dir / "a" / "histogram.csv"));
  CHECK(fs::exists(ws.dir / "a" / "sample_resolved_config.json"));

  REQUIRE(run("sample --config " + cfg.string() + " --output " + (ws.dir / "b").string()) == 0);
  CHECK(slurp(ws.dir / "a" / "data.eigdata") == slurp(ws.dir / "b" / "data.eigdata"));

  REQUIRE(run("sample --config " + cfg.string() + " --seed 99 --output " +
              (ws.dir / "c").string()) == 0);
  CHECK(slurp(ws.dir / "a" / "data.eigdata") != slurp(ws.dir / "c" / "data.eigdata"));
  CHECK(read_json(ws.dir / "c" / "sample_resolved_config.json")["sampling"]["seed"] == 99);

  // Re-running from the resolved config reproduces the dataset.
  REQUIRE(run("sample --config " + (ws.dir / "a" / "sample_resolved_config.json").string() +
              " --output " + (ws.dir / "d").string()) == 0);
  CHECK(slurp(ws.dir / "a" / "data.eigdata") == slurp(ws.dir / "d" / "data.eigdata"));
}

TEST_CASE("reweighted sampling") {
  Workspace ws("reweight");
  auto doc = small_config(ws.dir / "out");
  doc["reweighting"] = {{"sampling_beta", 0.5}};
  const auto cfg = ws.write_config("c.json", doc);
  REQUIRE(run("sample --config " + cfg.string()) == 0);
  const auto ds = specnet::load_dataset(ws.dir / "out" / "data.eigdata");
  CHECK(ds.meta.beta == 1.0);
  CHECK(ds.weights.mean() == doctest::Approx(1.0));
  CHECK(ds.weights.maxCoeff() > ds.weights.minCoeff());
}

TEST_CASE("fvm on the zero potential") {
  Workspace ws("fvm");
  auto doc = small_config(ws.dir / "out");
  doc["potential"]["id"] = "zero2d";
  doc["fvm"] = {{"domain", {0, M_PI, 0, M_PI}}, {"nx", 60}, {"ny", 60}, {"k", 3}};
  const auto cfg = ws.write_config("c.json", doc);
  REQUIRE(run("fvm --config " + cfg.string()) == 0);
  std::ifstream in(ws.dir / "out" / "fvm_eigenvalues.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "index,lambda,residual");
  const double expect[] = {1.0, 1.0, 2.0};
  for (int i = 0; i < 3; ++i) {
    std::getline(in, line);
    std::stringstream ss(line);
    std::string idx, lam;
    std::getline(ss, idx, ',');
    std::getline(ss, lam, ',');
    CHECK(std::stoi(idx) == i + 1);
    CHECK(std::abs(std::stod(lam) - expect[i]) <= 0.01 * expect[i]);
  }
  CHECK(fs::exists(ws.dir / "out" / "fvm_eigenfunctions.csv"));
}

TEST_CASE("train then eval") {
  Workspace ws("train");
  const auto cfg = ws.write_config("c.json", small_config(ws.dir / "out"));
  REQUIRE(run("sample --config " + cfg.string()) == 0);
  REQUIRE(run("train --config " + cfg.string()) == 0);
  const auto out = ws.dir / "out";
  CHECK(fs::exists(out / "training_log.csv"));
  CHECK(fs::exists(out / "network_1.eignet"));
  CHECK(fs::exists(out / "network_2.eignet"));
  CHECK(fs::exists(out / "checkpoints" / "step_10" / "network_1.eignet"));
  const auto report = read_json(out / "train_report.json");
  CHECK(report["lambda_mean"].size() == 2);

  REQUIRE(run("eval --config " + cfg.string()) == 0);
  const auto ev = read_json(out / "eval_report.json");
  CHECK(ev["networks"].size() == 2);
  CHECK(ev["networks"][0]["degenerate_variance"] == false);
  CHECK_FALSE(ev.contains("reference_comparison"));
  const std::string first = slurp(out / "nn_eigenfunctions.csv");
  CHECK(first.rfind("x,y,phi_1,phi_2\n", 0) == 0);
  REQUIRE(run("eval --config " + cfg.string()) == 0);
  CHECK(slurp(out / "nn_eigenfunctions.csv") == first);

  // With a reference table the grid follows the table.
  REQUIRE(run("fvm --config " + cfg.string()) == 0);
  REQUIRE(run("eval --config " + cfg.string()) == 0);
  const auto evr = read_json(out / "eval_report.json");
  REQUIRE(evr.contains("reference_comparison"));
  CHECK(evr["reference_comparison"].size() == 2);
  CHECK(evr["reference_comparison"][0]["l2_mu_difference"].is_number());
}

TEST_CASE("eval flags a constant network") {
  Workspace ws("const");
  const auto out = ws.dir / "out";
  const auto cfg = ws.write_config("c.json", small_config(out));
  REQUIRE(run("sample --config " + cfg.string()) == 0);
  specnet::NetworkParams net{specnet::NetworkArchitecture({2, 4, 1})};
  net.bias(2)[0] = 1.0;
  specnet::save_checkpoint(out / "network_1.eignet", net);
  REQUIRE(run("eval --config " + cfg.string()) == 0);
  const auto ev = read_json(out / "eval_report.json");
  CHECK(ev["networks"][0]["degenerate_variance"] == true);
  CHECK(ev["networks"][0]["lambda"].is_null());
}

TEST_CASE("align") {
  Workspace ws("align");
  {
    std::ofstream(ws.dir / "ref.csv") << "x,y,z\n0,0,0\n1,0,0\n0,1,0\n0,0,1\n";
    std::ofstream(ws.dir / "x.csv") << "5,5,5\n5,6,5\n4,5,5\n5,5,6\n";
  }
  REQUIRE(run("align --input " + (ws.dir / "x.csv").string() + " --reference " +
              (ws.dir / "ref.csv").string() + " --output " + (ws.dir / "o").string()) == 0);
  const auto rep = read_json(ws.dir / "o" / "align_report.json");
  CHECK(rep["rmsd"].get<double>() <= 1e-10);
  CHECK(rep["determinant"].get<double>() == doctest::Approx(1.0));
  CHECK(fs::exists(ws.dir / "o" / "aligned.csv"));
}

TEST_CASE("errors exit nonzero without partial outputs") {
  Workspace ws("errors");
  CHECK(run("") != 0);
  CHECK(run("sample") != 0);
  CHECK(run("sample --config " + (ws.dir / "missing.json").string()) != 0);
  const auto bad = ws.write_config("bad.json", json{{"bogus", 1}});
  CHECK(run("sample --config " + bad.string()) != 0);

  // Training without a dataset fails and leaves no files behind.
  const auto out = ws.dir / "out";
  const auto cfg = ws.write_config("c.json", small_config(out));
  CHECK(run("train --config " + cfg.string()) != 0);
  CHECK(!fs::exists(out / "training_log.csv"));
  CHECK(!fs::exists(out / "train_report.json"));

  // A diverging sampler fails the same way.
  auto doc = small_config(out);
  doc["sampling"]["dt"] = 10.0;
  const auto div = ws.write_config("div.json", doc);
  CHECK(run("sample --config " + div.string()) != 0);
  CHECK(!fs::exists(out / "data.eigdata"));
  if (fs::exists(out))
    for (const auto &e : fs::directory_iterator(out))
      CHECK(e.path().extension() != ".partial");

  CHECK(run("eval --config " + cfg.string()) != 0);
  CHECK(run("align --input nope.csv --reference nope.csv") != 0);
}
