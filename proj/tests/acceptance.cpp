// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any gating criterion fails.

#include <specnet/alignment.h>
#include <specnet/estimators.h>
#include <specnet/fvm.h>
#include <specnet/network.h>
#include <specnet/potentials.h>
#include <specnet/sampling.h>
#include <specnet/training.h>

#include <CLI11.hpp>
#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>

using namespace specnet;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using std::numbers::pi;

namespace {

int failures = 0;

void report(const std::string &id, bool ok, const std::string &detail,
            bool gating = true) {
  std::cout << (ok ? "PASS" : (gating ? "FAIL" : "FAIL (non-gating)"))
            << "  criterion " << id << ": " << detail << std::endl;
  if (!ok && gating)
    ++failures;
}

void skip(const std::string &id, const std::string &why) {
  std::cout << "SKIP  criterion " << id << ": " << why << std::endl;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream ss;
  ss.precision(prec);
  ss << v;
  return ss.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fvm::EigenResult solve(const std::string &id, fvm::Rectangle r, int n, int k) {
  const auto pot = potentials::make(id, 2, 1.0);
  const auto op = fvm::assemble(pot, fvm::FvmGrid(r, n, n), 1.0);
  return fvm::smallest_eigenpairs(op, k + 1);
}

struct FvmReference {
  fvm::FvmGrid grid{{-3, 3, -3, 3}, 400, 400};
  VectorXd values;
  MatrixXd eigenfunctions;
};

FvmReference criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto pot = potentials::make("v2", 2, 1.0);
  FvmReference ref;
  const auto op = fvm::assemble(pot, ref.grid, 1.0);
  const auto res = fvm::smallest_eigenpairs(op, 4);
  const double elapsed = seconds_since(t0);
  ref.values = res.values;
  ref.eigenfunctions = res.eigenfunctions;

  const double target[] = {0.219, 0.764, 2.790};
  const double tol[] = {0.005, 0.010, 0.030};
  bool ok = std::abs(res.values[0]) <= 1e-6;
  std::string detail = "v2 400x400 lambda =";
  for (int i = 0; i < 3; ++i) {
    ok = ok && std::abs(res.values[i + 1] - target[i]) <= tol[i];
    detail += " " + fmt(res.values[i + 1], 5);
  }
  ok = ok && elapsed <= 300.0;
  report("1", ok, detail + " (targets 0.219+-0.005, 0.764+-0.010, 2.790+-0.030), " +
                      fmt(elapsed, 3) + " s (limit 300 s)");

  const auto coarse = solve("v2", {-3, 3, -3, 3}, 200, 1);
  const double d_ref = std::abs(coarse.values[1] - res.values[1]);
  report("1", d_ref <= 0.005,
         "grid refinement 200^2 -> 400^2 changes lambda_1 by " + fmt(d_ref, 3) +
             " (limit 0.005)");
  const auto wide = solve("v2", {-4, 4, -4, 4}, 400, 1);
  const double d_dom = std::abs(wide.values[1] - res.values[1]);
  report("1", d_dom <= 0.005,
         "domain [-3,3]^2 -> [-4,4]^2 changes lambda_1 by " + fmt(d_dom, 3) +
             " (limit 0.005)");
  return ref;
}

void criterion_2() {
  const auto q = solve("quadratic2d", {-4, 4, -4, 4}, 200, 3);
  const double qe[] = {4, 4, 8};
  bool ok = true;
  std::string d = "quadratic2d [-4,4]^2 200^2 lambda =";
  for (int i = 0; i < 3; ++i) {
    ok = ok && std::abs(q.values[i + 1] - qe[i]) <= 0.01 * qe[i];
    d += " " + fmt(q.values[i + 1], 6);
  }
  report("2a", ok, d + " (expected 4, 4, 8 within 1%)");

  const auto z = solve("zero2d", {0, pi, 0, pi}, 200, 3);
  const double ze[] = {1, 1, 2};
  ok = true;
  d = "zero potential [0,pi]^2 200^2 lambda =";
  for (int i = 0; i < 3; ++i) {
    ok = ok && std::abs(z.values[i + 1] - ze[i]) <= 0.01 * ze[i];
    d += " " + fmt(z.values[i + 1], 6);
  }
  report("2b", ok, d + " (expected 1, 1, 2 within 1%)");
}

TrainConfig reference_config(std::uint64_t seed) {
  TrainConfig c;
  c.K = 3;
  c.omega = {1.0, 0.8, 0.6};
  c.alpha = 20.0;
  c.J = 7100;
  c.B = 5000;
  c.B_eval = 20000;
  c.learning_rate = 5e-3;
  c.seed = seed;
  c.hidden_layers = {20, 20, 20};
  c.final_phase_steps = 100;
  return c;
}

void training_criteria(bool check_repeat) {
  const auto pot = potentials::make("v2", 2, 1.0);
  Vector x0 = Vector::Zero(2);
  x0[0] = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = euler_maruyama(pot, x0, 1e-3, 5000000, 1);
  const auto cfg = reference_config(1);
  const auto est = train(cfg, ds, pot);
  const double elapsed = seconds_since(t0);

  const double lo[] = {0.197, 0.688, 2.511}, hi[] = {0.241, 0.840, 3.069};
  bool ok = elapsed <= 7200.0;
  std::string d = "d=2 NN n=5e6 lambda =";
  for (int i = 0; i < 3; ++i) {
    ok = ok && est.lambda_mean[i] >= lo[i] && est.lambda_mean[i] <= hi[i];
    d += " " + fmt(est.lambda_mean[i], 4) + "(+-" + fmt(est.lambda_std[i], 2) + ")";
  }
  report("3", ok, d + " bands [0.197,0.241] [0.688,0.840] [2.511,3.069], " +
                      fmt(elapsed, 4) + " s (limit 7200 s)");

  const double pen = est.penalty_trace.tail(500).mean();
  report("5", pen < 1e-2, "mean penalty_C over last 500 steps = " + fmt(pen, 3) +
                              " (limit 1e-2)");

  Rng fresh(20240611);
  MatrixXd states;
  VectorXd w;
  gather_batch(ds, draw_minibatch(ds.size(), 20000, fresh), states, w);
  std::vector<VectorXd> vals;
  for (const auto &n : est.networks)
    vals.push_back(forward_batch(n, states).values);
  double worst = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j)
      worst = std::max(worst, std::abs(estimators::ecov(vals[i], vals[j], w) -
                                       (i == j ? 1.0 : 0.0)));
  report("5", worst <= 0.05,
         "max |Ecov - delta| on a fresh 2e4 batch = " + fmt(worst, 3) + " (limit 0.05)");

  const auto &lt = est.loss_trace;
  const double early = lt.segment(0, 500).mean();
  const double late = lt.tail(500).mean();
  report("5", late <= early,
         "trailing 500-step mean loss " + fmt(late, 4) + " <= first 500-step mean " +
             fmt(early, 4),
         false);

  if (!check_repeat) {
    skip("9", "repeat run disabled");
    return;
  }
  const auto ds2 = euler_maruyama(pot, x0, 1e-3, 5000000, 1);
  const auto est2 = train(cfg, ds2, pot);
  const bool same = ds2.states == ds.states && est2.lambda_trace == est.lambda_trace &&
                    est2.loss_trace == est.loss_trace;
  report("9", same, std::string("repeated d=2 run ") +
                        (same ? "reproduces" : "differs from") +
                        " the lambda and loss traces bit for bit (" +
                        std::to_string(est.lambda_trace.size()) + " values)");
}

void criterion_4() {
  const int d = 50;
  const auto pot = potentials::make("vd", d, 1.0);
  Vector x0 = Vector::Zero(d);
  x0[0] = 1.0;
  const auto t0 = std::chrono::steady_clock::now();
  const auto ds = euler_maruyama(pot, x0, 1e-3, 1000000, 2);
  const auto est = train(reference_config(2), ds, pot);
  const double l1 = est.lambda_mean[0];
  report("4", std::abs(l1 - 0.219) <= 0.15 * 0.219,
         "d=50 NN n=1e6 lambda = " + fmt(l1, 4) + " " + fmt(est.lambda_mean[1], 4) +
             " " + fmt(est.lambda_mean[2], 4) + " (lambda_1 target 0.219 +-15%), " +
             fmt(seconds_since(t0), 4) + " s",
         false);
}

NetworkParams random_net(const std::vector<int> &sizes, std::uint64_t seed) {
  NetworkParams net{NetworkArchitecture(sizes)};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.7);
  for (auto &v : net.flat)
    v = g(rng);
  return net;
}

MatrixXd normal_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = g(rng);
  return m;
}

void criterion_6() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto net = init_params(NetworkArchitecture({2, 20, 20, 20, 1}), s + 1);
    const VectorXd x = normal_matrix(2, 1, 7000 + s).col(0);
    const VectorXd g = realize_with_spatial_grad(net, x).grad;
    for (int k = 0; k < 2; ++k) {
      VectorXd p = x, m = x;
      p[k] += 1e-4;
      m[k] -= 1e-4;
      const double fd = (realize(net, p) - realize(net, m)) / 2e-4;
      worst = std::max(worst, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3));
    }
  }
  report("6", worst <= 1e-5, "spatial gradient vs central differences over 100 "
                             "instances, max rel err " + fmt(worst, 3) + " (limit 1e-5)");

  LossFunctional lf = [](std::span<const BatchEval> evals, const VectorXd &w) {
    LossWithAdjoints out;
    out.loss = penalized_loss(evals, w, 1.0, {}, std::vector<double>{1.0, 0.8}, 20.0,
                              &out.adjoints)
                   .loss;
    return out;
  };
  worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    std::vector<NetworkParams> nets{random_net({2, 4, 4, 1}, 2 * s),
                                    random_net({2, 4, 4, 1}, 2 * s + 1)};
    const MatrixXd x = normal_matrix(2, 16, 100 + s);
    const VectorXd w = (normal_matrix(16, 1, 200 + s).col(0).array().abs() + 0.5).matrix();
    const auto lg = batch_loss_param_gradient(nets, x, w, lf);
    auto value = [&]() {
      std::vector<BatchEval> e;
      for (const auto &n : nets)
        e.push_back(forward_batch(n, x));
      return lf(e, w).loss;
    };
    for (int i = 0; i < 2; ++i) {
      VectorXd fd(nets[i].flat.size());
      for (Eigen::Index p = 0; p < fd.size(); ++p) {
        const double keep = nets[i].flat[p];
        nets[i].flat[p] = keep + 1e-4;
        const double up = value();
        nets[i].flat[p] = keep - 1e-4;
        const double dn = value();
        nets[i].flat[p] = keep;
        fd[p] = (up - dn) / 2e-4;
      }
      worst = std::max(worst, (lg.grads[i] - fd).norm() / fd.norm());
    }
  }
  report("6", worst <= 1e-4, "full-loss parameter gradient vs central differences over "
                             "10 instances (2,4,4,1) B=16 K=2, max rel err " +
                                 fmt(worst, 3) + " (limit 1e-4)");
}

void criterion_7(const FvmReference &ref) {
  const MatrixXd grads = normal_matrix(2, 1000, 1);
  const VectorXd f = normal_matrix(1000, 1, 2).col(0);
  const VectorXd w = (normal_matrix(1000, 1, 3).col(0).array().abs() + 0.1).matrix();
  const double q = estimators::erq(f, grads, {}, 1.0, w);
  double worst = 0.0;
  for (double c : {-3.0, 1e-4, 17.0}) {
    worst = std::max(worst, std::abs(estimators::erq(c * f, c * grads, {}, 1.0, w) - q) / q);
    const VectorXd shifted = f.array() + c;
    worst = std::max(worst, std::abs(estimators::erq(shifted, grads, {}, 1.0, w) - q) / q);
  }
  report("7", worst <= 1e-12, "ERQ shift/scale invariance, max rel deviation " +
                                  fmt(worst, 3) + " (limit 1e-12)");

  // Target N(0, 1) (V = x^2/2, beta = 1) sampled exactly at beta_bar = 0.7.
  const Eigen::Index n = 200000;
  const VectorXd x = normal_matrix(static_cast<int>(n), 1, 5).col(0) / std::sqrt(0.7);
  WeightedDataset ds;
  ds.states = x;
  ds.weights = VectorXd::Ones(n);
  const auto rw = reweight(ds, [](ConstVectorRef y) { return -0.3 * 0.5 * y[0] * y[0]; });
  const VectorXd x2 = x.array().square();
  const VectorXd &wt = rw.dataset.weights;
  const double m2 = estimators::emean(x2, wt);
  const double se =
      wt.cwiseProduct((x2.array() - m2).matrix()).norm() / wt.sum();
  report("7", std::abs(m2 - 1.0) <= 3.0 * se,
         "reweighted beta_bar=0.7 Gaussian E[x^2] = " + fmt(m2, 5) + ", |err| = " +
             fmt(std::abs(m2 - 1.0), 3) + " (limit 3 SE = " + fmt(3 * se, 3) + ")");

  // Interpolated first FVM eigenfunction on 1e5 near-independent samples.
  const auto pot = potentials::make("v2", 2, 1.0);
  Vector x0 = Vector::Zero(2);
  x0[0] = 1.0;
  const auto chain = euler_maruyama(pot, x0, 1e-3, 5000000, 77);
  const Eigen::Index thin = 50, m = chain.size() / thin;
  MatrixXd pts(2, m);
  for (Eigen::Index i = 0; i < m; ++i)
    pts.col(i) = chain.states.row((i + 1) * thin - 1).transpose();
  const fvm::EigenfunctionTable table(ref.grid, ref.eigenfunctions.col(1));
  VectorXd phi;
  MatrixXd dphi;
  table.interpolate_batch(pts, 0, phi, dphi);
  const double erq = estimators::erq(phi, dphi, {}, 1.0, VectorXd::Ones(m));
  const double lam = ref.values[1];
  report("7", std::abs(erq - lam) <= 0.05 * lam,
         "ERQ of interpolated FVM phi_1 on 1e5 samples = " + fmt(erq, 4) +
             " vs lambda_1 = " + fmt(lam, 4) + " (limit 5%)");
}

Eigen::Matrix3d random_rotation(std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

void criterion_8() {
  using alignment::Configuration;
  std::mt19937_64 rng(8);
  Configuration ref = normal_matrix(10, 3, 9);
  const Configuration x = ref + 0.2 * MatrixXd(normal_matrix(10, 3, 10));
  const auto base = alignment::kabsch_align(x, ref);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0, worst_det = std::abs(base.rotation.determinant() - 1.0);
  for (int k = 0; k < 100; ++k) {
    const Eigen::RowVector3d t(u(rng), u(rng), u(rng));
    const Configuration moved = (x * random_rotation(rng)).rowwise() + t;
    const auto res = alignment::kabsch_align(moved, ref);
    worst = std::max(worst, (res.aligned - base.aligned).cwiseAbs().maxCoeff());
    worst_det = std::max(worst_det, std::abs(res.rotation.determinant() - 1.0));
  }
  report("8", worst <= 1e-9, "aligned output under 100 rigid motions, max deviation " +
                                 fmt(worst, 3) + " (limit 1e-9)");
  report("8", worst_det <= 1e-12,
         "rotation determinant, max |det - 1| = " + fmt(worst_det, 3) + " (limit 1e-12)");

  // Regular tetrahedron, fixed perturbation and rotation, against a search over
  // 1e6 random unit quaternions.
  Configuration tet(4, 3);
  tet << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  Configuration pert(4, 3);
  pert << 0.10, -0.05, 0.02, -0.03, 0.08, 0.00, 0.04, 0.01, -0.09, -0.06, -0.02, 0.05;
  const Eigen::Matrix3d r0 =
      Eigen::AngleAxisd(1.1, Eigen::Vector3d(0.3, -0.5, 0.8).normalized()).toRotationMatrix();
  const Configuration xt = ((tet + pert) * r0).rowwise() + Eigen::RowVector3d(2, -1, 0.5);
  const double kabsch = alignment::kabsch_align(xt, tet).rmsd;
  const Configuration xc = xt.rowwise() - xt.colwise().mean();
  const Configuration rc = tet.rowwise() - tet.colwise().mean();
  const long long samples = 1000000;
  std::mt19937_64 qr(123);
  double brute = 1e300;
  for (long long s = 0; s < samples; ++s) {
    const Eigen::Matrix3d r = random_rotation(qr);
    brute = std::min(brute, std::sqrt((xc * r - rc).squaredNorm() / 4.0));
  }
  // Angular covering radius of N random rotations, doubled for margin, times
  // the radius of gyration.
  const double rho = 2.0 * std::cbrt(6.0 * pi / double(samples));
  const double bound = rho * std::sqrt(xc.squaredNorm() / 4.0);
  const bool ok = kabsch <= brute + 1e-12 && brute - kabsch <= bound;
  report("8", ok, "tetrahedron rmsd: Kabsch " + fmt(kabsch, 8) + ", 1e6-quaternion search " +
                      fmt(brute, 8) + " (gap must lie in [0, " + fmt(bound, 3) + "])");
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance checks"};
  bool extended = false, no_repeat = false;
  std::vector<std::string> only;
  app.add_flag("--extended", extended, "also run the d=50 training check");
  app.add_flag("--no-repeat", no_repeat, "skip the determinism repeat run");
  app.add_option("--only", only, "run only these criteria (1 2 3 4 5 6 7 8 9)");
  CLI11_PARSE(app, argc, argv);
  const std::set<std::string> sel(only.begin(), only.end());
  auto want = [&](const std::string &c) { return sel.empty() || sel.count(c) > 0; };

  try {
    std::optional<FvmReference> ref;
    if (want("1") || want("7"))
      ref = criterion_1();
    if (want("2"))
      criterion_2();
    if (want("3") || want("5") || want("9"))
      training_criteria(!no_repeat && want("9"));
    if (extended || sel.count("4"))
      criterion_4();
    else
      skip("4", "optional d=50 run, enable with --extended");
    if (want("6"))
      criterion_6();
    if (want("7"))
      criterion_7(*ref);
    if (want("8"))
      criterion_8();
  } catch (const std::exception &e) {
    std::cout << "FAIL  aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (failures == 0 ? "ALL GATING CRITERIA PASSED" : "GATING FAILURES: " +
                                                                  std::to_string(failures))
            << std::endl;
  return failures == 0 ? 0 : 1;
}
