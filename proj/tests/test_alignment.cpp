#include <specnet/alignment.h>
#include <specnet/errors.h>
#include <specnet/network.h>

#include <doctest.h>

#include <Eigen/Geometry>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace specnet;
using alignment::Configuration;
using Eigen::Matrix3d;
using Eigen::RowVector3d;

namespace {

Matrix3d random_rotation(std::mt19937_64 &rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q.toRotationMatrix();
}

RowVector3d random_shift(std::mt19937_64 &rng) {
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  return {u(rng), u(rng), u(rng)};
}

Configuration random_configuration(int m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.5);
  Configuration c(m, 3);
  for (Eigen::Index i = 0; i < c.size(); ++i)
    c.data()[i] = g(rng);
  return c;
}

Configuration moved(const Configuration &x, const Matrix3d &r, const RowVector3d &t) {
  return (x * r).rowwise() + t;
}

} // namespace

TEST_CASE("self alignment") {
  const auto ref = random_configuration(10, 1);
  const auto res = alignment::kabsch_align(ref, ref);
  CHECK((res.aligned - ref).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((res.rotation - Matrix3d::Identity()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(res.rmsd <= 1e-12);
}

TEST_CASE("rigid motion recovery") {
  std::mt19937_64 rng(2);
  const auto ref = random_configuration(10, 3);
  for (int k = 0; k < 20; ++k) {
    const auto x = moved(ref, random_rotation(rng), random_shift(rng));
    const auto res = alignment::kabsch_align(x, ref);
    CHECK((res.aligned - ref).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK(res.rmsd <= 1e-10);
    const Configuration again = (x.rowwise() - res.translation) * res.rotation;
    CHECK((again - res.aligned).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("aligned output is invariant under rigid motions") {
  std::mt19937_64 rng(4);
  const auto ref = random_configuration(10, 5);
  Configuration x = ref + 0.3 * random_configuration(10, 6);
  const auto base = alignment::kabsch_align(x, ref);
  const auto net = init_params(NetworkArchitecture({30, 20, 20, 1}), 9);
  const double y0 = realize(net, alignment::flatten(base.aligned));
  double worst = 0.0, worst_net = 0.0, worst_det = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto res =
        alignment::kabsch_align(moved(x, random_rotation(rng), random_shift(rng)), ref);
    worst = std::max(worst, (res.aligned - base.aligned).cwiseAbs().maxCoeff());
    worst_net = std::max(worst_net,
                         std::abs(realize(net, alignment::flatten(res.aligned)) - y0));
    worst_det = std::max(worst_det, std::abs(res.rotation.determinant() - 1.0));
  }
  CHECK(worst <= 1e-9);
  CHECK(worst_net <= 1e-8);
  CHECK(worst_det <= 1e-12);
}

TEST_CASE("reflections are excluded") {
  const auto ref = random_configuration(6, 7);
  Configuration mirror = ref;
  mirror.col(2) *= -1.0;
  const auto res = alignment::kabsch_align(mirror, ref);
  CHECK(res.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.rmsd > 1e-3);
}

TEST_CASE("alignment beats random rigid motions") {
  std::mt19937_64 rng(8);
  const auto ref = random_configuration(8, 9);
  const Configuration x = random_configuration(8, 10);
  const double best = alignment::rmsd(alignment::kabsch_align(x, ref).aligned, ref);
  for (int k = 0; k < 100; ++k)
    CHECK(best <= alignment::rmsd(moved(x, random_rotation(rng), random_shift(rng)), ref));
}

TEST_CASE("rmsd") {
  const auto ref = random_configuration(5, 11);
  CHECK(alignment::rmsd(ref, ref) == 0.0);
  const Configuration shifted = ref.rowwise() + RowVector3d(1.0, 0.0, 0.0);
  CHECK(alignment::rmsd(shifted, ref) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(alignment::rmsd(random_configuration(4, 1), ref), DimensionMismatch);
}

TEST_CASE("degenerate inputs") {
  Configuration line(4, 3);
  line << 0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3;
  CHECK_THROWS_AS(alignment::kabsch_align(random_configuration(4, 1), line),
                  DomainError);
  CHECK_THROWS_AS(alignment::kabsch_align(random_configuration(4, 1),
                                          random_configuration(5, 2)),
                  DimensionMismatch);
  Configuration plane(4, 3);
  plane << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
  std::mt19937_64 rng(12);
  const auto res = alignment::kabsch_align(
      moved(plane, random_rotation(rng), random_shift(rng)), plane);
  CHECK(res.rmsd <= 1e-10);
  CHECK(res.rotation.determinant() == doctest::Approx(1.0));
}

TEST_CASE("configuration csv round trip") {
  namespace fs = std::filesystem;
  const auto x = random_configuration(7, 13);
  const auto path = fs::temp_directory_path() / "specnet_conf.csv";
  alignment::write_configuration_csv(path, x);
  CHECK(alignment::read_configuration_csv(path) == x);
  {
    std::ofstream out(path);
    out << "x,y,z\n1,2,3\n4,5\n";
  }
  CHECK_THROWS_AS(alignment::read_configuration_csv(path), FormatError);
  fs::remove(path);
}
