#include <specnet/alignment.h>
#include <specnet/errors.h>
#include <specnet/io_util.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace specnet::alignment {

namespace {
void check_pair(const Configuration &x, const Configuration &ref) {
  if (x.rows() != ref.rows())
    throw DimensionMismatch("configurations have different point counts");
  if (x.rows() < 3)
    throw DomainError("configurations need at least three points");
  if (!x.allFinite() || !ref.allFinite())
    throw DomainError("configuration has non-finite coordinates");
}
} // namespace

double rmsd(const Configuration &x, const Configuration &ref) {
  if (x.rows() != ref.rows())
    throw DimensionMismatch("rmsd: configurations have different point counts");
  if (x.rows() == 0)
    throw DomainError("rmsd: empty configuration");
  return std::sqrt((x - ref).squaredNorm() / double(x.rows()));
}

AlignmentResult kabsch_align(const Configuration &x, const Configuration &ref) {
  check_pair(x, ref);
  const Eigen::RowVector3d cx = x.colwise().mean();
  const Eigen::RowVector3d cref = ref.colwise().mean();
  const Configuration px = x.rowwise() - cx;
  const Configuration pref = ref.rowwise() - cref;

  Eigen::JacobiSVD<Configuration> ref_svd(pref);
  const auto sv = ref_svd.singularValues();
  if (!(sv[1] > 1e-10 * std::max(sv[0], 1e-300)))
    throw DomainError("kabsch_align: reference configuration is collinear");

  // Minimize |px R - pref| over proper rotations R (row convention).
  const Eigen::Matrix3d cov = px.transpose() * pref;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU |
                                                 Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
    d(2, 2) = -1.0;
  const Eigen::Matrix3d rot = svd.matrixU() * d * svd.matrixV().transpose();

  AlignmentResult out;
  out.rotation = rot;
  // (x_i - b) R = (x_i - cx) R + cref  =>  b = cx - cref R^T.
  out.translation = cx - cref * rot.transpose();
  out.aligned = (px * rot).rowwise() + cref;
  out.rmsd = rmsd(out.aligned, ref);
  return out;
}

Configuration read_configuration_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::vector<Eigen::RowVector3d> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r")
      continue;
    if (first && std::isalpha(static_cast<unsigned char>(line[0]))) {
      first = false;
      continue;
    }
    first = false;
    std::istringstream ss(line);
    std::string item;
    std::vector<double> vals;
    while (std::getline(ss, item, ','))
      vals.push_back(io::parse_double(item));
    if (vals.size() != 3)
      throw FormatError("configuration rows must have three columns");
    rows.emplace_back(vals[0], vals[1], vals[2]);
  }
  Configuration c(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t i = 0; i < rows.size(); ++i)
    c.row(static_cast<Eigen::Index>(i)) = rows[i];
  return c;
}

void write_configuration_csv(const std::filesystem::path &path,
                             const Configuration &x) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  out << "x,y,z\n";
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out << io::format_double(x(i, 0)) << ',' << io::format_double(x(i, 1))
        << ',' << io::format_double(x(i, 2)) << '\n';
}

Eigen::VectorXd flatten(const Configuration &x) {
  Eigen::VectorXd out(3 * x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out.segment<3>(3 * i) = x.row(i).transpose();
  return out;
}

} // namespace specnet::alignment
