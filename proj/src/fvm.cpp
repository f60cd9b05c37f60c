#include <specnet/errors.h>
#include <specnet/fvm.h>
#include <specnet/io_util.h>

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <vector>

namespace specnet::fvm {

FvmGrid::FvmGrid(Rectangle domain, int nx, int ny)
    : domain_(domain), nx_(nx), ny_(ny) {
  if (nx < 2 || ny < 2)
    throw DomainError("FVM grid needs at least 2 cells per direction");
  if (!(domain.x_hi > domain.x_lo) || !(domain.y_hi > domain.y_lo))
    throw DomainError("FVM domain must have positive extent");
  hx_ = (domain.x_hi - domain.x_lo) / nx;
  hy_ = (domain.y_hi - domain.y_lo) / ny;
}

namespace {
std::string cell_name(const FvmGrid &g, Eigen::Index k) {
  const int i = static_cast<int>(k % g.nx());
  const int j = static_cast<int>(k / g.nx());
  std::ostringstream ss;
  ss << "cell (" << i << ", " << j << ") at (" << g.center_x(i) << ", "
     << g.center_y(j) << ")";
  return ss.str();
}
} // namespace

SparseSymmetricOperator assemble(const PotentialSpec &potential,
                                 const FvmGrid &grid, double beta) {
  if (potential.dim != 2)
    throw DimensionMismatch("FVM assembly needs a two-dimensional potential");
  if (!potential.identity_diffusion())
    throw DomainError("FVM assembly supports only identity diffusion");
  if (!(beta > 0.0))
    throw DomainError("FVM assembly: beta must be positive");
  const Eigen::Index n = grid.cells();
  SparseSymmetricOperator op{grid, beta, Eigen::VectorXd(n), Eigen::VectorXd(n),
                             {}, {}};
  Eigen::Vector2d x;
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      x << grid.center_x(i), grid.center_y(j);
      const double v = potential.value(x);
      if (!std::isfinite(v))
        throw DomainError("FVM assembly: non-finite potential in " +
                          cell_name(grid, grid.index(i, j)));
      op.potential[grid.index(i, j)] = v;
    }
  const double vmin = op.potential.minCoeff();
  op.mu = (-(beta * (op.potential.array() - vmin))).exp().matrix();
  for (Eigen::Index k = 0; k < n; ++k)
    if (!(op.mu[k] > 0.0) || !std::isfinite(op.mu[k]))
      throw DomainError("FVM assembly: stationary weight underflows in " +
                        cell_name(grid, k));
  op.mu /= op.mu.sum();

  std::vector<Eigen::Triplet<double>> sym, gen;
  sym.reserve(static_cast<std::size_t>(5 * n));
  gen.reserve(static_cast<std::size_t>(5 * n));
  const double cx = 1.0 / (beta * grid.hx() * grid.hx());
  const double cy = 1.0 / (beta * grid.hy() * grid.hy());
  for (int j = 0; j < grid.ny(); ++j)
    for (int i = 0; i < grid.nx(); ++i) {
      const Eigen::Index k = grid.index(i, j);
      double diag = 0.0;
      auto link = [&](int ii, int jj, double c) {
        const Eigen::Index kk = grid.index(ii, jj);
        // Face weight sqrt(mu_k mu_kk'): -L_h gets c * sqrt(mu_kk' / mu_k),
        // and the similarity transform leaves the constant c.
        const double rate =
            c * std::exp(-0.5 * beta * (op.potential[kk] - op.potential[k]));
        gen.emplace_back(k, kk, -rate);
        sym.emplace_back(k, kk, -c);
        diag += rate;
      };
      if (i > 0)
        link(i - 1, j, cx);
      if (i + 1 < grid.nx())
        link(i + 1, j, cx);
      if (j > 0)
        link(i, j - 1, cy);
      if (j + 1 < grid.ny())
        link(i, j + 1, cy);
      gen.emplace_back(k, k, diag);
      sym.emplace_back(k, k, diag);
    }
  op.symmetric.resize(n, n);
  op.symmetric.setFromTriplets(sym.begin(), sym.end());
  op.generator.resize(n, n);
  op.generator.setFromTriplets(gen.begin(), gen.end());
  return op;
}

namespace {

// Orthonormalizes the columns of w against q (two passes) and then among
// themselves. Columns that vanish are dropped.
Eigen::MatrixXd orthonormal_extension(const Eigen::MatrixXd &q,
                                      Eigen::MatrixXd w) {
  for (int pass = 0; pass < 2; ++pass)
    if (q.cols() > 0)
      w -= q * (q.transpose() * w);
  std::vector<Eigen::VectorXd> kept;
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    Eigen::VectorXd v = w.col(c);
    const double norm0 = v.norm();
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto &u : kept)
        v -= u.dot(v) * u;
      if (q.cols() > 0)
        v -= q * (q.transpose() * v);
    }
    const double norm = v.norm();
    if (norm > 1e-10 * norm0 && norm > 0.0)
      kept.push_back(v / norm);
  }
  Eigen::MatrixXd out(w.rows(), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t c = 0; c < kept.size(); ++c)
    out.col(static_cast<Eigen::Index>(c)) = kept[c];
  return out;
}

void finalize(const SparseSymmetricOperator &op, EigenResult &res) {
  const Eigen::VectorXd inv_sqrt_mu = op.mu.array().rsqrt().matrix();
  res.eigenfunctions = inv_sqrt_mu.asDiagonal() * res.vectors;
  for (Eigen::Index c = 0; c < res.vectors.cols(); ++c) {
    Eigen::Index arg;
    res.eigenfunctions.col(c).cwiseAbs().maxCoeff(&arg);
    if (res.eigenfunctions(arg, c) < 0.0) {
      res.eigenfunctions.col(c) *= -1.0;
      res.vectors.col(c) *= -1.0;
    }
  }
  res.residuals.resize(res.vectors.cols());
  for (Eigen::Index c = 0; c < res.vectors.cols(); ++c)
    res.residuals[c] = (op.symmetric * res.vectors.col(c) -
                        res.values[c] * res.vectors.col(c))
                           .norm();
}

} // namespace

EigenResult smallest_eigenpairs(const SparseSymmetricOperator &op, int k,
                                const EigenSolverOptions &options) {
  const Eigen::Index n = op.dim();
  if (k < 1)
    throw DomainError("smallest_eigenpairs: k must be at least 1");
  const int p = k + std::max(1, options.guard_vectors);
  if (Eigen::Index(p) * (options.krylov_blocks + 1) >= n)
    return smallest_eigenpairs_dense(op, k);

  Eigen::SparseMatrix<double> shifted = op.symmetric;
  for (Eigen::Index i = 0; i < n; ++i)
    shifted.coeffRef(i, i) += options.shift;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(shifted);
  if (solver.info() != Eigen::Success)
    throw NonConvergence("smallest_eigenpairs: factorization of the shifted "
                         "operator failed");

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index c = 0; c < p; ++c)
    for (Eigen::Index r = 0; r < n; ++r)
      x(r, c) = gauss(rng);
  x = orthonormal_extension(Eigen::MatrixXd(n, 0), x);

  EigenResult res;
  Eigen::VectorXd residuals = Eigen::VectorXd::Constant(k, INFINITY);
  while (res.iterations < options.max_iterations) {
    Eigen::MatrixXd basis = x;
    Eigen::MatrixXd block = x;
    for (int s = 0; s < options.krylov_blocks; ++s) {
      Eigen::MatrixXd w = solver.solve(block);
      ++res.iterations;
      block = orthonormal_extension(basis, std::move(w));
      if (block.cols() == 0)
        break;
      Eigen::MatrixXd grown(n, basis.cols() + block.cols());
      grown << basis, block;
      basis = std::move(grown);
    }
    const Eigen::MatrixXd s_basis = op.symmetric * basis;
    Eigen::MatrixXd h = basis.transpose() * s_basis;
    h = 0.5 * (h + h.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ritz(h);
    const Eigen::Index keep = std::min<Eigen::Index>(p, basis.cols());
    const Eigen::MatrixXd u = ritz.eigenvectors().leftCols(keep);
    const Eigen::VectorXd theta = ritz.eigenvalues().head(keep);
    Eigen::MatrixXd y = basis * u;
    const Eigen::MatrixXd r = s_basis * u - y * theta.asDiagonal();
    for (int c = 0; c < k; ++c)
      residuals[c] = r.col(c).norm();
    if ((residuals.array() <= options.tol).all()) {
      res.values = theta.head(k);
      res.vectors = y.leftCols(k);
      finalize(op, res);
      return res;
    }
    x = orthonormal_extension(Eigen::MatrixXd(n, 0), y);
  }
  std::ostringstream ss;
  ss << "smallest_eigenpairs: no convergence after " << res.iterations
     << " block solves; residuals";
  for (Eigen::Index c = 0; c < residuals.size(); ++c)
    ss << ' ' << residuals[c];
  throw NonConvergence(ss.str());
}

EigenResult smallest_eigenpairs_dense(const SparseSymmetricOperator &op,
                                      int k) {
  if (op.dim() > 5000)
    throw DomainError("dense eigensolver limited to dimension 5000");
  if (k < 1 || k > op.dim())
    throw DomainError("smallest_eigenpairs_dense: invalid k");
  Eigen::MatrixXd dense(op.symmetric);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
  EigenResult res;
  res.values = es.eigenvalues().head(k);
  res.vectors = es.eigenvectors().leftCols(k);
  finalize(op, res);
  return res;
}

EigenfunctionTable::EigenfunctionTable(FvmGrid grid, Eigen::MatrixXd values)
    : grid_(grid), values_(std::move(values)) {
  if (values_.rows() != grid_.cells())
    throw DimensionMismatch("eigenfunction table: vector length must equal "
                            "the number of cells");
}

EigenfunctionTable::Sample
EigenfunctionTable::interpolate(double x, double y, Eigen::Index column) const {
  const auto &d = grid_.domain();
  Sample out{0.0, Eigen::Vector2d::Zero(), false};
  if (x < d.x_lo || x > d.x_hi || y < d.y_lo || y > d.y_hi)
    out.clamped = true;
  // Continuous cell-center coordinates.
  double sx = (x - d.x_lo) / grid_.hx() - 0.5;
  double sy = (y - d.y_lo) / grid_.hy() - 0.5;
  bool flat_x = false, flat_y = false;
  if (sx <= 0.0) {
    sx = 0.0;
    flat_x = true;
  } else if (sx >= grid_.nx() - 1) {
    sx = grid_.nx() - 1;
    flat_x = true;
  }
  if (sy <= 0.0) {
    sy = 0.0;
    flat_y = true;
  } else if (sy >= grid_.ny() - 1) {
    sy = grid_.ny() - 1;
    flat_y = true;
  }
  const int i0 = std::min(static_cast<int>(std::floor(sx)), grid_.nx() - 2);
  const int j0 = std::min(static_cast<int>(std::floor(sy)), grid_.ny() - 2);
  const double tx = sx - i0;
  const double ty = sy - j0;
  const double f00 = values_(grid_.index(i0, j0), column);
  const double f10 = values_(grid_.index(i0 + 1, j0), column);
  const double f01 = values_(grid_.index(i0, j0 + 1), column);
  const double f11 = values_(grid_.index(i0 + 1, j0 + 1), column);
  out.value = (1 - tx) * (1 - ty) * f00 + tx * (1 - ty) * f10 +
              (1 - tx) * ty * f01 + tx * ty * f11;
  if (!flat_x)
    out.gradient[0] =
        ((1 - ty) * (f10 - f00) + ty * (f11 - f01)) / grid_.hx();
  if (!flat_y)
    out.gradient[1] =
        ((1 - tx) * (f01 - f00) + tx * (f11 - f10)) / grid_.hy();
  return out;
}

Eigen::Index EigenfunctionTable::interpolate_batch(
    const Eigen::Ref<const Eigen::MatrixXd> &states, Eigen::Index column,
    Eigen::VectorXd &values, Eigen::MatrixXd &grads) const {
  if (states.rows() < 2)
    throw DimensionMismatch("interpolate_batch needs two coordinates");
  values.resize(states.cols());
  grads.resize(2, states.cols());
  Eigen::Index clamped = 0;
  for (Eigen::Index p = 0; p < states.cols(); ++p) {
    auto s = interpolate(states(0, p), states(1, p), column);
    values[p] = s.value;
    grads.col(p) = s.gradient;
    clamped += s.clamped ? 1 : 0;
  }
  return clamped;
}

void EigenfunctionTable::write_csv(const std::filesystem::path &path) const {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  out << "x,y";
  for (Eigen::Index c = 0; c < values_.cols(); ++c)
    out << ",phi_" << (c + 1);
  out << '\n';
  for (int j = 0; j < grid_.ny(); ++j)
    for (int i = 0; i < grid_.nx(); ++i) {
      out << io::format_double(grid_.center_x(i)) << ','
          << io::format_double(grid_.center_y(j));
      for (Eigen::Index c = 0; c < values_.cols(); ++c)
        out << ',' << io::format_double(values_(grid_.index(i, j), c));
      out << '\n';
    }
}

EigenfunctionTable read_table_csv(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("x,y", 0) != 0)
    throw FormatError("eigenfunction table must start with 'x,y' header");
  const auto cols = std::count(line.begin(), line.end(), ',') - 1;
  if (cols < 1)
    throw FormatError("eigenfunction table has no phi columns");
  std::vector<double> xs, ys, vals;
  while (std::getline(in, line)) {
    if (line.empty())
      continue;
    std::istringstream ss(line);
    std::string item;
    std::vector<double> row;
    while (std::getline(ss, item, ','))
      row.push_back(io::parse_double(item));
    if (static_cast<long>(row.size()) != cols + 2)
      throw FormatError("eigenfunction table row has wrong column count");
    xs.push_back(row[0]);
    ys.push_back(row[1]);
    vals.insert(vals.end(), row.begin() + 2, row.end());
  }
  std::vector<double> ux = xs, uy = ys;
  std::sort(ux.begin(), ux.end());
  ux.erase(std::unique(ux.begin(), ux.end()), ux.end());
  std::sort(uy.begin(), uy.end());
  uy.erase(std::unique(uy.begin(), uy.end()), uy.end());
  const int nx = static_cast<int>(ux.size());
  const int ny = static_cast<int>(uy.size());
  if (nx < 2 || ny < 2 || std::size_t(nx) * ny != xs.size())
    throw FormatError("eigenfunction table rows do not form a full grid");
  const double hx = (ux.back() - ux.front()) / (nx - 1);
  const double hy = (uy.back() - uy.front()) / (ny - 1);
  FvmGrid grid({ux.front() - 0.5 * hx, ux.back() + 0.5 * hx,
                uy.front() - 0.5 * hy, uy.back() + 0.5 * hy},
               nx, ny);
  Eigen::MatrixXd values(grid.cells(), cols);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    const int i = static_cast<int>(std::lround((xs[r] - ux.front()) / hx));
    const int j = static_cast<int>(std::lround((ys[r] - uy.front()) / hy));
    for (long c = 0; c < cols; ++c)
      values(grid.index(i, j), c) = vals[r * cols + c];
  }
  return EigenfunctionTable(grid, std::move(values));
}

void write_eigenvalue_report(const std::filesystem::path &path,
                             const Eigen::VectorXd &values,
                             const Eigen::VectorXd &residuals) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  out << "index,lambda,residual\n";
  for (Eigen::Index i = 0; i < values.size(); ++i)
    out << (i + 1) << ',' << io::format_double(values[i]) << ','
        << io::format_double(residuals[i]) << '\n';
}

} // namespace specnet::fvm
