#include <specnet/errors.h>
#include <specnet/io_util.h>
#include <specnet/sampling.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <span>

namespace specnet {

void WeightedDataset::validate() const {
  if (states.rows() < 1)
    throw DomainError("dataset must contain at least one state");
  if (weights.size() != states.rows())
    throw DimensionMismatch("dataset weights and states differ in length");
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
      throw DomainError("dataset weight " + std::to_string(i) +
                        " is not strictly positive and finite");
  }
}

WeightedDataset euler_maruyama(const PotentialSpec &potential,
                               ConstVectorRef x0, double dt, Eigen::Index n,
                               std::uint64_t seed, Eigen::Index burn_in) {
  if (!(dt > 0.0))
    throw DomainError("euler_maruyama: dt must be positive");
  if (n < 1)
    throw DomainError("euler_maruyama: n must be at least 1");
  if (burn_in < 0)
    throw DomainError("euler_maruyama: burn_in must be non-negative");
  if (!potential.identity_diffusion())
    throw DomainError("euler_maruyama: only identity diffusion is supported");
  if (x0.size() != potential.dim)
    throw DimensionMismatch("euler_maruyama: x0 has wrong dimension");

  const int d = potential.dim;
  const double noise = std::sqrt(2.0 * dt / potential.beta);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  WeightedDataset out;
  out.states.resize(n, d);
  out.weights = Vector::Ones(n);
  out.meta.potential_id = potential.id;
  out.meta.beta = potential.beta;
  out.meta.dt = dt;
  out.meta.seed = seed;

  Vector x = x0;
  Vector eta(d);
  const Eigen::Index total = burn_in + n;
  for (Eigen::Index step = 1; step <= total; ++step) {
    for (int k = 0; k < d; ++k)
      eta[k] = gauss(rng);
    x += -dt * potential.gradient(x) + noise * eta;
    if (!x.allFinite())
      throw DivergedTrajectory("euler_maruyama: non-finite state at step " +
                                   std::to_string(step),
                               step);
    if (step > burn_in)
      out.states.row(step - burn_in - 1) = x.transpose();
  }
  return out;
}

ReweightResult reweight(const WeightedDataset &dataset,
                        const std::function<double(ConstVectorRef)> &log_ratio) {
  const Eigen::Index n = dataset.size();
  Vector logs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    logs[i] = log_ratio(dataset.states.row(i).transpose());
    if (!std::isfinite(logs[i]))
      throw DomainError("reweight: non-finite log ratio at state " +
                        std::to_string(i));
  }
  ReweightResult result{dataset, 0};
  const double shift = logs.maxCoeff();
  Vector w = (logs.array() - shift).exp().matrix();
  const double tiny = std::numeric_limits<double>::min();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (w[i] < tiny) {
      w[i] = tiny;
      ++result.underflow_count;
    }
  }
  result.dataset.weights = w / w.mean();
  return result;
}

Minibatch draw_minibatch(Eigen::Index n, Eigen::Index batch_size, Rng &rng) {
  if (batch_size < 1 || batch_size > n)
    throw DomainError("draw_minibatch: batch size must lie in [1, n]");
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  Minibatch batch;
  batch.indices.resize(static_cast<std::size_t>(batch_size));
  for (auto &idx : batch.indices)
    idx = pick(rng);
  return batch;
}

void gather_batch(const WeightedDataset &dataset, const Minibatch &batch,
                  Matrix &states, Vector &weights) {
  const Eigen::Index b = batch.size();
  states.resize(dataset.dim(), b);
  weights.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto idx = batch.indices[static_cast<std::size_t>(i)];
    states.col(i) = dataset.states.row(idx).transpose();
    weights[i] = dataset.weights[idx];
  }
}

void save_dataset(const std::filesystem::path &path,
                  const WeightedDataset &dataset) {
  dataset.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  out << "EIGDATA v1; d=" << dataset.dim() << "; n=" << dataset.size()
      << "; beta=" << io::format_double(dataset.meta.beta)
      << "; dt=" << io::format_double(dataset.meta.dt) << '\n';
  io::write_f64_le(out, std::span<const double>(dataset.states.data(),
                                                dataset.states.size()));
  io::write_f64_le(out, std::span<const double>(dataset.weights.data(),
                                                dataset.weights.size()));
}

WeightedDataset load_dataset(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  long long d = -1, n = -1;
  WeightedDataset ds;
  bool have_beta = false, have_dt = false;
  for (auto &[key, value] : io::parse_header(header, "EIGDATA")) {
    if (key == "d")
      d = io::parse_integer(value);
    else if (key == "n")
      n = io::parse_integer(value);
    else if (key == "beta") {
      ds.meta.beta = io::parse_double(value);
      have_beta = true;
    } else if (key == "dt") {
      ds.meta.dt = io::parse_double(value);
      have_dt = true;
    } else
      throw FormatError("unknown EIGDATA header field '" + key + "'");
  }
  if (d < 1 || n < 1 || !have_beta || !have_dt)
    throw FormatError("incomplete EIGDATA header in " + path.string());
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<long long>(in.tellg() - here);
  in.seekg(here);
  if (bytes / 8 / (d + 1) < n)
    throw FormatError("EIGDATA payload shorter than its header declares");
  ds.states.resize(n, d);
  ds.weights.resize(n);
  io::read_f64_le(in, std::span<double>(ds.states.data(), ds.states.size()));
  io::read_f64_le(in, std::span<double>(ds.weights.data(), ds.weights.size()));
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after EIGDATA payload");
  ds.validate();
  return ds;
}

void export_dataset_csv(const std::filesystem::path &path,
                        const WeightedDataset &dataset) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  for (int k = 0; k < dataset.dim(); ++k)
    out << 'x' << (k + 1) << ',';
  out << "weight\n";
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    for (int k = 0; k < dataset.dim(); ++k)
      out << io::format_double(dataset.states(i, k)) << ',';
    out << io::format_double(dataset.weights[i]) << '\n';
  }
}

Histogram2d histogram2d(const WeightedDataset &dataset, double x_lo,
                        double x_hi, double y_lo, double y_hi, int bins_x,
                        int bins_y) {
  if (dataset.dim() < 2)
    throw DimensionMismatch("histogram2d needs at least two coordinates");
  if (bins_x < 1 || bins_y < 1 || !(x_hi > x_lo) || !(y_hi > y_lo))
    throw DomainError("histogram2d: invalid bins or range");
  Histogram2d h{x_lo, x_hi, y_lo, y_hi, bins_x, bins_y,
                Eigen::MatrixXd::Zero(bins_x, bins_y), 0.0};
  const double hx = (x_hi - x_lo) / bins_x;
  const double hy = (y_hi - y_lo) / bins_y;
  const double total = dataset.weights.sum();
  for (Eigen::Index i = 0; i < dataset.size(); ++i) {
    const double x = dataset.states(i, 0);
    const double y = dataset.states(i, 1);
    const auto bx = static_cast<long long>(std::floor((x - x_lo) / hx));
    const auto by = static_cast<long long>(std::floor((y - y_lo) / hy));
    if (bx < 0 || bx >= bins_x || by < 0 || by >= bins_y) {
      h.outside_mass += dataset.weights[i] / total;
      continue;
    }
    h.density(bx, by) += dataset.weights[i];
  }
  h.density /= total * hx * hy;
  return h;
}

void write_histogram_csv(const std::filesystem::path &path,
                         const Histogram2d &hist) {
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  const double hx = (hist.x_hi - hist.x_lo) / hist.bins_x;
  const double hy = (hist.y_hi - hist.y_lo) / hist.bins_y;
  out << "x1,x2,density\n";
  for (int j = 0; j < hist.bins_y; ++j)
    for (int i = 0; i < hist.bins_x; ++i)
      out << io::format_double(hist.x_lo + (i + 0.5) * hx) << ','
          << io::format_double(hist.y_lo + (j + 0.5) * hy) << ','
          << io::format_double(hist.density(i, j)) << '\n';
}

} // namespace specnet
