#include <specnet/errors.h>
#include <specnet/io_util.h>
#include <specnet/network.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace specnet {

NetworkArchitecture::NetworkArchitecture(std::vector<int> layer_sizes)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2)
    throw DomainError("network architecture needs at least two layer sizes");
  for (int n : sizes_)
    if (n < 1)
      throw DomainError("network layer sizes must be positive");
  offsets_.assign(1, 0);
  for (std::size_t l = 1; l < sizes_.size(); ++l)
    offsets_.push_back(offsets_.back() +
                       static_cast<Eigen::Index>(sizes_[l]) *
                           (sizes_[l - 1] + 1));
}

namespace {
double tanh_value(double z) { return std::tanh(z); }
double tanh_derivative(double z) {
  const double t = std::tanh(z);
  return 1.0 - t * t;
}
double tanh_second(double z) {
  const double t = std::tanh(z);
  return -2.0 * t * (1.0 - t * t);
}
} // namespace

Activation Activation::tanh() {
  return {&tanh_value, &tanh_derivative, &tanh_second, true};
}

NetworkParams::NetworkParams(NetworkArchitecture a)
    : arch(std::move(a)), flat(Eigen::VectorXd::Zero(arch.parameter_count())) {}

RowMajorMap NetworkParams::weight(int layer) {
  const auto &s = arch.layer_sizes();
  return {flat.data() + arch.weight_offset(layer), s[layer], s[layer - 1]};
}
ConstRowMajorMap NetworkParams::weight(int layer) const {
  const auto &s = arch.layer_sizes();
  return {flat.data() + arch.weight_offset(layer), s[layer], s[layer - 1]};
}
Eigen::Map<Eigen::VectorXd> NetworkParams::bias(int layer) {
  return {flat.data() + arch.bias_offset(layer), arch.layer_sizes()[layer]};
}
Eigen::Map<const Eigen::VectorXd> NetworkParams::bias(int layer) const {
  return {flat.data() + arch.bias_offset(layer), arch.layer_sizes()[layer]};
}

namespace {

void check_input(const NetworkParams &net, Eigen::Index rows) {
  if (rows != net.arch.input_dim())
    throw DimensionMismatch("network input has dimension " +
                            std::to_string(rows) + ", expected " +
                            std::to_string(net.arch.input_dim()));
  if (net.flat.size() != net.arch.parameter_count())
    throw DimensionMismatch("network parameter vector has wrong length");
}

// Fills act, d1, d2 from pre-activations z.
void activate(const Activation &act, const Eigen::MatrixXd &z,
              Eigen::MatrixXd &h, Eigen::MatrixXd &d1, Eigen::MatrixXd &d2) {
  if (act.is_tanh) {
    h = z.array().tanh().matrix();
    d1 = (1.0 - h.array().square()).matrix();
    d2 = (-2.0 * h.array() * d1.array()).matrix();
  } else {
    h = z.unaryExpr(act.value);
    d1 = z.unaryExpr(act.derivative);
    d2 = z.unaryExpr(act.second_derivative);
  }
}

} // namespace

double realize(const NetworkParams &net, ConstVectorRef x) {
  check_input(net, x.size());
  const int L = net.arch.num_layers();
  Eigen::VectorXd h = x;
  for (int l = 1; l < L; ++l) {
    Eigen::VectorXd z = net.weight(l) * h + net.bias(l);
    h = net.activation.is_tanh ? Eigen::VectorXd(z.array().tanh())
                               : Eigen::VectorXd(z.unaryExpr(net.activation.value));
  }
  return (net.weight(L) * h + net.bias(L))[0];
}

ValueAndGrad realize_with_spatial_grad(const NetworkParams &net,
                                       ConstVectorRef x) {
  check_input(net, x.size());
  BatchEval eval = forward_batch(net, x);
  return {eval.values[0], eval.grads.col(0)};
}

BatchEval forward_batch(const NetworkParams &net,
                        const Eigen::Ref<const Eigen::MatrixXd> &states,
                        ForwardTrace *trace) {
  check_input(net, states.rows());
  if (net.arch.output_dim() != 1)
    throw DimensionMismatch("forward_batch expects a scalar-output network");
  const int L = net.arch.num_layers();
  const Eigen::Index b = states.cols();

  ForwardTrace local;
  local.inputs.resize(static_cast<std::size_t>(L));
  local.d1.resize(static_cast<std::size_t>(L - 1));
  local.d2.resize(static_cast<std::size_t>(L - 1));
  local.inputs[0] = states;
  for (int l = 1; l < L; ++l) {
    Eigen::MatrixXd z = net.weight(l) * local.inputs[l - 1];
    z.colwise() += net.bias(l);
    activate(net.activation, z, local.inputs[l], local.d1[l - 1],
             local.d2[l - 1]);
  }

  BatchEval out;
  out.values = (net.weight(L) * local.inputs[L - 1]).transpose();
  out.values.array() += net.bias(L)[0];

  // Reverse sweep for the spatial gradient of the scalar output.
  Eigen::MatrixXd u = net.weight(L).transpose().replicate(1, b);
  for (int l = L - 1; l >= 1; --l) {
    u.array() *= local.d1[l - 1].array();
    u = net.weight(l).transpose() * u;
  }
  out.grads = std::move(u);

  if (trace)
    *trace = std::move(local);
  return out;
}

Eigen::VectorXd
param_gradient(const NetworkParams &net, const ForwardTrace &trace,
               const Eigen::Ref<const Eigen::VectorXd> &value_adj,
               const Eigen::Ref<const Eigen::MatrixXd> &grad_adj) {
  const int L = net.arch.num_layers();
  if (static_cast<int>(trace.inputs.size()) != L)
    throw DimensionMismatch("forward trace does not match the network");
  const Eigen::Index b = trace.inputs[0].cols();
  if (value_adj.size() != b || grad_adj.cols() != b ||
      grad_adj.rows() != net.arch.input_dim())
    throw DimensionMismatch("adjoint shapes do not match the forward trace");

  // Tangent pass along grad_adj: grad_adj . grad_x y is the directional
  // derivative of y, so the gradient term becomes a forward-mode output.
  std::vector<Eigen::MatrixXd> tangent_in(static_cast<std::size_t>(L));
  std::vector<Eigen::MatrixXd> tangent_pre(static_cast<std::size_t>(L - 1));
  tangent_in[0] = grad_adj;
  for (int l = 1; l < L; ++l) {
    tangent_pre[l - 1] = net.weight(l) * tangent_in[l - 1];
    tangent_in[l] = (trace.d1[l - 1].array() * tangent_pre[l - 1].array()).matrix();
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.arch.parameter_count());
  Eigen::MatrixXd zbar = value_adj.transpose();
  Eigen::MatrixXd zdotbar = Eigen::MatrixXd::Ones(1, b);
  const auto &sizes = net.arch.layer_sizes();
  for (int l = L; l >= 1; --l) {
    RowMajorMap ga(grad.data() + net.arch.weight_offset(l), sizes[l],
                   sizes[l - 1]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + net.arch.bias_offset(l),
                                   sizes[l]);
    ga.noalias() = zbar * trace.inputs[l - 1].transpose();
    ga.noalias() += zdotbar * tangent_in[l - 1].transpose();
    gb = zbar.rowwise().sum();
    if (l == 1)
      break;
    Eigen::MatrixXd hbar = net.weight(l).transpose() * zbar;
    Eigen::MatrixXd hdotbar = net.weight(l).transpose() * zdotbar;
    const auto &d1 = trace.d1[l - 2].array();
    const auto &d2 = trace.d2[l - 2].array();
    zdotbar = (d1 * hdotbar.array()).matrix();
    zbar = (d1 * hbar.array() +
            d2 * tangent_pre[l - 2].array() * hdotbar.array())
               .matrix();
  }
  return grad;
}

LossGradient
batch_loss_param_gradient(std::span<const NetworkParams> nets,
                          const Eigen::Ref<const Eigen::MatrixXd> &states,
                          const Eigen::VectorXd &weights,
                          const LossFunctional &loss) {
  if (weights.size() != states.cols())
    throw DimensionMismatch("batch weights and states differ in size");
  std::vector<ForwardTrace> traces(nets.size());
  std::vector<BatchEval> evals;
  evals.reserve(nets.size());
  for (std::size_t i = 0; i < nets.size(); ++i)
    evals.push_back(forward_batch(nets[i], states, &traces[i]));
  LossWithAdjoints lw = loss(evals, weights);
  if (lw.adjoints.size() != nets.size())
    throw DimensionMismatch("loss functional returned wrong adjoint count");
  LossGradient out;
  out.loss = lw.loss;
  for (std::size_t i = 0; i < nets.size(); ++i)
    out.grads.push_back(param_gradient(nets[i], traces[i],
                                       lw.adjoints[i].values,
                                       lw.adjoints[i].grads));
  return out;
}

NetworkParams init_params(const NetworkArchitecture &arch, std::uint64_t seed,
                          InitScheme scheme) {
  NetworkParams net(arch);
  std::mt19937_64 rng(seed);
  switch (scheme) {
  case InitScheme::UniformFanIn:
    for (int l = 1; l <= arch.num_layers(); ++l) {
      const double bound = 1.0 / std::sqrt(double(arch.layer_sizes()[l - 1]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      auto a = net.weight(l);
      for (Eigen::Index r = 0; r < a.rows(); ++r)
        for (Eigen::Index c = 0; c < a.cols(); ++c)
          a(r, c) = dist(rng);
      net.bias(l).setZero();
    }
    break;
  }
  return net;
}

void save_checkpoint(const std::filesystem::path &path,
                     const NetworkParams &net) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw FormatError("cannot open " + path.string() + " for writing");
  out << "EIGNET v1; arch=";
  const auto &s = net.arch.layer_sizes();
  for (std::size_t i = 0; i < s.size(); ++i)
    out << (i ? "," : "") << s[i];
  out << '\n';
  io::write_f64_le(out, std::span<const double>(net.flat.data(),
                                                net.flat.size()));
}

NetworkParams load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw FormatError("cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::vector<int> sizes;
  for (auto &[key, value] : io::parse_header(header, "EIGNET")) {
    if (key != "arch")
      throw FormatError("unknown EIGNET header field '" + key + "'");
    std::istringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      int v = 0;
      const auto [end, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || end != item.data() + item.size())
        throw FormatError("malformed EIGNET architecture '" + value + "'");
      sizes.push_back(v);
    }
  }
  NetworkParams net{NetworkArchitecture(sizes)};
  io::read_f64_le(in, std::span<double>(net.flat.data(), net.flat.size()));
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after EIGNET payload");
  return net;
}

} // namespace specnet
