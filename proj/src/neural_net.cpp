#include "nnpc/neural_net.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "nnpc/errors.hpp"

namespace nnpc {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

Eigen::MatrixXd apply(ActivationKind kind, const Eigen::MatrixXd& z) {
  return z.unaryExpr([kind](double x) { return activate(kind, x); });
}

Eigen::MatrixXd apply_grad(ActivationKind kind, const Eigen::MatrixXd& z) {
  return z.unaryExpr([kind](double x) { return activate_grad(kind, x); });
}

void require_input(const Network& net, Eigen::Index rows) {
  if (net.layers.empty()) throw DimensionError("network has no layers");
  if (rows != net.in_dim()) {
    throw DimensionError(
        fmt::format("input length {} does not match network input dimension {}", rows,
                    net.in_dim()));
  }
}

void require_differentiable(const Network& net) {
  if (!net.differentiable()) {
    throw NotDifferentiableError("network contains a BinaryStep layer; it cannot be trained");
  }
}

// Batched forward pass; columns of `x` are samples.
struct BatchCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> pre;
  Eigen::MatrixXd output;
};

BatchCache forward_batch(const Network& net, const Eigen::MatrixXd& x) {
  BatchCache c;
  c.inputs.reserve(net.layers.size());
  c.pre.reserve(net.layers.size());
  Eigen::MatrixXd a = x;
  for (const Layer& layer : net.layers) {
    c.inputs.push_back(a);
    Eigen::MatrixXd z = layer.weights * a;
    z.colwise() += layer.biases;
    a = apply(layer.activation, z);
    c.pre.push_back(std::move(z));
  }
  c.output = std::move(a);
  return c;
}

// Accumulates parameter gradients of sum-over-columns loss given dL/d(output).
Eigen::MatrixXd backward_batch(const Network& net, const BatchCache& c, Eigen::MatrixXd adjoint,
                               Gradients* grads) {
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Eigen::MatrixXd delta = adjoint.cwiseProduct(apply_grad(layer.activation, c.pre[li]));
    if (grads != nullptr) {
      grads->weights[li].noalias() += delta * c.inputs[li].transpose();
      grads->biases[li] += delta.rowwise().sum();
    }
    adjoint = layer.weights.transpose() * delta;
  }
  return adjoint;
}

}  // namespace

std::string activation_name(ActivationKind k) {
  switch (k) {
    case ActivationKind::Sigmoid: return "Sigmoid";
    case ActivationKind::TanH: return "TanH";
    case ActivationKind::BinaryStep: return "Binary step";
    case ActivationKind::ReLU: return "ReLU";
    case ActivationKind::Identity: return "identity";
  }
  return "identity";
}

ActivationKind activation_from_name(const std::string& name) {
  const std::string n = lower(name);
  if (n == "sigmoid") return ActivationKind::Sigmoid;
  if (n == "tanh") return ActivationKind::TanH;
  if (n == "binary step" || n == "binary_step" || n == "binarystep") {
    return ActivationKind::BinaryStep;
  }
  if (n == "relu") return ActivationKind::ReLU;
  if (n == "identity") return ActivationKind::Identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

double activate(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case ActivationKind::TanH: return std::tanh(x);
    case ActivationKind::BinaryStep: return x >= 0.0 ? 1.0 : 0.0;
    case ActivationKind::ReLU: return x > 0.0 ? x : 0.0;
    case ActivationKind::Identity: return x;
  }
  return x;
}

double activate_grad(ActivationKind kind, double x) {
  switch (kind) {
    case ActivationKind::Sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-x));
      return s * (1.0 - s);
    }
    case ActivationKind::TanH: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case ActivationKind::BinaryStep:
      throw NotDifferentiableError("BinaryStep has zero gradient almost everywhere");
    case ActivationKind::ReLU: return x > 0.0 ? 1.0 : 0.0;
    case ActivationKind::Identity: return 1.0;
  }
  return 1.0;
}

Eigen::Index Network::in_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
Eigen::Index Network::out_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.biases.size());
  return n;
}

bool Network::differentiable() const {
  return std::none_of(layers.begin(), layers.end(), [](const Layer& l) {
    return l.activation == ActivationKind::BinaryStep;
  });
}

void validate(const Network& net) {
  if (net.layers.empty()) throw DimensionError("network has no layers");
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Layer& l = net.layers[i];
    if (l.weights.rows() == 0 || l.weights.cols() == 0) {
      throw DimensionError(fmt::format("layer {} has an empty weight matrix", i));
    }
    if (l.biases.size() != l.weights.rows()) {
      throw DimensionError(fmt::format("layer {}: {} biases for {} outputs", i, l.biases.size(),
                                       l.weights.rows()));
    }
    if (i > 0 && l.in_dim() != net.layers[i - 1].out_dim()) {
      throw DimensionError(fmt::format("layer {} expects {} inputs but layer {} produces {}", i,
                                       l.in_dim(), i - 1, net.layers[i - 1].out_dim()));
    }
    if (!l.weights.allFinite() || !l.biases.allFinite()) {
      throw DimensionError(fmt::format("layer {} has non-finite parameters", i));
    }
  }
}

Network make_network(const std::vector<Eigen::Index>& dims, ActivationKind hidden,
                     ActivationKind output, std::uint64_t seed) {
  if (dims.size() < 2) throw DimensionError("need at least an input and an output width");
  std::mt19937_64 rng(seed);
  Network net;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const Eigen::Index in = dims[i];
    const Eigen::Index out = dims[i + 1];
    if (in < 1 || out < 1) throw DimensionError("layer widths must be >= 1");
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Layer layer;
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = u(rng);
    }
    layer.biases = Eigen::VectorXd::Zero(out);
    layer.activation = (i + 2 == dims.size()) ? output : hidden;
    net.layers.push_back(std::move(layer));
  }
  return net;
}

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input) {
  require_input(net, input.size());
  Eigen::VectorXd a = input;
  for (const Layer& layer : net.layers) {
    Eigen::VectorXd z = layer.weights * a + layer.biases;
    a = z.unaryExpr([&](double x) { return activate(layer.activation, x); });
  }
  return a;
}

ForwardCache forward_cached(const Network& net, const Eigen::VectorXd& input) {
  require_input(net, input.size());
  ForwardCache c;
  Eigen::VectorXd a = input;
  for (const Layer& layer : net.layers) {
    c.inputs.push_back(a);
    Eigen::VectorXd z = layer.weights * a + layer.biases;
    a = z.unaryExpr([&](double x) { return activate(layer.activation, x); });
    c.pre_activations.push_back(std::move(z));
  }
  c.output = std::move(a);
  return c;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const Layer& l : net.layers) {
    g.weights.push_back(Eigen::MatrixXd::Zero(l.weights.rows(), l.weights.cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(l.biases.size()));
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.weights.size() != weights.size()) throw DimensionError("gradient shape mismatch");
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

Eigen::VectorXd backpropagate(const Network& net, const ForwardCache& cache,
                              const Eigen::VectorXd& output_adjoint, Gradients* grads) {
  require_differentiable(net);
  if (output_adjoint.size() != net.out_dim()) {
    throw DimensionError("output adjoint length does not match network output dimension");
  }
  if (cache.inputs.size() != net.layers.size()) {
    throw DimensionError("forward cache does not belong to this network");
  }
  Eigen::VectorXd adjoint = output_adjoint;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const Layer& layer = net.layers[li];
    const Eigen::VectorXd delta = adjoint.cwiseProduct(cache.pre_activations[li].unaryExpr(
        [&](double x) { return activate_grad(layer.activation, x); }));
    if (grads != nullptr) {
      grads->weights[li].noalias() += delta * cache.inputs[li].transpose();
      grads->biases[li] += delta;
    }
    adjoint = layer.weights.transpose() * delta;
  }
  return adjoint;
}

BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                        const Eigen::VectorXd& target) {
  require_differentiable(net);
  require_input(net, input.size());
  if (target.size() != net.out_dim()) {
    throw DimensionError(fmt::format("target length {} does not match output dimension {}",
                                     target.size(), net.out_dim()));
  }
  const ForwardCache cache = forward_cached(net, input);
  const Eigen::VectorXd err = cache.output - target;
  BackwardResult r{Gradients::zeros_like(net), 0.5 * err.squaredNorm()};
  (void)backpropagate(net, cache, err, &r.grads);
  return r;
}

Network sgd_update(const Network& net, const Gradients& grads, double alpha) {
  if (grads.weights.size() != net.layers.size() || grads.biases.size() != net.layers.size()) {
    throw DimensionError("gradient layer count does not match network");
  }
  Network out = net;
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    Layer& l = out.layers[i];
    if (grads.weights[i].rows() != l.weights.rows() || grads.weights[i].cols() != l.weights.cols() ||
        grads.biases[i].size() != l.biases.size()) {
      throw DimensionError(fmt::format("gradient shape mismatch in layer {}", i));
    }
    l.weights -= alpha * grads.weights[i];
    l.biases -= alpha * grads.biases[i];
  }
  return out;
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
}

double mean_loss(const Network& net, const Eigen::MatrixXd& inputs,
                 const Eigen::MatrixXd& targets) {
  require_input(net, inputs.cols());
  if (targets.rows() != inputs.rows() || targets.cols() != net.out_dim()) {
    throw DimensionError("target matrix shape does not match inputs/network");
  }
  if (inputs.rows() == 0) return 0.0;
  const BatchCache c = forward_batch(net, inputs.transpose());
  return 0.5 * (c.output - targets.transpose()).colwise().squaredNorm().mean();
}

TrainResult train(const Network& net, const Eigen::MatrixXd& inputs,
                  const Eigen::MatrixXd& targets, const TrainConfig& cfg) {
  validate(cfg);
  validate(net);
  require_differentiable(net);
  if (inputs.rows() == 0) throw DataError("train: empty dataset");
  if (inputs.rows() != targets.rows()) {
    throw DimensionError("train: input and target row counts differ");
  }
  require_input(net, inputs.cols());
  if (targets.cols() != net.out_dim()) {
    throw DimensionError("train: target width does not match network output dimension");
  }

  const Eigen::MatrixXd xt = inputs.transpose();
  const Eigen::MatrixXd yt = targets.transpose();
  const auto n = static_cast<std::size_t>(inputs.rows());

  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(cfg.seed);

  TrainResult result{net, {}};
  result.epoch_loss.reserve(cfg.epochs);
  Eigen::MatrixXd xb;
  Eigen::MatrixXd yb;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      xb.resize(xt.rows(), static_cast<Eigen::Index>(count));
      yb.resize(yt.rows(), static_cast<Eigen::Index>(count));
      for (std::size_t j = 0; j < count; ++j) {
        xb.col(static_cast<Eigen::Index>(j)) = xt.col(order[start + j]);
        yb.col(static_cast<Eigen::Index>(j)) = yt.col(order[start + j]);
      }
      const BatchCache c = forward_batch(result.net, xb);
      Gradients g = Gradients::zeros_like(result.net);
      (void)backward_batch(result.net, c, c.output - yb, &g);
      g *= 1.0 / static_cast<double>(count);
      result.net = sgd_update(result.net, g, cfg.learning_rate);
    }
    const double loss = mean_loss(result.net, inputs, targets);
    if (!std::isfinite(loss)) {
      throw DivergenceError(epoch, fmt::format("training diverged at epoch {}", epoch));
    }
    result.epoch_loss.push_back(loss);
  }
  return result;
}

}  // namespace nnpc
