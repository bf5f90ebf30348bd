#pragma once

// Fully connected feedforward network trained with plain gradient descent.
// Networks are values: every operation returns a new network.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace nnpc {

enum class ActivationKind { Sigmoid, TanH, BinaryStep, ReLU, Identity };

/// Persisted spelling ("Sigmoid", "TanH", "Binary step", "ReLU", "identity").
[[nodiscard]] std::string activation_name(ActivationKind k);
/// Case-insensitive inverse of activation_name; also accepts "binary_step".
[[nodiscard]] ActivationKind activation_from_name(const std::string& name);

[[nodiscard]] double activate(ActivationKind kind, double x);

/// Exact derivative of `activate`. ReLU uses 0 at the kink. BinaryStep throws
/// NotDifferentiableError.
[[nodiscard]] double activate_grad(ActivationKind kind, double x);

struct Layer {
  Eigen::MatrixXd weights;  // out_dim x in_dim
  Eigen::VectorXd biases;   // out_dim
  ActivationKind activation = ActivationKind::Identity;

  [[nodiscard]] Eigen::Index in_dim() const { return weights.cols(); }
  [[nodiscard]] Eigen::Index out_dim() const { return weights.rows(); }
};

struct Network {
  std::vector<Layer> layers;

  [[nodiscard]] Eigen::Index in_dim() const;
  [[nodiscard]] Eigen::Index out_dim() const;
  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool differentiable() const;
};

/// Throws DimensionError if layer shapes do not chain or entries are non-finite.
void validate(const Network& net);

/// Builds a network with the given layer widths (dims.front() is the input
/// size). Weights are uniform in +-sqrt(6/(in+out)), biases zero.
[[nodiscard]] Network make_network(const std::vector<Eigen::Index>& dims, ActivationKind hidden,
                                   ActivationKind output, std::uint64_t seed);

/// Per-layer intermediates from a forward pass.
struct ForwardCache {
  std::vector<Eigen::VectorXd> inputs;           // input seen by each layer
  std::vector<Eigen::VectorXd> pre_activations;  // b + W x for each layer
  Eigen::VectorXd output;
};

[[nodiscard]] Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input);
[[nodiscard]] ForwardCache forward_cached(const Network& net, const Eigen::VectorXd& input);

/// Parameter gradients, one entry per layer, shaped like the network.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  [[nodiscard]] static Gradients zeros_like(const Network& net);
  Gradients& operator+=(const Gradients& other);
  Gradients& operator*=(double s);
};

/// Reverse-mode pass from an output adjoint. Returns dL/d(input); when `grads`
/// is non-null the parameter gradients are accumulated into it.
[[nodiscard]] Eigen::VectorXd backpropagate(const Network& net, const ForwardCache& cache,
                                            const Eigen::VectorXd& output_adjoint,
                                            Gradients* grads);

struct BackwardResult {
  Gradients grads;
  double loss = 0.0;  // 0.5 * |forward(input) - target|^2
};

[[nodiscard]] BackwardResult backward(const Network& net, const Eigen::VectorXd& input,
                                      const Eigen::VectorXd& target);

/// w <- w - alpha * dL/dw and b <- b - alpha * dL/db for every layer.
[[nodiscard]] Network sgd_update(const Network& net, const Gradients& grads, double alpha);

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
};

void validate(const TrainConfig& cfg);

struct TrainResult {
  Network net;
  std::vector<double> epoch_loss;  // mean per-sample loss after each epoch
};

/// Mini-batch gradient descent; rows of `inputs`/`targets` are samples. The
/// sample order is reshuffled every epoch from `cfg.seed`. Throws
/// DivergenceError if the loss turns non-finite.
[[nodiscard]] TrainResult train(const Network& net, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& targets, const TrainConfig& cfg);

/// Mean of 0.5*|f(x) - y|^2 over rows.
[[nodiscard]] double mean_loss(const Network& net, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets);

}  // namespace nnpc
