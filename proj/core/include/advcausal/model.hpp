#pragma once

#include <cstdint>
#include <vector>

#include "advcausal/tensor.hpp"

namespace advcausal {

enum class Activation { relu };
enum class LrSchedule { constant, cyclic };

struct ClassifierSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;  // empty -> pure linear model
  std::size_t num_classes = 0;           // d >= 2
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
  bool operator==(const ClassifierSpec&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 10;  // 0 is allowed and trains nothing
  std::size_t batch_size = 64;
  double learning_rate = 0.1;
  LrSchedule lr_schedule = LrSchedule::cyclic;
  double momentum = 0.9;  // in [0, 1); 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

/// MLP over [0,1]^input_dim producing class probabilities. Layer l maps
/// h -> relu(h W_l^T + b_l) with W_l stored (out x in); the last layer has no
/// activation and feeds softmax.
class Classifier {
 public:
  ClassifierSpec spec;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;

  Tensor logits(Tape& tape, const Tensor& x) const;
  Tensor probabilities(Tape& tape, const Tensor& x) const;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::size_t parameter_count() const;

  /// Deep copy with fresh tensor identities; safe to evaluate concurrently
  /// with training on the original.
  Classifier clone() const;

  /// FNV-1a over the raw parameter bytes; cheap identity for tests and
  /// report metadata.
  std::uint64_t checksum() const;
};

Classifier init_classifier(const ClassifierSpec& spec);

/// Probabilities without recording a tape.
Tensor predict_proba(const Classifier& model, const Tensor& x);
std::vector<int> predict_class(const Classifier& model, const Tensor& x);

/// Mean over the batch of -log p[i, y_i], probabilities floored at
/// kProbFloor before the log.
Tensor cross_entropy(Tape& tape, const Tensor& probs, const std::vector<int>& labels);

/// Sum (not mean) of per-sample cross-entropies. Attack objectives use this
/// so per-sample input gradients do not depend on batch composition.
Tensor cross_entropy_total(Tape& tape, const Tensor& probs, const std::vector<int>& labels);

/// mean over the batch of w_i * (-log p[i, y_i]); the weights are constants.
Tensor weighted_cross_entropy(Tape& tape, const Tensor& probs,
                              const std::vector<int>& labels,
                              const std::vector<double>& weights);

enum class InputLossKind {
  cross_entropy,      // d/dx of the summed CE loss
  class_probability,  // d/dx of sum_i f_j(x_i): one Jacobian row per sample
};

/// Gradient of the chosen loss with respect to the inputs, parameters held
/// fixed (their .grad members are untouched). Result has x's shape.
Tensor grad_wrt_input(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                      InputLossKind kind, std::size_t class_index = 0);

/// Per-class input gradients: element j is the [batch, input_dim] tensor of
/// rows d f_j(x_i)/d x_i, so sample i's full Jacobian is the d x input_dim
/// matrix assembled from row i of each element.
std::vector<Tensor> input_jacobian(const Classifier& model, const Tensor& x);

/// SGD with optional momentum and an epoch-indexed learning-rate schedule.
/// The cyclic schedule is triangular: zero at both ends, peaking at the
/// midpoint epoch.
class Sgd {
 public:
  explicit Sgd(TrainConfig config);

  double lr_at(std::size_t epoch) const;

  /// v <- momentum * v + g; p <- p - lr * v.
  void step(Classifier& model, const GradTable& grads, double lr);

  const TrainConfig& config() const { return config_; }

 private:
  TrainConfig config_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace advcausal
