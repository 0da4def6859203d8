#include "advcausal/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "advcausal/common.hpp"
#include "advcausal/rng.hpp"

namespace advcausal {

void ClassifierSpec::validate() const {
  if (input_dim == 0) throw ContractError("classifier spec: input_dim must be positive");
  if (num_classes < 2) throw ContractError("classifier spec: need at least 2 classes");
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw ContractError("classifier spec: zero hidden dimension");
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ContractError("train config: batch_size must be positive");
  if (learning_rate <= 0.0) throw ContractError("train config: learning_rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("train config: momentum must be in [0, 1)");
}

Classifier init_classifier(const ClassifierSpec& spec) {
  spec.validate();
  Classifier model;
  model.spec = spec;
  Rng rng(spec.init_seed);
  std::size_t fan_in = spec.input_dim;
  std::vector<std::size_t> outs = spec.hidden_dims;
  outs.push_back(spec.num_classes);
  for (std::size_t out : outs) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({out, fan_in});
    for (double& v : w.data) v = rng.uniform(-bound, bound);
    w.requires_grad = true;
    Tensor b = Tensor::zeros({out});
    b.requires_grad = true;
    model.weights.push_back(std::move(w));
    model.biases.push_back(std::move(b));
    fan_in = out;
  }
  return model;
}

Tensor Classifier::logits(Tape& tape, const Tensor& x) const {
  if (x.shape.size() != 2 || x.shape[1] != spec.input_dim) {
    throw ContractError("classifier: expected input (batch x " + std::to_string(spec.input_dim) +
                        "), got " + x.shape_str());
  }
  Tensor h;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    // Layer 0 reads x by reference so the caller's tensor id stays the one
    // recorded on the tape (copies allocate fresh ids).
    const Tensor& in = l == 0 ? x : h;
    Tensor z = tape.add(tape.matmul(in, tape.transpose(weights[l])), biases[l]);
    h = (l + 1 < weights.size()) ? tape.relu(z) : std::move(z);
  }
  return h;
}

Tensor Classifier::probabilities(Tape& tape, const Tensor& x) const {
  return tape.softmax(logits(tape, x));
}

std::vector<Tensor*> Classifier::parameters() {
  std::vector<Tensor*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::vector<const Tensor*> Classifier::parameters() const {
  std::vector<const Tensor*> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(&weights[l]);
    out.push_back(&biases[l]);
  }
  return out;
}

std::size_t Classifier::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor* p : parameters()) n += p->numel();
  return n;
}

Classifier Classifier::clone() const {
  Classifier copy;
  copy.spec = spec;
  copy.weights = weights;  // copies allocate fresh tensor ids
  copy.biases = biases;
  return copy;
}

std::uint64_t Classifier::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Tensor* p : parameters()) {
    for (double v : p->data) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof(bits));
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (bits >> (8 * byte)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  }
  return h;
}

Tensor predict_proba(const Classifier& model, const Tensor& x) {
  Tape tape = Tape::inference();
  return model.probabilities(tape, x);
}

std::vector<int> predict_class(const Classifier& model, const Tensor& x) {
  return argmax_rows(predict_proba(model, x));
}

namespace {

// -sum_i w_i * log(max(p[i, y_i], floor)) built from tape primitives;
// callers divide by the batch via the weights.
Tensor picked_negative_log_likelihood(Tape& tape, const Tensor& probs,
                                      const std::vector<int>& labels,
                                      const std::vector<double>& weights) {
  if (probs.shape.size() != 2) {
    throw ContractError("cross_entropy: probabilities must be (batch x classes), got " +
                        probs.shape_str());
  }
  const std::size_t n = probs.shape[0], d = probs.shape[1];
  if (labels.size() != n) {
    throw ContractError("cross_entropy: batch of " + std::to_string(n) + " rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  Tensor pick = onehot(labels, d);  // validates label range
  Tensor picked = tape.matmul(tape.mul(probs, pick), Tensor::full({d, 1}, 1.0));
  Tensor logs = tape.log(tape.clamp(picked, kProbFloor,
                                    std::numeric_limits<double>::infinity()));
  Tensor w = Tensor::zeros({n, 1});
  for (std::size_t i = 0; i < n; ++i) w.data[i] = -weights[i];
  return tape.sum(tape.mul(logs, w));
}

}  // namespace

Tensor cross_entropy(Tape& tape, const Tensor& probs, const std::vector<int>& labels) {
  const double inv = labels.empty() ? 0.0 : 1.0 / static_cast<double>(labels.size());
  return picked_negative_log_likelihood(tape, probs, labels,
                                        std::vector<double>(labels.size(), inv));
}

Tensor cross_entropy_total(Tape& tape, const Tensor& probs, const std::vector<int>& labels) {
  return picked_negative_log_likelihood(tape, probs, labels,
                                        std::vector<double>(labels.size(), 1.0));
}

Tensor weighted_cross_entropy(Tape& tape, const Tensor& probs, const std::vector<int>& labels,
                              const std::vector<double>& weights) {
  if (weights.size() != labels.size()) {
    throw ContractError("weighted_cross_entropy: weight/label count mismatch");
  }
  std::vector<double> scaled(weights);
  const double inv = labels.empty() ? 0.0 : 1.0 / static_cast<double>(labels.size());
  for (double& w : scaled) w *= inv;
  return picked_negative_log_likelihood(tape, probs, labels, scaled);
}

Tensor grad_wrt_input(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                      InputLossKind kind, std::size_t class_index) {
  Tape tape;
  Tensor leaf = x;  // fresh id, detached from the caller's tensor
  leaf.requires_grad = true;
  Tensor probs = model.probabilities(tape, leaf);
  Tensor loss = Tensor::scalar(0.0);
  if (kind == InputLossKind::cross_entropy) {
    loss = cross_entropy_total(tape, probs, y);
  } else {
    const std::size_t d = model.spec.num_classes;
    if (class_index >= d) throw ContractError("grad_wrt_input: class index out of range");
    Tensor pick = Tensor::zeros({d, 1});
    pick.data[class_index] = 1.0;
    loss = tape.sum(tape.matmul(probs, pick));
  }
  GradTable table = tape.backward(loss);
  const std::vector<double>* g = find_grad(table, leaf);
  Tensor out = Tensor::zeros(x.shape);
  if (g != nullptr) out.data = *g;
  return out;
}

std::vector<Tensor> input_jacobian(const Classifier& model, const Tensor& x) {
  std::vector<Tensor> rows;
  rows.reserve(model.spec.num_classes);
  for (std::size_t j = 0; j < model.spec.num_classes; ++j) {
    rows.push_back(grad_wrt_input(model, x, {}, InputLossKind::class_probability, j));
  }
  return rows;
}

Sgd::Sgd(TrainConfig config) : config_(std::move(config)) { config_.validate(); }

double Sgd::lr_at(std::size_t epoch) const {
  if (config_.lr_schedule == LrSchedule::constant || config_.epochs <= 1) {
    return config_.learning_rate;
  }
  const double u = static_cast<double>(epoch) / static_cast<double>(config_.epochs - 1);
  const double factor = 1.0 - std::abs(2.0 * u - 1.0);
  return config_.learning_rate * factor;
}

void Sgd::step(Classifier& model, const GradTable& grads, double lr) {
  auto params = model.parameters();
  if (velocity_.empty()) {
    velocity_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i]->numel(), 0.0);
  }
  if (velocity_.size() != params.size()) throw ContractError("sgd: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const std::vector<double>* g = find_grad(grads, p);
    if (g == nullptr) continue;
    if (g->size() != p.numel()) {
      throw ContractError("sgd: gradient shape mismatch for parameter " + std::to_string(i));
    }
    std::vector<double>& v = velocity_[i];
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = config_.momentum * v[k] + (*g)[k];
      p.data[k] -= lr * v[k];
    }
  }
}

}  // namespace advcausal
