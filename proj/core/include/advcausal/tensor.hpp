#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace advcausal {

using TensorId = std::uint64_t;

/// Dense row-major f64 tensor. Identity (id) is per-object: copies receive a
/// fresh id, moves keep theirs, so a parameter tensor can be used as a stable
/// key into a gradient table for as long as it lives in place.
class Tensor {
 public:
  std::vector<std::size_t> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty unless filled from a GradTable

  Tensor() : id_(next_id()) {}
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in,
         bool requires_grad_in = false);

  Tensor(const Tensor& other)
      : shape(other.shape),
        data(other.data),
        requires_grad(other.requires_grad),
        grad(other.grad),
        id_(next_id()) {}
  Tensor& operator=(const Tensor& other) {
    if (this != &other) {
      shape = other.shape;
      data = other.data;
      requires_grad = other.requires_grad;
      grad = other.grad;
    }
    return *this;
  }
  Tensor(Tensor&&) noexcept = default;
  Tensor& operator=(Tensor&&) noexcept = default;

  static Tensor zeros(std::vector<std::size_t> shape_in);
  static Tensor full(std::vector<std::size_t> shape_in, double value);
  static Tensor scalar(double value) { return full({1}, value); }

  TensorId id() const { return id_; }
  std::size_t numel() const { return data.size(); }
  bool is_scalar() const { return data.size() == 1; }

  // 2-D accessors.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool all_finite() const;
  std::string shape_str() const;

  static std::size_t numel_of(const std::vector<std::size_t>& shape_in);

 private:
  static TensorId next_id();
  TensorId id_;
};

/// Gradients keyed by tensor id. Missing entry means zero gradient.
using GradTable = std::unordered_map<TensorId, std::vector<double>>;

const std::vector<double>* find_grad(const GradTable& table, const Tensor& t);

/// Records primitive operations of one forward pass for reverse-mode
/// differentiation. One tape per forward pass; discarded after backward().
///
/// An operation is recorded when any of its inputs is grad-tracked (a leaf
/// with requires_grad, or a previous tape output). backward() walks the
/// recorded list exactly once in reverse, accumulating gradients additively
/// across fan-out. A tape built with inference() skips recording entirely.
class Tape {
 public:
  Tape() = default;
  static Tape inference() {
    Tape t;
    t.recording_ = false;
    return t;
  }

  // Primitives. Shapes must conform; violations raise ContractError naming
  // the primitive and both shapes.
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  // Same-shape add, or bias broadcast [batch, n] + [n].
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor relu(const Tensor& x);
  Tensor softmax(const Tensor& x);  // along the last axis
  Tensor log(const Tensor& x);
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor sign(const Tensor& x);  // sign(0) = 0; zero gradient everywhere
  Tensor clamp(const Tensor& x, double lo, double hi);

  /// Total derivatives of a scalar loss produced by this tape with respect
  /// to every grad-tracked tensor that participated.
  GradTable backward(const Tensor& loss) const;

  bool tracked(const Tensor& t) const {
    return t.requires_grad || tracked_.count(t.id()) != 0;
  }
  std::size_t recorded_ops() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op;
    TensorId out;
    std::function<void(const std::vector<double>&, GradTable&)> pull;
  };

  // Registers the output of an op whose inputs include a tracked tensor.
  void record(const char* op, TensorId out,
              std::function<void(const std::vector<double>&, GradTable&)> pull);
  bool produced(TensorId id) const { return outputs_.count(id) != 0; }

  bool recording_ = true;
  std::vector<Node> nodes_;
  std::unordered_set<TensorId> tracked_;
  std::unordered_set<TensorId> outputs_;
};

// Data-level helpers (no tape, no gradients).
Tensor onehot(const std::vector<int>& labels, std::size_t num_classes);
std::vector<int> argmax_rows(const Tensor& t);
Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& indices);

}  // namespace advcausal
