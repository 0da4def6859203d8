#include "advcausal/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>

#include "advcausal/common.hpp"

namespace advcausal {

namespace {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

[[noreturn]] void shape_error(const char* op, const std::vector<std::size_t>& a,
                              const std::vector<std::size_t>& b) {
  throw ContractError(std::string(op) + ": shape mismatch " + shape_to_string(a) +
                      " vs " + shape_to_string(b));
}

void accumulate(GradTable& table, TensorId id, std::size_t n,
                const std::function<void(std::vector<double>&)>& add_into) {
  auto& slot = table[id];
  if (slot.empty()) slot.assign(n, 0.0);
  add_into(slot);
}

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in,
               bool requires_grad_in)
    : shape(std::move(shape_in)),
      data(std::move(data_in)),
      requires_grad(requires_grad_in),
      id_(next_id()) {
  if (numel_of(shape) != data.size()) {
    throw ContractError("tensor: shape " + shape_to_string(shape) + " does not match " +
                        std::to_string(data.size()) + " elements");
  }
}

std::size_t Tensor::numel_of(const std::vector<std::size_t>& shape_in) {
  std::size_t n = 1;
  for (std::size_t d : shape_in) n *= d;
  return shape_in.empty() ? 1 : n;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_in) {
  std::size_t n = numel_of(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape_in, double value) {
  std::size_t n = numel_of(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, value));
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

TensorId Tensor::next_id() {
  static std::atomic<TensorId> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

const std::vector<double>* find_grad(const GradTable& table, const Tensor& t) {
  auto it = table.find(t.id());
  return it == table.end() ? nullptr : &it->second;
}

void Tape::record(const char* op, TensorId out,
                  std::function<void(const std::vector<double>&, GradTable&)> pull) {
  tracked_.insert(out);
  outputs_.insert(out);
  nodes_.push_back(Node{op, out, std::move(pull)});
}

GradTable Tape::backward(const Tensor& loss) const {
  if (!loss.is_scalar()) {
    throw ContractError("backward: loss must be scalar, got shape " + loss.shape_str());
  }
  if (!produced(loss.id())) {
    throw ContractError("backward: loss was not produced by this tape");
  }
  GradTable table;
  table[loss.id()] = {1.0};
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto found = table.find(it->out);
    if (found == table.end()) continue;  // not reachable from the loss
    // Copy: pull may rehash the table and invalidate the reference.
    const std::vector<double> out_grad = found->second;
    it->pull(out_grad, table);
  }
  return table;
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0]) {
    shape_error("matmul", a.shape, b.shape);
  }
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = a.data[i * k + kk];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + kk * n;
      double* orow = out.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  if (recording_ && (tracked(a) || tracked(b))) {
    const bool need_a = tracked(a), need_b = tracked(b);
    record("matmul", out.id(),
           [need_a, need_b, aid = a.id(), bid = b.id(), adata = a.data, bdata = b.data, m, k,
            n](const std::vector<double>& g, GradTable& table) {
             if (need_a) {
               accumulate(table, aid, m * k, [&](std::vector<double>& da) {
                 for (std::size_t i = 0; i < m; ++i)
                   for (std::size_t j = 0; j < n; ++j) {
                     const double gv = g[i * n + j];
                     if (gv == 0.0) continue;
                     for (std::size_t kk = 0; kk < k; ++kk)
                       da[i * k + kk] += gv * bdata[kk * n + j];
                   }
               });
             }
             if (need_b) {
               accumulate(table, bid, k * n, [&](std::vector<double>& db) {
                 for (std::size_t i = 0; i < m; ++i)
                   for (std::size_t kk = 0; kk < k; ++kk) {
                     const double av = adata[i * k + kk];
                     if (av == 0.0) continue;
                     for (std::size_t j = 0; j < n; ++j)
                       db[kk * n + j] += av * g[i * n + j];
                   }
               });
             }
           });
  }
  return out;
}

Tensor Tape::transpose(const Tensor& a) {
  if (a.shape.size() != 2) {
    throw ContractError("transpose: expected rank-2 tensor, got " + a.shape_str());
  }
  const std::size_t m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = a.data[i * n + j];
  if (recording_ && tracked(a)) {
    record("transpose", out.id(),
           [aid = a.id(), m, n](const std::vector<double>& g, GradTable& table) {
             accumulate(table, aid, m * n, [&](std::vector<double>& da) {
               for (std::size_t i = 0; i < m; ++i)
                 for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j * m + i];
             });
           });
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const bool same = a.shape == b.shape;
  const bool bias = a.shape.size() == 2 && b.shape.size() == 1 && b.shape[0] == a.shape[1];
  if (!same && !bias) shape_error("add", a.shape, b.shape);
  Tensor out = Tensor::zeros(a.shape);
  if (same) {
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] + b.data[i];
  } else {
    const std::size_t rows = a.shape[0], n = a.shape[1];
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = a.data[i * n + j] + b.data[j];
  }
  if (recording_ && (tracked(a) || tracked(b))) {
    const bool need_a = tracked(a), need_b = tracked(b);
    const std::size_t an = a.numel(), bn = b.numel();
    record("add", out.id(),
           [need_a, need_b, same, aid = a.id(), bid = b.id(), an,
            bn](const std::vector<double>& g, GradTable& table) {
             if (need_a) {
               accumulate(table, aid, an, [&](std::vector<double>& da) {
                 for (std::size_t i = 0; i < an; ++i) da[i] += g[i];
               });
             }
             if (need_b) {
               accumulate(table, bid, bn, [&](std::vector<double>& db) {
                 if (same) {
                   for (std::size_t i = 0; i < bn; ++i) db[i] += g[i];
                 } else {
                   const std::size_t rows = an / bn;
                   for (std::size_t i = 0; i < rows; ++i)
                     for (std::size_t j = 0; j < bn; ++j) db[j] += g[i * bn + j];
                 }
               });
             }
           });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_error("mul", a.shape, b.shape);
  Tensor out = Tensor::zeros(a.shape);
  for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = a.data[i] * b.data[i];
  if (recording_ && (tracked(a) || tracked(b))) {
    const bool need_a = tracked(a), need_b = tracked(b);
    record("mul", out.id(),
           [need_a, need_b, aid = a.id(), bid = b.id(), adata = a.data,
            bdata = b.data](const std::vector<double>& g, GradTable& table) {
             const std::size_t n = g.size();
             if (need_a) {
               accumulate(table, aid, n, [&](std::vector<double>& da) {
                 for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bdata[i];
               });
             }
             if (need_b) {
               accumulate(table, bid, n, [&](std::vector<double>& db) {
                 for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * adata[i];
               });
             }
           });
  }
  return out;
}

Tensor Tape::relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  if (recording_ && tracked(x)) {
    record("relu", out.id(),
           [xid = x.id(), xdata = x.data](const std::vector<double>& g, GradTable& table) {
             accumulate(table, xid, g.size(), [&](std::vector<double>& dx) {
               for (std::size_t i = 0; i < g.size(); ++i)
                 if (xdata[i] > 0.0) dx[i] += g[i];
             });
           });
  }
  return out;
}

Tensor Tape::softmax(const Tensor& x) {
  if (x.shape.empty()) throw ContractError("softmax: scalar input has no class axis");
  const std::size_t width = x.shape.back();
  const std::size_t rows = x.numel() / width;
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data.data() + r * width;
    double* o = out.data.data() + r * width;
    double mx = in[0];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < width; ++j) o[j] /= total;
  }
  if (recording_ && tracked(x)) {
    record("softmax", out.id(),
           [xid = x.id(), y = out.data, rows, width](const std::vector<double>& g,
                                                     GradTable& table) {
             accumulate(table, xid, rows * width, [&](std::vector<double>& dx) {
               for (std::size_t r = 0; r < rows; ++r) {
                 const double* yr = y.data() + r * width;
                 const double* gr = g.data() + r * width;
                 double dot = 0.0;
                 for (std::size_t j = 0; j < width; ++j) dot += gr[j] * yr[j];
                 for (std::size_t j = 0; j < width; ++j)
                   dx[r * width + j] += yr[j] * (gr[j] - dot);
               }
             });
           });
  }
  return out;
}

Tensor Tape::log(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    if (x.data[i] <= 0.0) {
      throw ContractError("log: non-positive input at flat index " + std::to_string(i));
    }
    out.data[i] = std::log(x.data[i]);
  }
  if (recording_ && tracked(x)) {
    record("log", out.id(),
           [xid = x.id(), xdata = x.data](const std::vector<double>& g, GradTable& table) {
             accumulate(table, xid, g.size(), [&](std::vector<double>& dx) {
               for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xdata[i];
             });
           });
  }
  return out;
}

Tensor Tape::sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data) total += v;
  Tensor out = Tensor::scalar(total);
  if (recording_ && tracked(x)) {
    record("sum", out.id(),
           [xid = x.id(), n = x.numel()](const std::vector<double>& g, GradTable& table) {
             accumulate(table, xid, n, [&](std::vector<double>& dx) {
               for (std::size_t i = 0; i < n; ++i) dx[i] += g[0];
             });
           });
  }
  return out;
}

Tensor Tape::mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  double total = 0.0;
  for (double v : x.data) total += v;
  Tensor out = Tensor::scalar(total / static_cast<double>(x.numel()));
  if (recording_ && tracked(x)) {
    record("mean", out.id(),
           [xid = x.id(), n = x.numel()](const std::vector<double>& g, GradTable& table) {
             const double scale = 1.0 / static_cast<double>(n);
             accumulate(table, xid, n, [&](std::vector<double>& dx) {
               for (std::size_t i = 0; i < n; ++i) dx[i] += g[0] * scale;
             });
           });
  }
  return out;
}

Tensor Tape::sign(const Tensor& x) {
  // Zero derivative everywhere; the output is not grad-tracked.
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) out.data[i] = sgn(x.data[i]);
  return out;
}

Tensor Tape::clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i)
    out.data[i] = std::min(std::max(x.data[i], lo), hi);
  if (recording_ && tracked(x)) {
    record("clamp", out.id(),
           [xid = x.id(), xdata = x.data, lo, hi](const std::vector<double>& g,
                                                  GradTable& table) {
             accumulate(table, xid, g.size(), [&](std::vector<double>& dx) {
               for (std::size_t i = 0; i < g.size(); ++i)
                 if (xdata[i] > lo && xdata[i] < hi) dx[i] += g[i];
             });
           });
  }
  return out;
}

Tensor onehot(const std::vector<int>& labels, std::size_t num_classes) {
  Tensor out = Tensor::zeros({labels.size(), num_classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
      throw ContractError("onehot: label " + std::to_string(labels[i]) +
                          " out of range [0, " + std::to_string(num_classes) + ")");
    }
    out.data[i * num_classes + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& t) {
  const std::size_t width = t.cols();
  const std::size_t rows = t.rows();
  std::vector<int> out(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = t.data.data() + r * width;
    std::size_t best = 0;
    for (std::size_t j = 1; j < width; ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& indices) {
  const std::size_t width = t.cols();
  Tensor out = Tensor::zeros({indices.size(), width});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.rows()) throw ContractError("take_rows: index out of range");
    std::copy_n(t.data.data() + indices[i] * width, width, out.data.data() + i * width);
  }
  return out;
}

}  // namespace advcausal
