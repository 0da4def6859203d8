// Test-only oracles, independent of the library's backward pass: central
// finite differences, closed-form Jacobians for softmax-linear models, and
// exhaustive grid search over l-inf balls.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "advcausal/model.hpp"
#include "advcausal/tensor.hpp"

namespace oracles {

// Central finite-difference gradient of a scalar function of a flat vector.
inline std::vector<double> numeric_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double step = 1e-5) {
  std::vector<double> g(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + step;
    const double hi = f(x);
    x[i] = saved - step;
    const double lo = f(x);
    x[i] = saved;
    g[i] = (hi - lo) / (2.0 * step);
  }
  return g;
}

// rel error with an absolute floor near zero.
inline double grad_error(double got, double want, double abs_floor = 1e-7) {
  const double diff = std::abs(got - want);
  const double scale = std::max(std::abs(want), abs_floor);
  return diff / scale;
}

inline double max_grad_error(const std::vector<double>& got, const std::vector<double>& want,
                             double abs_floor = 1e-7) {
  double worst = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    worst = std::max(worst, grad_error(got[i], want[i], abs_floor));
  }
  return worst;
}

// Row i of the softmax Jacobian for probabilities f and weight matrix W
// (d x dim): d f_j / d x = f_j (W_j - sum_k f_k W_k).
inline std::vector<double> softmax_linear_jacobian_row(const std::vector<double>& probs,
                                                       const advcausal::Tensor& W,
                                                       std::size_t j) {
  const std::size_t d = W.rows(), dim = W.cols();
  std::vector<double> mix(dim, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    for (std::size_t c = 0; c < dim; ++c) mix[c] += probs[k] * W.at(k, c);
  }
  std::vector<double> row(dim, 0.0);
  for (std::size_t c = 0; c < dim; ++c) row[c] = probs[j] * (W.at(j, c) - mix[c]);
  return row;
}

// Softmax computed from scratch (max-subtracted), for hand fixtures.
inline std::vector<double> softmax_row(const std::vector<double>& logits) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

// Mean CE of a model on a batch, evaluated forward-only; used as the scalar
// function for finite differences over parameters or inputs.
inline double model_ce(const advcausal::Classifier& model, const advcausal::Tensor& x,
                       const std::vector<int>& y) {
  const advcausal::Tensor probs = advcausal::predict_proba(model, x);
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::max(probs.at(i, static_cast<std::size_t>(y[i])), 1e-12);
    total += -std::log(p);
  }
  return total / static_cast<double>(y.size());
}

// Exhaustive max of per-sample CE over the l-inf ball (clipped to [0,1]) at
// the given resolution. Only feasible for dim <= 2.
inline double grid_max_ce(const advcausal::Classifier& model, const std::vector<double>& x,
                          int label, double gamma, double resolution) {
  const std::size_t dim = x.size();
  std::vector<int> steps(dim);
  std::vector<std::vector<double>> axes(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const double lo = std::max(x[k] - gamma, 0.0);
    const double hi = std::min(x[k] + gamma, 1.0);
    for (double v = lo; v <= hi + 1e-12; v += resolution) axes[k].push_back(std::min(v, hi));
    if (axes[k].back() < hi - 1e-12) axes[k].push_back(hi);
  }
  double best = -1.0;
  std::vector<std::size_t> idx(dim, 0);
  while (true) {
    advcausal::Tensor point = advcausal::Tensor::zeros({1, dim});
    for (std::size_t k = 0; k < dim; ++k) point.data[k] = axes[k][idx[k]];
    best = std::max(best, model_ce(model, point, {label}));
    std::size_t k = 0;
    while (k < dim && ++idx[k] == axes[k].size()) {
      idx[k] = 0;
      ++k;
    }
    if (k == dim) break;
  }
  return best;
}

}  // namespace oracles
