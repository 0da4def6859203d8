#include "advcausal/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "advcausal/common.hpp"
#include "advcausal/rng.hpp"

namespace advcausal {

double AttackConfig::effective_step() const {
  if (step_size > 0.0) return step_size;
  return steps == 0 ? 0.0 : 2.3 * gamma / static_cast<double>(steps);
}

void AttackConfig::validate() const {
  if (gamma < 0.0) throw ContractError("attack config: gamma must be nonnegative");
  if (steps == 0) throw ContractError("attack config: steps must be >= 1");
  if (gamma > 0.0 && effective_step() <= 0.0) {
    throw ContractError("attack config: step_size must be positive");
  }
  if (kappa < 0.0) throw ContractError("attack config: kappa must be nonnegative");
}

Tensor project_linf(const Tensor& x_adv, const Tensor& x, double gamma) {
  if (x_adv.shape != x.shape) {
    throw ContractError("project_linf: shape mismatch " + x_adv.shape_str() + " vs " +
                        x.shape_str());
  }
  if (gamma < 0.0) throw ContractError("project_linf: negative gamma");
  Tensor out = Tensor::zeros(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double lo = std::max(x.data[i] - gamma, 0.0);
    const double hi = std::min(x.data[i] + gamma, 1.0);
    out.data[i] = std::min(std::max(x_adv.data[i], lo), hi);
  }
  return out;
}

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void project_inplace(std::vector<double>& cur, const std::vector<double>& clean, double gamma) {
  for (std::size_t i = 0; i < cur.size(); ++i) {
    const double lo = std::max(clean[i] - gamma, 0.0);
    const double hi = std::min(clean[i] + gamma, 1.0);
    cur[i] = std::min(std::max(cur[i], lo), hi);
  }
}

// Gradient of the ascent objective with respect to the inputs. For ce this
// is the summed cross-entropy; for cw it is the summed negated hinge
// -max(z_y - max_{j != y} z_j, -kappa), whose per-step argmax branch is held
// fixed while differentiating.
std::vector<double> ascent_gradient(const Classifier& model, const Tensor& x,
                                    const std::vector<int>& y, const AttackConfig& config) {
  if (config.objective == AttackObjective::ce) {
    return grad_wrt_input(model, x, y, InputLossKind::cross_entropy).data;
  }
  const std::size_t d = model.spec.num_classes;
  const std::size_t n = x.rows();
  Tape tape;
  Tensor leaf = x;
  leaf.requires_grad = true;
  Tensor z = model.logits(tape, leaf);
  Tensor pick = Tensor::zeros({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.data.data() + i * d;
    std::size_t runner = y[i] == 0 ? 1 : 0;
    for (std::size_t j = 0; j < d; ++j) {
      if (j != static_cast<std::size_t>(y[i]) && row[j] > row[runner]) runner = j;
    }
    pick.data[i * d + static_cast<std::size_t>(y[i])] = 1.0;
    pick.data[i * d + runner] = -1.0;
  }
  Tensor margins = tape.matmul(tape.mul(z, pick), Tensor::full({d, 1}, 1.0));
  Tensor hinged = tape.clamp(margins, -config.kappa, std::numeric_limits<double>::infinity());
  Tensor objective = tape.sum(tape.mul(hinged, Tensor::full({n, 1}, -1.0)));
  GradTable table = tape.backward(objective);
  const std::vector<double>* g = find_grad(table, leaf);
  return g != nullptr ? *g : std::vector<double>(x.numel(), 0.0);
}

Tensor projected_ascent(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                        const AttackConfig& config, int threads) {
  config.validate();
  if (x.rows() != y.size()) {
    throw ContractError("attack: batch of " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(y.size()) + " labels");
  }
  const std::size_t dim = x.cols();
  const double step = config.effective_step();
  Tensor result = x;
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> range(end - begin);
    for (std::size_t i = 0; i < range.size(); ++i) range[i] = begin + i;
    Tensor clean = take_rows(x, range);
    std::vector<int> labels(y.begin() + static_cast<std::ptrdiff_t>(begin),
                            y.begin() + static_cast<std::ptrdiff_t>(end));
    Tensor cur = clean;
    if (config.random_start && config.gamma > 0.0) {
      for (std::size_t i = 0; i < range.size(); ++i) {
        Rng rng(config.seed ^ static_cast<std::uint64_t>(range[i]));
        for (std::size_t k = 0; k < dim; ++k) {
          cur.data[i * dim + k] += rng.uniform(-config.gamma, config.gamma);
        }
      }
      project_inplace(cur.data, clean.data, config.gamma);
    }
    for (std::size_t s = 0; s < config.steps; ++s) {
      const std::vector<double> g = ascent_gradient(model, cur, labels, config);
      for (std::size_t i = 0; i < cur.numel(); ++i) cur.data[i] += step * sgn(g[i]);
      project_inplace(cur.data, clean.data, config.gamma);
    }
    std::copy(cur.data.begin(), cur.data.end(), result.data.begin() + begin * dim);
  });
  return result;
}

}  // namespace

Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y,
            const AttackConfig& config, int threads) {
  if (config.gamma < 0.0) throw ContractError("fgsm: negative gamma");
  if (x.rows() != y.size()) throw ContractError("fgsm: batch/label length mismatch");
  Tensor out = x;
  const std::size_t dim = x.cols();
  parallel_for(x.rows(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> range(end - begin);
    for (std::size_t i = 0; i < range.size(); ++i) range[i] = begin + i;
    Tensor clean = take_rows(x, range);
    std::vector<int> labels(y.begin() + static_cast<std::ptrdiff_t>(begin),
                            y.begin() + static_cast<std::ptrdiff_t>(end));
    AttackConfig ce = config;
    ce.objective = AttackObjective::ce;
    const std::vector<double> g = ascent_gradient(model, clean, labels, ce);
    Tensor adv = clean;
    for (std::size_t i = 0; i < adv.numel(); ++i) adv.data[i] += config.gamma * sgn(g[i]);
    project_inplace(adv.data, clean.data, config.gamma);
    std::copy(adv.data.begin(), adv.data.end(), out.data.begin() + begin * dim);
  });
  return out;
}

Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& config, int threads) {
  if (config.objective != AttackObjective::ce) {
    throw ContractError("pgd: objective must be ce (use cw_inf for the CW objective)");
  }
  return projected_ascent(model, x, y, config, threads);
}

Tensor cw_inf(const Classifier& model, const Tensor& x, const std::vector<int>& y,
              const AttackConfig& config, int threads) {
  if (config.objective != AttackObjective::cw) {
    throw ContractError("cw_inf: objective must be cw");
  }
  if (model.spec.num_classes < 2) throw ContractError("cw_inf: need at least 2 classes");
  return projected_ascent(model, x, y, config, threads);
}

WorstBatch select_worst(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                        const Tensor& x_adv) {
  if (x.shape != x_adv.shape) {
    throw ContractError("select_worst: shape mismatch " + x.shape_str() + " vs " +
                        x_adv.shape_str());
  }
  if (x.rows() != y.size()) throw ContractError("select_worst: batch/label length mismatch");
  const Tensor probs = predict_proba(model, x_adv);
  const std::vector<int> pred = argmax_rows(probs);
  WorstBatch out;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (pred[i] != y[i]) out.indices.push_back(i);
  }
  out.x = take_rows(x, out.indices);
  out.t = Tensor::zeros(out.x.shape);
  const std::size_t dim = x.cols();
  for (std::size_t i = 0; i < out.indices.size(); ++i) {
    const std::size_t src = out.indices[i];
    out.y.push_back(y[src]);
    out.attacked_class.push_back(pred[src]);
    out.attacked_confidence.push_back(probs.at(src, static_cast<std::size_t>(pred[src])));
    for (std::size_t k = 0; k < dim; ++k) {
      out.t.data[i * dim + k] = x_adv.data[src * dim + k] - x.data[src * dim + k];
    }
  }
  return out;
}

}  // namespace advcausal
