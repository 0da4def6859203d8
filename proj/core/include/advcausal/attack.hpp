#pragma once

#include <cstdint>
#include <vector>

#include "advcausal/model.hpp"
#include "advcausal/tensor.hpp"

namespace advcausal {

enum class AttackObjective { ce, cw };

struct AttackConfig {
  double gamma = 8.0 / 255.0;  // l-inf budget in input units
  std::size_t steps = 30;
  double step_size = 0.0;  // <= 0 selects the default 2.3 * gamma / steps
  bool random_start = true;
  AttackObjective objective = AttackObjective::ce;
  double kappa = 0.0;  // CW margin
  std::uint64_t seed = 0;

  double effective_step() const;
  void validate() const;
};

/// Samples whose prediction the attack actually flipped, with the
/// perturbations and the attacked class/confidence recorded.
struct WorstBatch {
  std::vector<std::size_t> indices;  // into the source batch
  Tensor x;                          // clean inputs of the selected rows
  std::vector<int> y;                // true labels
  Tensor t;                          // x_adv - x
  std::vector<int> attacked_class;       // argmax f(x + t)
  std::vector<double> attacked_confidence;  // probability of that class

  std::size_t size() const { return indices.size(); }
};

/// Clamp x_adv into the l-inf ball of radius gamma around x, then into
/// [0, 1]. Idempotent.
Tensor project_linf(const Tensor& x_adv, const Tensor& x, double gamma);

/// Single signed-gradient step of size gamma on the CE loss; steps and
/// random_start are ignored.
Tensor fgsm(const Classifier& model, const Tensor& x, const std::vector<int>& y,
            const AttackConfig& config, int threads = 1);

/// Projected signed-gradient ascent on the CE loss. random_start=false is
/// BIM. Deterministic given (model, config.seed): sample i uses the derived
/// seed config.seed XOR i, so sharded and serial runs agree.
Tensor pgd(const Classifier& model, const Tensor& x, const std::vector<int>& y,
           const AttackConfig& config, int threads = 1);

/// Same projected ascent driving the CW logit margin
/// max(z_y - max_{j != y} z_j, -kappa) down; requires objective == cw.
Tensor cw_inf(const Classifier& model, const Tensor& x, const std::vector<int>& y,
              const AttackConfig& config, int threads = 1);

/// Pure filter: exactly the samples with argmax f(x_adv) != y.
WorstBatch select_worst(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                        const Tensor& x_adv);

}  // namespace advcausal
