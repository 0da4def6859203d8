#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "advcausal/attack.hpp"
#include "advcausal/dataset.hpp"
#include "advcausal/model.hpp"
#include "advcausal/rng.hpp"

namespace advcausal {

enum class DefenseKind { at, trades, adml_over_at, adml_over_trades };
enum class TreatmentSet { worst, non_worst, all };
enum class TauSource { attacked_confidence, propensity };

struct DefenseConfig {
  DefenseKind kind = DefenseKind::at;
  AttackConfig attack;  // inner maximization (training-strength, 10 steps)
  double trades_beta = 6.0;
  std::size_t adml_epochs = 10;
  double adml_learning_rate = 0.0;  // <= 0 selects TrainConfig.learning_rate / 500
  double split_ratio = 0.5;
  bool use_split_crossfit = true;
  TreatmentSet treatment_set = TreatmentSet::worst;
  TauSource tau_source = TauSource::attacked_confidence;
  std::size_t propensity_restarts = 8;
  std::uint64_t seed = 0;

  bool is_adml() const {
    return kind == DefenseKind::adml_over_at || kind == DefenseKind::adml_over_trades;
  }
  DefenseKind base_kind() const {
    return kind == DefenseKind::adml_over_trades ? DefenseKind::trades : DefenseKind::at;
  }
  void validate() const;
};

/// Mean CE on the perturbed batch: L(f(x + t'), y).
Tensor at_loss(Tape& tape, const Classifier& model, const Tensor& x,
               const std::vector<int>& y, const Tensor& t_prime);

/// CE(f(x), y) + beta * KL(f(x) || f(x + t')), KL meaned over the batch.
Tensor trades_loss(Tape& tape, const Classifier& model, const Tensor& x,
                   const std::vector<int>& y, const Tensor& t_prime, double beta);

/// tau = 1/confidence - 1 with the confidence floored at kProbFloor and the
/// result clamped to kTauMax. Monotone decreasing in confidence; zero only
/// at confidence 1.
double balancing_ratio(double attacked_top_confidence);

/// Random disjoint split of [0, n): |first| = round(ratio * n), union is the
/// whole batch. swap_roles exchanges the two parts; the training loop
/// alternates it across batches so the parts rotate (cross-fitting).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_and_crossfit(
    std::size_t batch_size, double split_ratio, Rng& rng, bool swap_roles = false);

/// L_ADML = L_a + L_b for one batch already split into D1/D2 with their
/// perturbations. L_a is the configured base defense loss on all of D1. L_b
/// is formed on the D2 rows kept by treatment_set (worst keeps flips,
/// non_worst the complement, all everything): mean over kept rows of
/// tau_i * CE(f(x_i + t_i), y_i) + CE(f(x_i), y_i), tau_i from each row's own
/// attacked top-class confidence (a constant; no gradient flows through it).
/// An empty kept set contributes L_b = 0 exactly. tau_override, when given,
/// must align with the D2 rows and replaces the confidence-derived tau
/// (entries < 0 mark rows to drop).
Tensor adml_loss(Tape& tape, const Classifier& model, const Tensor& x1,
                 const std::vector<int>& y1, const Tensor& t1_prime, const Tensor& x2,
                 const std::vector<int>& y2, const Tensor& t2_prime,
                 const DefenseConfig& config,
                 const std::vector<double>* tau_override = nullptr);

struct EpochStats {
  std::size_t epoch = 0;
  double clean_acc = 0.0;
  double pgd_acc = 0.0;  // training-strength PGD on the test split
  double loss = 0.0;     // mean batch loss of the epoch
  double lr = 0.0;
};
using TrainHistory = std::vector<EpochStats>;

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

/// Standard adversarial training (kind at or trades): per batch, run the
/// inner PGD attack against a frozen snapshot and take one SGD step on the
/// outer loss. Deterministic per config seeds.
TrainHistory train_standard(Classifier& model, const LabeledDataset& train,
                            const LabeledDataset& test, const TrainConfig& train_config,
                            const DefenseConfig& defense, int threads = 1);

/// train_standard with kind = at.
TrainHistory train_at(Classifier& model, const LabeledDataset& train,
                      const LabeledDataset& test, const TrainConfig& train_config,
                      const AttackConfig& attack, int threads = 1);

/// ADML fine-tuning from an adversarially trained checkpoint: per batch run
/// PGD, split (unless ablated off, in which case D1 = D2 = full batch),
/// form L_ADML and take one step at the ADML learning rate (default
/// TrainConfig.learning_rate / 500 over adml_epochs).
TrainHistory train_adml(Classifier& model_at, const LabeledDataset& train,
                        const LabeledDataset& test, const TrainConfig& train_config,
                        const DefenseConfig& defense, int threads = 1);

}  // namespace advcausal
