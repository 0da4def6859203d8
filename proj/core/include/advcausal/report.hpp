#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advcausal/attack.hpp"
#include "advcausal/causal.hpp"
#include "advcausal/dataset.hpp"
#include "advcausal/model.hpp"

namespace advcausal {

enum class AttackMethod { fgsm, pgd, cw };

struct NamedAttack {
  std::string name;
  AttackMethod method = AttackMethod::pgd;
  AttackConfig config;
};

Tensor run_attack(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                  const NamedAttack& attack, int threads = 1);

struct ClassAccuracy {
  double overall = 0.0;
  std::vector<double> per_class;
  std::vector<std::size_t> per_class_count;
};

ClassAccuracy clean_accuracy(const Classifier& model, const LabeledDataset& dataset,
                             int threads = 1);

/// Accuracy under the named attack, overall and grouped by true class.
/// The dataset must be a test split.
ClassAccuracy robust_accuracy(const Classifier& model, const LabeledDataset& dataset,
                              const NamedAttack& attack, int threads = 1);

/// Mean accuracy of the ceil(k% * d) worst classes, ascending sort with ties
/// broken by class index. k_percent in (0, 100].
double bottom_k_cumulative(const std::vector<double>& per_class_acc, double k_percent);

/// The class indices that bottom_k_cumulative averages over.
std::vector<std::size_t> bottom_k_classes(const std::vector<double>& per_class_acc,
                                          double k_percent);

struct AttackReport {
  std::string name;
  AttackMethod method = AttackMethod::pgd;
  AttackConfig config;
  ClassAccuracy accuracy;
  std::map<int, double> bottom_k;  // k percent -> aggregate
};

struct RhoBlock {
  std::string baseline_id;
  std::string treated_id;
  ThetaNorm norm = ThetaNorm::mean_abs;
  std::map<int, double> rho_k;
  double rho_avg = 0.0;
};

struct RobustnessReport {
  int schema_version = 1;
  std::string model_id;
  std::string dataset_id;
  std::uint64_t seed = 0;
  ClassAccuracy clean;
  std::vector<AttackReport> attacks;
  std::optional<RhoBlock> rho;
};

/// Lossless JSON round trip (schema_version pinned inside).
void emit_report_json(const std::filesystem::path& path, const RobustnessReport& report);
RobustnessReport parse_report_json(const std::filesystem::path& path);

/// CSV layout: header `record,attack,class,value`, one meta row, one
/// accuracy row per (attack incl. clean, class), then summary rows (overall
/// per attack, bottom-k per attack, rho rows when present).
void emit_report_csv(const std::filesystem::path& path, const RobustnessReport& report);

std::string attack_method_name(AttackMethod method);
AttackMethod attack_method_from(const std::string& name);

}  // namespace advcausal
