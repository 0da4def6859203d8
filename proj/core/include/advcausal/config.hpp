#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "advcausal/causal.hpp"
#include "advcausal/dataset.hpp"
#include "advcausal/defense.hpp"
#include "advcausal/model.hpp"
#include "advcausal/report.hpp"

namespace advcausal {

/// Sectioned key=value text: `[section]` headers, one `key = value` per
/// line, `#` comments. Unknown keys are rejected at load time.
struct RawConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;

  bool has(const std::string& section) const { return sections.count(section) != 0; }
  std::vector<std::string> section_names() const;
};

RawConfig parse_config_text(const std::string& text, const std::string& origin);
RawConfig parse_config_file(const std::filesystem::path& path);

struct DatasetFiles {
  std::string kind;  // "idx" or "csv"
  std::filesystem::path train_images, train_labels;  // idx
  std::filesystem::path test_images, test_labels;    // idx
  std::filesystem::path train_path, test_path;       // csv
  std::size_t label_column = 0;                      // csv
};

struct CausalSection {
  std::size_t restarts = 8;
  ThetaNorm norm = ThetaNorm::mean_abs;
  double epsilon = 1e-4;
  std::string attack = "pgd";  // attack section used for worst selection
};

struct ReportSection {
  std::vector<std::string> attacks = {"pgd"};
  std::vector<int> bottom_k = {10, 30, 50};
  std::vector<std::string> formats = {"json", "csv", "svg"};
};

/// Full experiment wiring. Every per-module seed is derived from the global
/// seed as fnv1a64(section name) XOR seed, so one --seed value pins every
/// random draw of the pipeline.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";

  std::optional<SyntheticSpec> synthetic;
  std::optional<DatasetFiles> files;
  std::string dataset_id;

  ClassifierSpec model;
  TrainConfig train;
  std::map<std::string, NamedAttack> attacks;  // keyed by section suffix
  DefenseConfig defense;
  std::filesystem::path base_checkpoint;  // ADML resume point; empty -> default
  CausalSection causal;
  ReportSection report;

  const NamedAttack& attack_named(const std::string& name) const;
};

/// Parses and validates in one pass; every section's contracts are checked
/// before any command does work. seed_override, when set, replaces the
/// config's global seed before derivation.
ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = {});

}  // namespace advcausal
