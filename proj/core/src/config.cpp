#include "advcausal/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "advcausal/common.hpp"

namespace advcausal {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Typed access to one section with unknown-key detection.
class SectionView {
 public:
  SectionView(const RawConfig& raw, std::string name) : name_(std::move(name)) {
    auto it = raw.sections.find(name_);
    if (it != raw.sections.end()) entries_ = &it->second;
  }

  bool exists() const { return entries_ != nullptr; }

  std::optional<std::string> get(const std::string& key) {
    seen_.push_back(key);
    if (entries_ == nullptr) return std::nullopt;
    auto it = entries_->find(key);
    if (it == entries_->end()) return std::nullopt;
    return it->second;
  }

  std::string require(const std::string& key) {
    auto v = get(key);
    if (!v.has_value()) {
      throw ConfigError("[" + name_ + "] missing required key '" + key + "'");
    }
    return *v;
  }

  double number(const std::string& key, double fallback) {
    auto v = get(key);
    return v.has_value() ? parse_number(key, *v) : fallback;
  }

  std::uint64_t integer(const std::string& key, std::uint64_t fallback) {
    auto v = get(key);
    if (!v.has_value()) return fallback;
    const double d = parse_number(key, *v);
    if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) {
      throw ConfigError("[" + name_ + "] key '" + key + "' must be a nonnegative integer");
    }
    return static_cast<std::uint64_t>(d);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto v = get(key);
    if (!v.has_value()) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    throw ConfigError("[" + name_ + "] key '" + key + "' must be a boolean");
  }

  std::string text(const std::string& key, const std::string& fallback) {
    auto v = get(key);
    return v.has_value() ? *v : fallback;
  }

  std::vector<double> number_list(const std::string& key) {
    auto v = get(key);
    std::vector<double> out;
    if (!v.has_value()) return out;
    for (const std::string& item : split_list(*v)) out.push_back(parse_number(key, item));
    return out;
  }

  std::vector<std::string> text_list(const std::string& key) {
    auto v = get(key);
    return v.has_value() ? split_list(*v) : std::vector<std::string>{};
  }

  void reject_unknown() const {
    if (entries_ == nullptr) return;
    for (const auto& [key, value] : *entries_) {
      if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
        throw ConfigError("[" + name_ + "] unknown key '" + key + "'");
      }
    }
  }

 private:
  double parse_number(const std::string& key, const std::string& value) const {
    try {
      std::size_t used = 0;
      const double d = std::stod(value, &used);
      if (used != value.size()) throw std::invalid_argument("trailing");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("[" + name_ + "] key '" + key + "' has non-numeric value '" + value +
                        "'");
    }
  }

  std::string name_;
  const std::map<std::string, std::string>* entries_ = nullptr;
  mutable std::vector<std::string> seen_;
};

}  // namespace

std::vector<std::string> RawConfig::section_names() const {
  std::vector<std::string> out;
  for (const auto& [name, entries] : sections) out.push_back(name);
  return out;
}

RawConfig parse_config_text(const std::string& text, const std::string& origin) {
  RawConfig raw;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      raw.sections[section];
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": assignment before any section");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    raw.sections[section][key] = trim(line.substr(eq + 1));
  }
  return raw;
}

RawConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path.string());
}

const NamedAttack& ExperimentConfig::attack_named(const std::string& name) const {
  auto it = attacks.find(name);
  if (it == attacks.end()) {
    throw ConfigError("no [attack." + name + "] section in config");
  }
  return it->second;
}

namespace {

NamedAttack parse_attack_section(const RawConfig& raw, const std::string& name,
                                 std::uint64_t global_seed) {
  SectionView s(raw, "attack." + name);
  NamedAttack attack;
  attack.name = name;
  attack.method = attack_method_from(s.text("method", "pgd"));
  attack.config.gamma = s.number("gamma", attack.config.gamma);
  attack.config.steps = s.integer("steps", attack.config.steps);
  attack.config.step_size = s.number("step_size", 0.0);
  attack.config.random_start = s.boolean("random_start", attack.config.random_start);
  const std::string objective = s.text("objective", attack.method == AttackMethod::cw ? "cw" : "ce");
  if (objective != "ce" && objective != "cw") {
    throw ConfigError("[attack." + name + "] objective must be ce or cw");
  }
  attack.config.objective = objective == "cw" ? AttackObjective::cw : AttackObjective::ce;
  attack.config.kappa = s.number("kappa", 0.0);
  attack.config.seed = s.integer("seed", derive_seed(global_seed, "attack." + name));
  s.reject_unknown();
  if (attack.method == AttackMethod::cw && attack.config.objective != AttackObjective::cw) {
    throw ConfigError("[attack." + name + "] method cw requires objective cw");
  }
  try {
    attack.config.validate();
  } catch (const ContractError& e) {
    throw ConfigError("[attack." + name + "] " + e.what());
  }
  return attack;
}

SyntheticKind synthetic_kind_from(const std::string& name) {
  if (name == "gaussian_mixture") return SyntheticKind::gaussian_mixture;
  if (name == "rings") return SyntheticKind::rings;
  throw ConfigError("[dataset] unknown kind '" + name + "'");
}

DefenseKind defense_kind_from(const std::string& name) {
  if (name == "at") return DefenseKind::at;
  if (name == "trades") return DefenseKind::trades;
  if (name == "adml_over_at") return DefenseKind::adml_over_at;
  if (name == "adml_over_trades") return DefenseKind::adml_over_trades;
  throw ConfigError("[defense] unknown kind '" + name + "'");
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override) {
  const RawConfig raw = parse_config_file(path);
  ExperimentConfig cfg;

  SectionView experiment(raw, "experiment");
  cfg.seed = experiment.integer("seed", 1);
  if (seed_override.has_value()) cfg.seed = *seed_override;
  cfg.out_dir = experiment.text("out_dir", "out");
  experiment.reject_unknown();

  SectionView dataset(raw, "dataset");
  if (!dataset.exists()) throw ConfigError("config needs a [dataset] section");
  const std::string kind = dataset.text("kind", "gaussian_mixture");
  if (kind == "idx" || kind == "csv") {
    DatasetFiles files;
    files.kind = kind;
    if (kind == "idx") {
      files.train_images = dataset.require("train_images");
      files.train_labels = dataset.require("train_labels");
      files.test_images = dataset.require("test_images");
      files.test_labels = dataset.require("test_labels");
    } else {
      files.train_path = dataset.require("train_path");
      files.test_path = dataset.require("test_path");
      files.label_column = dataset.integer("label_column", 0);
    }
    cfg.files = std::move(files);
    cfg.dataset_id = kind;
  } else {
    SyntheticSpec spec;
    spec.kind = synthetic_kind_from(kind);
    spec.num_classes = dataset.integer("num_classes", 2);
    for (double v : dataset.number_list("samples_per_class")) {
      spec.samples_per_class.push_back(static_cast<std::size_t>(v));
    }
    if (spec.samples_per_class.empty()) spec.samples_per_class = {200};
    spec.input_dim = dataset.integer("input_dim", 2);
    spec.class_margin = dataset.number_list("class_margin");
    if (spec.class_margin.empty()) spec.class_margin = {1.0};
    spec.noise_scale = dataset.number("noise_scale", 0.1);
    spec.test_ratio = dataset.number("test_ratio", 0.2);
    spec.seed = dataset.integer("seed", derive_seed(cfg.seed, "dataset"));
    try {
      spec.validate();
    } catch (const ContractError& e) {
      throw ConfigError(std::string("[dataset] ") + e.what());
    }
    cfg.dataset_id = kind + "_d" + std::to_string(spec.num_classes) + "_seed" +
                     std::to_string(spec.seed);
    cfg.synthetic = std::move(spec);
  }
  dataset.reject_unknown();

  SectionView model(raw, "model");
  for (double v : model.number_list("hidden_dims")) {
    cfg.model.hidden_dims.push_back(static_cast<std::size_t>(v));
  }
  cfg.model.init_seed = model.integer("init_seed", derive_seed(cfg.seed, "model"));
  model.reject_unknown();
  if (cfg.synthetic.has_value()) {
    cfg.model.input_dim = cfg.synthetic->input_dim;
    cfg.model.num_classes = cfg.synthetic->num_classes;
  }

  SectionView train(raw, "train");
  cfg.train.epochs = train.integer("epochs", 10);
  cfg.train.batch_size = train.integer("batch_size", 64);
  cfg.train.learning_rate = train.number("learning_rate", 0.1);
  const std::string schedule = train.text("lr_schedule", "cyclic");
  if (schedule == "constant") {
    cfg.train.lr_schedule = LrSchedule::constant;
  } else if (schedule == "cyclic") {
    cfg.train.lr_schedule = LrSchedule::cyclic;
  } else {
    throw ConfigError("[train] lr_schedule must be constant or cyclic");
  }
  cfg.train.momentum = train.number("momentum", 0.9);
  cfg.train.seed = train.integer("seed", derive_seed(cfg.seed, "train"));
  train.reject_unknown();
  try {
    cfg.train.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("[train] ") + e.what());
  }

  for (const std::string& section : raw.section_names()) {
    if (section.rfind("attack.", 0) == 0) {
      const std::string name = section.substr(7);
      if (name.empty()) throw ConfigError("attack section needs a name: [attack.NAME]");
      cfg.attacks.emplace(name, parse_attack_section(raw, name, cfg.seed));
    }
  }
  if (cfg.attacks.count("train") == 0) {
    throw ConfigError("config needs an [attack.train] section for the inner maximization");
  }

  SectionView defense(raw, "defense");
  cfg.defense.kind = defense_kind_from(defense.text("kind", "at"));
  cfg.defense.attack = cfg.attack_named("train").config;
  cfg.defense.trades_beta = defense.number("trades_beta", 6.0);
  cfg.defense.adml_epochs = defense.integer("adml_epochs", 10);
  cfg.defense.adml_learning_rate = defense.number("adml_learning_rate", 0.0);
  cfg.defense.split_ratio = defense.number("split_ratio", 0.5);
  cfg.defense.use_split_crossfit = defense.boolean("use_split_crossfit", true);
  const std::string treatment = defense.text("treatment_set", "worst");
  if (treatment == "worst") {
    cfg.defense.treatment_set = TreatmentSet::worst;
  } else if (treatment == "non_worst") {
    cfg.defense.treatment_set = TreatmentSet::non_worst;
  } else if (treatment == "all") {
    cfg.defense.treatment_set = TreatmentSet::all;
  } else {
    throw ConfigError("[defense] treatment_set must be worst, non_worst or all");
  }
  const std::string tau = defense.text("tau_source", "attacked_confidence");
  if (tau == "attacked_confidence") {
    cfg.defense.tau_source = TauSource::attacked_confidence;
  } else if (tau == "propensity") {
    cfg.defense.tau_source = TauSource::propensity;
  } else {
    throw ConfigError("[defense] tau_source must be attacked_confidence or propensity");
  }
  cfg.defense.propensity_restarts = defense.integer("propensity_restarts", 8);
  cfg.defense.seed = defense.integer("seed", derive_seed(cfg.seed, "defense"));
  cfg.base_checkpoint = defense.text("base_checkpoint", "");
  defense.reject_unknown();
  try {
    cfg.defense.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("[defense] ") + e.what());
  }

  SectionView causal(raw, "causal");
  cfg.causal.restarts = causal.integer("restarts", 8);
  if (cfg.causal.restarts == 0) throw ConfigError("[causal] restarts must be >= 1");
  const std::string norm = causal.text("norm", "mean_abs");
  try {
    cfg.causal.norm = theta_norm_from(norm);
  } catch (const ContractError&) {
    throw ConfigError("[causal] norm must be mean_abs or l2");
  }
  cfg.causal.epsilon = causal.number("epsilon", 1e-4);
  if (cfg.causal.epsilon <= 0.0) throw ConfigError("[causal] epsilon must be positive");
  cfg.causal.attack = causal.text("attack", "pgd");
  causal.reject_unknown();

  SectionView report(raw, "report");
  const auto attack_names = report.text_list("attacks");
  if (!attack_names.empty()) cfg.report.attacks = attack_names;
  const auto ks = report.number_list("bottom_k");
  if (!ks.empty()) {
    cfg.report.bottom_k.clear();
    for (double k : ks) {
      if (!(k > 0.0 && k <= 100.0)) throw ConfigError("[report] bottom_k must be in (0, 100]");
      cfg.report.bottom_k.push_back(static_cast<int>(k));
    }
  }
  const auto formats = report.text_list("formats");
  if (!formats.empty()) cfg.report.formats = formats;
  for (const std::string& f : cfg.report.formats) {
    if (f != "json" && f != "csv" && f != "svg") {
      throw ConfigError("[report] unknown format '" + f + "'");
    }
  }
  report.reject_unknown();

  for (const std::string& name : cfg.report.attacks) {
    cfg.attack_named(name);  // throws when missing
  }
  if (cfg.causal.attack != "train") cfg.attack_named(cfg.causal.attack);

  for (const std::string& section : raw.section_names()) {
    const bool known = section == "experiment" || section == "dataset" || section == "model" ||
                       section == "train" || section == "defense" || section == "causal" ||
                       section == "report" || section.rfind("attack.", 0) == 0;
    if (!known) throw ConfigError("unknown config section [" + section + "]");
  }

  return cfg;
}

}  // namespace advcausal
