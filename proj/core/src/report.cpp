#include "advcausal/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "advcausal/common.hpp"

namespace advcausal {

Tensor run_attack(const Classifier& model, const Tensor& x, const std::vector<int>& y,
                  const NamedAttack& attack, int threads) {
  switch (attack.method) {
    case AttackMethod::fgsm:
      return fgsm(model, x, y, attack.config, threads);
    case AttackMethod::cw: {
      AttackConfig cfg = attack.config;
      cfg.objective = AttackObjective::cw;
      return cw_inf(model, x, y, cfg, threads);
    }
    case AttackMethod::pgd:
    default: {
      AttackConfig cfg = attack.config;
      cfg.objective = AttackObjective::ce;
      return pgd(model, x, y, cfg, threads);
    }
  }
}

namespace {

ClassAccuracy accuracy_of(const std::vector<int>& pred, const std::vector<int>& labels,
                          std::size_t num_classes) {
  ClassAccuracy acc;
  acc.per_class.assign(num_classes, 0.0);
  acc.per_class_count.assign(num_classes, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto cls = static_cast<std::size_t>(labels[i]);
    acc.per_class_count[cls] += 1;
    if (pred[i] == labels[i]) {
      acc.per_class[cls] += 1.0;
      ++hits;
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (acc.per_class_count[c] > 0) {
      acc.per_class[c] /= static_cast<double>(acc.per_class_count[c]);
    }
  }
  acc.overall = labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
  return acc;
}

}  // namespace

ClassAccuracy clean_accuracy(const Classifier& model, const LabeledDataset& dataset,
                             int threads) {
  if (dataset.size() == 0) throw ContractError("clean_accuracy: empty dataset");
  (void)threads;
  return accuracy_of(predict_class(model, dataset.inputs), dataset.labels,
                     dataset.class_count);
}

ClassAccuracy robust_accuracy(const Classifier& model, const LabeledDataset& dataset,
                              const NamedAttack& attack, int threads) {
  if (dataset.size() == 0) throw ContractError("robust_accuracy: empty dataset");
  if (dataset.split != SplitTag::test) {
    throw ContractError("robust_accuracy: dataset must be a test split");
  }
  const Tensor x_adv = run_attack(model, dataset.inputs, dataset.labels, attack, threads);
  return accuracy_of(predict_class(model, x_adv), dataset.labels, dataset.class_count);
}

std::vector<std::size_t> bottom_k_classes(const std::vector<double>& per_class_acc,
                                          double k_percent) {
  if (per_class_acc.empty()) throw ContractError("bottom_k: empty per-class accuracies");
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw ContractError("bottom_k: k_percent must be in (0, 100]");
  }
  const std::size_t d = per_class_acc.size();
  const std::size_t take = static_cast<std::size_t>(
      std::ceil(k_percent / 100.0 * static_cast<double>(d)));
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return per_class_acc[a] < per_class_acc[b];
  });
  order.resize(std::min(take, d));
  return order;
}

double bottom_k_cumulative(const std::vector<double>& per_class_acc, double k_percent) {
  const auto classes = bottom_k_classes(per_class_acc, k_percent);
  double total = 0.0;
  for (std::size_t c : classes) total += per_class_acc[c];
  return total / static_cast<double>(classes.size());
}

std::string attack_method_name(AttackMethod method) {
  switch (method) {
    case AttackMethod::fgsm:
      return "fgsm";
    case AttackMethod::cw:
      return "cw";
    case AttackMethod::pgd:
    default:
      return "pgd";
  }
}

AttackMethod attack_method_from(const std::string& name) {
  if (name == "fgsm") return AttackMethod::fgsm;
  if (name == "pgd") return AttackMethod::pgd;
  if (name == "cw") return AttackMethod::cw;
  throw ContractError("unknown attack method: " + name);
}

namespace {

nlohmann::json attack_config_json(const AttackConfig& a) {
  return nlohmann::json{{"gamma", a.gamma},
                        {"steps", a.steps},
                        {"step_size", a.effective_step()},
                        {"random_start", a.random_start},
                        {"objective", a.objective == AttackObjective::cw ? "cw" : "ce"},
                        {"kappa", a.kappa},
                        {"seed", a.seed}};
}

AttackConfig attack_config_from_json(const nlohmann::json& j) {
  AttackConfig a;
  a.gamma = j.at("gamma").get<double>();
  a.steps = j.at("steps").get<std::size_t>();
  a.step_size = j.at("step_size").get<double>();
  a.random_start = j.at("random_start").get<bool>();
  a.objective = j.at("objective").get<std::string>() == "cw" ? AttackObjective::cw
                                                             : AttackObjective::ce;
  a.kappa = j.at("kappa").get<double>();
  a.seed = j.at("seed").get<std::uint64_t>();
  return a;
}

nlohmann::json accuracy_json(const ClassAccuracy& acc) {
  return nlohmann::json{{"overall", acc.overall},
                        {"per_class", acc.per_class},
                        {"per_class_count", acc.per_class_count}};
}

ClassAccuracy accuracy_from_json(const nlohmann::json& j) {
  ClassAccuracy acc;
  acc.overall = j.at("overall").get<double>();
  acc.per_class = j.at("per_class").get<std::vector<double>>();
  acc.per_class_count = j.at("per_class_count").get<std::vector<std::size_t>>();
  return acc;
}

std::string fmt_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

}  // namespace

void emit_report_json(const std::filesystem::path& path, const RobustnessReport& report) {
  nlohmann::json attacks = nlohmann::json::array();
  for (const AttackReport& a : report.attacks) {
    nlohmann::json bottom = nlohmann::json::object();
    for (const auto& [k, v] : a.bottom_k) bottom[std::to_string(k)] = v;
    attacks.push_back(nlohmann::json{{"name", a.name},
                                     {"method", attack_method_name(a.method)},
                                     {"config", attack_config_json(a.config)},
                                     {"accuracy", accuracy_json(a.accuracy)},
                                     {"bottom_k", bottom}});
  }
  nlohmann::json j{{"schema_version", report.schema_version},
                   {"model_id", report.model_id},
                   {"dataset_id", report.dataset_id},
                   {"seed", report.seed},
                   {"clean", accuracy_json(report.clean)},
                   {"attacks", attacks}};
  if (report.rho.has_value()) {
    nlohmann::json rho_k = nlohmann::json::object();
    for (const auto& [k, v] : report.rho->rho_k) rho_k[std::to_string(k)] = v;
    j["rho"] = nlohmann::json{{"baseline_id", report.rho->baseline_id},
                              {"treated_id", report.rho->treated_id},
                              {"norm", theta_norm_name(report.rho->norm)},
                              {"rho_k", rho_k},
                              {"rho_avg", report.rho->rho_avg}};
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

RobustnessReport parse_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    RobustnessReport report;
    report.schema_version = j.at("schema_version").get<int>();
    report.model_id = j.at("model_id").get<std::string>();
    report.dataset_id = j.at("dataset_id").get<std::string>();
    report.seed = j.at("seed").get<std::uint64_t>();
    report.clean = accuracy_from_json(j.at("clean"));
    for (const auto& a : j.at("attacks")) {
      AttackReport ar;
      ar.name = a.at("name").get<std::string>();
      ar.method = attack_method_from(a.at("method").get<std::string>());
      ar.config = attack_config_from_json(a.at("config"));
      ar.accuracy = accuracy_from_json(a.at("accuracy"));
      for (const auto& [k, v] : a.at("bottom_k").items()) {
        ar.bottom_k[std::stoi(k)] = v.get<double>();
      }
      report.attacks.push_back(std::move(ar));
    }
    if (j.contains("rho")) {
      RhoBlock rho;
      const auto& r = j.at("rho");
      rho.baseline_id = r.at("baseline_id").get<std::string>();
      rho.treated_id = r.at("treated_id").get<std::string>();
      rho.norm = theta_norm_from(r.at("norm").get<std::string>());
      for (const auto& [k, v] : r.at("rho_k").items()) {
        rho.rho_k[std::stoi(k)] = v.get<double>();
      }
      rho.rho_avg = r.at("rho_avg").get<double>();
      report.rho = std::move(rho);
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void emit_report_csv(const std::filesystem::path& path, const RobustnessReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "record,attack,class,value\n";
  out << "meta,schema_version,," << report.schema_version << '\n';
  auto accuracy_rows = [&out](const std::string& name, const ClassAccuracy& acc) {
    for (std::size_t c = 0; c < acc.per_class.size(); ++c) {
      out << "accuracy," << name << ',' << c << ',' << fmt_double(acc.per_class[c]) << '\n';
    }
  };
  accuracy_rows("clean", report.clean);
  for (const AttackReport& a : report.attacks) accuracy_rows(a.name, a.accuracy);
  out << "summary,clean,overall," << fmt_double(report.clean.overall) << '\n';
  for (const AttackReport& a : report.attacks) {
    out << "summary," << a.name << ",overall," << fmt_double(a.accuracy.overall) << '\n';
    for (const auto& [k, v] : a.bottom_k) {
      out << "summary," << a.name << ",bottom_" << k << ',' << fmt_double(v) << '\n';
    }
  }
  if (report.rho.has_value()) {
    for (const auto& [k, v] : report.rho->rho_k) {
      out << "rho,," << "bottom_" << k << ',' << fmt_double(v) << '\n';
    }
    out << "rho,,avg," << fmt_double(report.rho->rho_avg) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace advcausal
