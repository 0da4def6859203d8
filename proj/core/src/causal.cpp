#include "advcausal/causal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "advcausal/common.hpp"

namespace advcausal {

PropensityEstimate approx_propensity(const Classifier& model, const Tensor& x,
                                     const std::vector<int>& y, const AttackConfig& attack,
                                     std::size_t restarts, int threads) {
  if (restarts == 0) throw ContractError("approx_propensity: need at least 1 restart");
  if (!attack.random_start) {
    throw ContractError("approx_propensity: attack must use random starts");
  }
  if (x.rows() != y.size()) throw ContractError("approx_propensity: batch/label mismatch");

  PropensityEstimate out;
  out.restarts = restarts;
  const std::size_t n = y.size();
  out.restart_confidences.assign(n, {});
  for (std::size_t r = 0; r < restarts; ++r) {
    AttackConfig restart = attack;
    restart.seed = derive_seed(attack.seed, r);
    Tensor x_adv = attack.objective == AttackObjective::cw
                       ? cw_inf(model, x, y, restart, threads)
                       : pgd(model, x, y, restart, threads);
    const Tensor probs = predict_proba(model, x_adv);
    const std::vector<int> pred = argmax_rows(probs);
    for (std::size_t i = 0; i < n; ++i) {
      if (pred[i] != y[i]) {
        out.restart_confidences[i].push_back(
            probs.at(i, static_cast<std::size_t>(pred[i])));
      }
    }
  }
  out.p.assign(n, kProbFloor);
  out.worst.assign(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& confs = out.restart_confidences[i];
    if (confs.empty()) continue;
    double total = 0.0;
    for (double c : confs) total += c;
    out.p[i] = std::max(total / static_cast<double>(confs.size()), kProbFloor);
    out.worst[i] = true;
  }
  return out;
}

std::vector<double> interventional_expectation(const Classifier& model, const Tensor& x_adv,
                                               const std::vector<int>& y,
                                               const std::vector<double>& p) {
  const std::size_t n = y.size();
  if (n == 0) throw ContractError("interventional_expectation: empty treated set");
  if (x_adv.rows() != n || p.size() != n) {
    throw ContractError("interventional_expectation: misaligned samples/labels/propensity");
  }
  const std::size_t d = model.spec.num_classes;
  const Tensor probs = predict_proba(model, x_adv);
  std::vector<double> acc(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] > 0.0)) throw ContractError("interventional_expectation: nonpositive propensity");
    for (std::size_t j = 0; j < d; ++j) {
      const double yj = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
      if (p[i] == 1.0) {
        acc[j] += yj;  // f + (y - f) reduces to y
      } else {
        const double f = probs.at(i, j);
        acc[j] += f + (yj - f) / p[i];
      }
    }
  }
  for (double& v : acc) v /= static_cast<double>(n);
  return acc;
}

CausalEstimate estimate_theta(const WorstBatch& worst, const Classifier& model,
                              const PropensityEstimate& propensity, ThetaNorm norm,
                              const CausalMeta& meta) {
  if (worst.size() == 0) throw ContractError("estimate_theta: empty worst batch");
  if (propensity.size() != worst.size()) {
    throw ContractError("estimate_theta: propensity not aligned with worst batch (" +
                        std::to_string(propensity.size()) + " vs " +
                        std::to_string(worst.size()) + ")");
  }
  const std::size_t d = model.spec.num_classes;
  const std::size_t dim = worst.x.cols();

  Tensor x_adv = worst.x;
  for (std::size_t i = 0; i < x_adv.numel(); ++i) x_adv.data[i] += worst.t.data[i];
  const std::vector<Tensor> jac = input_jacobian(model, x_adv);  // d x (n x dim)

  CausalEstimate est;
  est.meta = meta;
  est.meta.norm = norm;
  est.per_class.assign(d, 0.0);
  est.per_class_count.assign(d, 0);
  for (std::size_t i = 0; i < worst.size(); ++i) {
    if (!propensity.worst.empty() && !propensity.worst[i]) continue;
    const double weight = -(1.0 / propensity.p[i] - 1.0);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double* row = jac[j].data.data() + i * dim;
      for (std::size_t k = 0; k < dim; ++k) {
        const double v = weight * row[k];
        acc += norm == ThetaNorm::mean_abs ? std::abs(v) : v * v;
      }
    }
    const double reduced = norm == ThetaNorm::mean_abs
                               ? acc / static_cast<double>(d * dim)
                               : std::sqrt(acc);
    est.per_sample.push_back(reduced);
    est.sample_class.push_back(worst.y[i]);
    est.per_class[static_cast<std::size_t>(worst.y[i])] += reduced;
    est.per_class_count[static_cast<std::size_t>(worst.y[i])] += 1;
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < d; ++j) {
    total += est.per_class[j];
    count += est.per_class_count[j];
    if (est.per_class_count[j] > 0) {
      est.per_class[j] /= static_cast<double>(est.per_class_count[j]);
    }
  }
  est.overall = count ? total / static_cast<double>(count) : 0.0;
  return est;
}

std::vector<double> finite_diff_theta(const Classifier& model, const Tensor& x,
                                      const Tensor& t, const std::vector<int>& y,
                                      const std::vector<double>& p, double epsilon) {
  if (epsilon <= 0.0) throw ContractError("finite_diff_theta: epsilon must be positive");
  if (x.shape != t.shape) {
    throw ContractError("finite_diff_theta: shape mismatch " + x.shape_str() + " vs " +
                        t.shape_str());
  }
  if (y.empty()) throw ContractError("finite_diff_theta: empty sample set");
  double norm_sq = 0.0;
  for (double v : t.data) norm_sq += v * v;
  const double norm = std::sqrt(norm_sq);
  if (norm == 0.0) throw ContractError("finite_diff_theta: zero treatment direction");

  Tensor base = x;
  for (std::size_t i = 0; i < base.numel(); ++i) base.data[i] += t.data[i];
  Tensor plus = base, minus = base;
  for (std::size_t i = 0; i < base.numel(); ++i) {
    const double u = t.data[i] / norm;
    plus.data[i] += epsilon * u;
    minus.data[i] -= epsilon * u;
  }

  const std::size_t n = y.size();
  const std::size_t d = model.spec.num_classes;
  const Tensor probs_base = predict_proba(model, base);
  const Tensor probs_plus = predict_proba(model, plus);
  const Tensor probs_minus = predict_proba(model, minus);
  // Residual correction fixed at the observed treatment; it cancels in the
  // difference, leaving the plug-in component's derivative.
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p[i] > 0.0)) throw ContractError("finite_diff_theta: nonpositive propensity");
    for (std::size_t j = 0; j < d; ++j) {
      const double yj = static_cast<std::size_t>(y[i]) == j ? 1.0 : 0.0;
      const double residual = (yj - probs_base.at(i, j)) / p[i];
      const double ie_plus = probs_plus.at(i, j) + residual;
      const double ie_minus = probs_minus.at(i, j) + residual;
      out[j] += (ie_plus - ie_minus) / (2.0 * epsilon);
    }
  }
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

namespace {

double class_set_magnitude(const CausalEstimate& est, const std::vector<std::size_t>& classes) {
  if (classes.empty()) throw ContractError("relative_ratio: empty class set");
  double total = 0.0;
  for (std::size_t c : classes) {
    if (c >= est.per_class.size()) throw ContractError("relative_ratio: class out of range");
    total += est.per_class[c];
  }
  return total / static_cast<double>(classes.size());
}

void check_comparable(const CausalEstimate& a, const CausalEstimate& b) {
  if (a.meta.norm != b.meta.norm) {
    throw ContractError("relative_ratio: estimates use different norms");
  }
  if (a.meta.dataset_id != b.meta.dataset_id) {
    throw ContractError("relative_ratio: estimates come from different datasets");
  }
  if (a.per_class.size() != b.per_class.size()) {
    throw ContractError("relative_ratio: class count mismatch");
  }
}

}  // namespace

double relative_ratio(const CausalEstimate& treated, const CausalEstimate& baseline,
                      const std::vector<std::size_t>& classes) {
  check_comparable(treated, baseline);
  const double denom = class_set_magnitude(baseline, classes);
  if (denom == 0.0) throw ContractError("relative_ratio: baseline magnitude is zero");
  return 100.0 * class_set_magnitude(treated, classes) / denom;
}

double relative_ratio_avg(const CausalEstimate& treated, const CausalEstimate& baseline) {
  check_comparable(treated, baseline);
  if (baseline.overall == 0.0) {
    throw ContractError("relative_ratio: baseline magnitude is zero");
  }
  return 100.0 * treated.overall / baseline.overall;
}

std::string theta_norm_name(ThetaNorm norm) {
  return norm == ThetaNorm::mean_abs ? "mean_abs" : "l2";
}

ThetaNorm theta_norm_from(const std::string& name) {
  if (name == "mean_abs") return ThetaNorm::mean_abs;
  if (name == "l2") return ThetaNorm::l2;
  throw ContractError("unknown theta norm: " + name);
}

namespace {

nlohmann::json attack_to_json(const AttackConfig& a) {
  return nlohmann::json{{"gamma", a.gamma},
                        {"steps", a.steps},
                        {"step_size", a.effective_step()},
                        {"random_start", a.random_start},
                        {"objective", a.objective == AttackObjective::cw ? "cw" : "ce"},
                        {"kappa", a.kappa},
                        {"seed", a.seed}};
}

AttackConfig attack_from_json(const nlohmann::json& j) {
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

}  // namespace

void save_causal_json(const std::filesystem::path& path, const CausalEstimate& estimate) {
  nlohmann::json j{
      {"schema_version", 1},
      {"per_class", estimate.per_class},
      {"per_class_count", estimate.per_class_count},
      {"overall", estimate.overall},
      {"per_sample", estimate.per_sample},
      {"sample_class", estimate.sample_class},
      {"metadata",
       {{"model_id", estimate.meta.model_id},
        {"dataset_id", estimate.meta.dataset_id},
        {"attack", attack_to_json(estimate.meta.attack)},
        {"norm", theta_norm_name(estimate.meta.norm)},
        {"restarts", estimate.meta.restarts},
        {"seed", estimate.meta.seed}}}};
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

CausalEstimate load_causal_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    CausalEstimate est;
    est.per_class = j.at("per_class").get<std::vector<double>>();
    est.per_class_count = j.at("per_class_count").get<std::vector<std::size_t>>();
    est.overall = j.at("overall").get<double>();
    est.per_sample = j.at("per_sample").get<std::vector<double>>();
    est.sample_class = j.at("sample_class").get<std::vector<int>>();
    const auto& meta = j.at("metadata");
    est.meta.model_id = meta.at("model_id").get<std::string>();
    est.meta.dataset_id = meta.at("dataset_id").get<std::string>();
    est.meta.attack = attack_from_json(meta.at("attack"));
    est.meta.norm = theta_norm_from(meta.at("norm").get<std::string>());
    est.meta.restarts = meta.at("restarts").get<std::size_t>();
    est.meta.seed = meta.at("seed").get<std::uint64_t>();
    return est;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace advcausal
