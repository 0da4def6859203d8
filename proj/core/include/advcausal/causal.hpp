#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advcausal/attack.hpp"
#include "advcausal/model.hpp"

namespace advcausal {

/// Sharpened propensity p(T=t|x) per sample: the mean attacked top-class
/// confidence over the random-restart attacks that flipped the prediction.
struct PropensityEstimate {
  std::vector<double> p;  // >= kProbFloor
  std::size_t restarts = 0;
  std::vector<std::vector<double>> restart_confidences;  // flipped restarts only
  std::vector<bool> worst;  // false when no restart flipped (p is the floor)

  std::size_t size() const { return p.size(); }
};

/// Runs `restarts` independent random-start attacks (restart r uses the
/// derived seed of attack.seed and r) and averages the attacked confidence
/// over the restarts that flipped each sample. Samples no restart flips get
/// p = kProbFloor and worst = false.
PropensityEstimate approx_propensity(const Classifier& model, const Tensor& x,
                                     const std::vector<int>& y, const AttackConfig& attack,
                                     std::size_t restarts, int threads = 1);

/// Neyman-orthogonal interventional expectation over the treated samples:
/// mean_i [ f(x_i + t_i) + (onehot(y_i) - f(x_i + t_i)) / p_i ], a d-vector.
/// p_i == 1 contributes onehot(y_i) exactly (the residual correction cancels
/// the plug-in algebraically).
std::vector<double> interventional_expectation(const Classifier& model, const Tensor& x_adv,
                                               const std::vector<int>& y,
                                               const std::vector<double>& p);

enum class ThetaNorm { mean_abs, l2 };

struct CausalMeta {
  std::string model_id;
  std::string dataset_id;
  AttackConfig attack;
  ThetaNorm norm = ThetaNorm::mean_abs;
  std::size_t restarts = 0;
  std::uint64_t seed = 0;
};

/// Per-class causal-parameter magnitudes. per_sample holds the reduced norm
/// of each retained sample's weighted Jacobian -(1/p - 1) * df(x+t)/dt;
/// per_class averages them by true label and overall is the
/// class-frequency-weighted mean (= the plain sample mean).
struct CausalEstimate {
  std::vector<double> per_class;
  std::vector<std::size_t> per_class_count;
  double overall = 0.0;
  std::vector<double> per_sample;
  std::vector<int> sample_class;
  CausalMeta meta;
};

/// Weighted input-Jacobian estimate over a worst batch. Samples the
/// propensity pass flagged non-worst are excluded; p = 1 samples contribute
/// exactly zero.
CausalEstimate estimate_theta(const WorstBatch& worst, const Classifier& model,
                              const PropensityEstimate& propensity, ThetaNorm norm,
                              const CausalMeta& meta);

/// Central directional finite difference of the interventional expectation
/// along u = t / ||t||_F with step epsilon. The orthogonal correction uses
/// the residuals at the observed treatment, so only the plug-in component
/// varies and the quotient estimates its directional derivative.
std::vector<double> finite_diff_theta(const Classifier& model, const Tensor& x,
                                      const Tensor& t, const std::vector<int>& y,
                                      const std::vector<double>& p, double epsilon);

/// rho = 100 * |theta_treated| / |theta_baseline| over the given classes
/// (unweighted mean of per-class magnitudes). Estimates must share the norm
/// choice and dataset.
double relative_ratio(const CausalEstimate& treated, const CausalEstimate& baseline,
                      const std::vector<std::size_t>& classes);

/// rho over all classes using the frequency-weighted overall magnitudes.
double relative_ratio_avg(const CausalEstimate& treated, const CausalEstimate& baseline);

void save_causal_json(const std::filesystem::path& path, const CausalEstimate& estimate);
CausalEstimate load_causal_json(const std::filesystem::path& path);

std::string theta_norm_name(ThetaNorm norm);
ThetaNorm theta_norm_from(const std::string& name);

}  // namespace advcausal
