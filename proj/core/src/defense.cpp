#include "advcausal/defense.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "advcausal/causal.hpp"
#include "advcausal/common.hpp"

namespace advcausal {

void DefenseConfig::validate() const {
  attack.validate();
  if (trades_beta < 0.0) throw ContractError("defense config: trades_beta must be nonnegative");
  if (split_ratio <= 0.0 || split_ratio >= 1.0) {
    throw ContractError("defense config: split_ratio must be in (0, 1)");
  }
  if (adml_learning_rate < 0.0) {
    throw ContractError("defense config: adml_learning_rate must be nonnegative");
  }
  if (propensity_restarts == 0) {
    throw ContractError("defense config: propensity_restarts must be >= 1");
  }
}

namespace {

Tensor add_data(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) {
    throw ContractError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
  return out;
}

}  // namespace

Tensor at_loss(Tape& tape, const Classifier& model, const Tensor& x,
               const std::vector<int>& y, const Tensor& t_prime) {
  const Tensor x_adv = add_data(x, t_prime);
  return cross_entropy(tape, model.probabilities(tape, x_adv), y);
}

Tensor trades_loss(Tape& tape, const Classifier& model, const Tensor& x,
                   const std::vector<int>& y, const Tensor& t_prime, double beta) {
  if (beta < 0.0) throw ContractError("trades_loss: beta must be nonnegative");
  const Tensor x_adv = add_data(x, t_prime);
  Tensor p = model.probabilities(tape, x);
  Tensor clean_ce = cross_entropy(tape, p, y);
  if (beta == 0.0) return clean_ce;
  Tensor q = model.probabilities(tape, x_adv);
  const double inf = std::numeric_limits<double>::infinity();
  Tensor log_p = tape.log(tape.clamp(p, kProbFloor, inf));
  Tensor log_q = tape.log(tape.clamp(q, kProbFloor, inf));
  Tensor diff = tape.add(log_p, tape.mul(log_q, Tensor::full(log_q.shape, -1.0)));
  Tensor kl_total = tape.sum(tape.mul(p, diff));
  const double scale = beta / static_cast<double>(x.rows());
  Tensor kl_term = tape.mul(kl_total, Tensor::scalar(scale));
  return tape.add(clean_ce, kl_term);
}

double balancing_ratio(double attacked_top_confidence) {
  const double p = std::min(std::max(attacked_top_confidence, kProbFloor), 1.0);
  return std::min(1.0 / p - 1.0, kTauMax);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_and_crossfit(
    std::size_t batch_size, double split_ratio, Rng& rng, bool swap_roles) {
  if (batch_size < 2) throw ContractError("split_and_crossfit: batch must have at least 2 samples");
  if (split_ratio <= 0.0 || split_ratio >= 1.0) {
    throw ContractError("split_and_crossfit: split_ratio must be in (0, 1)");
  }
  std::vector<std::size_t> order(batch_size);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  const std::size_t n1 = static_cast<std::size_t>(
      std::llround(split_ratio * static_cast<double>(batch_size)));
  std::vector<std::size_t> first(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n1));
  std::vector<std::size_t> second(order.begin() + static_cast<std::ptrdiff_t>(n1), order.end());
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  if (swap_roles) std::swap(first, second);
  return {std::move(first), std::move(second)};
}

Tensor adml_loss(Tape& tape, const Classifier& model, const Tensor& x1,
                 const std::vector<int>& y1, const Tensor& t1_prime, const Tensor& x2,
                 const std::vector<int>& y2, const Tensor& t2_prime,
                 const DefenseConfig& config, const std::vector<double>* tau_override) {
  const DefenseKind base = config.base_kind();
  bool have_loss = false;
  Tensor loss = Tensor::scalar(0.0);

  if (x1.rows() > 0) {
    loss = base == DefenseKind::trades
               ? trades_loss(tape, model, x1, y1, t1_prime, config.trades_beta)
               : at_loss(tape, model, x1, y1, t1_prime);
    have_loss = true;
  }

  // Worst-example selection on D2 per the treatment_set toggle.
  const Tensor x2_adv = add_data(x2, t2_prime);
  const Tensor probs = x2.rows() > 0 ? predict_proba(model, x2_adv) : Tensor::zeros({0, 1});
  const std::vector<int> pred = x2.rows() > 0 ? argmax_rows(probs) : std::vector<int>{};
  std::vector<std::size_t> kept;
  std::vector<double> tau;
  for (std::size_t i = 0; i < y2.size(); ++i) {
    const bool flipped = pred[i] != y2[i];
    const bool keep = config.treatment_set == TreatmentSet::all ||
                      (config.treatment_set == TreatmentSet::worst && flipped) ||
                      (config.treatment_set == TreatmentSet::non_worst && !flipped);
    if (!keep) continue;
    double tau_i;
    if (tau_override != nullptr) {
      if (tau_override->size() != y2.size()) {
        throw ContractError("adml_loss: tau_override must align with D2");
      }
      tau_i = (*tau_override)[i];
      if (tau_i < 0.0) continue;  // flagged row
    } else {
      tau_i = balancing_ratio(probs.at(i, static_cast<std::size_t>(pred[i])));
    }
    kept.push_back(i);
    tau.push_back(tau_i);
  }

  if (!kept.empty()) {
    const Tensor xk = take_rows(x2, kept);
    const Tensor xk_adv = take_rows(x2_adv, kept);
    std::vector<int> yk;
    yk.reserve(kept.size());
    for (std::size_t i : kept) yk.push_back(y2[i]);
    Tensor adv_term = weighted_cross_entropy(tape, model.probabilities(tape, xk_adv), yk, tau);
    Tensor clean_term = cross_entropy(tape, model.probabilities(tape, xk), yk);
    Tensor l_b = tape.add(adv_term, clean_term);
    loss = have_loss ? tape.add(loss, l_b) : std::move(l_b);
    have_loss = true;
  }

  // No parts at all: a constant zero that is not on the tape; callers skip
  // the optimizer step (lvalue/prvalue mixes in one return expression would
  // copy `loss` and detach its tape identity, hence the split returns).
  if (have_loss) return loss;
  return Tensor::scalar(0.0);
}

namespace {

double format_free_accuracy(const Classifier& model, const Tensor& x,
                            const std::vector<int>& y) {
  const std::vector<int> pred = predict_class(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) hits += pred[i] == y[i];
  return y.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(y.size());
}

EpochStats epoch_eval(const Classifier& model, const LabeledDataset& test,
                      const AttackConfig& attack, std::uint64_t eval_seed,
                      std::size_t epoch, double mean_loss, double lr, int threads) {
  EpochStats stats;
  stats.epoch = epoch;
  stats.loss = mean_loss;
  stats.lr = lr;
  stats.clean_acc = format_free_accuracy(model, test.inputs, test.labels);
  AttackConfig eval_attack = attack;
  eval_attack.seed = eval_seed;
  const Tensor x_adv = pgd(model, test.inputs, test.labels, eval_attack, threads);
  stats.pgd_acc = format_free_accuracy(model, x_adv, test.labels);
  return stats;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size,
                                                    Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

Tensor sub_data(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.data[i];
  return out;
}

}  // namespace

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "epoch,clean_acc,pgd_acc,loss,lr\n";
  char buf[32];
  auto fmt = [&buf](double v) {
    const auto result = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, result.ptr);
  };
  for (const EpochStats& row : history) {
    out << row.epoch << ',' << fmt(row.clean_acc) << ',' << fmt(row.pgd_acc) << ','
        << fmt(row.loss) << ',' << fmt(row.lr) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

TrainHistory train_standard(Classifier& model, const LabeledDataset& train,
                            const LabeledDataset& test, const TrainConfig& train_config,
                            const DefenseConfig& defense, int threads) {
  train_config.validate();
  defense.validate();
  if (defense.is_adml()) {
    throw ContractError("train_standard: defense kind must be at or trades");
  }
  Sgd optimizer(train_config);
  Rng rng(train_config.seed);
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    const double lr = optimizer.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    const auto batches = epoch_batches(train.size(), train_config.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor x = take_rows(train.inputs, batches[b]);
      std::vector<int> y;
      y.reserve(batches[b].size());
      for (std::size_t i : batches[b]) y.push_back(train.labels[i]);
      AttackConfig attack = defense.attack;
      attack.seed = derive_seed(defense.attack.seed, (epoch << 20) + b);
      const Tensor x_adv = pgd(model, x, y, attack, threads);
      Tape tape;
      Tensor loss = defense.kind == DefenseKind::trades
                        ? trades_loss(tape, model, x, y, sub_data(x_adv, x), defense.trades_beta)
                        : at_loss(tape, model, x, y, sub_data(x_adv, x));
      loss_sum += loss.data[0];
      ++batch_count;
      optimizer.step(model, tape.backward(loss), lr);
    }
    const double mean_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
    history.push_back(epoch_eval(model, test, defense.attack,
                                 derive_seed(train_config.seed, 0xe0a1ull + epoch), epoch,
                                 mean_loss, lr, threads));
  }
  return history;
}

TrainHistory train_at(Classifier& model, const LabeledDataset& train,
                      const LabeledDataset& test, const TrainConfig& train_config,
                      const AttackConfig& attack, int threads) {
  DefenseConfig defense;
  defense.kind = DefenseKind::at;
  defense.attack = attack;
  defense.seed = train_config.seed;
  return train_standard(model, train, test, train_config, defense, threads);
}

TrainHistory train_adml(Classifier& model_at, const LabeledDataset& train,
                        const LabeledDataset& test, const TrainConfig& train_config,
                        const DefenseConfig& defense, int threads) {
  train_config.validate();
  defense.validate();
  if (!defense.is_adml()) {
    throw ContractError("train_adml: defense kind must be adml_over_at or adml_over_trades");
  }
  TrainConfig fine = train_config;
  fine.epochs = defense.adml_epochs;
  fine.learning_rate = defense.adml_learning_rate > 0.0
                           ? defense.adml_learning_rate
                           : train_config.learning_rate / 500.0;
  fine.seed = defense.seed;
  Sgd optimizer(fine);
  Rng rng(defense.seed);
  bool swap_roles = false;
  TrainHistory history;
  for (std::size_t epoch = 0; epoch < fine.epochs; ++epoch) {
    const double lr = optimizer.lr_at(epoch);
    double loss_sum = 0.0;
    std::size_t batch_count = 0;
    const auto batches = epoch_batches(train.size(), fine.batch_size, rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Tensor x = take_rows(train.inputs, batches[b]);
      std::vector<int> y;
      y.reserve(batches[b].size());
      for (std::size_t i : batches[b]) y.push_back(train.labels[i]);

      AttackConfig attack = defense.attack;
      attack.seed = derive_seed(defense.attack.seed, 0xad31ull + (epoch << 20) + b);
      const Tensor x_adv = pgd(model_at, x, y, attack, threads);
      const Tensor t_prime = sub_data(x_adv, x);

      std::vector<std::size_t> d1, d2;
      if (defense.use_split_crossfit && y.size() >= 2) {
        std::tie(d1, d2) = split_and_crossfit(y.size(), defense.split_ratio, rng, swap_roles);
        swap_roles = !swap_roles;
        assert([&] {
          std::vector<std::size_t> all(d1);
          all.insert(all.end(), d2.begin(), d2.end());
          std::sort(all.begin(), all.end());
          for (std::size_t i = 0; i < all.size(); ++i)
            if (all[i] != i) return false;
          return all.size() == y.size();
        }());
      } else {
        d1.resize(y.size());
        std::iota(d1.begin(), d1.end(), 0);
        d2 = d1;
      }

      auto slice_labels = [&y](const std::vector<std::size_t>& idx) {
        std::vector<int> out;
        out.reserve(idx.size());
        for (std::size_t i : idx) out.push_back(y[i]);
        return out;
      };
      const Tensor x1 = take_rows(x, d1), t1 = take_rows(t_prime, d1);
      const Tensor x2 = take_rows(x, d2), t2 = take_rows(t_prime, d2);
      const std::vector<int> y1 = slice_labels(d1), y2 = slice_labels(d2);

      std::vector<double> tau_override;
      const std::vector<double>* tau_ptr = nullptr;
      if (defense.tau_source == TauSource::propensity && !y2.empty()) {
        AttackConfig restart_attack = defense.attack;
        restart_attack.random_start = true;
        restart_attack.seed = derive_seed(defense.seed, 0x9e0full + (epoch << 20) + b);
        const PropensityEstimate prop = approx_propensity(
            model_at, x2, y2, restart_attack, defense.propensity_restarts, threads);
        tau_override.resize(y2.size());
        for (std::size_t i = 0; i < y2.size(); ++i) {
          tau_override[i] = prop.worst[i] ? balancing_ratio(prop.p[i]) : -1.0;
        }
        tau_ptr = &tau_override;
      }

      Tape tape;
      Tensor loss = adml_loss(tape, model_at, x1, y1, t1, x2, y2, t2, defense, tau_ptr);
      loss_sum += loss.data[0];
      ++batch_count;
      if (tape.tracked(loss)) {
        optimizer.step(model_at, tape.backward(loss), lr);
      }
    }
    const double mean_loss = batch_count ? loss_sum / static_cast<double>(batch_count) : 0.0;
    history.push_back(epoch_eval(model_at, test, defense.attack,
                                 derive_seed(defense.seed, 0xe0a2ull + epoch), epoch, mean_loss,
                                 lr, threads));
  }
  return history;
}

}  // namespace advcausal
