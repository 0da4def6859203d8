#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advcausal/attack.hpp"
#include "advcausal/common.hpp"
#include "advcausal/model.hpp"
#include "advcausal/rng.hpp"
#include "oracles.hpp"

using namespace advcausal;

namespace {

Classifier linear_model(const Tensor& W, const Tensor& b) {
  Classifier m;
  m.spec = ClassifierSpec{W.cols(), {}, W.rows(), Activation::relu, 0};
  Tensor w = W;
  w.requires_grad = true;
  Tensor bias = b;
  bias.requires_grad = true;
  m.weights.push_back(std::move(w));
  m.biases.push_back(std::move(bias));
  return m;
}

Classifier random_mlp(Rng& rng, std::size_t dim, std::size_t hidden, std::size_t classes) {
  ClassifierSpec spec{dim, hidden ? std::vector<std::size_t>{hidden} : std::vector<std::size_t>{},
                      classes, Activation::relu, rng.next_u64()};
  Classifier m = init_classifier(spec);
  for (Tensor* p : m.parameters()) {
    for (double& v : p->data) v += rng.uniform(-0.5, 0.5);
  }
  return m;
}

Tensor random_inputs(Rng& rng, std::size_t n, std::size_t dim) {
  Tensor x = Tensor::zeros({n, dim});
  for (double& v : x.data) v = rng.uniform(0.0, 1.0);
  return x;
}

void check_ball(const Tensor& x_adv, const Tensor& x, double gamma) {
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CHECK(std::abs(x_adv.data[i] - x.data[i]) <= gamma + 1e-9);
    CHECK(x_adv.data[i] >= 0.0);
    CHECK(x_adv.data[i] <= 1.0);
  }
}

}  // namespace

TEST_CASE("project_linf: clamp examples and idempotence") {
  Tensor x({1, 1}, {0.5});
  Tensor adv({1, 1}, {0.9});
  CHECK(project_linf(adv, x, 0.1).data[0] == doctest::Approx(0.6).epsilon(1e-15));

  Tensor inside({1, 1}, {0.55});
  CHECK(project_linf(inside, x, 0.1).data[0] == 0.55);

  Tensor near_edge({1, 1}, {0.95});
  Tensor far({1, 1}, {1.10});
  CHECK(project_linf(far, near_edge, 0.2).data[0] == 1.0);  // range clip binds first

  Tensor once = project_linf(adv, x, 0.1);
  Tensor twice = project_linf(once, x, 0.1);
  CHECK(once.data == twice.data);

  CHECK_THROWS_AS(project_linf(adv, x, -0.1), ContractError);
  CHECK_THROWS_AS(project_linf(adv, Tensor::zeros({2, 1}), 0.1), ContractError);
}

TEST_CASE("fgsm: zero budget, analytic sign, constant model") {
  Rng rng(17);
  Classifier m = random_mlp(rng, 3, 4, 2);
  Tensor x = random_inputs(rng, 2, 3);

  AttackConfig zero;
  zero.gamma = 0.0;
  CHECK(fgsm(m, x, {0, 1}, zero).data == x.data);

  // positive-weight logistic, label 1: CE gradient wrt x is -(1-p) w < 0,
  // so the perturbation is -gamma on every interior coordinate.
  Tensor W({2, 3}, {0, 0, 0, 0.8, 1.1, 0.6});
  Classifier logistic = linear_model(W, Tensor::zeros({2}));
  Tensor interior({1, 3}, {0.5, 0.5, 0.5});
  AttackConfig cfg;
  cfg.gamma = 0.1;
  Tensor adv = fgsm(logistic, interior, {1}, cfg);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(adv.data[c] == doctest::Approx(0.4).epsilon(1e-12));
  }

  // constant model: zero input gradient, sign(0) = 0 keeps x fixed
  Classifier constant = linear_model(Tensor::zeros({2, 3}), Tensor::zeros({2}));
  CHECK(fgsm(constant, interior, {1}, cfg).data == interior.data);
}

TEST_CASE("pgd: single zero-start step of size gamma collapses to fgsm") {
  Rng rng(23);
  Classifier m = random_mlp(rng, 4, 6, 3);
  Tensor x = random_inputs(rng, 3, 4);
  std::vector<int> y = {0, 1, 2};
  AttackConfig cfg;
  cfg.gamma = 0.07;
  cfg.steps = 1;
  cfg.step_size = cfg.gamma;
  cfg.random_start = false;
  CHECK(pgd(m, x, y, cfg).data == fgsm(m, x, y, cfg).data);
}

TEST_CASE("pgd reaches the grid-search optimum on 2-input logistic fixtures") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 31);
    Tensor W = Tensor::zeros({2, 2});
    for (double& v : W.data) v = rng.uniform(-3.0, 3.0);
    Classifier m = linear_model(W, Tensor::zeros({2}));
    Tensor x({1, 2}, {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)});
    const int label = static_cast<int>(rng.below(2));

    AttackConfig cfg;
    cfg.gamma = 0.1;
    cfg.steps = 20;
    cfg.random_start = true;
    cfg.seed = seed;
    Tensor adv = pgd(m, x, {label}, cfg);
    const double achieved = oracles::model_ce(m, adv, {label});
    const double best = oracles::grid_max_ce(m, {x.data[0], x.data[1]}, label, 0.1, 0.005);
    CHECK(achieved >= 0.99 * best);
  }
}

TEST_CASE("cw_inf: margin hinge and direction agreement") {
  AttackConfig cw;
  cw.objective = AttackObjective::cw;
  cw.gamma = 0.08;
  cw.steps = 10;
  cw.random_start = false;

  // already misclassified at kappa = 0: hinge is inactive, output stays put
  Tensor W({2, 2}, {1.0, 0.5, -0.2, 0.4});
  Classifier m = linear_model(W, Tensor::zeros({2}));
  Tensor x({1, 2}, {0.6, 0.5});
  const int wrong_label = predict_class(m, x)[0] == 0 ? 1 : 0;
  Tensor adv = cw_inf(m, x, {wrong_label}, cw);
  check_ball(adv, x, cw.gamma);
  CHECK(adv.data == x.data);  // zero gradient through the saturated hinge

  // on a binary linear model CE and CW push in the same direction
  const int true_label = 1 - wrong_label;
  AttackConfig ce = cw;
  ce.objective = AttackObjective::ce;
  ce.steps = 1;
  ce.step_size = cw.gamma;
  AttackConfig cw1 = cw;
  cw1.steps = 1;
  cw1.step_size = cw.gamma;
  Tensor via_ce = pgd(m, x, {true_label}, ce);
  Tensor via_cw = cw_inf(m, x, {true_label}, cw1);
  CHECK(via_ce.data == via_cw.data);

  // zero budget leaves x unchanged
  AttackConfig zero = cw;
  zero.gamma = 0.0;
  CHECK(cw_inf(m, x, {true_label}, zero).data == x.data);

  CHECK_THROWS_AS(cw_inf(m, x, {0}, ce), ContractError);   // wrong objective
  CHECK_THROWS_AS(pgd(m, x, {0}, cw), ContractError);      // wrong objective
}

TEST_CASE("select_worst: flip filter") {
  // model that always predicts class 0
  Tensor W = Tensor::zeros({3, 2});
  Tensor b({3}, {5.0, 0.0, 0.0});
  Classifier m = linear_model(W, b);
  Tensor x = Tensor::full({4, 2}, 0.5);
  std::vector<int> y = {0, 1, 0, 2};
  WorstBatch worst = select_worst(m, x, y, x);
  CHECK(worst.indices == std::vector<std::size_t>{1, 3});
  CHECK(worst.y == std::vector<int>{1, 2});
  CHECK(worst.attacked_class == std::vector<int>{0, 0});
  for (double t : worst.t.data) CHECK(t == 0.0);
  for (double c : worst.attacked_confidence) CHECK(c > 0.9);

  // perfectly robust model -> empty batch
  WorstBatch none = select_worst(m, x, {0, 0, 0, 0}, x);
  CHECK(none.size() == 0);

  // brute-force re-evaluation matches the filter
  Rng rng(3);
  Classifier mlp = random_mlp(rng, 2, 5, 3);
  Tensor xr = random_inputs(rng, 12, 2);
  std::vector<int> yr;
  for (int i = 0; i < 12; ++i) yr.push_back(static_cast<int>(rng.below(3)));
  AttackConfig cfg;
  cfg.gamma = 0.1;
  cfg.steps = 5;
  cfg.seed = 9;
  Tensor adv = pgd(mlp, xr, yr, cfg);
  WorstBatch w = select_worst(mlp, xr, yr, adv);
  const std::vector<int> pred = predict_class(mlp, adv);
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < yr.size(); ++i) {
    if (pred[i] != yr[i]) expect.push_back(i);
  }
  CHECK(w.indices == expect);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w.attacked_class[i] == pred[w.indices[i]]);
    CHECK(w.y[i] == yr[w.indices[i]]);
  }
}

TEST_CASE("attack fuzz: ball and range constraints, determinism, frozen model") {
  Rng rng(2024);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t dim = 1 + rng.below(4);
    const std::size_t classes = 2 + rng.below(3);
    const std::size_t n = 1 + rng.below(3);
    Classifier m = random_mlp(rng, dim, rng.below(2) ? 5 : 0, classes);
    Tensor x = random_inputs(rng, n, dim);
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<int>(rng.below(classes)));

    AttackConfig cfg;
    cfg.gamma = rng.uniform(0.0, 0.3);
    cfg.steps = 1 + rng.below(6);
    cfg.random_start = rng.below(2) == 1;
    cfg.seed = rng.next_u64();
    cfg.kappa = rng.uniform(0.0, 0.5);

    const std::uint64_t before = m.checksum();
    Tensor adv;
    const int which = static_cast<int>(rng.below(3));
    if (which == 0) {
      adv = fgsm(m, x, y, cfg);
    } else if (which == 1) {
      adv = pgd(m, x, y, cfg);
    } else {
      cfg.objective = AttackObjective::cw;
      adv = cw_inf(m, x, y, cfg);
    }
    check_ball(adv, x, cfg.gamma);
    CHECK(m.checksum() == before);

    // bitwise determinism per seed
    Tensor again = which == 0   ? fgsm(m, x, y, cfg)
                   : which == 1 ? pgd(m, x, y, cfg)
                                : cw_inf(m, x, y, cfg);
    CHECK(adv.data == again.data);
  }
}

TEST_CASE("sharded attacks agree with serial runs") {
  Rng rng(555);
  Classifier m = random_mlp(rng, 3, 8, 4);
  Tensor x = random_inputs(rng, 13, 3);
  std::vector<int> y;
  for (int i = 0; i < 13; ++i) y.push_back(static_cast<int>(rng.below(4)));
  AttackConfig cfg;
  cfg.gamma = 0.12;
  cfg.steps = 7;
  cfg.random_start = true;
  cfg.seed = 99;
  const Tensor serial = pgd(m, x, y, cfg, 1);
  const Tensor sharded = pgd(m, x, y, cfg, 4);
  CHECK(serial.data == sharded.data);
}
