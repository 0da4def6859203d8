#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "advcausal/common.hpp"
#include "advcausal/model.hpp"
#include "advcausal/rng.hpp"
#include "advcausal/tensor.hpp"
#include "oracles.hpp"

using namespace advcausal;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -2.0,
                     double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Keeps random draws away from relu/clamp/sign kinks where finite
// differences are invalid.
void push_off_kinks(Tensor& t, double threshold = 0.05) {
  for (double& v : t.data) {
    if (std::abs(v) < threshold) v += v >= 0.0 ? threshold : -threshold;
  }
}

}  // namespace

TEST_CASE("forward examples: identity matmul, relu, uniform softmax") {
  Tape tape;
  Tensor eye({2, 2}, {1, 0, 0, 1});
  Tensor v({2, 1}, {3, 4});
  Tensor mv = tape.matmul(eye, v);
  CHECK(mv.data == std::vector<double>{3, 4});

  Tensor r = tape.relu(Tensor({1, 3}, {-1, 0, 2}));
  CHECK(r.data == std::vector<double>{0, 0, 2});

  Tensor s = tape.softmax(Tensor({1, 3}, {0, 0, 0}));
  for (double p : s.data) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax rows form a probability simplex") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    Tape tape;
    Tensor x = random_tensor(rng, {4, 6}, -30.0, 30.0);
    Tensor y = tape.softmax(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        total += y.at(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("backward: sum of squares and fan-out accumulation") {
  Tape tape;
  Tensor w({3}, {1, 2, 3}, true);
  Tensor loss = tape.sum(tape.mul(w, w));
  GradTable grads = tape.backward(loss);
  CHECK(*find_grad(grads, w) == std::vector<double>{2, 4, 6});

  Tape tape2;
  Tensor w2({2}, {5, -1}, true);
  Tensor y = tape2.add(w2, w2);
  Tensor loss2 = tape2.sum(y);
  GradTable grads2 = tape2.backward(loss2);
  CHECK(*find_grad(grads2, w2) == std::vector<double>{2, 2});
}

TEST_CASE("backward contract errors") {
  Tape tape;
  Tensor w({2, 2}, {1, 2, 3, 4}, true);
  Tensor y = tape.mul(w, w);
  CHECK_THROWS_AS(tape.backward(y), ContractError);  // not scalar

  Tensor leaf = Tensor::scalar(1.0);
  leaf.requires_grad = true;
  CHECK_THROWS_AS(tape.backward(leaf), ContractError);  // not on tape
}

TEST_CASE("shape errors name the primitive and both shapes") {
  Tape tape;
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({2, 2}, {1, 2, 3, 4});
  try {
    tape.matmul(a, b);
    FAIL("expected ContractError");
  } catch (const ContractError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2x3)") != std::string::npos);
    CHECK(msg.find("(2x2)") != std::string::npos);
  }
  CHECK_THROWS_AS(tape.add(a, b), ContractError);
  CHECK_THROWS_AS(tape.mul(a, b), ContractError);
}

TEST_CASE("no primitive mutates its inputs") {
  Rng rng(7);
  Tensor a = random_tensor(rng, {3, 3});
  Tensor b = random_tensor(rng, {3, 3});
  const std::vector<double> a0 = a.data, b0 = b.data;
  Tape tape;
  a.requires_grad = true;
  tape.matmul(a, b);
  tape.add(a, b);
  tape.mul(a, b);
  tape.relu(a);
  tape.softmax(a);
  tape.clamp(a, -0.5, 0.5);
  tape.sign(a);
  tape.sum(a);
  tape.mean(a);
  tape.transpose(a);
  CHECK(a.data == a0);
  CHECK(b.data == b0);
}

TEST_CASE("every primitive matches central finite differences") {
  Rng rng(42);
  double worst = 0.0;
  auto check_unary = [&](const char* name, auto&& apply, auto&& apply_scalar, Tensor x) {
    Tape tape;
    x.requires_grad = true;
    Tensor out = apply(tape, x);
    Tensor loss = tape.sum(tape.mul(out, out));
    GradTable grads = tape.backward(loss);
    const std::vector<double>* got = find_grad(grads, x);
    REQUIRE_MESSAGE(got != nullptr, name);
    auto f = [&](const std::vector<double>& flat) {
      Tensor probe = x;
      probe.data = flat;
      Tape t2 = Tape::inference();
      Tensor o = apply_scalar(t2, probe);
      double acc = 0.0;
      for (double v : o.data) acc += v * v;
      return acc;
    };
    const std::vector<double> want = oracles::numeric_gradient(f, x.data);
    const double err = oracles::max_grad_error(*got, want);
    CHECK_MESSAGE(err < 1e-4, name << " max rel err " << err);
    worst = std::max(worst, err);
  };

  for (int rep = 0; rep < 8; ++rep) {
    Tensor x = random_tensor(rng, {3, 4});
    push_off_kinks(x);
    auto id2 = [](Tape& t, const Tensor& v) { return t.relu(v); };
    check_unary("relu", id2, id2, x);
    auto soft = [](Tape& t, const Tensor& v) { return t.softmax(v); };
    check_unary("softmax", soft, soft, x);
    auto cl = [](Tape& t, const Tensor& v) { return t.clamp(v, -1.0, 1.0); };
    check_unary("clamp", cl, cl, x);
    auto tr = [](Tape& t, const Tensor& v) { return t.transpose(v); };
    check_unary("transpose", tr, tr, x);

    Tensor pos = random_tensor(rng, {2, 5}, 0.2, 3.0);
    auto lg = [](Tape& t, const Tensor& v) { return t.log(v); };
    check_unary("log", lg, lg, pos);

    // sign has zero derivative away from the origin.
    Tape tape;
    Tensor sx = random_tensor(rng, {2, 3});
    push_off_kinks(sx, 0.2);
    sx.requires_grad = true;
    Tensor sloss = tape.sum(tape.mul(tape.sign(sx), tape.sign(sx)));
    if (tape.tracked(sloss)) {
      GradTable sg = tape.backward(sloss);
      const std::vector<double>* gs = find_grad(sg, sx);
      if (gs != nullptr) {
        for (double v : *gs) CHECK(v == 0.0);
      }
    }
  }

  // Binary primitives, gradients for both operands through one loss.
  for (int rep = 0; rep < 8; ++rep) {
    Tensor a = random_tensor(rng, {3, 2});
    Tensor b = random_tensor(rng, {2, 4});
    Tensor bias = random_tensor(rng, {4});
    auto f = [&](const std::vector<double>& flat) {
      std::vector<double> av(flat.begin(), flat.begin() + 6);
      std::vector<double> bv(flat.begin() + 6, flat.begin() + 14);
      std::vector<double> cv(flat.begin() + 14, flat.end());
      Tape t;
      Tensor mm = t.matmul(Tensor({3, 2}, av), Tensor({2, 4}, bv));
      Tensor out = t.add(mm, Tensor({4}, cv));
      Tensor sq = t.mul(out, out);
      double acc = 0.0;
      for (double v : sq.data) acc += v;
      return acc / static_cast<double>(sq.numel());
    };
    std::vector<double> flat = a.data;
    flat.insert(flat.end(), b.data.begin(), b.data.end());
    flat.insert(flat.end(), bias.data.begin(), bias.data.end());
    const std::vector<double> want = oracles::numeric_gradient(f, flat);

    Tape tape;
    a.requires_grad = b.requires_grad = bias.requires_grad = true;
    Tensor out = tape.add(tape.matmul(a, b), bias);
    Tensor loss = tape.mean(tape.mul(out, out));
    GradTable grads = tape.backward(loss);
    std::vector<double> got = *find_grad(grads, a);
    const std::vector<double>& gb = *find_grad(grads, b);
    const std::vector<double>& gc = *find_grad(grads, bias);
    got.insert(got.end(), gb.begin(), gb.end());
    got.insert(got.end(), gc.begin(), gc.end());
    const double err = oracles::max_grad_error(got, want);
    CHECK_MESSAGE(err < 1e-4, "matmul/add/mul/mean err " << err);
  }
}

TEST_CASE("composed MLP cross-entropy matches finite differences") {
  Rng rng(3);
  ClassifierSpec spec{4, {5}, 3, Activation::relu, 99};
  Classifier model = init_classifier(spec);
  Tensor x = random_tensor(rng, {6, 4}, 0.0, 1.0);
  std::vector<int> y = {0, 1, 2, 0, 1, 2};

  Tape tape;
  Tensor loss = cross_entropy(tape, model.probabilities(tape, x), y);
  GradTable grads = tape.backward(loss);

  for (Tensor* param : model.parameters()) {
    auto f = [&](const std::vector<double>& flat) {
      Classifier probe = model.clone();
      // find the matching parameter in the clone by position
      auto originals = model.parameters();
      auto clones = probe.parameters();
      for (std::size_t i = 0; i < originals.size(); ++i) {
        if (originals[i] == param) clones[i]->data = flat;
      }
      return oracles::model_ce(probe, x, y);
    };
    const std::vector<double> want = oracles::numeric_gradient(f, param->data);
    const std::vector<double>* got = find_grad(grads, *param);
    REQUIRE(got != nullptr);
    CHECK(oracles::max_grad_error(*got, want) < 1e-4);
  }
}

TEST_CASE("backward is deterministic: identical tapes give identical bits") {
  Rng rng(5);
  Tensor x = random_tensor(rng, {4, 3});
  Tensor w = random_tensor(rng, {3, 2});
  auto run = [&]() {
    Tape tape;
    Tensor xx = x;
    xx.requires_grad = true;
    Tensor loss = tape.mean(tape.softmax(tape.matmul(xx, w)));
    GradTable grads = tape.backward(loss);
    return *find_grad(grads, xx);
  };
  const std::vector<double> a = run(), b = run();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("grad_wrt_input: logistic CE closed form") {
  // p = sigma(w . x) realized as softmax over logits (0, w.x); label 1.
  Tensor w({1, 3}, {0.7, -1.2, 0.4});
  Classifier model;
  model.spec = ClassifierSpec{3, {}, 2, Activation::relu, 0};
  Tensor W = Tensor::zeros({2, 3});
  for (std::size_t c = 0; c < 3; ++c) W.at(1, c) = w.data[c];
  W.requires_grad = true;
  Tensor b = Tensor::zeros({2});
  b.requires_grad = true;
  model.weights.push_back(std::move(W));
  model.biases.push_back(std::move(b));

  Tensor x({1, 3}, {0.3, 0.9, 0.5});
  double dot = 0.0;
  for (std::size_t c = 0; c < 3; ++c) dot += w.data[c] * x.data[c];
  const double p = 1.0 / (1.0 + std::exp(-dot));

  Tensor g = grad_wrt_input(model, x, {1}, InputLossKind::cross_entropy);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(g.data[c] == doctest::Approx(-(1.0 - p) * w.data[c]).epsilon(1e-10));
  }

  // parameters' grad members stay untouched
  for (const Tensor* param : model.parameters()) CHECK(param->grad.empty());
}

TEST_CASE("grad_wrt_input: zero-weight model has zero input gradient") {
  Classifier model;
  model.spec = ClassifierSpec{4, {}, 3, Activation::relu, 0};
  Tensor W = Tensor::zeros({3, 4});
  W.requires_grad = true;
  Tensor b = Tensor::zeros({3});
  b.requires_grad = true;
  model.weights.push_back(std::move(W));
  model.biases.push_back(std::move(b));
  Tensor x({2, 4}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  Tensor g = grad_wrt_input(model, x, {0, 2}, InputLossKind::cross_entropy);
  for (double v : g.data) CHECK(v == 0.0);
}

TEST_CASE("grad_wrt_input: softmax-linear Jacobian rows match the closed form") {
  Rng rng(21);
  Classifier model;
  model.spec = ClassifierSpec{3, {}, 4, Activation::relu, 0};
  Tensor W = random_tensor(rng, {4, 3});
  W.requires_grad = true;
  Tensor b = random_tensor(rng, {4}, -0.2, 0.2);
  b.requires_grad = true;
  model.weights.push_back(W);
  model.biases.push_back(std::move(b));

  Tensor x = random_tensor(rng, {2, 3}, 0.0, 1.0);
  Tensor probs = predict_proba(model, x);

  for (std::size_t j = 0; j < 4; ++j) {
    Tensor row = grad_wrt_input(model, x, {}, InputLossKind::class_probability, j);
    for (std::size_t i = 0; i < 2; ++i) {
      std::vector<double> p(4);
      for (std::size_t k = 0; k < 4; ++k) p[k] = probs.at(i, k);
      const std::vector<double> want = oracles::softmax_linear_jacobian_row(p, model.weights[0], j);
      for (std::size_t c = 0; c < 3; ++c) {
        CHECK(row.at(i, c) == doctest::Approx(want[c]).epsilon(1e-9));
      }
    }

    // cross-check one row against finite differences
    auto f = [&](const std::vector<double>& flat) {
      Tensor probe({1, 3}, flat);
      return predict_proba(model, probe).data[j];
    };
    const std::vector<double> fd =
        oracles::numeric_gradient(f, {x.data[0], x.data[1], x.data[2]});
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(oracles::grad_error(row.at(0, c), fd[c]) < 1e-4);
    }
  }
}
