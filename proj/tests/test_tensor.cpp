#include <cmath>
#include <functional>

#include "doctest.h"
#include "genderfuse/error.hpp"
#include "genderfuse/tensor.hpp"

using namespace genderfuse;

namespace {

using T = Tensor<double>;

T random_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  T t(shape);
  for (auto& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

double max_abs_diff(const T& a, const T& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// out[b][t][o] = bias[o] + sum_j sum_c x[b][t + j - off][c] * w[j][c][o]
T conv_oracle(const T& x, const T& w, const T& bias, Padding pad) {
  const std::size_t B = x.dim(0), n = x.dim(1), c_in = x.dim(2);
  const std::size_t width = w.dim(0), c_out = w.dim(2);
  const long off = pad == Padding::kSame ? static_cast<long>((width - 1) / 2) : 0;
  const std::size_t m = pad == Padding::kSame ? n : n - width + 1;
  T out({B, m, c_out});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < m; ++t)
      for (std::size_t o = 0; o < c_out; ++o) {
        double acc = bias[o];
        for (std::size_t j = 0; j < width; ++j) {
          const long src = static_cast<long>(t + j) - off;
          if (src < 0 || src >= static_cast<long>(n)) continue;
          for (std::size_t c = 0; c < c_in; ++c)
            acc += x(b, static_cast<std::size_t>(src), c) * w(j, c, o);
        }
        out(b, t, o) = acc;
      }
  return out;
}

// Central differences of `loss` with respect to every entry of each param.
void check_grads(const std::function<double()>& loss, std::vector<Param<double>*> params,
                 double tol = 1e-6) {
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double keep = p->value[i];
      const double h = 1e-6;
      p->value[i] = keep + h;
      const double up = loss();
      p->value[i] = keep - h;
      const double down = loss();
      p->value[i] = keep;
      const double numeric = (up - down) / (2 * h);
      INFO(p->name << "[" << i << "]");
      CHECK(std::abs(numeric - p->grad[i]) <= tol * std::max(1.0, std::abs(numeric)));
    }
  }
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("shape helpers and reshape") {
  CHECK(shape_size({2, 3, 4}) == 24);
  CHECK(shape_string({2, 3}) == "[2x3]");
  T t({2, 3}, 1.5);
  t.reshape({3, 2});
  CHECK(t.shape() == Shape{3, 2});
  CHECK_THROWS(t.reshape({4, 2}));
}

TEST_CASE("conv1d matches the nested-loop oracle on 200 random instances") {
  Rng rng(1234);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng.below(3), n = 1 + rng.below(9), c_in = 1 + rng.below(4);
    const std::size_t width = 1 + rng.below(4), c_out = 1 + rng.below(4);
    Padding pad = rng.bernoulli(0.5) ? Padding::kSame : Padding::kValid;
    if (pad == Padding::kValid && width > n) pad = Padding::kSame;
    const T x = random_tensor(rng, {B, n, c_in});
    const T w = random_tensor(rng, {width, c_in, c_out});
    const T b = random_tensor(rng, {c_out});
    Tape<double> tape;
    const Var y = conv1d(tape, tape.constant(x), tape.constant(w), tape.constant(b), pad);
    worst = std::max(worst, max_abs_diff(tape.value(y), conv_oracle(x, w, b, pad)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("conv1d accepts rank-2 input and rejects mismatched channels") {
  Rng rng(8);
  const T x = random_tensor(rng, {5, 3});
  const T w = random_tensor(rng, {3, 3, 2});
  const T b = random_tensor(rng, {2});
  Tape<double> tape;
  const Var y = conv1d(tape, tape.constant(x), tape.constant(w), tape.constant(b), Padding::kSame);
  T xb = x;
  xb.reshape({1, 5, 3});
  T expect = conv_oracle(xb, w, b, Padding::kSame);
  expect.reshape({5, 2});
  CHECK(max_abs_diff(tape.value(y), expect) <= 1e-12);
  const T bad = random_tensor(rng, {3, 4, 2});
  CHECK_THROWS_AS(conv1d(tape, tape.constant(x), tape.constant(bad), tape.constant(b), Padding::kSame),
                  ShapeError);
}

TEST_CASE("max_over_time matches the oracle and routes to the first argmax") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t B = 1 + rng.below(4), n = 1 + rng.below(7), c = 1 + rng.below(5);
    T x = random_tensor(rng, {B, n, c});
    // Coarse values force ties.
    for (auto& v : x.values()) v = std::round(v * 2.0);
    std::vector<std::size_t> lens(B);
    for (auto& l : lens) l = 1 + rng.below(n);
    Param<double> px("x", x);
    Tape<double> tape;
    const Var y = max_over_time(tape, tape.param(px), lens);
    const Var s = sum(tape, y);
    tape.backward(s);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t k = 0; k < c; ++k) {
        std::size_t arg = 0;
        for (std::size_t t = 1; t < lens[b]; ++t)
          if (x(b, t, k) > x(b, arg, k)) arg = t;
        CHECK(tape.value(y)(b, k) == x(b, arg, k));
        for (std::size_t t = 0; t < n; ++t) CHECK(px.grad(b, t, k) == (t == arg ? 1.0 : 0.0));
      }
  }
}

TEST_CASE("softmax rows sum to one and resist overflow") {
  T logits({2, 3}, std::vector<double>{1000.0, 1001.0, 999.0, -5.0, 0.0, 5.0});
  const T p = softmax_rows(logits);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::isfinite(p(r, k)));
      s += p(r, k);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
  }
  const double z = std::exp(-1.0) + 1.0 + std::exp(-2.0);
  CHECK(p(0, 1) == doctest::Approx(1.0 / z).epsilon(1e-14));
}

TEST_CASE("softmax cross-entropy value equals mean negative log-likelihood") {
  Rng rng(5);
  const T logits = random_tensor(rng, {4, 3}, 3.0);
  const std::vector<int> labels = {0, 2, 1, 2};
  Tape<double> tape;
  const auto r = softmax_xent(tape, tape.constant(logits), labels);
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < 3; ++k) z += std::exp(logits(i, k));
    expect -= logits(i, static_cast<std::size_t>(labels[i])) - std::log(z);
  }
  CHECK(tape.value(r.loss)[0] == doctest::Approx(expect / 4).epsilon(1e-13));
}

TEST_CASE("batch norm train statistics and running averages") {
  Rng rng(6);
  const T x = random_tensor(rng, {5, 3}, 2.0);
  const T gamma = random_tensor(rng, {3});
  const T beta = random_tensor(rng, {3});
  BatchNormStats<double> stats{T({3}, 0.5), T({3}, 2.0)};
  Tape<double> tape;
  const Var y = batch_norm(tape, tape.constant(x), tape.constant(gamma), tape.constant(beta), stats,
                           Mode::kTrain, 0.9, 1e-5);
  for (std::size_t k = 0; k < 3; ++k) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 5; ++i) mean += x(i, k) / 5;
    for (std::size_t i = 0; i < 5; ++i) var += (x(i, k) - mean) * (x(i, k) - mean) / 5;
    for (std::size_t i = 0; i < 5; ++i) {
      const double expect = gamma[k] * (x(i, k) - mean) / std::sqrt(var + 1e-5) + beta[k];
      CHECK(tape.value(y)(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
    CHECK(stats.running_mean[k] == doctest::Approx(0.9 * 0.5 + 0.1 * mean).epsilon(1e-14));
    CHECK(stats.running_var[k] == doctest::Approx(0.9 * 2.0 + 0.1 * var).epsilon(1e-14));
  }
  const BatchNormStats<double> frozen = stats;
  Tape<double> eval;
  const Var z = batch_norm(eval, eval.constant(x), eval.constant(gamma), eval.constant(beta), stats,
                           Mode::kEval, 0.9, 1e-5);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(stats.running_mean[k] == frozen.running_mean[k]);
    const double expect = gamma[k] * (x(0, k) - frozen.running_mean[k]) /
                              std::sqrt(frozen.running_var[k] + 1e-5) + beta[k];
    CHECK(eval.value(z)(0, k) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("dropout is inverted in train mode and the identity in eval mode") {
  Rng rng(3);
  const T x = random_tensor(rng, {50, 40});
  Tape<double> tape;
  Rng drop(4);
  const Var y = dropout(tape, tape.constant(x), 0.25, Mode::kTrain, drop);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = tape.value(y)[i];
    if (v == 0.0) {
      ++zeros;
    } else {
      CHECK(v == doctest::Approx(x[i] / 0.75).epsilon(1e-15));
    }
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
  const Var e = dropout(tape, tape.constant(x), 0.25, Mode::kEval, drop);
  CHECK(tape.value(e) == x);
}

TEST_CASE("embedding and gather rows") {
  T table({4, 2}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7});
  Tape<double> tape;
  const std::vector<std::int32_t> ids = {3, 0, 3};
  CHECK(tape.value(embedding_lookup(tape, tape.constant(table), std::span<const std::int32_t>(ids))) ==
        T({3, 2}, std::vector<double>{6, 7, 0, 1, 6, 7}));
  const std::vector<std::int32_t> pad = {1, -1};
  CHECK(tape.value(gather_rows(tape, tape.constant(table), std::span<const std::int32_t>(pad))) ==
        T({2, 2}, std::vector<double>{2, 3, 0, 0}));
  const std::vector<std::int32_t> bad = {4};
  CHECK_THROWS(embedding_lookup(tape, tape.constant(table), std::span<const std::int32_t>(bad)));
}

TEST_CASE("analytic gradients of an op chain match central differences") {
  Rng rng(17);
  Param<double> table("table", random_tensor(rng, {6, 3}));
  Param<double> side("side", random_tensor(rng, {5, 2}));
  Param<double> filt("filt", random_tensor(rng, {3, 5, 4}));
  Param<double> fb("fb", random_tensor(rng, {4}, 0.3));
  Param<double> w("w", random_tensor(rng, {4, 3}));
  Param<double> wb("wb", random_tensor(rng, {3}));
  Param<double> gamma("gamma", random_tensor(rng, {3}));
  Param<double> beta("beta", random_tensor(rng, {3}));
  const std::vector<std::int32_t> ids = {0, 5, 2, 2, 1, 4, 3, -1, 0, 1};
  const std::vector<std::int32_t> side_ids = {0, 1, 2, 3, 4, 4, 3, 2, 1, 0};
  const std::vector<std::size_t> lens = {5, 4};
  const std::vector<int> labels = {2, 0};
  std::vector<Param<double>*> params = {&table, &side, &filt, &fb, &w, &wb, &gamma, &beta};

  auto run = [&](bool grads) {
    Tape<double> tape;
    const Var a = gather_rows(tape, tape.param(table), std::span<const std::int32_t>(ids));
    const Var b = embedding_lookup(tape, tape.param(side), std::span<const std::int32_t>(side_ids));
    const Var parts[] = {a, b};
    const Var fused = reshape(tape, concat_cols(tape, std::span<const Var>(parts)), {2, 5, 5});
    const Var conv = relu(tape, conv1d(tape, fused, tape.param(filt), tape.param(fb), Padding::kSame));
    const Var pooled = max_over_time(tape, conv, lens);
    BatchNormStats<double> stats{T({3}, 0.0), T({3}, 1.0)};
    const Var h = batch_norm(tape, dense(tape, pooled, tape.param(w), tape.param(wb)),
                             tape.param(gamma), tape.param(beta), stats, Mode::kEval, 0.9, 1e-5);
    const auto xent = softmax_xent(tape, h, labels);
    const Var decayed[] = {tape.param(filt), tape.param(w)};
    const Var loss = add(tape, xent.loss, l2_penalty(tape, std::span<const Var>(decayed), 0.01));
    if (grads) {
      for (auto* p : params) p->zero_grad();
      tape.backward(loss);
    }
    return tape.value(loss)[0];
  };
  run(true);
  check_grads([&] { return run(false); }, params, 1e-5);
}

TEST_CASE("library grad_check flags a corrupted gradient") {
  Rng rng(2);
  Param<double> w("w", random_tensor(rng, {3, 2}));
  Param<double> b("b", random_tensor(rng, {2}));
  const T x = random_tensor(rng, {4, 3});
  const std::vector<int> labels = {0, 1, 1, 0};
  auto loss = [&](bool grads) {
    Tape<double> tape;
    const auto r = softmax_xent(tape, dense(tape, tape.constant(x), tape.param(w), tape.param(b)),
                                labels);
    if (grads) tape.backward(r.loss);
    return tape.value(r.loss)[0];
  };
  w.zero_grad();
  b.zero_grad();
  loss(true);
  std::vector<Param<double>*> ps = {&w, &b};
  const auto good = grad_check([&] { return loss(false); }, ps);
  CHECK(good.passed());
  w.grad[0] *= 1.1;
  const auto bad = grad_check([&] { return loss(false); }, ps);
  CHECK_FALSE(bad.passed());
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(2.0, 1.0) == doctest::Approx(0.5));
}

TEST_CASE("Adam follows the bias-corrected update") {
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  Optimizer<double> opt(cfg);
  Param<double> p("p", T({2}, std::vector<double>{1.0, -2.0}));
  double m[2] = {0, 0}, v[2] = {0, 0}, x[2] = {1.0, -2.0};
  for (int t = 1; t <= 3; ++t) {
    const double g[2] = {0.5 * t, -1.0 / t};
    p.grad[0] = g[0];
    p.grad[1] = g[1];
    Param<double>* ps[] = {&p};
    opt.step(ps);
    for (int i = 0; i < 2; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      x[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(p.value[i] == doctest::Approx(x[i]).epsilon(1e-12));
    }
  }
  CHECK(opt.steps() == 3);
}

TEST_CASE("optimizer refuses non-finite gradients without touching parameters") {
  Optimizer<double> opt;
  Param<double> a("a", T({2}, 1.0));
  Param<double> b("b", T({2}, 1.0));
  a.grad.fill(0.1);
  b.grad[1] = std::nan("");
  Param<double>* ps[] = {&a, &b};
  CHECK_THROWS_AS(opt.step(ps), DataError);
  CHECK(a.value == T({2}, 1.0));
  CHECK(b.value == T({2}, 1.0));
}

TEST_CASE("shape errors are reported") {
  Tape<double> tape;
  const Var a = tape.constant(T({2, 3}));
  const Var w = tape.constant(T({4, 2}));
  const Var bias = tape.constant(T({2}));
  CHECK_THROWS_AS(dense(tape, a, w, bias), ShapeError);
  const Var c = tape.constant(T({3, 3}));
  const Var parts[] = {a, c};
  CHECK_THROWS_AS(concat_cols(tape, std::span<const Var>(parts)), ShapeError);
}

}  // TEST_SUITE
