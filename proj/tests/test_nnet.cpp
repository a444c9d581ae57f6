#include "support.hpp"

#include "solarqr/nnet.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <numeric>

using namespace solarqr;
using namespace solarqr::nnet;
using doctest::Approx;

TEST_CASE("dense_forward hand values") {
  DenseParams<real> zero{mat::Zero(3, 2), vec::Zero(3)};
  const mat x = mat::Random(2, 4);
  CHECK(dense_forward(zero, x, Activation::tanh).isZero(0.0));
  CHECK((dense_forward(zero, x, Activation::sigmoid).array() == 0.5).all());

  DenseParams<real> one{mat::Constant(1, 1, 2.0), vec::Constant(1, 1.0)};
  CHECK(dense_forward(one, mat::Constant(1, 1, 0.5), Activation::identity)(0, 0) == 2.0);
  CHECK_THROWS_AS(dense_forward(one, mat::Zero(2, 1), Activation::identity), PreconditionError);
}

TEST_CASE("backprop_dense: linear case, zero upstream, finite differences") {
  std::mt19937_64 rng(3);
  std::normal_distribution<real> g(0, 1);
  DenseParams<real> p{mat::NullaryExpr(3, 4, [&] { return g(rng); }), vec::NullaryExpr(3, [&] { return g(rng); })};
  const vec x = vec::NullaryExpr(4, [&] { return g(rng); });

  {
    const mat y = dense_forward(p, x, Activation::identity);
    const auto [grads, dx] = backprop_dense(p, x, y, mat::Ones(3, 1), Activation::identity);
    CHECK((grads.dW - vec::Ones(3) * x.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(grads.db == vec::Ones(3));
  }
  {
    const mat y = dense_forward(p, x, Activation::tanh);
    const auto [grads, dx] = backprop_dense(p, x, y, mat::Zero(3, 1), Activation::tanh);
    CHECK(grads.dW.isZero(0.0));
    CHECK(grads.db.isZero(0.0));
    CHECK(dx.isZero(0.0));
  }
  for (auto act : {Activation::tanh, Activation::sigmoid, Activation::identity}) {
    const vec up = vec::NullaryExpr(3, [&] { return g(rng); });
    auto f = [&](const DenseParams<real>& q, const vec& xin) { return up.dot(dense_forward(q, xin, act).col(0)); };
    const mat y = dense_forward(p, x, act);
    const auto [grads, dx] = backprop_dense(p, x, y, up, act);
    const real h = 1e-5;
    real worst = 0;
    auto rel = [](real a, real b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
    for (index_t i = 0; i < 3; ++i)
      for (index_t j = 0; j < 4; ++j) {
        auto pp = p, pm = p;
        pp.W(i, j) += h;
        pm.W(i, j) -= h;
        worst = std::max(worst, rel(grads.dW(i, j), (f(pp, x) - f(pm, x)) / (2 * h)));
      }
    for (index_t i = 0; i < 3; ++i) {
      auto pp = p, pm = p;
      pp.b[i] += h;
      pm.b[i] -= h;
      worst = std::max(worst, rel(grads.db[i], (f(pp, x) - f(pm, x)) / (2 * h)));
    }
    for (index_t j = 0; j < 4; ++j) {
      vec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      worst = std::max(worst, rel(dx(j, 0), (f(p, xp) - f(p, xm)) / (2 * h)));
    }
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("pinball subgradient conventions and hand values") {
  const auto at_kink = pinball_subgradient(vec::Constant(3, 0.4), vec::Constant(3, 0.4), 0.3);
  CHECK(at_kink.loss == 0.0);
  CHECK((at_kink.gradient.array() == 0.7).all());

  const auto r = pinball_subgradient(vec::Constant(1, 0.5), vec::Constant(1, 0.8), 0.9);
  CHECK(r.loss == Approx(0.27));
  CHECK(r.gradient[0] == Approx(-0.9));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<real> u(0, 1);
  for (int k = 0; k < 200; ++k) {
    const real tau = 0.01 + 0.98 * u(rng), y = u(rng);
    real yh = u(rng);
    if (std::abs(yh - y) <= 1e-3) continue;
    const real h = 1e-6;
    const auto at = pinball_subgradient(vec::Constant(1, yh), vec::Constant(1, y), tau);
    const real fd = (testing::pinball_oracle(yh + h, y, tau) - testing::pinball_oracle(yh - h, y, tau)) / (2 * h);
    CHECK(std::abs(at.gradient[0] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    CHECK(at.loss == Approx(testing::pinball_oracle(yh, y, tau)));
  }
}

TEST_CASE("smoothed pinball stays C1 and matches outside the band") {
  const real eta = 0.05, tau = 0.2;
  for (real e : {-0.2, -0.06, 0.06, 0.3}) {
    const auto s = pinball_subgradient(vec::Constant(1, e), vec::Zero(1), tau, eta);
    CHECK(s.loss == Approx(testing::pinball_oracle(e, 0.0, tau)));
  }
  const real h = 1e-7;
  for (real e : {-eta, -0.02, 0.0, 0.03, eta}) {
    const auto s = pinball_subgradient(vec::Constant(1, e), vec::Zero(1), tau, eta);
    const auto p = pinball_subgradient(vec::Constant(1, e + h), vec::Zero(1), tau, eta);
    const auto m = pinball_subgradient(vec::Constant(1, e - h), vec::Zero(1), tau, eta);
    CHECK(s.gradient[0] == Approx((p.loss - m.loss) / (2 * h)).epsilon(1e-5));
  }
}

TEST_CASE("Adam update rules") {
  vec p = vec::LinSpaced(4, -1, 1);
  const vec before = p;
  AdamState st(4);
  adam_step(p, vec::Zero(4), st, 1e-3);
  CHECK(p == before);

  AdamState first(3);
  vec q = vec::Zero(3);
  adam_step(q, vec{{2.0, -0.5, 1e-3}}, first, 1e-3);
  CHECK(q[0] == Approx(-1e-3).epsilon(1e-6));
  CHECK(q[1] == Approx(1e-3).epsilon(1e-6));
  CHECK(q[2] == Approx(-1e-3).epsilon(1e-4));

  // f(w) = (w - 3)^2
  vec w = vec::Zero(1);
  AdamState quad(1);
  auto f = [](real v) { return (v - 3) * (v - 3); };
  const real f0 = f(w[0]);
  for (int k = 0; k < 2; ++k) adam_step(w, vec::Constant(1, 2 * (w[0] - 3)), quad, 0.1);
  CHECK(f(w[0]) < f0);
}

TEST_CASE("grad_check on a linear model is exact") {
  std::mt19937_64 rng(7);
  std::normal_distribution<real> g(0, 1);
  const mat X = mat::NullaryExpr(10, 3, [&] { return g(rng); });
  const vec y = vec::NullaryExpr(10, [&] { return g(rng); });
  const vec w = vec::NullaryExpr(3, [&] { return g(rng); });
  const real tau = 0.3;
  ApplyFn apply = [&](const vec& p) { return vec(X * p); };
  const auto pg = pinball_subgradient(apply(w), y, tau);
  const vec analytic = X.transpose() * pg.gradient / 10.0;
  CHECK(grad_check(apply, w, y, tau, analytic) < 1e-6);
}

TEST_CASE("glorot initialization: bounds, determinism, seed sensitivity") {
  const auto a = init_dense(10, 4, 99);
  const auto b = init_dense(10, 4, 99);
  const auto c = init_dense(10, 4, 100);
  CHECK(a.W == b.W);
  CHECK(a.W != c.W);
  CHECK(a.b.isZero(0.0));
  const real limit = std::sqrt(6.0 / 14.0);
  CHECK(a.W.cwiseAbs().maxCoeff() <= limit);
  CHECK(a.W.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("ParamPack views and JSON round-trip") {
  ParamPack pack;
  CHECK(pack.add("W", 2, 3) == 0);
  CHECK(pack.add("b", 2) == 6);
  pack.values() = vec::LinSpaced(8, 0, 7);
  CHECK(pack.view("W")(1, 2) == 5.0);  // column-major
  CHECK(pack.view("b")(1, 0) == 7.0);
  CHECK_THROWS_AS(pack.block("nope"), LookupError);

  ParamPack other;
  other.add("W", 2, 3);
  other.add("b", 2);
  load_json(other, nlohmann::json::parse(to_json(pack).dump()));
  CHECK(other.values() == pack.values());

  ParamPack wrong;
  wrong.add("W", 3, 2);
  wrong.add("b", 2);
  CHECK_THROWS(load_json(wrong, to_json(pack)));
}

TEST_CASE("dropout mask is inverted and rate-free at zero") {
  std::mt19937_64 rng(1);
  const mat m = dropout_mask(50, 40, 0.2, rng);
  for (index_t i = 0; i < m.size(); ++i) CHECK((m(i) == 0.0 || m(i) == Approx(1.25)));
  CHECK(m.mean() == Approx(1.0).epsilon(0.05));
  CHECK((dropout_mask(3, 3, 0.0, rng).array() == 1.0).all());
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.dropout_rate = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

namespace {

struct LinearToy {
  mat X;
  vec y;
  real tau = 0.5;

  BatchObjective objective() const {
    return [this](const vec& p, std::span<const index_t> rows, std::mt19937_64&, vec& grad) {
      vec yh(static_cast<index_t>(rows.size())), yb(yh.size());
      mat Xb(yh.size(), X.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        Xb.row(static_cast<index_t>(i)) = X.row(rows[i]);
        yb[static_cast<index_t>(i)] = y[rows[i]];
      }
      yh = Xb * p;
      const auto pg = pinball_subgradient(yh, yb, tau);
      grad = Xb.transpose() * pg.gradient / static_cast<real>(rows.size());
      return pg.loss;
    };
  }
  Evaluator evaluator() const {
    return [this](const vec& p, std::span<const index_t> rows) {
      real s = 0;
      for (auto r : rows) s += testing::pinball_oracle(X.row(r).dot(p), y[r], tau);
      return s / static_cast<real>(rows.size());
    };
  }
};

}  // namespace

TEST_CASE("training: reproducible, descends, detects divergence") {
  std::mt19937_64 rng(19);
  std::normal_distribution<real> g(0, 1);
  LinearToy toy;
  toy.X = mat::NullaryExpr(200, 3, [&] { return g(rng); });
  toy.y = toy.X * vec{{1.0, -2.0, 0.5}};
  TrainConfig c;
  c.dropout_rate = 0;
  c.epochs = 1;
  c.seed = 4;

  const auto a = train(vec::Zero(3), 200, c, toy.objective(), toy.evaluator());
  const auto b = train(vec::Zero(3), 200, c, toy.objective(), toy.evaluator());
  CHECK(a.params == b.params);
  CHECK(a.validation_loss == b.validation_loss);

  std::vector<index_t> all(200);
  std::iota(all.begin(), all.end(), index_t{0});
  CHECK(toy.evaluator()(a.params, all) < toy.evaluator()(vec::Zero(3), all));
  CHECK(a.best_epoch == 1);

  BatchObjective bad = [](const vec&, std::span<const index_t>, std::mt19937_64&, vec& grad) {
    grad.setConstant(std::numeric_limits<real>::quiet_NaN());
    return std::numeric_limits<real>::quiet_NaN();
  };
  try {
    train(vec::Zero(3), 200, c, bad, toy.evaluator());
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("epoch 1") != std::string::npos);
  }
}
