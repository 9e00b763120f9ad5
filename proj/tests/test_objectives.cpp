#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "uvdro/objectives.hpp"

using namespace uvdro;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

ModelParams no_params() { return ModelParams::zeros(1, 1); }

RobustnessConfig robust(double alpha, double lipschitz, double ridge = 0.0) {
  RobustnessConfig c;
  c.alpha = alpha;
  c.lipschitz = lipschitz;
  c.ridge = ridge;
  return c;
}

double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace

TEST_CASE("erm_objective examples") {
  CHECK(erm_objective(vec({1, 3}), no_params(), 0.0).total == 2.0);
  CHECK(erm_objective(vec({0, 0, 6}), no_params(), 0.0).total == 2.0);
  ModelParams p = ModelParams::zeros(2, 1);
  p.weights << 1, 2;
  p.bias[0] = 100.0;  // bias is not penalized
  const auto v = erm_objective(vec({0, 0}), p, 0.5);
  CHECK(v.total == doctest::Approx(2.5));
  CHECK(v.ridge_term == doctest::Approx(2.5));
}

TEST_CASE("cvar_objective examples") {
  CHECK(cvar_objective(vec({1, 2, 3, 4}), 0.5).value == doctest::Approx(3.5).epsilon(1e-15));
  const Vector l = vec({0.3, 7, 1, 2.5, 4});
  CHECK(std::abs(cvar_objective(l, 1.0).value - l.mean()) <= 1e-12);
  for (double a : {0.05, 0.3, 0.77, 1.0})
    CHECK(cvar_objective(Vector::Constant(9, 2.25), a).value == doctest::Approx(2.25).epsilon(1e-15));
}

TEST_CASE("cvar_objective agrees with the sort oracle on random losses") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> size(1, 40);
  std::uniform_real_distribution<double> alpha(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector l = testutil::random_vector(size(rng), 0.0, 5.0, rng);
    const double a = alpha(rng);
    const CvarValue c = cvar_objective(l, a);
    CHECK(std::abs(c.value - testutil::cvar_sort_oracle(l, a)) <= 1e-9);
    // The reported eta attains the dual form.
    double dual = 0.0;
    for (Index i = 0; i < l.size(); ++i) dual += std::max(0.0, l[i] - c.eta);
    dual = dual / (a * static_cast<double>(l.size())) + c.eta;
    CHECK(std::abs(dual - c.value) <= 1e-9);
  }
}

TEST_CASE("cvar eta takes the lower quantile on ties") {
  // alpha * n = 2 exactly: every eta in [2, 3] attains the infimum.
  const CvarValue c = cvar_objective(vec({1, 2, 3, 4}), 0.5);
  CHECK(c.eta == 2.0);
}

TEST_CASE("uvdro_objective direct evaluation") {
  const DistanceMatrix d = DistanceMatrix::zeros(2);
  const auto v = uvdro_objective(vec({1, 3}), d, DualState::zeros(2), robust(0.5, 7.0), no_params());
  CHECK(v.total == doctest::Approx(2.0 * std::sqrt(5.0)).epsilon(1e-15));
  CHECK(v.transport_cost == 0.0);
}

TEST_CASE("solve_eta examples") {
  CHECK(solve_eta(Vector::Zero(5), 0.2) == 0.0);
  const Vector a = vec({1, 3});
  CHECK(solve_eta(a, 0.5) == doctest::Approx(3.0).epsilon(1e-10));
  CHECK(testutil::eta_objective(a, solve_eta(a, 0.5), 0.5) == doctest::Approx(3.0).epsilon(1e-12));
  const double eta = solve_eta(a, 0.9);
  const double at = testutil::eta_objective(a, eta, 0.9);
  for (int k = 0; k <= 3000; ++k) CHECK(at <= testutil::eta_objective(a, 3.0 * k / 3000.0, 0.9) + 1e-12);
}

TEST_CASE("solve_eta matches a dense grid search on random inputs") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const Vector a = testutil::random_vector(7, -1.0, 5.0, rng);
    for (double alpha : {0.1, 0.2, 0.5, 0.9, 1.0}) {
      const double best = testutil::eta_objective(a, solve_eta(a, alpha), alpha);
      const double grid = testutil::eta_grid_min(a, alpha, 20001);
      CHECK(best <= grid + 1e-10);
      CHECK(best >= grid - 1e-4 * std::max(1.0, grid));
    }
  }
}

TEST_CASE("robust term is zero with zero gradient when every hinge is inactive") {
  const Vector a = vec({0.5, 1.0, 2.0});
  CHECK(robust_term(a, 5.0, 0.2) == 0.0);
  CHECK(hinge_weights(a, 5.0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(hinge_weights(a, 1.0)[1] == 0.0);  // subgradient 0 at the kink

  const Dataset data = testutil::small_regression(5, 2, 21);
  std::mt19937_64 rng(22);
  ModelParams p = ModelParams::zeros(2, 1);
  p.weights = testutil::random_matrix(2, 1, rng);
  DualState dual = DualState::zeros(5);
  dual.eta = 1e6;
  const DistanceMatrix dx = testutil::random_metric(5, 2, rng);
  const auto g = uvdro_gradients(data, p, dx, DistanceMatrix::zeros(5), dual, robust(0.2, 1.0, 0.3),
                                 LossKind::squared);
  CHECK((g.theta.weights - 2.0 * 0.3 * p.weights).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(g.theta.bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("transport gradient is symmetric in a symmetric situation") {
  Dataset data;
  data.features = Matrix::Zero(4, 1);
  data.labels = Vector::Ones(4);
  Matrix m = Matrix::Ones(4, 4);
  m.diagonal().setZero();
  const DistanceMatrix d(m);
  const auto g = uvdro_gradients(data, ModelParams::zeros(1, 1), d, DistanceMatrix::zeros(4),
                                 DualState::zeros(4), robust(0.3, 1.0), LossKind::squared);
  CHECK((g.transport - g.transport.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.transport.diagonal().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  std::mt19937_64 rng(31);
  const double h = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const bool classify = trial % 2 == 1;
    const Dataset data = classify ? testutil::small_classification(5, 3, 3, 100 + trial)
                                  : testutil::small_regression(5, 3, 100 + trial);
    const LossKind kind = classify ? LossKind::log : LossKind::squared;
    ModelParams p = ModelParams::zeros(3, classify ? 3 : 1);
    p.weights = testutil::random_matrix(3, p.outputs(), rng) * 0.5;
    p.bias = testutil::random_vector(p.outputs(), -0.5, 0.5, rng);
    const DistanceMatrix dx = testutil::random_metric(5, 2, rng);
    const DistanceMatrix dc = testutil::random_metric(5, 1, rng);
    DualState dual = DualState::zeros(5);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j)
        if (i != j) dual.transport(i, j) = testutil::random_vector(1, 0.01, 0.3, rng)[0];
    dual.eta = 0.3 * loss_vector(p, data, kind).minCoeff();
    const RobustnessConfig cfg = robust(0.4, 0.7, 0.05);
    const auto g = uvdro_gradients(data, p, dx, dc, dual, cfg, kind);

    auto f_theta = [&](const std::vector<double>& t) {
      ModelParams q = p;
      q.assign_flat(t);
      return uvdro_objective(loss_vector(q, data, kind), dx, dc, dual, cfg, q).total;
    };
    const auto theta = p.flatten();
    const auto analytic = g.theta.flatten();
    double worst = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      auto up = theta, dn = theta;
      up[k] += h;
      dn[k] -= h;
      worst = std::max(worst, rel_err(analytic[k], (f_theta(up) - f_theta(dn)) / (2 * h), 1e-6));
    }
    const Vector losses = loss_vector(p, data, kind);
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 5; ++j) {
        if (i == j) continue;
        DualState up = dual, dn = dual;
        up.transport(i, j) += h;
        dn.transport(i, j) -= h;
        const double fd = (uvdro_objective(losses, dx, dc, up, cfg, p).total -
                           uvdro_objective(losses, dx, dc, dn, cfg, p).total) / (2 * h);
        worst = std::max(worst, rel_err(g.transport(i, j), fd, 1e-6));
      }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("D_c = 0 gives the covariate-shift objective bit for bit") {
  std::mt19937_64 rng(41);
  const Vector l = testutil::random_vector(6, 0, 5, rng);
  const DistanceMatrix dx = testutil::random_metric(6, 3, rng);
  DualState dual = DualState::zeros(6);
  dual.transport = (testutil::random_matrix(6, 6, rng).cwiseAbs());
  dual.transport.diagonal().setZero();
  dual.eta = 1.1;
  const auto cfg = robust(0.3, 1.5);
  const double a = uvdro_objective(l, dx, DistanceMatrix::zeros(6), dual, cfg, no_params()).total;
  const double b = uvdro_objective(l, dx, dual, cfg, no_params()).total;
  CHECK(a == b);
}

TEST_CASE("minimized dual: L = 0 reduces to the mean loss") {
  std::mt19937_64 rng(51);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector l = testutil::random_vector(6, 0, 5, rng);
    const DistanceMatrix d = testutil::random_metric(6, 2, rng);
    const auto sol = minimize_dual(l, d, 0.2, 0.0);
    CHECK(std::abs(sol.value - l.mean()) <= 1e-6);
  }
}

TEST_CASE("minimized dual: monotone in L and alpha, permutation invariant") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 4; ++trial) {
    const Index n = 6;
    const Vector l = testutil::random_vector(n, 0, 5, rng);
    const DistanceMatrix d = testutil::random_metric(n, 2, rng);
    double prev = -1.0;
    for (double L : {0.0, 0.5, 1.0, 2.0, 10.0}) {
      const double v = minimize_dual(l, d, 0.3, L).value;
      CHECK(v >= prev - 1e-7);
      prev = v;
    }
    prev = std::numeric_limits<double>::infinity();
    for (double a : {0.1, 0.2, 0.5, 0.8, 1.0}) {
      const double v = minimize_dual(l, d, a, 1.0).value;
      CHECK(v <= prev + 1e-7);
      prev = v;
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Vector lp(n);
    for (Index i = 0; i < n; ++i) lp[i] = l[perm[static_cast<std::size_t>(i)]];
    const DistanceMatrix dp = permute_distances(d, perm);
    CHECK(std::abs(minimize_dual(lp, dp, 0.3, 1.0).value - minimize_dual(l, d, 0.3, 1.0).value) <= 1e-9);
  }
}

TEST_CASE("minimized dual has no wasteful two-way transport") {
  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 4; ++trial) {
    const Vector l = testutil::random_vector(6, 0, 5, rng);
    const DistanceMatrix d = testutil::random_metric(6, 2, rng);
    const auto sol = minimize_dual(l, d, 0.2, 1.0);
    CHECK_NOTHROW(sol.dual.validate());
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 6; ++j)
        if (i != j) CHECK(std::min(sol.dual.transport(i, j), sol.dual.transport(j, i)) <= 1e-6);
  }
}

TEST_CASE("primal oracle examples") {
  const double inf = std::numeric_limits<double>::infinity();
  const auto zero = primal_inner_sup_oracle(Vector::Constant(4, 2.0), DistanceMatrix::zeros(4), 0.2, inf, 2.0);
  CHECK(zero.value == 0.0);
  const auto w = primal_inner_sup_oracle(vec({1, 3}), DistanceMatrix::zeros(2), 0.5, inf, 0.0);
  CHECK(w.value == doctest::Approx(std::sqrt(5.0)).epsilon(1e-9));
  CHECK(w.h[1] / w.h[0] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("weak duality: every feasible dual point bounds the primal value") {
  std::mt19937_64 rng(81);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 4 + 2 * (trial % 3);
    const Vector l = testutil::random_vector(n, 0, 5, rng);
    const DistanceMatrix dx = testutil::random_metric(n, 2, rng);
    const DistanceMatrix dc = testutil::random_metric(n, 1, rng);
    const RobustnessConfig cfg = robust(trial % 2 ? 0.5 : 0.2, 1.0);
    for (int k = 0; k < 3; ++k) {
      DualState dual = DualState::zeros(n);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
          if (i != j && u(rng) < 0.4) dual.transport(i, j) = u(rng);
      dual.eta = 5.0 * u(rng);
      const double upper = uvdro_objective(l, dx, dc, dual, cfg, no_params()).total;
      const auto w = primal_inner_sup_oracle(l, dx + dc, cfg.alpha, cfg.lipschitz, dual.eta);
      CHECK(upper >= w.value / cfg.alpha + dual.eta - 1e-9);
    }
  }
}

TEST_CASE("strong duality on small random instances") {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 4; ++trial) {
    const Vector l = testutil::random_vector(5, 0, 5, rng);
    const DistanceMatrix d = testutil::random_metric(5, 2, rng);
    const double dual = minimize_dual(l, d, 0.3, 1.0).value;
    const double primal = primal_robust_value(l, d, 0.3, 1.0).value;
    CHECK(rel_err(dual, primal) <= 1e-3);
  }
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(robust(0.0, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(robust(0.5, -1.0).validate(), ConfigError);
  CHECK_THROWS(cvar_objective(vec({1, 2}), 1.5));
  DualState bad = DualState::zeros(3);
  bad.transport(0, 1) = -1.0;
  CHECK_THROWS(bad.validate());
  bad = DualState::zeros(3);
  bad.transport(1, 1) = 0.5;
  CHECK_THROWS(bad.validate());
  CHECK_THROWS_AS(uvdro_objective(vec({1, 2, 3}), DistanceMatrix::zeros(2), DualState::zeros(3),
                                  robust(0.5, 1.0), no_params()),
                  DimensionError);
  CHECK_THROWS_AS(primal_inner_sup_oracle(Vector::Ones(40), DistanceMatrix::zeros(40), 0.5, 1.0, 0.0),
                  DimensionError);
  CHECK(objective_from_string(to_string(Objective::covshift_dro)) == Objective::covshift_dro);
  CHECK_THROWS_AS(objective_from_string("bogus"), ConfigError);
}
