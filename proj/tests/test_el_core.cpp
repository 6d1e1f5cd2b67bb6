#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "benel/el_core.hpp"
#include "benel/rng.hpp"

using namespace benel;

namespace {

// Brute-force profile log-EL for p = 1 and small n: the weights satisfying
// sum w = 1 and sum w_i g_i = 0 form a segment; sweep it on a fine grid.
// Entirely independent of the dual Newton solver.
double grid_log_el_p1(const Eigen::VectorXd& g, int grid = 400000) {
  const int n = int(g.size());
  // parametrize w = w0 + t * dir where w0 is any feasible point and dir
  // spans the (n-2)-dim null space; for the oracle we only need n <= 3,
  // handled by direct parametrizations.
  double best = -std::numeric_limits<double>::infinity();
  if (n == 2) {
    // w2 = 1 - w1, constraint w1 g1 + (1-w1) g2 = 0 -> single point
    const double denom = g[0] - g[1];
    if (std::abs(denom) < 1e-14) return best;
    const double w1 = -g[1] / denom;
    if (w1 <= 0.0 || w1 >= 1.0) return best;
    return std::log(2.0 * w1) + std::log(2.0 * (1.0 - w1));
  }
  // n == 3: one free parameter after the two linear constraints. Both
  // w2 and w3 are linear in w1, so the feasible w1 values form an exact
  // interval; the objective is concave there, so ternary search nails it.
  const double det = g[1] - g[2];
  if (std::abs(det) < 1e-14) return best;
  // w2 = (-g3 + (g3 - g1) w1) / (g2 - g3), w3 = 1 - w1 - w2
  auto w2_of = [&](double w1) {
    return (-g[2] + (g[2] - g[0]) * w1) / det;
  };
  auto w3_of = [&](double w1) { return 1.0 - w1 - w2_of(w1); };
  double lo = 0.0, hi = 1.0;
  for (auto lin : {+1, -1}) {
    // positivity of a linear function c0 + c1*w1 restricts [lo, hi]
    const double c0 = lin > 0 ? w2_of(0.0) : w3_of(0.0);
    const double c1 = (lin > 0 ? w2_of(1.0) : w3_of(1.0)) - c0;
    if (std::abs(c1) < 1e-300) {
      if (c0 <= 0.0) return best;
      continue;
    }
    const double root = -c0 / c1;
    if (c1 > 0.0)
      lo = std::max(lo, root);
    else
      hi = std::min(hi, root);
  }
  if (hi - lo <= 0.0) return best;
  auto value = [&](double w1) {
    const double w2 = w2_of(w1), w3 = w3_of(w1);
    if (w1 <= 0.0 || w2 <= 0.0 || w3 <= 0.0)
      return -std::numeric_limits<double>::infinity();
    return std::log(3.0 * w1) + std::log(3.0 * w2) + std::log(3.0 * w3);
  };
  for (int it = 0; it < 300; ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (value(m1) < value(m2))
      lo = m1;
    else
      hi = m2;
  }
  (void)grid;
  return value(0.5 * (lo + hi));
}

Eigen::MatrixXd random_design(int n, int p, RngStream& rng) {
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = sample_normal(0.0, 1.0, rng);
  return X;
}

}  // namespace

TEST_CASE("two observations, closed form multiplier") {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 2.0, -1.0;
  const Eigen::VectorXd theta = Eigen::VectorXd::Zero(1);
  // g = (2, -1); sum g/(1+gamma g) = 0 gives gamma = 1/4,
  // d = (3/2, 3/4), log EL = -(log 1.5 + log 0.75) = -log(9/8)
  const ELResult el = solve_lagrange(X, y, theta, {});
  REQUIRE(el.feasible);
  CHECK(el.gamma[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(el.log_el == doctest::Approx(-std::log(1.125)).epsilon(1e-9));
  CHECK(el.denominators[0] == doctest::Approx(1.5));
  CHECK(el.denominators[1] == doctest::Approx(0.75));
}

TEST_CASE("exact moment fit gives gamma 0 and log EL 0") {
  RngStream rng(5, 0);
  const Eigen::MatrixXd X = random_design(20, 3, rng);
  Eigen::VectorXd theta(3);
  theta << 1.0, -2.0, 0.5;
  // construct y so the estimating equations hold exactly at theta:
  // take y = X theta, residuals all zero
  const Eigen::VectorXd y = X * theta;
  const ELResult el = solve_lagrange(X, y, theta, {});
  REQUIRE(el.feasible);
  CHECK(el.log_el == doctest::Approx(0.0));
  CHECK(el.gamma.norm() < 1e-8);
}

TEST_CASE("solver agrees with the weight-space grid oracle") {
  RngStream rng(17, 0);
  int tested = 0;
  for (int rep = 0; rep < 100 && tested < 40; ++rep) {
    Eigen::MatrixXd X(3, 1);
    Eigen::VectorXd y(3);
    for (int i = 0; i < 3; ++i) {
      X(i, 0) = sample_normal(0.0, 1.0, rng);
      y[i] = sample_normal(0.0, 1.0, rng);
    }
    Eigen::VectorXd theta(1);
    theta << sample_normal(0.0, 0.5, rng);
    const Eigen::VectorXd g =
        X.col(0).array() * (y - X * theta).array();
    const double oracle = grid_log_el_p1(g);
    const ELResult el = solve_lagrange(X, y, theta, {});
    if (!std::isfinite(oracle)) {
      CHECK_FALSE(el.feasible);
      continue;
    }
    REQUIRE(el.feasible);
    CHECK(el.log_el == doctest::Approx(oracle).epsilon(1e-6));
    ++tested;
  }
  CHECK(tested >= 30);
}

TEST_CASE("gradient matches central finite differences") {
  RngStream rng(23, 0);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 30, p = 4;
    const Eigen::MatrixXd X = random_design(n, p, rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = sample_normal(0.0, 1.0, rng);
    Eigen::VectorXd theta =
        (X.transpose() * X).ldlt().solve(X.transpose() * y);
    for (int j = 0; j < p; ++j) theta[j] += sample_normal(0.0, 0.05, rng);

    const ELResult el = solve_lagrange(X, y, theta, {});
    REQUIRE(el.feasible);
    const Eigen::VectorXd grad = el_gradient(X, y, theta, el);

    const double h = 1e-6;
    for (int j = 0; j < p; ++j) {
      Eigen::VectorXd tp = theta, tm = theta;
      tp[j] += h;
      tm[j] -= h;
      const double fp = solve_lagrange(X, y, tp, {}).log_el;
      const double fm = solve_lagrange(X, y, tm, {}).log_el;
      const double fd = (fp - fm) / (2.0 * h);
      CHECK(grad[j] ==
            doctest::Approx(fd).epsilon(1e-5).scale(std::abs(fd) + 1.0));
    }
  }
}

TEST_CASE("log EL is never positive and shrinks toward the boundary") {
  RngStream rng(29, 0);
  const int n = 40, p = 3;
  const Eigen::MatrixXd X = random_design(n, p, rng);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = sample_normal(0.0, 1.0, rng);
  const Eigen::VectorXd ols =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);

  double prev = 0.0;
  for (double step : {0.0, 0.05, 0.1, 0.2, 0.4}) {
    const Eigen::VectorXd theta =
        ols + step * Eigen::VectorXd::Ones(p);
    const ELResult el = solve_lagrange(X, y, theta, {});
    if (!el.feasible) break;
    CHECK(el.log_el <= 1e-12);
    CHECK(el.log_el <= prev + 1e-9);
    prev = el.log_el;
  }
}

TEST_CASE("origin outside the convex hull is reported infeasible") {
  Eigen::MatrixXd X(5, 1);
  X.setOnes();
  Eigen::VectorXd y(5);
  y << 1.0, 2.0, 1.5, 3.0, 2.5;
  Eigen::VectorXd theta(1);
  theta << -1.0;  // every residual positive, every g_i positive
  const ELResult el = solve_lagrange(X, y, theta, {});
  CHECK_FALSE(el.feasible);
  CHECK(el.log_el == -std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(el_gradient(X, y, theta, el), std::domain_error);
}

TEST_CASE("random instances all solve and satisfy the invariants") {
  RngStream rng(31, 0);
  int feasible_count = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 20 + int(rng.uniform() * 41);
    const int p = 1 + int(rng.uniform() * 6);
    const Eigen::MatrixXd X = random_design(n, p, rng);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y[i] = sample_normal(0.0, 1.0, rng);
    Eigen::VectorXd theta =
        (X.transpose() * X).ldlt().solve(X.transpose() * y);
    for (int j = 0; j < p; ++j)
      theta[j] += sample_normal(0.0, 0.3 / std::sqrt(double(n)), rng);

    const ELConfig cfg;
    const ELResult el = solve_lagrange(X, y, theta, cfg);
    if (!el.feasible) continue;
    ++feasible_count;
    CHECK(el.log_el <= 1e-12);
    CHECK(el.denominators.minCoeff() > 0.0);
    // the dual stationarity residual is small (the solver may accept at a
    // modest multiple of the tolerance when Newton hits the precision
    // floor) and the weights actually resum to one
    const Eigen::VectorXd resid = y - X * theta;
    const Eigen::MatrixXd G = X.array().colwise() * resid.array();
    const Eigen::ArrayXd inv_d = el.denominators.array().inverse();
    const Eigen::VectorXd station = G.transpose() * inv_d.matrix();
    CHECK(station.lpNorm<Eigen::Infinity>() <= 100.0 * cfg.newton_tol);
    CHECK(std::abs(inv_d.sum() / double(n) - 1.0) <= 1e-6);
    // log EL equals the weight formulation: sum log(n w_i), w_i = 1/(n d_i)
    CHECK(el.log_el ==
          doctest::Approx(-el.denominators.array().log().sum()).epsilon(1e-10));
  }
  CHECK(feasible_count > 900);  // near-OLS points are almost always interior
}

TEST_CASE("warm start changes nothing but the iteration count") {
  RngStream rng(37, 0);
  const int n = 50, p = 5;
  const Eigen::MatrixXd X = random_design(n, p, rng);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = sample_normal(0.0, 2.0, rng);
  Eigen::VectorXd theta =
      (X.transpose() * X).ldlt().solve(X.transpose() * y);
  theta[0] += 0.1;

  const ELResult cold = solve_lagrange(X, y, theta, {});
  REQUIRE(cold.feasible);
  const ELResult warm = solve_lagrange(X, y, theta, {}, cold.gamma);
  REQUIRE(warm.feasible);
  CHECK(warm.log_el == doctest::Approx(cold.log_el).epsilon(1e-10));
  CHECK(warm.newton_iters <= cold.newton_iters);

  // a garbage warm start must not change the answer either
  const ELResult bad =
      solve_lagrange(X, y, theta, {}, Eigen::VectorXd::Constant(p, 50.0));
  REQUIRE(bad.feasible);
  CHECK(bad.log_el == doctest::Approx(cold.log_el).epsilon(1e-8));
}

TEST_CASE("input validation") {
  Eigen::MatrixXd X(3, 2);
  X.setRandom();
  Eigen::VectorXd y(3);
  y.setRandom();
  Eigen::VectorXd theta(2);
  theta.setZero();

  Eigen::VectorXd bad_y(2);
  bad_y.setZero();
  CHECK_THROWS_AS(solve_lagrange(X, bad_y, theta, {}), std::invalid_argument);

  Eigen::MatrixXd wide(2, 3);
  wide.setRandom();
  Eigen::VectorXd y2(2);
  y2.setRandom();
  CHECK_THROWS_AS(solve_lagrange(wide, y2, Eigen::VectorXd::Zero(3), {}),
                  std::invalid_argument);

  ELConfig bad_cfg;
  bad_cfg.newton_tol = -1.0;
  CHECK_THROWS_AS(solve_lagrange(X, y, theta, bad_cfg), std::invalid_argument);

  Eigen::VectorXd nan_theta = theta;
  nan_theta[0] = std::nan("");
  CHECK_THROWS_AS(solve_lagrange(X, y, nan_theta, {}), std::invalid_argument);
}
