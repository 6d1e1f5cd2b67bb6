#include "benel/el_core.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace benel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ELResult infeasible_result(Eigen::VectorXd gamma, Eigen::VectorXd denominators,
                           int iters) {
  return ELResult{-kInf, std::move(gamma), std::move(denominators), false, iters};
}

ELResult solve_from(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& theta, const ELConfig& cfg,
                    const std::optional<Eigen::VectorXd>& gamma_init) {
  const auto n = X.rows();
  const auto p = X.cols();
  if (y.size() != n || theta.size() != p)
    throw std::invalid_argument("solve_lagrange: dimension mismatch");
  if (n < p || p < 1)
    throw std::invalid_argument("solve_lagrange: need n >= p >= 1");
  if (!X.allFinite() || !y.allFinite() || !theta.allFinite())
    throw std::invalid_argument("solve_lagrange: non-finite input");
  if (!(cfg.newton_tol > 0) || cfg.max_newton_iters < 1 ||
      !(cfg.min_denominator > 0) || !(cfg.min_denominator < 1.0 / double(n)))
    throw std::invalid_argument("solve_lagrange: bad ELConfig");

  // estimating functions g_i = x_i (y_i - x_i' theta), rows of G
  const Eigen::VectorXd resid = y - X * theta;
  const Eigen::MatrixXd G = X.array().colwise() * resid.array();

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  if (gamma_init && gamma_init->size() == p && gamma_init->allFinite())
    gamma = *gamma_init;

  Eigen::VectorXd d = Eigen::VectorXd::Ones(n) + G * gamma;
  if (d.minCoeff() <= cfg.min_denominator) {  // warm start out of range
    gamma.setZero();
    d.setOnes();
  }
  double objective = -d.array().log().sum();  // convex in gamma

  // At a genuine interior optimum, sum_i 1/d_i = n - gamma' residual, so
  // sum 1/d must come back to n once the residual vanishes. For theta
  // outside the convex hull the dual is unbounded and the residual also
  // drifts to zero as |gamma| blows up, but there sum 1/d collapses
  // instead; requiring it alongside the residual rejects those runaways.
  const auto at_optimum = [&](const Eigen::ArrayXd& inv_d,
                              const Eigen::VectorXd& residual, double slack) {
    return residual.lpNorm<Eigen::Infinity>() <= slack * cfg.newton_tol &&
           std::abs(inv_d.sum() - double(n)) <= 1e-6 * double(n);
  };
  // Newton can stall with the residual a small factor above tolerance
  // once objective improvements drop below double precision; accept such
  // points rather than reporting a false infeasibility (which would only
  // cost an HMC rejection, but needlessly).
  const auto finish = [&](double obj, const Eigen::VectorXd& g_final,
                          const Eigen::VectorXd& d_final, int it) {
    const Eigen::ArrayXd inv_d = d_final.array().inverse();
    const Eigen::VectorXd residual = G.transpose() * inv_d.matrix();
    if (at_optimum(inv_d, residual, 100.0))
      return ELResult{obj, g_final, d_final, true, it};
    return infeasible_result(g_final, d_final, it);
  };

  int iter = 0;
  for (; iter < cfg.max_newton_iters; ++iter) {
    const Eigen::ArrayXd inv_d = d.array().inverse();
    const Eigen::VectorXd residual = G.transpose() * inv_d.matrix();
    if (at_optimum(inv_d, residual, 1.0)) {
      return ELResult{objective, gamma, d, true, iter};
    }
    const Eigen::MatrixXd hess =
        G.transpose() * (G.array().colwise() * inv_d.square()).matrix();
    const Eigen::VectorXd direction = hess.ldlt().solve(residual);
    if (!direction.allFinite())
      return infeasible_result(gamma, d, iter);

    // backtracking: keep every d_i strictly interior and the objective
    // non-increasing
    double alpha = 1.0;
    bool moved = false;
    while (alpha >= 1e-12) {
      const Eigen::VectorXd gamma_try = gamma + alpha * direction;
      const Eigen::VectorXd d_try = Eigen::VectorXd::Ones(n) + G * gamma_try;
      if (d_try.minCoeff() >= cfg.min_denominator) {
        const double obj_try = -d_try.array().log().sum();
        if (obj_try <= objective) {
          gamma = gamma_try;
          d = d_try;
          objective = obj_try;
          moved = true;
          break;
        }
      }
      alpha *= 0.5;
    }
    if (!moved)  // line search stalled: at the precision floor or outside
      return finish(objective, gamma, d, iter + 1);
  }

  return finish(objective, gamma, d, iter);
}

}  // namespace

ELResult solve_lagrange(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& theta, const ELConfig& cfg,
                        const std::optional<Eigen::VectorXd>& gamma_init) {
  ELResult result = solve_from(X, y, theta, cfg, gamma_init);
  // a stale warm start near the domain boundary can stall the line search;
  // a cold solve is the arbiter of feasibility
  if (!result.feasible && gamma_init && !gamma_init->isZero())
    result = solve_from(X, y, theta, cfg, std::nullopt);
  return result;
}

Eigen::VectorXd el_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& theta, const ELResult& el) {
  if (!el.feasible)
    throw std::domain_error("el_gradient: infeasible EL result");
  if (X.rows() != el.denominators.size() || X.cols() != el.gamma.size() ||
      y.size() != X.rows() || theta.size() != X.cols())
    throw std::invalid_argument("el_gradient: dimension mismatch");
  // envelope theorem: d(log_el)/d(theta) = sum_i x_i (x_i' gamma) / d_i
  const Eigen::ArrayXd weights =
      (X * el.gamma).array() / el.denominators.array();
  return X.transpose() * weights.matrix();
}

}  // namespace benel
