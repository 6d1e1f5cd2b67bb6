#pragma once

#include <Eigen/Dense>
#include <optional>

namespace benel {

struct ELConfig {
  double newton_tol = 1e-8;        // sup-norm residual tolerance
  int max_newton_iters = 50;
  double min_denominator = 1e-10;  // strict-interior safeguard for line search
};

/// Profile empirical log-likelihood at one theta. log_el omits the
/// -n*log(n) constant, so log_el = 0 when the moment condition holds
/// exactly (gamma = 0) and log_el <= 0 otherwise. Infeasible theta
/// (origin outside the convex hull of the estimating functions) gives
/// feasible = false and log_el = -inf.
struct ELResult {
  double log_el;
  Eigen::VectorXd gamma;
  Eigen::VectorXd denominators;  // d_i = 1 + gamma' x_i (y_i - x_i' theta)
  bool feasible;
  int newton_iters;
};

/// Solves for the Lagrange multiplier gamma of the profile EL by damped
/// Newton on the convex dual -sum log d_i, with backtracking that keeps
/// every d_i above cfg.min_denominator. gamma_init warm-starts the solve
/// (default 0). Throws std::invalid_argument on dimension mismatch or
/// non-finite input; convex-hull violation is reported, not thrown.
ELResult solve_lagrange(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& theta, const ELConfig& cfg = {},
                        const std::optional<Eigen::VectorXd>& gamma_init = {});

/// Gradient of log_el with respect to theta at a feasible solution:
/// sum_i (x_i x_i' gamma) / d_i (the envelope theorem kills the term
/// through gamma). Throws std::domain_error if el is infeasible.
Eigen::VectorXd el_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& theta, const ELResult& el);

}  // namespace benel
