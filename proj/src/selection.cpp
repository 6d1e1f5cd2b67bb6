#include "benel/selection.hpp"

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <stdexcept>

namespace benel {

namespace {

// type-7 quantile (linear interpolation) on a sorted vector
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = (double(n) - 1.0) * q;
  const size_t lo = size_t(std::floor(h));
  const size_t hi = std::min(lo + 1, n - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<double> sorted_column(const Eigen::MatrixXd& draws, Eigen::Index j) {
  std::vector<double> col(draws.col(j).data(), draws.col(j).data() + draws.rows());
  std::sort(col.begin(), col.end());
  return col;
}

void require_draws(const Eigen::MatrixXd& draws, int minimum) {
  if (draws.rows() < minimum)
    throw std::invalid_argument("selection: insufficient pooled draws");
}

}  // namespace

PosteriorSummary summarize(const Eigen::MatrixXd& pooled_draws, double alpha,
                           const std::vector<double>& acceptance_rates,
                           const Eigen::VectorXd& rhat, double tuned_omega) {
  require_draws(pooled_draws, 2);
  PosteriorSummary summary;
  summary.acceptance_rates = acceptance_rates;
  summary.rhat = rhat;
  summary.tuned_omega = tuned_omega;
  const double n = double(pooled_draws.rows());
  for (Eigen::Index j = 0; j < pooled_draws.cols(); ++j) {
    const auto sorted = sorted_column(pooled_draws, j);
    CoefficientSummary c;
    c.median = quantile_sorted(sorted, 0.5);
    c.mean = pooled_draws.col(j).mean();
    c.sd = std::sqrt((pooled_draws.col(j).array() - c.mean).square().sum() /
                     (n - 1.0));
    c.lower = quantile_sorted(sorted, 0.5 * (1.0 - alpha));
    c.upper = quantile_sorted(sorted, 0.5 * (1.0 + alpha));
    c.sn_probability =
        double((pooled_draws.col(j).array().abs() <= c.sd).count()) / n;
    summary.coefficients.push_back(c);
  }
  return summary;
}

SelectionResult select_credible(const Eigen::MatrixXd& pooled_draws,
                                double alpha) {
  require_draws(pooled_draws, 100);
  SelectionResult result;
  result.criterion = SelectionCriterion::credible_interval;
  result.level = alpha;
  for (Eigen::Index j = 0; j < pooled_draws.cols(); ++j) {
    const auto sorted = sorted_column(pooled_draws, j);
    const double lower = quantile_sorted(sorted, 0.5 * (1.0 - alpha));
    const double upper = quantile_sorted(sorted, 0.5 * (1.0 + alpha));
    result.included.push_back(lower > 0.0 || upper < 0.0);
  }
  return result;
}

SelectionResult select_scaled_neighborhood(const Eigen::MatrixXd& pooled_draws,
                                           double eta) {
  require_draws(pooled_draws, 100);
  SelectionResult result;
  result.criterion = SelectionCriterion::scaled_neighborhood;
  result.level = eta;
  const double n = double(pooled_draws.rows());
  for (Eigen::Index j = 0; j < pooled_draws.cols(); ++j) {
    const double mean = pooled_draws.col(j).mean();
    const double sd = std::sqrt(
        (pooled_draws.col(j).array() - mean).square().sum() / (n - 1.0));
    const double prob =
        double((pooled_draws.col(j).array().abs() <= sd).count()) / n;
    result.included.push_back(!(prob > eta));
  }
  return result;
}

double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf) {
  if (sample.empty()) throw std::invalid_argument("ks_distance: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = double(sample.size());
  double d = 0.0;
  for (size_t i = 0; i < sample.size(); ++i) {
    const double f = cdf(sample[i]);
    d = std::max(d, std::abs(f - double(i + 1) / n));
    d = std::max(d, std::abs(f - double(i) / n));
  }
  return d;
}

NormalApproxDiagnostic normal_approx_diagnostic(const Dataset& data,
                                                const Eigen::MatrixXd& pooled_draws,
                                                const ModelState& state,
                                                const ELConfig& el_cfg) {
  require_draws(pooled_draws, 2);
  const auto p = pooled_draws.cols();

  // posterior mode: best pooled draw refined by backtracking descent
  Eigen::VectorXd mode = pooled_draws.row(0).transpose();
  double best = potential(mode, state, data, el_cfg);
  for (Eigen::Index s = 1; s < pooled_draws.rows(); ++s) {
    const Eigen::VectorXd candidate = pooled_draws.row(s).transpose();
    const double u = potential(candidate, state, data, el_cfg);
    if (u < best) {
      best = u;
      mode = candidate;
    }
  }
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::VectorXd grad = potential_gradient(mode, state, data, el_cfg);
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) break;
    double alpha = 1.0 / std::max(1.0, grad.norm());
    bool moved = false;
    for (int half = 0; half < 40; ++half) {
      const Eigen::VectorXd trial = mode - alpha * grad;
      const double u = potential(trial, state, data, el_cfg);
      if (u < best) {
        mode = trial;
        best = u;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!moved) break;
  }

  // J(theta_hat): symmetrized central differences of the profile log-EL
  // gradient
  Eigen::MatrixXd J(p, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double h = 1e-4 * (std::abs(mode[j]) + 1e-4);
    Eigen::VectorXd plus = mode;
    Eigen::VectorXd minus = mode;
    plus[j] += h;
    minus[j] -= h;
    const ELResult el_plus = solve_lagrange(data.X, data.y, plus, el_cfg);
    const ELResult el_minus = solve_lagrange(data.X, data.y, minus, el_cfg);
    if (!el_plus.feasible || !el_minus.feasible)
      throw std::runtime_error(
          "normal_approx_diagnostic: mode too close to the feasibility boundary");
    const Eigen::VectorXd gp = el_gradient(data.X, data.y, plus, el_plus);
    const Eigen::VectorXd gm = el_gradient(data.X, data.y, minus, el_minus);
    J.col(j) = -(gp - gm) / (2.0 * h);
  }
  J = 0.5 * (J + J.transpose()).eval();

  NormalApproxDiagnostic diag;
  const Eigen::VectorXd d_tau =
      (state.lambda2 / state.sigma2 *
       (state.tau.array() / (state.tau.array() - 1.0)))
          .matrix();
  diag.precision = J;
  diag.precision.diagonal() += d_tau;
  Eigen::LLT<Eigen::MatrixXd> llt(diag.precision);
  diag.positive_definite = llt.info() == Eigen::Success;
  diag.mean = diag.precision.ldlt().solve(J * mode);

  diag.mahalanobis.resize(pooled_draws.rows());
  for (Eigen::Index s = 0; s < pooled_draws.rows(); ++s) {
    const Eigen::VectorXd delta =
        pooled_draws.row(s).transpose() - diag.mean;
    diag.mahalanobis[s] = delta.dot(diag.precision * delta);
  }
  std::vector<double> stats(diag.mahalanobis.data(),
                            diag.mahalanobis.data() + diag.mahalanobis.size());
  const double half_p = 0.5 * double(p);
  diag.ks_distance = ks_distance(stats, [half_p](double x) {
    return x <= 0.0 ? 0.0 : boost::math::gamma_p(half_p, 0.5 * x);
  });
  return diag;
}

}  // namespace benel
