#pragma once

#include <Eigen/Dense>
#include <vector>

#include "benel/data.hpp"
#include "benel/el_core.hpp"
#include "benel/model.hpp"

namespace benel {

struct CoefficientSummary {
  double median;
  double mean;
  double sd;
  double lower;  // equal-tailed credible bounds at the requested level
  double upper;
  double sn_probability;  // P(|theta_j| <= sd_j | y)
};

struct PosteriorSummary {
  std::vector<CoefficientSummary> coefficients;
  std::vector<double> acceptance_rates;
  Eigen::VectorXd rhat;
  double tuned_omega = 0.0;
};

enum class SelectionCriterion { credible_interval, scaled_neighborhood };

struct SelectionResult {
  std::vector<bool> included;
  SelectionCriterion criterion;
  double level;  // alpha or eta
};

/// Summaries over pooled draws (rows = draws, columns = coefficients);
/// intervals are equal-tailed at coverage alpha.
PosteriorSummary summarize(const Eigen::MatrixXd& pooled_draws, double alpha,
                           const std::vector<double>& acceptance_rates = {},
                           const Eigen::VectorXd& rhat = {},
                           double tuned_omega = 0.0);

/// Includes coefficient j iff the equal-tailed alpha-coverage interval
/// excludes zero. Throws std::invalid_argument below 100 pooled draws.
SelectionResult select_credible(const Eigen::MatrixXd& pooled_draws,
                                double alpha);

/// Excludes coefficient j iff the fraction of draws with |theta_j| below
/// the pooled posterior sd exceeds eta.
SelectionResult select_scaled_neighborhood(const Eigen::MatrixXd& pooled_draws,
                                           double eta);

struct NormalApproxDiagnostic {
  Eigen::VectorXd mean;        // m
  Eigen::MatrixXd precision;   // J_n
  Eigen::VectorXd mahalanobis; // (theta - m)' J_n (theta - m) per draw
  double ks_distance;          // against chi-square with p dof
  bool positive_definite;
};

/// Large-sample normal check: J_n = (lambda2/sigma2) D_tau + J(theta_hat),
/// with J the finite-difference Hessian of -log_el at the posterior mode
/// (best draw refined by local search), m = J_n^{-1} J theta_hat for the
/// zero prior mode; reports the Mahalanobis statistics of the draws
/// against the chi-square(p) reference.
NormalApproxDiagnostic normal_approx_diagnostic(const Dataset& data,
                                                const Eigen::MatrixXd& pooled_draws,
                                                const ModelState& state,
                                                const ELConfig& el_cfg = {});

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
double ks_distance(std::vector<double> sample,
                   const std::function<double(double)>& cdf);

}  // namespace benel
