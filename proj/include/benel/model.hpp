#pragma once

#include <Eigen/Dense>
#include <vector>

#include "benel/data.hpp"
#include "benel/el_core.hpp"
#include "benel/hmc.hpp"
#include "benel/rng.hpp"

namespace benel {

/// One full parameter state of the Gibbs/HMC sampler.
struct ModelState {
  Eigen::VectorXd theta;
  Eigen::VectorXd tau;  // each > 1
  double sigma2 = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

enum class Lambda2Prior { gig, gamma };

struct Hyperparams {
  double a = 10.0;  // IG prior on sigma^2
  double b = 10.0;
  // Full-Bayes priors on the penalties.
  double r1 = 1.0;      // Gamma(r1, delta1) on lambda1^2
  double delta1 = 1.0;
  double nu2 = 1.0;     // GIG(nu2, psi2, chi2) on lambda2
  double psi2 = 1.0;
  double chi2 = 1.0;
  Lambda2Prior lambda2_prior_kind = Lambda2Prior::gig;
  double r2 = 1.0;      // Gamma(r2, delta2) alternative on lambda2
  double delta2 = 1.0;
};

/// Negative log conditional posterior of theta: -log_el plus
/// (lambda2 / 2 sigma^2) * sum_j [tau_j/(tau_j-1)] theta_j^2.
/// Returns +inf when theta is EL-infeasible.
double potential(const Eigen::VectorXd& theta, const ModelState& state,
                 const Dataset& data, const ELConfig& el_cfg = {});

/// -el_gradient + (lambda2/sigma^2) D_tau theta. Throws std::domain_error
/// on an infeasible theta.
Eigen::VectorXd potential_gradient(const Eigen::VectorXd& theta,
                                   const ModelState& state, const Dataset& data,
                                   const ELConfig& el_cfg = {});

/// HMC Potential over theta with (tau, sigma2, lambda) frozen at `state`.
/// Caches the last EL solve so an eval followed by a grad at the same
/// point costs one Newton solve; not safe to share across threads.
Potential make_conditional_potential(const ModelState& state, const Dataset& data,
                                     const ELConfig& el_cfg = {});

/// tau_j = 1 + GIG(1/2, lambda1^2/(4 lambda2 sigma2), (lambda2/sigma2) theta_j^2),
/// independently per coordinate. Draws of tau_j - 1 are floored at 1e-12;
/// clamp_count (if given) accumulates how often the floor fired.
Eigen::VectorXd gibbs_tau(const ModelState& state, RngStream& rng,
                          long* clamp_count = nullptr);

/// sigma2 ~ IG(a + p, b + (1/2) sum_j [lambda2 tau/(tau-1) theta^2
///                                     + lambda1^2/(4 lambda2) tau]).
double gibbs_sigma2(const ModelState& state, const Hyperparams& hyper,
                    RngStream& rng);

/// Full-Bayes conditionals: lambda1^2 ~ Gamma(p/2 + r1, sum tau/(8 lambda2
/// sigma2) + delta1); lambda2 ~ GIG per the configured prior.
std::pair<double, double> fb_lambda_updates(const ModelState& state,
                                            const Hyperparams& hyper,
                                            RngStream& rng);

/// M-step closed form from the EM expectations A = sum_j E[tau_j/sigma2]
/// and B = sum_j E[tau/(tau-1) theta_j^2/sigma2]: lambda2 = p/B,
/// lambda1 = 2p/sqrt(A*B). Throws std::runtime_error when B is degenerate.
std::pair<double, double> em_update(double A, double B, int p);

struct SamplerConfig {
  int chains = 4;
  int iterations = 2000;
  int burnin = 1000;
  int leapfrog_steps = 10;
  TunerConfig tuner;
  ELConfig el;
  std::uint64_t seed = 0;
  bool parallel_chains = true;
};

struct EMConfig {
  int max_iters = 20;
  int inner_length = 1000;
  int inner_burnin = 500;
  double rel_tol = 1e-2;
};

struct EMIterationStats {
  double lambda1;
  double lambda2;
  double rel_change;
  double acceptance_rate;
  double A;            // mean of per-draw tau_j/sigma2 (used)
  double B;            // mean of per-draw tau/(tau-1) theta^2/sigma2 (used)
  double A_ratio;      // ratio-of-means variant, logged for comparison
  double B_ratio;
};

struct EMTrace {
  std::vector<EMIterationStats> iterations;
  bool converged = false;
};

struct FitReport {
  std::vector<Eigen::MatrixXd> theta_draws;   // per chain, N_s x p
  std::vector<Eigen::VectorXd> sigma2_draws;  // per chain
  std::vector<Eigen::VectorXd> lambda1_draws; // FB only
  std::vector<Eigen::VectorXd> lambda2_draws;
  std::vector<double> acceptance_rates;
  Eigen::VectorXd rhat;
  double tuned_omega = 0.5;
  double tuner_acceptance = 0.0;
  int tuner_iterations = 0;
  bool tuner_in_band = false;
  std::vector<TunerIteration> tuner_trace;
  bool retuned = false;
  double lambda1 = 1.0;  // EB estimate or FB posterior mean
  double lambda2 = 1.0;
  bool converged = false;  // all split-Rhat < 1.01
  long tau_clamp_count = 0;
  Eigen::VectorXd theta_init;
  Eigen::VectorXd tau_mean;  // pooled posterior means, for diagnostics
  double sigma2_mean = 1.0;

  /// Post-burn-in theta draws from all chains stacked row-wise.
  Eigen::MatrixXd pooled_theta() const;
};

/// theta0 = least squares (ridge 1e-6 if rank-deficient), tau = 2,
/// sigma2 = residual mean square, lambda1 = lambda2 = 1.
ModelState initial_state(const Dataset& data);

/// Empirical Bayes: Monte Carlo EM over (lambda1, lambda2) with
/// HMC-within-Gibbs inner chains, then four production chains at the
/// converged penalties.
FitReport fit_eb(const Dataset& data, const Hyperparams& hyper,
                 const SamplerConfig& sampler_cfg, const EMConfig& em_cfg,
                 EMTrace* trace = nullptr);

/// Full Bayes: one Gibbs loop cycling theta (HMC), tau, sigma2,
/// lambda1^2, lambda2 across four production chains.
FitReport fit_fb(const Dataset& data, const Hyperparams& hyper,
                 const SamplerConfig& sampler_cfg);

}  // namespace benel
