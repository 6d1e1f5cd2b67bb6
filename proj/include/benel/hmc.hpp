#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "benel/rng.hpp"

namespace benel {

/// Target for HMC: potential energy U(theta) = -log pi(theta), +inf on
/// infeasible points; grad is only called where eval is finite.
struct Potential {
  std::function<double(const Eigen::VectorXd&)> eval;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  int dim;
};

struct HMCConfig {
  double step_size = 0.5;        // omega
  int leapfrog_steps = 10;       // T
  Eigen::VectorXd mass_diagonal; // empty means identity
};

struct HMCStepResult {
  Eigen::VectorXd state;
  bool accepted;
  double potential_value;  // U at the returned state
};

/// T leapfrog steps from (position, momentum); returns false if any
/// evaluation point is infeasible. Exposed for the reversibility and
/// energy-scaling tests.
bool leapfrog(const Potential& potential, const HMCConfig& cfg,
              Eigen::VectorXd& position, Eigen::VectorXd& momentum);

/// One HMC transition. current_potential must equal potential.eval(state)
/// and be finite; a proposal that leaves the feasible region is rejected
/// outright. Throws std::invalid_argument on a non-finite starting value.
HMCStepResult hmc_step(const Eigen::VectorXd& state, double current_potential,
                       const Potential& potential, const HMCConfig& cfg,
                       RngStream& rng);

struct TunerConfig {
  int itermax = 50;
  double initial_step = 0.5;
  double lower_tol = 0.05;  // iota_l
  double upper_tol = 0.05;  // iota_u
  int tuning_chain_length = 2000;
  int tuning_burnin = 1000;
  double target_rate = 0.651;
};

struct TunerIteration {
  int iteration;
  double omega;
  double epsilon;
  double acceptance_rate;
  std::string branch;  // "in_band", "increase", "decrease", "clamp"
};

struct TunerResult {
  double omega;
  double acceptance_rate;
  int iterations;
  bool in_band;
  std::vector<TunerIteration> trace;
};

/// Bisection step-size search over an arbitrary acceptance-rate curve.
/// Maintains the increment epsilon (initialized to omega): in-band stops;
/// above-band increases omega by epsilon, halving epsilon only after omega
/// has been decreased at least once; below-band halves epsilon and
/// decreases omega, clamping to epsilon/2 if the update would make it
/// nonpositive.
TunerResult tune_step_size(const std::function<double(double)>& acceptance_rate,
                           const TunerConfig& cfg);

/// Same search with the rate measured on a fresh HMC chain of
/// cfg.tuning_chain_length (acceptance counted after cfg.tuning_burnin).
TunerResult tune_step_size(const Potential& potential, const TunerConfig& cfg,
                           int leapfrog_steps, const Eigen::VectorXd& init_state,
                           RngStream& rng);

/// Post-burn-in draws from C parallel chains over a shared potential.
struct ChainSet {
  std::vector<Eigen::MatrixXd> draws;  // per chain: N_s x p
  std::vector<double> acceptance_rates;
  std::vector<std::uint64_t> seeds;    // stream ids
  int burnin = 0;
};

ChainSet run_chains(const Potential& potential, const HMCConfig& cfg,
                    int n_chains, int chain_length, int burnin,
                    const std::vector<Eigen::VectorXd>& init_states,
                    std::uint64_t seed, std::uint64_t stream_base = 0);

/// Split-Rhat per coordinate: each chain is halved, W is the mean of the
/// half-chain variances, B is N_h times the variance of the half-chain
/// means, and Rhat = sqrt(((N_h-1)/N_h * W + B/N_h) / W). Zero
/// within-chain variance yields +inf for that coordinate.
Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& draws);

}  // namespace benel
