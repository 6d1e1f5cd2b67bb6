#include "benel/hmc.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace benel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::VectorXd mass_or_identity(const HMCConfig& cfg, int dim) {
  if (cfg.mass_diagonal.size() == 0) return Eigen::VectorXd::Ones(dim);
  if (cfg.mass_diagonal.size() != dim || cfg.mass_diagonal.minCoeff() <= 0.0)
    throw std::invalid_argument("HMCConfig: bad mass diagonal");
  return cfg.mass_diagonal;
}

bool leapfrog_impl(const Potential& potential, const HMCConfig& cfg,
                   Eigen::VectorXd& position, Eigen::VectorXd& momentum,
                   double* final_potential) {
  const Eigen::VectorXd mass = mass_or_identity(cfg, potential.dim);
  const double omega = cfg.step_size;
  double u = 0.0;
  momentum -= 0.5 * omega * potential.grad(position);
  for (int t = 0; t < cfg.leapfrog_steps; ++t) {
    position += omega * (momentum.array() / mass.array()).matrix();
    u = potential.eval(position);
    if (!std::isfinite(u)) return false;  // left the feasible region
    if (t + 1 < cfg.leapfrog_steps) momentum -= omega * potential.grad(position);
  }
  momentum -= 0.5 * omega * potential.grad(position);
  if (final_potential) *final_potential = u;
  return true;
}

}  // namespace

bool leapfrog(const Potential& potential, const HMCConfig& cfg,
              Eigen::VectorXd& position, Eigen::VectorXd& momentum) {
  return leapfrog_impl(potential, cfg, position, momentum, nullptr);
}

HMCStepResult hmc_step(const Eigen::VectorXd& state, double current_potential,
                       const Potential& potential, const HMCConfig& cfg,
                       RngStream& rng) {
  if (!std::isfinite(current_potential))
    throw std::invalid_argument("hmc_step: non-finite potential at current state");
  const Eigen::VectorXd mass = mass_or_identity(cfg, potential.dim);

  Eigen::VectorXd momentum(potential.dim);
  for (int j = 0; j < potential.dim; ++j)
    momentum[j] = sample_normal(0.0, std::sqrt(mass[j]), rng);
  const double kinetic0 =
      0.5 * (momentum.array().square() / mass.array()).sum();

  Eigen::VectorXd proposal = state;
  double proposal_potential = kInf;
  if (!leapfrog_impl(potential, cfg, proposal, momentum, &proposal_potential))
    return {state, false, current_potential};

  const double kinetic1 =
      0.5 * (momentum.array().square() / mass.array()).sum();
  const double delta_h =
      (proposal_potential + kinetic1) - (current_potential + kinetic0);
  if (std::log(rng.uniform()) < -delta_h)
    return {std::move(proposal), true, proposal_potential};
  return {state, false, current_potential};
}

TunerResult tune_step_size(const std::function<double(double)>& acceptance_rate,
                           const TunerConfig& cfg) {
  TunerResult result;
  double omega = cfg.initial_step;
  double epsilon = omega;
  int scounter = 0;
  const double lo = cfg.target_rate - cfg.lower_tol;
  const double hi = cfg.target_rate + cfg.upper_tol;

  double rate = 0.0;
  int iter = 1;
  for (; iter <= cfg.itermax; ++iter) {
    rate = acceptance_rate(omega);
    if (rate >= lo && rate <= hi) {
      result.trace.push_back({iter, omega, epsilon, rate, "in_band"});
      result.omega = omega;
      result.acceptance_rate = rate;
      result.iterations = iter;
      result.in_band = true;
      return result;
    }
    if (rate > hi) {
      if (scounter != 0) epsilon *= 0.5;  // only bisect once omega has decreased
      result.trace.push_back({iter, omega, epsilon, rate, "increase"});
      omega += epsilon;
    } else {
      ++scounter;
      epsilon *= 0.5;
      result.trace.push_back({iter, omega, epsilon, rate, "decrease"});
      omega -= epsilon;
      if (omega <= 0.0) {  // not covered by the printed algorithm; keep positive
        omega = 0.5 * epsilon;
        result.trace.back().branch = "clamp";
      }
    }
  }
  // itermax exhausted: report the last evaluated pair
  result.omega = result.trace.empty() ? omega : result.trace.back().omega;
  result.acceptance_rate = rate;
  result.iterations = cfg.itermax;
  result.in_band = false;
  return result;
}

TunerResult tune_step_size(const Potential& potential, const TunerConfig& cfg,
                           int leapfrog_steps, const Eigen::VectorXd& init_state,
                           RngStream& rng) {
  const double init_potential = potential.eval(init_state);
  if (!std::isfinite(init_potential))
    throw std::invalid_argument("tune_step_size: infeasible initial state");
  auto rate_fn = [&](double omega) {
    HMCConfig hmc_cfg;
    hmc_cfg.step_size = omega;
    hmc_cfg.leapfrog_steps = leapfrog_steps;
    Eigen::VectorXd state = init_state;
    double u = init_potential;
    long accepted = 0;
    for (int i = 0; i < cfg.tuning_chain_length; ++i) {
      HMCStepResult step = hmc_step(state, u, potential, hmc_cfg, rng);
      state = std::move(step.state);
      u = step.potential_value;
      if (i >= cfg.tuning_burnin && step.accepted) ++accepted;
    }
    return double(accepted) /
           double(std::max(1, cfg.tuning_chain_length - cfg.tuning_burnin));
  };
  return tune_step_size(rate_fn, cfg);
}

ChainSet run_chains(const Potential& potential, const HMCConfig& cfg,
                    int n_chains, int chain_length, int burnin,
                    const std::vector<Eigen::VectorXd>& init_states,
                    std::uint64_t seed, std::uint64_t stream_base) {
  if (n_chains < 1 || chain_length <= burnin || burnin < 0)
    throw std::invalid_argument("run_chains: bad chain geometry");
  if (init_states.size() != size_t(n_chains) && init_states.size() != 1)
    throw std::invalid_argument("run_chains: need 1 or n_chains init states");

  const int n_keep = chain_length - burnin;
  ChainSet out;
  out.draws.assign(n_chains, Eigen::MatrixXd(n_keep, potential.dim));
  out.acceptance_rates.assign(n_chains, 0.0);
  out.seeds.resize(n_chains);
  out.burnin = burnin;

  std::vector<std::string> errors(n_chains);
  auto run_one = [&](int c) {
    const Eigen::VectorXd& init =
        init_states.size() == 1 ? init_states[0] : init_states[c];
    double u = potential.eval(init);
    if (!std::isfinite(u)) {
      errors[c] = "run_chains: infeasible initial state for chain " +
                  std::to_string(c);
      return;
    }
    RngStream rng(seed, stream_base + std::uint64_t(c));
    out.seeds[c] = stream_base + std::uint64_t(c);
    Eigen::VectorXd state = init;
    long accepted = 0;
    for (int i = 0; i < chain_length; ++i) {
      HMCStepResult step = hmc_step(state, u, potential, cfg, rng);
      state = std::move(step.state);
      u = step.potential_value;
      if (step.accepted) ++accepted;
      if (i >= burnin) out.draws[c].row(i - burnin) = state.transpose();
    }
    out.acceptance_rates[c] = double(accepted) / double(chain_length);
  };

  std::vector<std::thread> workers;
  workers.reserve(n_chains);
  for (int c = 0; c < n_chains; ++c) workers.emplace_back(run_one, c);
  for (auto& w : workers) w.join();
  for (const auto& e : errors)
    if (!e.empty()) throw std::invalid_argument(e);
  return out;
}

Eigen::VectorXd split_rhat(const std::vector<Eigen::MatrixXd>& draws) {
  if (draws.empty()) throw std::invalid_argument("split_rhat: no chains");
  const auto p = draws[0].cols();
  Eigen::Index n = draws[0].rows();
  for (const auto& m : draws)
    if (m.cols() != p || m.rows() != n)
      throw std::invalid_argument("split_rhat: ragged chains");
  n -= n % 2;  // even number of draws per chain
  if (n < 4) throw std::invalid_argument("split_rhat: need at least 4 draws");
  const Eigen::Index half = n / 2;
  const double n_h = double(half);

  Eigen::VectorXd rhat(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    std::vector<double> means;
    std::vector<double> vars;
    for (const auto& chain : draws) {
      for (int s = 0; s < 2; ++s) {
        const auto seg = chain.col(j).segment(s * half, half);
        const double m = seg.mean();
        const double v = (seg.array() - m).square().sum() / (n_h - 1.0);
        means.push_back(m);
        vars.push_back(v);
      }
    }
    double w = 0.0;
    for (double v : vars) w += v;
    w /= double(vars.size());
    double grand = 0.0;
    for (double m : means) grand += m;
    grand /= double(means.size());
    double var_of_means = 0.0;
    for (double m : means) var_of_means += (m - grand) * (m - grand);
    var_of_means /= double(means.size()) - 1.0;

    if (w <= 0.0) {
      rhat[j] = kInf;  // degenerate (constant) chains
      continue;
    }
    const double var_plus = (n_h - 1.0) / n_h * w + var_of_means;
    rhat[j] = std::sqrt(var_plus / w);
  }
  return rhat;
}

}  // namespace benel
