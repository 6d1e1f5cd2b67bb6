#include "benel/model.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <thread>

namespace benel {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTauFloor = 1e-12;

// stream-id blocks, so tuning / EM / production draws never overlap
constexpr std::uint64_t kStreamTuner = 1u << 16;
constexpr std::uint64_t kStreamEM = 2u << 16;
constexpr std::uint64_t kStreamProduction = 3u << 16;

double prior_quadratic(const Eigen::VectorXd& theta, const ModelState& state) {
  const Eigen::ArrayXd precision =
      state.tau.array() / (state.tau.array() - 1.0);
  return 0.5 * state.lambda2 / state.sigma2 *
         (precision * theta.array().square()).sum();
}

Eigen::VectorXd prior_gradient(const Eigen::VectorXd& theta,
                               const ModelState& state) {
  const Eigen::ArrayXd precision =
      state.tau.array() / (state.tau.array() - 1.0);
  return (state.lambda2 / state.sigma2 * precision * theta.array()).matrix();
}

void check_state(const ModelState& state) {
  if ((state.tau.array() <= 1.0).any() || !(state.sigma2 > 0) ||
      !(state.lambda1 > 0) || !(state.lambda2 > 0))
    throw std::invalid_argument("ModelState: invariants violated");
}

// Conditional potential for theta with the EL solve cached by position; a
// grad following an eval at the same theta costs nothing extra. One
// instance per chain (not thread-safe).
class ConditionalPotential {
 public:
  ConditionalPotential(const ModelState* state, const Dataset* data,
                       ELConfig el_cfg)
      : state_(state), data_(data), el_cfg_(el_cfg) {}

  double eval(const Eigen::VectorXd& theta) {
    const ELResult& el = ensure(theta);
    if (!el.feasible) return kInf;
    return -el.log_el + prior_quadratic(theta, *state_);
  }

  Eigen::VectorXd grad(const Eigen::VectorXd& theta) {
    const ELResult& el = ensure(theta);
    if (!el.feasible)
      throw std::domain_error("potential_gradient: infeasible theta");
    return -el_gradient(data_->X, data_->y, theta, el) +
           prior_gradient(theta, *state_);
  }

  bool cached(const Eigen::VectorXd& theta, ELResult* out) const {
    if (!has_ || theta_ != theta) return false;
    *out = el_;
    return true;
  }

  // Seed the cache with a solution already known for theta so that the first
  // gradient of a trajectory never re-solves (and never disagrees with the
  // energy the caller computed from the same result).
  void prime(const Eigen::VectorXd& theta, const ELResult& el) {
    theta_ = theta;
    el_ = el;
    has_ = true;
    if (el.feasible) warm_gamma_ = el.gamma;
  }

  Potential as_potential(std::shared_ptr<ConditionalPotential> self) {
    return Potential{[self](const Eigen::VectorXd& t) { return self->eval(t); },
                     [self](const Eigen::VectorXd& t) { return self->grad(t); },
                     int(data_->X.cols())};
  }

 private:
  const ELResult& ensure(const Eigen::VectorXd& theta) {
    if (has_ && theta_ == theta) return el_;
    el_ = solve_lagrange(data_->X, data_->y, theta, el_cfg_, warm_gamma_);
    if (el_.feasible) warm_gamma_ = el_.gamma;
    theta_ = theta;
    has_ = true;
    return el_;
  }

  const ModelState* state_;
  const Dataset* data_;
  ELConfig el_cfg_;
  bool has_ = false;
  Eigen::VectorXd theta_;
  ELResult el_{};
  std::optional<Eigen::VectorXd> warm_gamma_;
};

struct ChainDraws {
  Eigen::MatrixXd theta;   // n_keep x p
  Eigen::MatrixXd tau;     // n_keep x p
  Eigen::VectorXd sigma2;  // n_keep
  Eigen::VectorXd lambda1;
  Eigen::VectorXd lambda2;
  double acceptance = 0.0;       // over the whole chain
  double acceptance_post = 0.0;  // post burn-in
  long clamps = 0;
  ModelState final_state;
};

// HMC-within-Gibbs: one T-step HMC update of theta, then tau, sigma2 and
// (full Bayes) the penalty conditionals, per sweep.
ChainDraws run_model_chain(const Dataset& data, const Hyperparams& hyper,
                           ModelState state, double omega, int leapfrog_steps,
                           int length, int burnin, bool full_bayes,
                           const ELConfig& el_cfg, RngStream& rng) {
  const auto p = data.X.cols();
  const int n_keep = length - burnin;
  ChainDraws out;
  out.theta.resize(n_keep, p);
  out.tau.resize(n_keep, p);
  out.sigma2.resize(n_keep);
  out.lambda1.resize(n_keep);
  out.lambda2.resize(n_keep);

  auto cp = std::make_shared<ConditionalPotential>(&state, &data, el_cfg);
  Potential potential = cp->as_potential(cp);
  HMCConfig hmc_cfg;
  hmc_cfg.step_size = omega;
  hmc_cfg.leapfrog_steps = leapfrog_steps;

  ELResult current_el = solve_lagrange(data.X, data.y, state.theta, el_cfg);
  if (!current_el.feasible)
    throw std::invalid_argument("run_model_chain: infeasible initial theta");

  long accepted = 0;
  long accepted_post = 0;
  for (int iter = 0; iter < length; ++iter) {
    const double u_current =
        -current_el.log_el + prior_quadratic(state.theta, state);
    cp->prime(state.theta, current_el);
    HMCStepResult step =
        hmc_step(state.theta, u_current, potential, hmc_cfg, rng);
    if (step.accepted) {
      state.theta = std::move(step.state);
      if (!cp->cached(state.theta, &current_el))
        current_el = solve_lagrange(data.X, data.y, state.theta, el_cfg,
                                    current_el.gamma);
      ++accepted;
      if (iter >= burnin) ++accepted_post;
    }
    state.tau = gibbs_tau(state, rng, &out.clamps);
    state.sigma2 = gibbs_sigma2(state, hyper, rng);
    if (full_bayes)
      std::tie(state.lambda1, state.lambda2) =
          fb_lambda_updates(state, hyper, rng);

    if (iter >= burnin) {
      const int k = iter - burnin;
      out.theta.row(k) = state.theta.transpose();
      out.tau.row(k) = state.tau.transpose();
      out.sigma2[k] = state.sigma2;
      out.lambda1[k] = state.lambda1;
      out.lambda2[k] = state.lambda2;
    }
  }
  out.acceptance = double(accepted) / double(length);
  out.acceptance_post = double(accepted_post) / double(std::max(1, n_keep));
  out.final_state = std::move(state);
  return out;
}

TunerResult tune_model(const Dataset& data, const Hyperparams& hyper,
                       const ModelState& init, const SamplerConfig& cfg,
                       bool full_bayes, std::uint64_t stream) {
  RngStream rng(cfg.seed, stream);
  auto rate_fn = [&](double omega) {
    ChainDraws cd = run_model_chain(data, hyper, init, omega,
                                    cfg.leapfrog_steps, cfg.tuner.tuning_chain_length,
                                    cfg.tuner.tuning_burnin, full_bayes, cfg.el, rng);
    return cd.acceptance_post;
  };
  return tune_step_size(rate_fn, cfg.tuner);
}

struct ProductionRun {
  std::vector<ChainDraws> chains;
  Eigen::VectorXd rhat;
};

ProductionRun run_production(const Dataset& data, const Hyperparams& hyper,
                             const ModelState& init, const SamplerConfig& cfg,
                             double omega, bool full_bayes) {
  ProductionRun out;
  out.chains.resize(cfg.chains);
  auto run_one = [&](int c) {
    RngStream rng(cfg.seed, kStreamProduction + std::uint64_t(c));
    out.chains[c] =
        run_model_chain(data, hyper, init, omega, cfg.leapfrog_steps,
                        cfg.iterations, cfg.burnin, full_bayes, cfg.el, rng);
  };
  if (cfg.parallel_chains) {
    std::vector<std::thread> workers;
    for (int c = 0; c < cfg.chains; ++c) workers.emplace_back(run_one, c);
    for (auto& w : workers) w.join();
  } else {
    for (int c = 0; c < cfg.chains; ++c) run_one(c);
  }
  std::vector<Eigen::MatrixXd> theta_draws;
  for (const auto& cd : out.chains) theta_draws.push_back(cd.theta);
  out.rhat = split_rhat(theta_draws);
  return out;
}

FitReport assemble_report(const ProductionRun& run, const TunerResult& tuned,
                          const ModelState& init, double lambda1, double lambda2,
                          bool full_bayes, bool retuned) {
  FitReport report;
  for (const auto& cd : run.chains) {
    report.theta_draws.push_back(cd.theta);
    report.sigma2_draws.push_back(cd.sigma2);
    if (full_bayes) {
      report.lambda1_draws.push_back(cd.lambda1);
      report.lambda2_draws.push_back(cd.lambda2);
    }
    report.acceptance_rates.push_back(cd.acceptance);
    report.tau_clamp_count += cd.clamps;
  }
  report.rhat = run.rhat;
  report.tuned_omega = tuned.omega;
  report.tuner_acceptance = tuned.acceptance_rate;
  report.tuner_iterations = tuned.iterations;
  report.tuner_in_band = tuned.in_band;
  report.tuner_trace = tuned.trace;
  report.retuned = retuned;
  report.converged = run.rhat.allFinite() && run.rhat.maxCoeff() < 1.01;
  report.theta_init = init.theta;

  // pooled posterior means of the latent scales, for diagnostics
  const auto p = init.theta.size();
  Eigen::VectorXd tau_sum = Eigen::VectorXd::Zero(p);
  double sigma2_sum = 0.0;
  long count = 0;
  for (const auto& cd : run.chains) {
    tau_sum += cd.tau.colwise().sum().transpose();
    sigma2_sum += cd.sigma2.sum();
    count += cd.sigma2.size();
  }
  report.tau_mean = tau_sum / double(count);
  report.sigma2_mean = sigma2_sum / double(count);

  if (full_bayes) {
    double l1 = 0.0;
    double l2 = 0.0;
    for (const auto& cd : run.chains) {
      l1 += cd.lambda1.sum();
      l2 += cd.lambda2.sum();
    }
    report.lambda1 = l1 / double(count);
    report.lambda2 = l2 / double(count);
  } else {
    report.lambda1 = lambda1;
    report.lambda2 = lambda2;
  }
  return report;
}

bool acceptance_in_working_range(const FitReport& report) {
  for (double a : report.acceptance_rates)
    if (a < 0.4 || a > 0.9) return false;
  return true;
}

}  // namespace

double potential(const Eigen::VectorXd& theta, const ModelState& state,
                 const Dataset& data, const ELConfig& el_cfg) {
  check_state(state);
  const ELResult el = solve_lagrange(data.X, data.y, theta, el_cfg);
  if (!el.feasible) return kInf;
  return -el.log_el + prior_quadratic(theta, state);
}

Eigen::VectorXd potential_gradient(const Eigen::VectorXd& theta,
                                   const ModelState& state, const Dataset& data,
                                   const ELConfig& el_cfg) {
  check_state(state);
  const ELResult el = solve_lagrange(data.X, data.y, theta, el_cfg);
  if (!el.feasible)
    throw std::domain_error("potential_gradient: infeasible theta");
  return -el_gradient(data.X, data.y, theta, el) + prior_gradient(theta, state);
}

Potential make_conditional_potential(const ModelState& state, const Dataset& data,
                                     const ELConfig& el_cfg) {
  auto cp = std::make_shared<ConditionalPotential>(&state, &data, el_cfg);
  return cp->as_potential(cp);
}

Eigen::VectorXd gibbs_tau(const ModelState& state, RngStream& rng,
                          long* clamp_count) {
  check_state(state);
  const auto p = state.theta.size();
  const double psi =
      state.lambda1 * state.lambda1 / (4.0 * state.lambda2 * state.sigma2);
  Eigen::VectorXd tau(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double chi =
        state.lambda2 / state.sigma2 * state.theta[j] * state.theta[j];
    double shifted = sample_gig(GIGParams{0.5, psi, chi}, rng);
    if (shifted < kTauFloor) {
      shifted = kTauFloor;
      if (clamp_count) ++*clamp_count;
    }
    tau[j] = 1.0 + shifted;
  }
  return tau;
}

double gibbs_sigma2(const ModelState& state, const Hyperparams& hyper,
                    RngStream& rng) {
  check_state(state);
  const auto p = state.theta.size();
  const Eigen::ArrayXd ratio = state.tau.array() / (state.tau.array() - 1.0);
  const double scale =
      hyper.b + 0.5 * (state.lambda2 * (ratio * state.theta.array().square()).sum() +
                       state.lambda1 * state.lambda1 / (4.0 * state.lambda2) *
                           state.tau.sum());
  return sample_inverse_gamma(hyper.a + double(p), scale, rng);
}

std::pair<double, double> fb_lambda_updates(const ModelState& state,
                                            const Hyperparams& hyper,
                                            RngStream& rng) {
  check_state(state);
  const auto p = state.theta.size();
  const double rate1 =
      state.tau.sum() / (8.0 * state.lambda2 * state.sigma2) + hyper.delta1;
  const double lambda1 =
      std::sqrt(sample_gamma(0.5 * double(p) + hyper.r1, rate1, rng));

  const Eigen::ArrayXd ratio = state.tau.array() / (state.tau.array() - 1.0);
  const double quad =
      (ratio * state.theta.array().square()).sum() / state.sigma2;
  const double tail = state.tau.sum() * lambda1 * lambda1 / (4.0 * state.sigma2);
  GIGParams params;
  if (hyper.lambda2_prior_kind == Lambda2Prior::gig) {
    params = {hyper.nu2, quad + hyper.psi2, tail + hyper.chi2};
  } else {
    params = {hyper.r2, quad + 2.0 * hyper.delta2, tail};
  }
  const double lambda2 = sample_gig(params, rng);
  return {lambda1, lambda2};
}

std::pair<double, double> em_update(double A, double B, int p) {
  if (!(A > 0) || !std::isfinite(A) || !std::isfinite(B))
    throw std::runtime_error("em_update: invalid expectations");
  if (!(B > 0))
    throw std::runtime_error(
        "em_update: degenerate expectation B = 0; run a longer inner chain");
  const double lambda2 = double(p) / B;
  const double lambda1 = 2.0 * double(p) / std::sqrt(A * B);
  return {lambda1, lambda2};
}

ModelState initial_state(const Dataset& data) {
  const auto n = data.X.rows();
  const auto p = data.X.cols();
  ModelState state;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.X);
  if (qr.rank() == p) {
    state.theta = qr.solve(data.y);
  } else {  // ridge fallback keeps the moment condition nearly exact
    state.theta = (data.X.transpose() * data.X +
                   1e-6 * Eigen::MatrixXd::Identity(p, p))
                      .ldlt()
                      .solve(data.X.transpose() * data.y);
  }
  const Eigen::VectorXd resid = data.y - data.X * state.theta;
  state.sigma2 =
      std::max(resid.squaredNorm() / double(std::max<Eigen::Index>(n - p, 1)),
               1e-8);
  state.tau = Eigen::VectorXd::Constant(p, 2.0);
  state.lambda1 = 1.0;
  state.lambda2 = 1.0;
  return state;
}

Eigen::MatrixXd FitReport::pooled_theta() const {
  if (theta_draws.empty()) return {};
  const auto p = theta_draws[0].cols();
  Eigen::Index total = 0;
  for (const auto& m : theta_draws) total += m.rows();
  Eigen::MatrixXd pooled(total, p);
  Eigen::Index at = 0;
  for (const auto& m : theta_draws) {
    pooled.middleRows(at, m.rows()) = m;
    at += m.rows();
  }
  return pooled;
}

FitReport fit_eb(const Dataset& data, const Hyperparams& hyper,
                 const SamplerConfig& sampler_cfg, const EMConfig& em_cfg,
                 EMTrace* trace) {
  const auto p = data.X.cols();
  ModelState init = initial_state(data);

  EMTrace local_trace;
  EMTrace& em_trace = trace ? *trace : local_trace;
  em_trace.iterations.clear();
  em_trace.converged = false;

  double lambda1 = init.lambda1;
  double lambda2 = init.lambda2;
  RngStream em_rng(sampler_cfg.seed, kStreamEM);
  int below_tol_streak = 0;
  ModelState em_state = init;
  for (int k = 0; k < em_cfg.max_iters; ++k) {
    em_state.lambda1 = lambda1;
    em_state.lambda2 = lambda2;
    ChainDraws inner = run_model_chain(
        data, hyper, em_state, sampler_cfg.tuner.initial_step,
        sampler_cfg.leapfrog_steps, em_cfg.inner_length, em_cfg.inner_burnin,
        /*full_bayes=*/false, sampler_cfg.el, em_rng);

    // A = sum_j E[tau_j / sigma2], B = sum_j E[tau/(tau-1) theta^2 / sigma2];
    // means of per-draw transforms, with the ratio-of-means variant logged
    const Eigen::Index n_draws = inner.sigma2.size();
    double A = 0.0;
    double B = 0.0;
    double sum_quad = 0.0;  // per-draw sum of tau/(tau-1) theta^2
    for (Eigen::Index s = 0; s < n_draws; ++s) {
      const double s2 = inner.sigma2[s];
      for (Eigen::Index j = 0; j < p; ++j) {
        const double tau = inner.tau(s, j);
        const double quad =
            tau / (tau - 1.0) * inner.theta(s, j) * inner.theta(s, j);
        A += tau / s2;
        B += quad / s2;
        sum_quad += quad;
      }
    }
    A /= double(n_draws);
    B /= double(n_draws);
    const double A_ratio = inner.tau.sum() / double(n_draws) / inner.sigma2.mean();
    const double B_ratio = sum_quad / double(n_draws) / inner.sigma2.mean();

    const auto [l1_new, l2_new] = em_update(A, B, int(p));
    const double rel = std::max(std::abs(l1_new - lambda1) / lambda1,
                                std::abs(l2_new - lambda2) / lambda2);
    em_trace.iterations.push_back(
        {l1_new, l2_new, rel, inner.acceptance, A, B, A_ratio, B_ratio});
    lambda1 = l1_new;
    lambda2 = l2_new;
    em_state = inner.final_state;

    below_tol_streak = rel < em_cfg.rel_tol ? below_tol_streak + 1 : 0;
    if (below_tol_streak >= 2) {
      em_trace.converged = true;
      break;
    }
  }

  init.lambda1 = lambda1;
  init.lambda2 = lambda2;
  TunerResult tuned =
      tune_model(data, hyper, init, sampler_cfg, /*full_bayes=*/false,
                 kStreamTuner);
  ProductionRun run = run_production(data, hyper, init, sampler_cfg,
                                     tuned.omega, /*full_bayes=*/false);
  FitReport report =
      assemble_report(run, tuned, init, lambda1, lambda2, false, false);
  if (!acceptance_in_working_range(report)) {
    TunerConfig retune_cfg = sampler_cfg.tuner;
    retune_cfg.initial_step = tuned.omega;
    SamplerConfig cfg2 = sampler_cfg;
    cfg2.tuner = retune_cfg;
    tuned = tune_model(data, hyper, init, cfg2, false, kStreamTuner + 1);
    run = run_production(data, hyper, init, sampler_cfg, tuned.omega, false);
    report = assemble_report(run, tuned, init, lambda1, lambda2, false, true);
  }
  return report;
}

FitReport fit_fb(const Dataset& data, const Hyperparams& hyper,
                 const SamplerConfig& sampler_cfg) {
  ModelState init = initial_state(data);
  TunerResult tuned =
      tune_model(data, hyper, init, sampler_cfg, /*full_bayes=*/true,
                 kStreamTuner);
  ProductionRun run = run_production(data, hyper, init, sampler_cfg,
                                     tuned.omega, /*full_bayes=*/true);
  FitReport report = assemble_report(run, tuned, init, init.lambda1,
                                     init.lambda2, true, false);
  if (!acceptance_in_working_range(report)) {
    TunerConfig retune_cfg = sampler_cfg.tuner;
    retune_cfg.initial_step = tuned.omega;
    SamplerConfig cfg2 = sampler_cfg;
    cfg2.tuner = retune_cfg;
    tuned = tune_model(data, hyper, init, cfg2, true, kStreamTuner + 1);
    run = run_production(data, hyper, init, sampler_cfg, tuned.omega, true);
    report = assemble_report(run, tuned, init, init.lambda1, init.lambda2,
                             true, true);
  }
  return report;
}

}  // namespace benel
