// Command-line front end: fit on delimited files, run the simulation
// designs, tune the sampler, or check the large-sample normal
// approximation. All outputs land in --out-dir.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "benel/data.hpp"
#include "benel/model.hpp"
#include "benel/selection.hpp"

using json = nlohmann::ordered_json;
using namespace benel;

namespace {

constexpr int kSchemaVersion = 1;

enum ExitCode {
  kOk = 0,
  kIoError = 2,
  kParseError = 3,
  kConfigError = 4,
  kNumericError = 5,
};

struct RunConfig {
  std::string input;
  std::string response = "y";
  std::string mode = "eb";
  int chains = 4;
  int iters = 2000;
  int burnin = 1000;
  int leapfrog = 10;
  double omega0 = 0.5;
  double tol_lower = 0.05;
  double tol_upper = 0.05;
  int itermax = 50;
  double a = 10.0;
  double b = 10.0;
  std::string criterion = "sn";
  double level = 0.5;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  bool plots = false;
  std::string design = "sim1";
  std::string error = "normal";
  int n = 50;
  int reps = 20;
};

void add_common_flags(CLI::App* cmd, RunConfig* cfg) {
  cmd->add_option("--mode", cfg->mode, "Penalty estimation: eb or fb")
      ->check(CLI::IsMember({"eb", "fb"}));
  cmd->add_option("--chains", cfg->chains)->check(CLI::PositiveNumber);
  cmd->add_option("--iters", cfg->iters)->check(CLI::PositiveNumber);
  cmd->add_option("--burnin", cfg->burnin)->check(CLI::NonNegativeNumber);
  cmd->add_option("--leapfrog", cfg->leapfrog)->check(CLI::PositiveNumber);
  cmd->add_option("--omega0", cfg->omega0)->check(CLI::PositiveNumber);
  cmd->add_option("--tol-lower", cfg->tol_lower)->check(CLI::PositiveNumber);
  cmd->add_option("--tol-upper", cfg->tol_upper)->check(CLI::PositiveNumber);
  cmd->add_option("--itermax", cfg->itermax)->check(CLI::PositiveNumber);
  cmd->add_option("--a", cfg->a)->check(CLI::PositiveNumber);
  cmd->add_option("--b", cfg->b)->check(CLI::PositiveNumber);
  cmd->add_option("--criterion", cfg->criterion,
                  "Selection rule: ci (credible interval) or sn (scaled "
                  "neighborhood)")
      ->check(CLI::IsMember({"ci", "sn"}));
  cmd->add_option("--level", cfg->level,
                  "Interval coverage (ci) or exclusion threshold (sn)");
  cmd->add_option("--seed", cfg->seed);
  cmd->add_option("--out-dir", cfg->out_dir);
  cmd->add_flag("--plots", cfg->plots, "Write SVG trace and histogram plots");
}

SamplerConfig sampler_config(const RunConfig& cfg) {
  SamplerConfig s;
  s.chains = cfg.chains;
  s.iterations = cfg.iters;
  s.burnin = cfg.burnin;
  s.leapfrog_steps = cfg.leapfrog;
  s.tuner.initial_step = cfg.omega0;
  s.tuner.lower_tol = cfg.tol_lower;
  s.tuner.upper_tol = cfg.tol_upper;
  s.tuner.itermax = cfg.itermax;
  s.seed = cfg.seed;
  return s;
}

Hyperparams hyperparams(const RunConfig& cfg) {
  Hyperparams h;
  h.a = cfg.a;
  h.b = cfg.b;
  return h;
}

ErrorKind parse_error_kind(const std::string& name) {
  if (name == "normal") return ErrorKind::normal;
  if (name == "mixture") return ErrorKind::mixture;
  if (name == "skewt") return ErrorKind::skew_t;
  if (name == "student") return ErrorKind::student_t_scaled;
  throw CLI::ValidationError("--error", "unknown error kind " + name);
}

json config_json(const RunConfig& cfg, const std::string& command) {
  return json{{"command", command},
              {"input", cfg.input},
              {"response", cfg.response},
              {"mode", cfg.mode},
              {"chains", cfg.chains},
              {"iters", cfg.iters},
              {"burnin", cfg.burnin},
              {"leapfrog", cfg.leapfrog},
              {"omega0", cfg.omega0},
              {"tol_lower", cfg.tol_lower},
              {"tol_upper", cfg.tol_upper},
              {"itermax", cfg.itermax},
              {"a", cfg.a},
              {"b", cfg.b},
              {"criterion", cfg.criterion},
              {"level", cfg.level},
              {"seed", cfg.seed},
              {"out_dir", cfg.out_dir},
              {"plots", cfg.plots},
              {"design", cfg.design},
              {"error", cfg.error},
              {"n", cfg.n},
              {"reps", cfg.reps}};
}

// Minimal self-check of the emitted report shape; refuses to write a
// report that violates the documented schema.
void validate_report(const json& report) {
  const char* required[] = {"schema_version", "config"};
  for (const char* key : required)
    if (!report.contains(key))
      throw std::runtime_error(std::string("report schema: missing ") + key);
  if (report["schema_version"].get<int>() != kSchemaVersion)
    throw std::runtime_error("report schema: bad version");
  if (report.contains("coefficients")) {
    for (const auto& c : report["coefficients"])
      for (const char* key : {"name", "median", "mean", "sd", "lower",
                              "upper", "sn_probability", "included"})
        if (!c.contains(key))
          throw std::runtime_error(
              std::string("report schema: coefficient entry missing ") + key);
  }
}

void write_report(const json& report, const std::string& out_dir) {
  validate_report(report);
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir + "/report.json");
  if (!out) throw std::runtime_error("cannot write " + out_dir + "/report.json");
  out << report.dump(2) << "\n";
}

void write_draws_csv(const FitReport& fit, const std::vector<std::string>& names,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "chain,iter";
  for (const auto& n : names) out << "," << n;
  out << ",sigma2,lambda1,lambda2\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), ",%.17g", v);
    out << buf;
  };
  for (size_t c = 0; c < fit.theta_draws.size(); ++c) {
    const Eigen::MatrixXd& th = fit.theta_draws[c];
    const bool fb = !fit.lambda1_draws.empty();
    for (Eigen::Index i = 0; i < th.rows(); ++i) {
      out << c << "," << i;
      for (Eigen::Index j = 0; j < th.cols(); ++j) put(th(i, j));
      put(fit.sigma2_draws[c][i]);
      put(fb ? fit.lambda1_draws[c][i] : fit.lambda1);
      put(fb ? fit.lambda2_draws[c][i] : fit.lambda2);
      out << "\n";
    }
  }
}

void write_tuner_csv(const std::vector<TunerIteration>& trace,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "iteration,omega,epsilon,acceptance_rate,branch\n";
  char buf[128];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%s\n", t.iteration,
                  t.omega, t.epsilon, t.acceptance_rate, t.branch.c_str());
    out << buf;
  }
}

// Tiny hand-rolled SVG writers: a trace plot per coefficient (one
// polyline per chain) and a pooled histogram.
void write_trace_svg(const FitReport& fit, int coef, const std::string& name,
                     const std::string& path) {
  const int width = 800, height = 240, pad = 30;
  double lo = 1e300, hi = -1e300;
  for (const auto& th : fit.theta_draws) {
    lo = std::min(lo, th.col(coef).minCoeff());
    hi = std::max(hi, th.col(coef).maxCoeff());
  }
  if (hi <= lo) hi = lo + 1.0;
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n<rect width='100%' height='100%' "
      << "fill='white'/>\n<text x='10' y='18' font-size='13'>" << name
      << "</text>\n";
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#8c564b", "#e377c2"};
  for (size_t c = 0; c < fit.theta_draws.size(); ++c) {
    const auto& col = fit.theta_draws[c].col(coef);
    out << "<polyline fill='none' stroke='" << colors[c % 6]
        << "' stroke-width='0.6' points='";
    for (Eigen::Index i = 0; i < col.size(); ++i) {
      const double x =
          pad + (width - 2 * pad) * double(i) / double(col.size() - 1);
      const double y =
          height - pad - (height - 2 * pad) * (col[i] - lo) / (hi - lo);
      out << x << "," << y << " ";
    }
    out << "'/>\n";
  }
  out << "</svg>\n";
}

void write_hist_svg(const Eigen::VectorXd& draws, const std::string& name,
                    const std::string& path) {
  const int width = 400, height = 240, pad = 30, bins = 40;
  const double lo = draws.minCoeff(), hi0 = draws.maxCoeff();
  const double hi = hi0 > lo ? hi0 : lo + 1.0;
  std::vector<int> count(bins, 0);
  for (Eigen::Index i = 0; i < draws.size(); ++i) {
    int b = int((draws[i] - lo) / (hi - lo) * bins);
    count[std::min(b, bins - 1)]++;
  }
  const int peak = *std::max_element(count.begin(), count.end());
  std::ofstream out(path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
      << "' height='" << height << "'>\n<rect width='100%' height='100%' "
      << "fill='white'/>\n<text x='10' y='18' font-size='13'>" << name
      << "</text>\n";
  const double bw = double(width - 2 * pad) / bins;
  for (int b = 0; b < bins; ++b) {
    const double h = (height - 2 * pad) * double(count[b]) / double(peak);
    out << "<rect x='" << pad + b * bw << "' y='" << height - pad - h
        << "' width='" << bw * 0.95 << "' height='" << h
        << "' fill='#1f77b4'/>\n";
  }
  out << "</svg>\n";
}

struct FitArtifacts {
  FitReport fit;
  PosteriorSummary summary;
  SelectionResult selection;
};

FitArtifacts fit_and_select(const Dataset& data, const RunConfig& cfg) {
  FitArtifacts art;
  const SamplerConfig scfg = sampler_config(cfg);
  const Hyperparams hyper = hyperparams(cfg);
  if (cfg.mode == "eb") {
    EMConfig em;
    art.fit = fit_eb(data, hyper, scfg, em);
  } else {
    art.fit = fit_fb(data, hyper, scfg);
  }
  const Eigen::MatrixXd pooled = art.fit.pooled_theta();
  const double alpha = cfg.criterion == "ci" ? cfg.level : 0.5;
  art.summary = summarize(pooled, alpha, art.fit.acceptance_rates,
                          art.fit.rhat, art.fit.tuned_omega);
  art.selection = cfg.criterion == "ci"
                      ? select_credible(pooled, cfg.level)
                      : select_scaled_neighborhood(pooled, cfg.level);
  return art;
}

json coefficients_json(const FitArtifacts& art,
                       const std::vector<std::string>& names) {
  json coefs = json::array();
  for (size_t j = 0; j < art.summary.coefficients.size(); ++j) {
    const auto& c = art.summary.coefficients[j];
    coefs.push_back(json{{"name", names[j]},
                         {"median", c.median},
                         {"mean", c.mean},
                         {"sd", c.sd},
                         {"lower", c.lower},
                         {"upper", c.upper},
                         {"sn_probability", c.sn_probability},
                         {"rhat", art.fit.rhat[Eigen::Index(j)]},
                         {"included", bool(art.selection.included[j])}});
  }
  return coefs;
}

json sampler_json(const FitReport& fit) {
  json j{{"tuned_omega", fit.tuned_omega},
         {"tuner_acceptance", fit.tuner_acceptance},
         {"tuner_iterations", fit.tuner_iterations},
         {"tuner_in_band", fit.tuner_in_band},
         {"retuned", fit.retuned},
         {"acceptance_rates", fit.acceptance_rates},
         {"lambda1", fit.lambda1},
         {"lambda2", fit.lambda2},
         {"converged", fit.converged},
         {"max_rhat", fit.rhat.maxCoeff()},
         {"tau_clamp_count", fit.tau_clamp_count}};
  return j;
}

int cmd_fit(const RunConfig& cfg, const std::string& command) {
  if (cfg.input.empty()) {
    std::fprintf(stderr, "error: config: --input is required for %s\n",
                 command.c_str());
    return kConfigError;
  }
  if (cfg.chains == 1)
    std::fprintf(stderr,
                 "warning: split R-hat with --chains 1 compares the two "
                 "halves of the single chain\n");

  const CsvData raw = load_csv(cfg.input, cfg.response);
  const Dataset data = standardize(raw.X, raw.y, raw.names);
  const FitArtifacts art = fit_and_select(data, cfg);

  json report{{"schema_version", kSchemaVersion},
              {"config", config_json(cfg, command)},
              {"n", data.X.rows()},
              {"p", data.X.cols()},
              {"coefficients", coefficients_json(art, data.names)},
              {"sampler", sampler_json(art.fit)}};

  if (command == "diagnose") {
    ModelState st;
    st.theta = art.fit.pooled_theta().colwise().mean();
    st.tau = art.fit.tau_mean;
    st.sigma2 = art.fit.sigma2_mean;
    st.lambda1 = art.fit.lambda1;
    st.lambda2 = art.fit.lambda2;
    const NormalApproxDiagnostic diag =
        normal_approx_diagnostic(data, art.fit.pooled_theta(), st);
    report["normal_approximation"] =
        json{{"ks_distance", diag.ks_distance},
             {"positive_definite", diag.positive_definite},
             {"mahalanobis_mean", diag.mahalanobis.mean()}};
    std::printf("normal approximation: KS distance %.4f (chi-square %d)\n",
                diag.ks_distance, int(data.X.cols()));
  }

  write_report(report, cfg.out_dir);
  write_draws_csv(art.fit, data.names, cfg.out_dir + "/draws.csv");
  write_tuner_csv(art.fit.tuner_trace, cfg.out_dir + "/tuner_trace.csv");
  if (cfg.plots) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) {
      write_trace_svg(art.fit, int(j), data.names[j],
                      cfg.out_dir + "/trace_" + data.names[j] + ".svg");
      write_hist_svg(art.fit.pooled_theta().col(j), data.names[j],
                     cfg.out_dir + "/hist_" + data.names[j] + ".svg");
    }
  }
  std::printf("wrote %s/report.json (%d coefficients, max R-hat %.4f)\n",
              cfg.out_dir.c_str(), int(data.X.cols()),
              art.fit.rhat.maxCoeff());
  return kOk;
}

int cmd_simulate(const RunConfig& cfg) {
  SimDesign design;
  design.kind = cfg.design == "sim1" ? SimKind::sim1 : SimKind::sim2;
  design.n_train = cfg.n;
  design.error_kind = parse_error_kind(cfg.error);

  std::vector<double> max_rhat;
  const FitProcedure proc = [&](const Dataset& train, std::uint64_t rep_seed) {
    RunConfig rep_cfg = cfg;
    rep_cfg.seed = rep_seed;
    const FitArtifacts art = fit_and_select(train, rep_cfg);
    max_rhat.push_back(art.fit.rhat.maxCoeff());
    ReplicationFit r;
    r.theta_selected.resize(Eigen::Index(art.summary.coefficients.size()));
    for (size_t j = 0; j < art.summary.coefficients.size(); ++j)
      r.theta_selected[Eigen::Index(j)] =
          art.selection.included[j] ? art.summary.coefficients[j].median : 0.0;
    r.converged = art.fit.converged;
    return r;
  };
  const EvalReport eval =
      evaluate_replications(design, proc, cfg.reps, cfg.seed);

  json report{{"schema_version", kSchemaVersion},
              {"config", config_json(cfg, "simulate")},
              {"mspe", eval.mspe_per_replication},
              {"mmspe", eval.mmspe},
              {"se_bootstrap", eval.se_bootstrap},
              {"se_degenerate", cfg.reps < 2},
              {"exclusion_frequency_percent",
               std::vector<double>(eval.exclusion_frequency.begin(),
                                   eval.exclusion_frequency.end())},
              {"max_rhat_per_replication", max_rhat},
              {"convergence_failures", eval.convergence_failures}};
  write_report(report, cfg.out_dir);
  std::printf("MMSPE %.4f (bootstrap SE %.4f) over %d replications\n",
              eval.mmspe, eval.se_bootstrap, cfg.reps);
  return kOk;
}

int cmd_tune(const RunConfig& cfg) {
  Dataset data;
  if (!cfg.input.empty()) {
    const CsvData raw = load_csv(cfg.input, cfg.response);
    data = standardize(raw.X, raw.y, raw.names);
  } else {
    RngStream rng(cfg.seed, 0);
    SimDesign design;
    design.kind = cfg.design == "sim1" ? SimKind::sim1 : SimKind::sim2;
    design.n_train = cfg.n;
    design.error_kind = parse_error_kind(cfg.error);
    const SimReplicate rep = generate_design(design, rng);
    data = standardize(rep.train.X, rep.train.y);
  }

  const ModelState init = initial_state(data);
  const Potential pot = make_conditional_potential(init, data);
  TunerConfig tcfg = sampler_config(cfg).tuner;
  RngStream rng(cfg.seed, 1);
  const TunerResult result =
      tune_step_size(pot, tcfg, cfg.leapfrog, init.theta, rng);

  std::printf("iteration  omega      epsilon    rate    branch\n");
  for (const auto& t : result.trace)
    std::printf("%9d  %-9.5f  %-9.5f  %-6.4f  %s\n", t.iteration, t.omega,
                t.epsilon, t.acceptance_rate, t.branch.c_str());
  std::printf("final omega %.5f, acceptance %.4f%s\n", result.omega,
              result.acceptance_rate,
              result.in_band ? "" : " (itermax exhausted, not in band)");

  std::filesystem::create_directories(cfg.out_dir);
  write_tuner_csv(result.trace, cfg.out_dir + "/tuner_trace.csv");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian elastic-net regression via empirical likelihood"};
  app.require_subcommand(1);
  app.set_config("--config");

  RunConfig cfg;
  CLI::App* fit = app.add_subcommand("fit", "Fit the model to a data file");
  fit->add_option("--input", cfg.input, "Delimited data file");
  fit->add_option("--response", cfg.response, "Response column name");
  add_common_flags(fit, &cfg);

  CLI::App* simulate =
      app.add_subcommand("simulate", "Run a simulation study");
  simulate->add_option("--design", cfg.design)
      ->check(CLI::IsMember({"sim1", "sim2"}));
  simulate->add_option("--error", cfg.error)
      ->check(CLI::IsMember({"normal", "mixture", "skewt", "student"}));
  simulate->add_option("--n", cfg.n)->check(CLI::PositiveNumber);
  simulate->add_option("--reps", cfg.reps)->check(CLI::PositiveNumber);
  add_common_flags(simulate, &cfg);

  CLI::App* tune =
      app.add_subcommand("tune", "Run the step-size tuner and print the trace");
  tune->add_option("--input", cfg.input, "Delimited data file");
  tune->add_option("--response", cfg.response);
  tune->add_option("--design", cfg.design)
      ->check(CLI::IsMember({"sim1", "sim2"}));
  tune->add_option("--error", cfg.error)
      ->check(CLI::IsMember({"normal", "mixture", "skewt", "student"}));
  tune->add_option("--n", cfg.n)->check(CLI::PositiveNumber);
  add_common_flags(tune, &cfg);

  CLI::App* diagnose = app.add_subcommand(
      "diagnose", "Fit and check the large-sample normal approximation");
  diagnose->add_option("--input", cfg.input, "Delimited data file");
  diagnose->add_option("--response", cfg.response);
  add_common_flags(diagnose, &cfg);

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(cfg, "fit");
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (tune->parsed()) return cmd_tune(cfg);
    if (diagnose->parsed()) return cmd_fit(cfg, "diagnose");
  } catch (const std::ifstream::failure& e) {
    std::fprintf(stderr, "error: io: %s\n", e.what());
    return kIoError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: parse: %s\n", e.what());
    return kParseError;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("load_csv") != std::string::npos ||
        what.find("cannot write") != std::string::npos) {
      std::fprintf(stderr, "error: io: %s\n", e.what());
      return kIoError;
    }
    std::fprintf(stderr, "error: numeric: %s\n", e.what());
    return kNumericError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: internal: %s\n", e.what());
    return kNumericError;
  }
  return kConfigError;
}
