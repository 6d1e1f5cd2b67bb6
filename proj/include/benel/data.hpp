#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "benel/rng.hpp"

namespace benel {

/// Affine map from raw covariates/response to the standardized scale
/// (columns centered with unit sum of squares, response centered).
struct Transform {
  Eigen::VectorXd x_means;
  Eigen::VectorXd x_scales;  // sqrt of centered column sum of squares
  double y_mean = 0.0;
};

struct Dataset {
  Eigen::MatrixXd X;  // standardized design
  Eigen::VectorXd y;  // centered response
  Transform transform;
  std::vector<std::string> names;
};

/// Centers each column, scales to unit sum of squares, centers y, and
/// records the transform. Throws std::invalid_argument on a constant
/// column (named in the message) or n < 2.
Dataset standardize(const Eigen::MatrixXd& raw_X, const Eigen::VectorXd& raw_y,
                    std::vector<std::string> names = {});

/// Standardizes test covariates with *training* statistics.
Eigen::MatrixXd apply_transform(const Transform& t, const Eigen::MatrixXd& raw_X);

/// Predictions on the raw response scale from coefficients on the
/// standardized scale.
Eigen::VectorXd predict_raw(const Transform& t, const Eigen::MatrixXd& raw_X,
                            const Eigen::VectorXd& theta_std);

enum class ErrorKind { normal, mixture, skew_t, student_t_scaled };

enum class SimKind { sim1, sim2 };

struct SimDesign {
  SimKind kind = SimKind::sim1;
  int n_train = 50;
  int n_test = 400;
  ErrorKind error_kind = ErrorKind::normal;
  double skew_t_scale = 3.0;  // sim2 leaves the scale unstated; config knob
  std::uint64_t replication_seed = 0;
};

struct RawData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

struct SimReplicate {
  RawData train;
  RawData test;
  Eigen::VectorXd theta_true;
};

/// True coefficient vectors of the two designs:
/// sim1: p = 8, (3, 1.5, 0, 0, 2, 0, 0, 0); sim2: p = 30, (3 x 15, 0 x 15).
Eigen::VectorXd sim_theta_true(SimKind kind);

/// Simulation 1: 8 standard-normal covariates with pairwise correlation
/// 0.5^|i-j|; errors N(0,9), the half-half N(-3,1)/N(3,1) mixture, or the
/// standardized skew-t scaled by 3.
SimReplicate generate_sim1(int n_train, int n_test, ErrorKind error_kind,
                           RngStream& rng);

/// Simulation 2: three blocks of five near-duplicate covariates
/// (Z + N(0, 0.01) noise) plus 15 independent N(0,1) columns; errors
/// N(0, 225), 10 * t_3, or skew-t at the configured scale.
SimReplicate generate_sim2(int n_train, int n_test, ErrorKind error_kind,
                           double skew_t_scale, RngStream& rng);

SimReplicate generate_design(const SimDesign& design, RngStream& rng);

struct EvalReport {
  std::vector<double> mspe_per_replication;
  double mmspe = 0.0;
  double se_bootstrap = 0.0;
  Eigen::VectorXd exclusion_frequency;  // percentages
  int convergence_failures = 0;
};

/// One replication: fit on standardized training data, select, and return
/// coefficients (standardized scale, excluded entries zeroed) plus a
/// convergence flag.
struct ReplicationFit {
  Eigen::VectorXd theta_selected;
  bool converged = true;
};
using FitProcedure = std::function<ReplicationFit(const Dataset& train,
                                                  std::uint64_t rep_seed)>;

/// Repeats generate/standardize/fit/predict n_reps times; MMSPE is the
/// median MSPE on the raw scale and SE the standard deviation of the
/// bootstrap distribution of the median (1000 resamples).
EvalReport evaluate_replications(const SimDesign& design,
                                 const FitProcedure& fit, int n_reps,
                                 std::uint64_t seed);

double median(std::vector<double> values);

/// Bootstrap SE of the median over 1000 resamples.
double bootstrap_se_of_median(const std::vector<double>& values,
                              RngStream& rng, int n_boot = 1000);

struct CsvData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> names;  // covariate names (response removed)
};

/// Loads a comma- or whitespace-delimited text file with a header row and
/// pulls out the named response column. Throws std::runtime_error with
/// line/column context on non-numeric cells, missing values, or an
/// empty body.
CsvData load_csv(const std::string& path, const std::string& response_column);

/// Disjoint train/test split by a seeded permutation of the rows.
std::pair<RawData, RawData> split(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, int n_train,
                                  RngStream& rng);

}  // namespace benel
