#include "benel/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace benel {

Dataset standardize(const Eigen::MatrixXd& raw_X, const Eigen::VectorXd& raw_y,
                    std::vector<std::string> names) {
  const auto n = raw_X.rows();
  const auto p = raw_X.cols();
  if (raw_y.size() != n)
    throw std::invalid_argument("standardize: X and y row mismatch");
  if (n < 2) throw std::invalid_argument("standardize: need at least 2 rows");
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j)
      names.push_back("x" + std::to_string(j + 1));

  Dataset data;
  data.transform.x_means = raw_X.colwise().mean();
  data.X = raw_X.rowwise() - data.transform.x_means.transpose();
  data.transform.x_scales.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double ss = data.X.col(j).squaredNorm();
    if (ss <= 1e-24)
      throw std::invalid_argument("standardize: constant column '" + names[j] +
                                  "'");
    data.transform.x_scales[j] = std::sqrt(ss);
    data.X.col(j) /= data.transform.x_scales[j];
  }
  data.transform.y_mean = raw_y.mean();
  data.y = raw_y.array() - data.transform.y_mean;
  data.names = std::move(names);
  return data;
}

Eigen::MatrixXd apply_transform(const Transform& t, const Eigen::MatrixXd& raw_X) {
  Eigen::MatrixXd X = raw_X.rowwise() - t.x_means.transpose();
  for (Eigen::Index j = 0; j < X.cols(); ++j) X.col(j) /= t.x_scales[j];
  return X;
}

Eigen::VectorXd predict_raw(const Transform& t, const Eigen::MatrixXd& raw_X,
                            const Eigen::VectorXd& theta_std) {
  return (apply_transform(t, raw_X) * theta_std).array() + t.y_mean;
}

Eigen::VectorXd sim_theta_true(SimKind kind) {
  if (kind == SimKind::sim1) {
    Eigen::VectorXd theta(8);
    theta << 3, 1.5, 0, 0, 2, 0, 0, 0;
    return theta;
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(30);
  theta.head(15).setConstant(3.0);
  return theta;
}

namespace {

double draw_error_sim1(ErrorKind kind, RngStream& rng) {
  switch (kind) {
    case ErrorKind::normal:
      return sample_normal(0.0, 3.0, rng);
    case ErrorKind::mixture:
      return sample_mixture_normal({{-3.0, 1.0, 0.5}, {3.0, 1.0, 0.5}}, rng);
    case ErrorKind::skew_t:
      return 3.0 * sample_skew_t(30.0, 1.5, rng);
    case ErrorKind::student_t_scaled:
      return 10.0 * sample_student_t(3.0, rng);
  }
  throw std::logic_error("draw_error_sim1: unknown error kind");
}

double draw_error_sim2(ErrorKind kind, double skew_t_scale, RngStream& rng) {
  switch (kind) {
    case ErrorKind::normal:
      return sample_normal(0.0, 15.0, rng);
    case ErrorKind::mixture:
      return sample_mixture_normal({{-3.0, 1.0, 0.5}, {3.0, 1.0, 0.5}}, rng);
    case ErrorKind::skew_t:
      return skew_t_scale * sample_skew_t(30.0, 1.5, rng);
    case ErrorKind::student_t_scaled:
      return 10.0 * sample_student_t(3.0, rng);
  }
  throw std::logic_error("draw_error_sim2: unknown error kind");
}

Eigen::MatrixXd sim1_design(int n, RngStream& rng) {
  constexpr int p = 8;
  Eigen::MatrixXd corr(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) corr(i, j) = std::pow(0.5, std::abs(i - j));
  const Eigen::MatrixXd chol = corr.llt().matrixL();
  Eigen::MatrixXd X(n, p);
  Eigen::VectorXd z(p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) z[j] = sample_normal(0.0, 1.0, rng);
    X.row(i) = (chol * z).transpose();
  }
  return X;
}

Eigen::MatrixXd sim2_design(int n, RngStream& rng) {
  constexpr int p = 30;
  Eigen::MatrixXd X(n, p);
  for (int i = 0; i < n; ++i) {
    const double z1 = sample_normal(0.0, 1.0, rng);
    const double z2 = sample_normal(0.0, 1.0, rng);
    const double z3 = sample_normal(0.0, 1.0, rng);
    for (int j = 0; j < 5; ++j) X(i, j) = z1 + sample_normal(0.0, 0.1, rng);
    for (int j = 5; j < 10; ++j) X(i, j) = z2 + sample_normal(0.0, 0.1, rng);
    for (int j = 10; j < 15; ++j) X(i, j) = z3 + sample_normal(0.0, 0.1, rng);
    for (int j = 15; j < 30; ++j) X(i, j) = sample_normal(0.0, 1.0, rng);
  }
  return X;
}

}  // namespace

SimReplicate generate_sim1(int n_train, int n_test, ErrorKind error_kind,
                           RngStream& rng) {
  SimReplicate rep;
  rep.theta_true = sim_theta_true(SimKind::sim1);
  rep.train.X = sim1_design(n_train, rng);
  rep.test.X = sim1_design(n_test, rng);
  rep.train.y = rep.train.X * rep.theta_true;
  rep.test.y = rep.test.X * rep.theta_true;
  for (int i = 0; i < n_train; ++i)
    rep.train.y[i] += draw_error_sim1(error_kind, rng);
  for (int i = 0; i < n_test; ++i)
    rep.test.y[i] += draw_error_sim1(error_kind, rng);
  return rep;
}

SimReplicate generate_sim2(int n_train, int n_test, ErrorKind error_kind,
                           double skew_t_scale, RngStream& rng) {
  SimReplicate rep;
  rep.theta_true = sim_theta_true(SimKind::sim2);
  rep.train.X = sim2_design(n_train, rng);
  rep.test.X = sim2_design(n_test, rng);
  rep.train.y = rep.train.X * rep.theta_true;
  rep.test.y = rep.test.X * rep.theta_true;
  for (int i = 0; i < n_train; ++i)
    rep.train.y[i] += draw_error_sim2(error_kind, skew_t_scale, rng);
  for (int i = 0; i < n_test; ++i)
    rep.test.y[i] += draw_error_sim2(error_kind, skew_t_scale, rng);
  return rep;
}

SimReplicate generate_design(const SimDesign& design, RngStream& rng) {
  if (design.kind == SimKind::sim1)
    return generate_sim1(design.n_train, design.n_test, design.error_kind, rng);
  return generate_sim2(design.n_train, design.n_test, design.error_kind,
                       design.skew_t_scale, rng);
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty input");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double bootstrap_se_of_median(const std::vector<double>& values,
                              RngStream& rng, int n_boot) {
  if (values.size() < 2) return 0.0;
  std::vector<double> medians(n_boot);
  std::vector<double> resample(values.size());
  for (int b = 0; b < n_boot; ++b) {
    for (size_t i = 0; i < values.size(); ++i) {
      const size_t idx = size_t(rng.uniform() * double(values.size()));
      resample[i] = values[std::min(idx, values.size() - 1)];
    }
    medians[b] = median(resample);
  }
  const double mean =
      std::accumulate(medians.begin(), medians.end(), 0.0) / double(n_boot);
  double ss = 0.0;
  for (double m : medians) ss += (m - mean) * (m - mean);
  return std::sqrt(ss / double(n_boot - 1));
}

EvalReport evaluate_replications(const SimDesign& design,
                                 const FitProcedure& fit, int n_reps,
                                 std::uint64_t seed) {
  if (n_reps < 1)
    throw std::invalid_argument("evaluate_replications: n_reps must be >= 1");
  EvalReport report;
  Eigen::VectorXd exclusions;
  for (int r = 0; r < n_reps; ++r) {
    RngStream rng(seed, std::uint64_t(r));
    const SimReplicate rep = generate_design(design, rng);
    const Dataset train = standardize(rep.train.X, rep.train.y);
    const ReplicationFit fitted = fit(train, seed + std::uint64_t(r));
    if (!fitted.converged) ++report.convergence_failures;

    const Eigen::VectorXd pred =
        predict_raw(train.transform, rep.test.X, fitted.theta_selected);
    report.mspe_per_replication.push_back(
        (pred - rep.test.y).squaredNorm() / double(rep.test.y.size()));

    if (exclusions.size() == 0)
      exclusions = Eigen::VectorXd::Zero(fitted.theta_selected.size());
    for (Eigen::Index j = 0; j < fitted.theta_selected.size(); ++j)
      if (fitted.theta_selected[j] == 0.0) exclusions[j] += 1.0;
  }
  report.mmspe = median(report.mspe_per_replication);
  RngStream boot_rng(seed, 0xB007u);
  report.se_bootstrap =
      bootstrap_se_of_median(report.mspe_per_replication, boot_rng);
  report.exclusion_frequency = exclusions * (100.0 / double(n_reps));
  return report;
}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> tokens;
  std::string cell;
  std::istringstream ss(line);
  if (line.find(',') != std::string::npos) {
    while (std::getline(ss, cell, ',')) {
      // trim surrounding whitespace
      const auto first = cell.find_first_not_of(" \t\r");
      const auto last = cell.find_last_not_of(" \t\r");
      tokens.push_back(first == std::string::npos
                           ? std::string{}
                           : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',') tokens.emplace_back();
  } else {
    while (ss >> cell) tokens.push_back(cell);
  }
  return tokens;
}

}  // namespace

CsvData load_csv(const std::string& path, const std::string& response_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv: empty file '" + path + "'");
  const std::vector<std::string> header = tokenize(line);
  if (header.empty()) throw std::runtime_error("load_csv: empty header row");

  Eigen::Index response_idx = -1;
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == response_column) response_idx = Eigen::Index(j);
  if (response_idx < 0)
    throw std::runtime_error("load_csv: response column '" + response_column +
                             "' not found");

  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = tokenize(line);
    if (cells.size() != header.size())
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " +
                               std::to_string(header.size()));
    std::vector<double> row;
    for (size_t j = 0; j < cells.size(); ++j) {
      if (cells[j].empty())
        throw std::runtime_error("load_csv: missing value at line " +
                                 std::to_string(line_no) + ", column " +
                                 header[j]);
      size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[j].size())
        throw std::runtime_error("load_csv: non-numeric cell '" + cells[j] +
                                 "' at line " + std::to_string(line_no) +
                                 ", column " + header[j]);
      row.push_back(value);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw std::runtime_error("load_csv: no data rows in '" + path + "'");

  CsvData data;
  data.X.resize(Eigen::Index(rows.size()), Eigen::Index(header.size()) - 1);
  data.y.resize(Eigen::Index(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index col = 0;
    for (size_t j = 0; j < header.size(); ++j) {
      if (Eigen::Index(j) == response_idx)
        data.y[Eigen::Index(i)] = rows[i][j];
      else
        data.X(Eigen::Index(i), col++) = rows[i][j];
    }
  }
  for (size_t j = 0; j < header.size(); ++j)
    if (Eigen::Index(j) != response_idx) data.names.push_back(header[j]);
  return data;
}

std::pair<RawData, RawData> split(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y, int n_train,
                                  RngStream& rng) {
  const auto n = X.rows();
  if (y.size() != n) throw std::invalid_argument("split: X and y mismatch");
  if (n_train < 1 || n_train >= n)
    throw std::invalid_argument("split: n_train out of range");
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index(0));
  for (Eigen::Index i = n - 1; i > 0; --i) {  // Fisher-Yates with the stream
    const Eigen::Index j =
        std::min<Eigen::Index>(Eigen::Index(rng.uniform() * double(i + 1)), i);
    std::swap(order[i], order[j]);
  }
  RawData train;
  RawData test;
  train.X.resize(n_train, X.cols());
  train.y.resize(n_train);
  test.X.resize(n - n_train, X.cols());
  test.y.resize(n - n_train);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (i < n_train) {
      train.X.row(i) = X.row(order[i]);
      train.y[i] = y[order[i]];
    } else {
      test.X.row(i - n_train) = X.row(order[i]);
      test.y[i - n_train] = y[order[i]];
    }
  }
  return {train, test};
}

}  // namespace benel
