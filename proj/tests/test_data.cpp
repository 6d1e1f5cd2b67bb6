#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "benel/data.hpp"
#include "benel/rng.hpp"

using namespace benel;

TEST_CASE("standardization by hand on a 3x2 design") {
  Eigen::MatrixXd X(3, 2);
  X << 1.0, 10.0, 2.0, 20.0, 3.0, 30.0;
  Eigen::VectorXd y(3);
  y << 4.0, 5.0, 9.0;
  const Dataset d = standardize(X, y, {"a", "b"});

  // column 1: mean 2, centered (-1, 0, 1), sum of squares 2
  const double s1 = std::sqrt(2.0);
  CHECK(d.X(0, 0) == doctest::Approx(-1.0 / s1));
  CHECK(d.X(1, 0) == doctest::Approx(0.0));
  CHECK(d.X(2, 0) == doctest::Approx(1.0 / s1));
  CHECK(d.X.col(0).squaredNorm() == doctest::Approx(1.0));
  CHECK(d.X.col(1).squaredNorm() == doctest::Approx(1.0));
  CHECK(d.transform.x_means[1] == doctest::Approx(20.0));
  CHECK(d.transform.x_scales[1] == doctest::Approx(std::sqrt(200.0)));
  // y centered at 6
  CHECK(d.y.sum() == doctest::Approx(0.0));
  CHECK(d.y[2] == doctest::Approx(3.0));
  CHECK(d.names[0] == "a");
}

TEST_CASE("constant columns are rejected by name") {
  Eigen::MatrixXd X(3, 2);
  X << 1.0, 7.0, 2.0, 7.0, 3.0, 7.0;
  Eigen::VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  try {
    standardize(X, y, {"good", "flat"});
    FAIL("expected a throw");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("flat") != std::string::npos);
  }
}

TEST_CASE("transform round trip and prediction consistency") {
  RngStream rng(3, 0);
  Eigen::MatrixXd X(20, 3);
  Eigen::VectorXd y(20);
  for (int i = 0; i < 20; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = sample_normal(1.0, 2.0, rng);
    y[i] = sample_normal(5.0, 1.0, rng);
  }
  const Dataset d = standardize(X, y);
  // applying the stored transform to the training X reproduces d.X
  CHECK((apply_transform(d.transform, X) - d.X).norm() < 1e-12);
  // prediction at theta = 0 is the training mean of y
  const Eigen::VectorXd pred =
      predict_raw(d.transform, X.topRows(5), Eigen::VectorXd::Zero(3));
  for (int i = 0; i < 5; ++i) CHECK(pred[i] == doctest::Approx(y.mean()));
  // a perfect standardized fit maps back to the raw scale
  const Eigen::VectorXd theta_std =
      (d.X.transpose() * d.X).ldlt().solve(d.X.transpose() * d.y);
  const Eigen::VectorXd pred_all = predict_raw(d.transform, X, theta_std);
  CHECK((pred_all - (d.X * theta_std).eval() -
         Eigen::VectorXd::Constant(20, y.mean()))
            .norm() < 1e-10);
}

TEST_CASE("first simulation design has the declared correlation and signal") {
  RngStream rng(5, 0);
  const SimReplicate rep = generate_sim1(20000, 10, ErrorKind::normal, rng);
  CHECK(rep.train.X.rows() == 20000);
  CHECK(rep.train.X.cols() == 8);
  CHECK(rep.theta_true[0] == 3.0);
  CHECK(rep.theta_true[7] == 0.0);

  const Eigen::MatrixXd Xc =
      rep.train.X.rowwise() - rep.train.X.colwise().mean();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double corr = Xc.col(i).dot(Xc.col(j)) /
                          (Xc.col(i).norm() * Xc.col(j).norm());
      CHECK_MESSAGE(std::abs(corr - std::pow(0.5, std::abs(i - j))) < 0.03,
                    "corr(" << i << "," << j << ") = " << corr);
    }
  // error variance 9 under the normal setting
  const Eigen::VectorXd eps = rep.train.y - rep.train.X * rep.theta_true;
  CHECK(eps.squaredNorm() / eps.size() == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("second simulation design has duplicate blocks") {
  RngStream rng(7, 0);
  const SimReplicate rep = generate_sim2(5000, 10, ErrorKind::normal, 3.0, rng);
  CHECK(rep.train.X.cols() == 30);
  CHECK(rep.theta_true.head(15).minCoeff() == 3.0);
  CHECK(rep.theta_true.tail(15).maxCoeff() == 0.0);

  const Eigen::MatrixXd Xc =
      rep.train.X.rowwise() - rep.train.X.colwise().mean();
  auto corr = [&](int i, int j) {
    return Xc.col(i).dot(Xc.col(j)) / (Xc.col(i).norm() * Xc.col(j).norm());
  };
  // inside a block the share of common signal is 1/1.01
  CHECK(corr(0, 1) == doctest::Approx(1.0 / 1.01).epsilon(0.01));
  CHECK(corr(5, 9) == doctest::Approx(1.0 / 1.01).epsilon(0.01));
  CHECK(corr(10, 14) == doctest::Approx(1.0 / 1.01).epsilon(0.01));
  // across blocks and against the independent tail: near zero
  CHECK(std::abs(corr(0, 5)) < 0.05);
  CHECK(std::abs(corr(0, 20)) < 0.05);
  CHECK(std::abs(corr(16, 29)) < 0.05);
  // error sd 15 under the normal setting
  const Eigen::VectorXd eps = rep.train.y - rep.train.X * rep.theta_true;
  CHECK(eps.squaredNorm() / eps.size() == doctest::Approx(225.0).epsilon(0.1));
}

TEST_CASE("error distributions have their stated spread") {
  RngStream rng(11, 0);
  const SimReplicate mix = generate_sim1(30000, 10, ErrorKind::mixture, rng);
  Eigen::VectorXd eps = mix.train.y - mix.train.X * mix.theta_true;
  // mixture of N(-3,1), N(3,1): mean 0, variance 10
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.05));
  CHECK(eps.squaredNorm() / eps.size() == doctest::Approx(10.0).epsilon(0.05));

  const SimReplicate st = generate_sim1(30000, 10, ErrorKind::skew_t, rng);
  eps = st.train.y - st.train.X * st.theta_true;
  // 3 x standardized skew t: mean 0, variance 9
  CHECK(eps.mean() == doctest::Approx(0.0).epsilon(0.05));
  CHECK(eps.squaredNorm() / eps.size() == doctest::Approx(9.0).epsilon(0.05));
}

TEST_CASE("median on odd and even lengths") {
  CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
  CHECK(median({7.0}) == doctest::Approx(7.0));
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("bootstrap standard error is reproducible and sane") {
  RngStream rng(13, 0);
  std::vector<double> xs(200);
  for (auto& x : xs) x = sample_normal(10.0, 2.0, rng);
  RngStream b1(17, 0), b2(17, 0);
  const double se1 = bootstrap_se_of_median(xs, b1);
  const double se2 = bootstrap_se_of_median(xs, b2);
  CHECK(se1 == se2);
  // asymptotic se of a normal median: 1.2533 * sd / sqrt(n) ~ 0.177
  CHECK(se1 > 0.08);
  CHECK(se1 < 0.35);
}

TEST_CASE("replication harness recovers the oracle prediction error") {
  // Predicting with the true coefficients leaves exactly the noise, so
  // the median MSPE over replications sits near var(eps) = 9.
  SimDesign design;
  design.kind = SimKind::sim1;
  design.n_train = 50;
  design.n_test = 400;
  design.error_kind = ErrorKind::normal;
  const Eigen::VectorXd theta_true = sim_theta_true(SimKind::sim1);
  const FitProcedure oracle = [&](const Dataset& train, std::uint64_t) {
    ReplicationFit fit;
    // the harness predicts on the standardized scale
    fit.theta_selected =
        theta_true.array() * train.transform.x_scales.array();
    fit.converged = true;
    return fit;
  };
  const EvalReport report = evaluate_replications(design, oracle, 30, 101);
  CHECK(report.mspe_per_replication.size() == 30);
  CHECK(report.convergence_failures == 0);
  CHECK(report.mmspe == doctest::Approx(9.0).epsilon(0.1));
  CHECK(report.se_bootstrap > 0.0);
  // no coefficient was ever zeroed by the oracle except the true zeros
  CHECK(report.exclusion_frequency[0] == 0.0);
  CHECK(report.exclusion_frequency[2] == 100.0);
}

TEST_CASE("csv loading, happy path and error reporting") {
  const std::string path = "test_data_tmp.csv";
  {
    std::ofstream out(path);
    out << "a,b,resp\n1,2,3\n4,5,6\n7, 8 ,9\n";
  }
  const CsvData d = load_csv(path, "resp");
  CHECK(d.X.rows() == 3);
  CHECK(d.X.cols() == 2);
  CHECK(d.y[1] == doctest::Approx(6.0));
  CHECK(d.X(2, 1) == doctest::Approx(8.0));
  CHECK(d.names[0] == "a");
  CHECK(d.names[1] == "b");

  {
    std::ofstream out(path);
    out << "a b resp\n1 2 3\n4 5 6\n";
  }
  const CsvData ws = load_csv(path, "resp");  // whitespace-delimited fallback
  CHECK(ws.X(1, 0) == doctest::Approx(4.0));

  {
    std::ofstream out(path);
    out << "a,b\n1,2\n1,x\n";
  }
  CHECK_THROWS_WITH_AS(load_csv(path, "b"),
                       doctest::Contains("line 3"), std::runtime_error);

  {
    std::ofstream out(path);
    out << "a,b\n1\n";
  }
  CHECK_THROWS_AS(load_csv(path, "b"), std::runtime_error);
  CHECK_THROWS_AS(load_csv(path, "missing"), std::runtime_error);
  CHECK_THROWS_AS(load_csv("no_such_file.csv", "y"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("train/test split is seeded and partitions the data") {
  RngStream rng(19, 0);
  Eigen::MatrixXd X(10, 2);
  Eigen::VectorXd y(10);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = i;
    X(i, 1) = 2 * i;
    y[i] = 100 + i;
  }
  RngStream r1(23, 0), r2(23, 0);
  const auto [tr1, te1] = split(X, y, 7, r1);
  const auto [tr2, te2] = split(X, y, 7, r2);
  CHECK(tr1.X.rows() == 7);
  CHECK(te1.X.rows() == 3);
  CHECK((tr1.X - tr2.X).norm() == 0.0);
  CHECK((te1.y - te2.y).norm() == 0.0);
  // rows keep their X-y pairing and every row appears exactly once
  double ysum = tr1.y.sum() + te1.y.sum();
  CHECK(ysum == doctest::Approx(y.sum()));
  for (int i = 0; i < 7; ++i) CHECK(tr1.y[i] == 100 + tr1.X(i, 0));
  CHECK_THROWS_AS(split(X, y, 10, r1), std::invalid_argument);
}
