#pragma once

#include <cstdint>
#include <vector>

namespace benel {

/// Seeded random stream. pcg64 (128-bit LCG state, XSL-RR output); the
/// stream id selects the LCG increment, so distinct ids give disjoint
/// sequences and chains can run in parallel without sharing state.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream_id = 0);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type(0); }
  result_type operator()();

  /// Uniform draw on the open interval (0, 1).
  double uniform();
  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  unsigned __int128 state_;
  unsigned __int128 inc_;
  std::uint64_t seed_;
  std::uint64_t stream_id_;
};

/// Parameters of the generalized inverse Gaussian law with density
/// proportional to x^(nu-1) exp{-(chi/x + psi*x)/2} on x > 0.
struct GIGParams {
  double nu;
  double psi;
  double chi;

  /// Throws std::invalid_argument unless the (nu, psi, chi) sign
  /// constraints hold: nu > 0 needs psi > 0, chi >= 0; nu < 0 needs
  /// chi > 0, psi >= 0; nu = 0 needs both strictly positive.
  void validate() const;
};

double sample_normal(double mean, double sd, RngStream& rng);

/// Gamma with shape/rate parametrization (mean = shape/rate).
double sample_gamma(double shape, double rate, RngStream& rng);

/// Inverse gamma with shape a and scale b: density ~ x^(-a-1) exp(-b/x),
/// mean b/(a-1) for a > 1.
double sample_inverse_gamma(double shape, double scale, RngStream& rng);

double sample_student_t(double nu, RngStream& rng);

struct MixtureComponent {
  double mean;
  double sd;
  double weight;
};
double sample_mixture_normal(const std::vector<MixtureComponent>& components,
                             RngStream& rng);

/// One GIG(nu, psi, chi) draw. chi = 0 degenerates to Gamma(nu, psi/2) and
/// psi = 0 to the reciprocal of Gamma(-nu, chi/2).
double sample_gig(const GIGParams& params, RngStream& rng);

/// Gamma(shape, rate) conditioned on (lower, infinity). Inverse CDF on the
/// truncated region; falls back to rejection from a shifted exponential
/// when the truncation mass is below 1e-12.
double sample_truncated_gamma(double shape, double rate, double lower,
                              RngStream& rng);

/// Standardized Fernandez-Steel skew Student t: skewness parameter xi,
/// nu > 2 degrees of freedom, shifted and scaled to mean 0, variance 1.
double sample_skew_t(double nu, double xi, RngStream& rng);

/// Mean and standard deviation of the unstandardized Fernandez-Steel law
/// (used by sample_skew_t and exposed for tests).
struct SkewTMoments {
  double mean;
  double sd;
};
SkewTMoments skew_t_moments(double nu, double xi);

}  // namespace benel
