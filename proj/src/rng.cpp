#include "benel/rng.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace benel {

namespace {

constexpr unsigned __int128 kPcgMult =
    (static_cast<unsigned __int128>(0x2360ed051fc65da4ULL) << 64) |
    0x4385df649fccf645ULL;

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id) {
  std::uint64_t s = seed;
  const std::uint64_t hi = splitmix64(s);
  const std::uint64_t lo = splitmix64(s);
  std::uint64_t t = ~stream_id;
  const std::uint64_t inc_hi = splitmix64(t);
  const std::uint64_t inc_lo = splitmix64(t);
  inc_ = ((((static_cast<unsigned __int128>(inc_hi) << 64) | inc_lo) << 1) | 1);
  state_ = 0;
  (*this)();
  state_ += (static_cast<unsigned __int128>(hi) << 64) | lo;
  (*this)();
}

RngStream::result_type RngStream::operator()() {
  state_ = state_ * kPcgMult + inc_;
  const std::uint64_t xored =
      static_cast<std::uint64_t>(state_ >> 64) ^ static_cast<std::uint64_t>(state_);
  const unsigned rot = static_cast<unsigned>(state_ >> 122);
  return (xored >> rot) | (xored << ((64u - rot) & 63u));
}

double RngStream::uniform() {
  return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
}

void GIGParams::validate() const {
  const bool ok =
      std::isfinite(nu) && std::isfinite(psi) && std::isfinite(chi) &&
      ((nu > 0 && psi > 0 && chi >= 0) || (nu < 0 && chi > 0 && psi >= 0) ||
       (nu == 0 && psi > 0 && chi > 0));
  if (!ok) throw std::invalid_argument("sample_gig: invalid (nu, psi, chi)");
}

double sample_normal(double mean, double sd, RngStream& rng) {
  if (!(sd >= 0) || !std::isfinite(mean))
    throw std::invalid_argument("sample_normal: bad parameters");
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return mean + sd * std::sqrt(-2.0 * std::log(u1)) *
                    std::cos(2.0 * std::numbers::pi * u2);
}

double sample_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0) || !(rate > 0))
    throw std::invalid_argument("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    // boost by one and correct with a power of a uniform
    const double g = sample_gamma(shape + 1.0, rate, rng);
    return g * std::pow(rng.uniform(), 1.0 / shape);
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = sample_normal(0.0, 1.0, rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
      return d * v / rate;
  }
}

double sample_inverse_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0) || !(scale > 0))
    throw std::invalid_argument("sample_inverse_gamma: bad parameters");
  return 1.0 / sample_gamma(shape, scale, rng);
}

double sample_student_t(double nu, RngStream& rng) {
  if (!(nu > 0)) throw std::invalid_argument("sample_student_t: nu must be > 0");
  const double z = sample_normal(0.0, 1.0, rng);
  const double g = sample_gamma(0.5 * nu, 0.5 * nu, rng);
  return z / std::sqrt(g);
}

double sample_mixture_normal(const std::vector<MixtureComponent>& components,
                             RngStream& rng) {
  if (components.empty())
    throw std::invalid_argument("sample_mixture_normal: no components");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight >= 0) || !(c.sd >= 0))
      throw std::invalid_argument("sample_mixture_normal: bad component");
    total += c.weight;
  }
  if (!(total > 0))
    throw std::invalid_argument("sample_mixture_normal: zero total weight");
  double u = rng.uniform() * total;
  for (const auto& c : components) {
    u -= c.weight;
    if (u <= 0.0) return sample_normal(c.mean, c.sd, rng);
  }
  return sample_normal(components.back().mean, components.back().sd, rng);
}

namespace {

// Two-parameter GIG: density ~ x^(lam-1) exp(-beta/2 (x + 1/x)), lam >= 0.
double gig_two_param(double lam, double beta, RngStream& rng) {
  const double mode =
      lam >= 1.0
          ? (lam - 1.0 + std::sqrt((lam - 1.0) * (lam - 1.0) + beta * beta)) / beta
          : beta / (std::sqrt((1.0 - lam) * (1.0 - lam) + beta * beta) + (1.0 - lam));
  const auto log_q = [&](double x) {
    return (lam - 1.0) * std::log(x) - 0.5 * beta * (x + 1.0 / x);
  };
  const double lq_mode = log_q(mode);

  if (lam > 0.0 && lam < 1.0 &&
      beta <= std::min(0.5, (2.0 / 3.0) * std::sqrt(1.0 - lam))) {
    // small-beta regime: two-piece hat x^(lam-1) on (0, x0], exponential tail
    const double x0 = beta / (1.0 - lam);
    const double area1 = std::pow(x0, lam) / lam;
    const double area2 =
        std::pow(x0, lam - 1.0) * (2.0 / beta) * std::exp(-0.5 * beta * x0);
    const double w1 = area1 / (area1 + area2);
    for (;;) {
      double x;
      double log_accept;
      if (rng.uniform() < w1) {
        x = x0 * std::pow(rng.uniform(), 1.0 / lam);
        log_accept = -0.5 * beta * (x + 1.0 / x);
      } else {
        x = x0 - (2.0 / beta) * std::log(rng.uniform());
        log_accept = (lam - 1.0) * std::log(x / x0) - 0.5 * beta / x;
      }
      if (std::log(rng.uniform()) <= log_accept) return x;
    }
  }

  if (lam <= 1.0 && beta <= 1.0) {
    // ratio-of-uniforms without mode shift
    const double xplus =
        (1.0 + lam + std::sqrt((1.0 + lam) * (1.0 + lam) + beta * beta)) / beta;
    const double uplus = xplus * std::exp(0.5 * (log_q(xplus) - lq_mode));
    for (;;) {
      const double u = uplus * rng.uniform();
      const double v = rng.uniform();
      const double x = u / v;
      if (2.0 * std::log(v) <= log_q(x) - lq_mode) return x;
    }
  }

  // ratio-of-uniforms with mode shift (lam > 1 or beta > 1)
  const double a = -(2.0 * (lam + 1.0) / beta + mode);
  const double b = 2.0 * (lam - 1.0) * mode / beta - 1.0;
  const double c = mode;
  const double pp = b - a * a / 3.0;
  const double qq = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double phi = std::acos(std::clamp(
      -qq / (2.0 * std::sqrt(-pp * pp * pp / 27.0)), -1.0, 1.0));
  const double fak = 2.0 * std::sqrt(-pp / 3.0);
  const double y_hi = fak * std::cos(phi / 3.0) - a / 3.0;
  const double y_lo = fak * std::cos(phi / 3.0 + 4.0 * std::numbers::pi / 3.0) - a / 3.0;
  const double uplus = (y_hi - mode) * std::exp(0.5 * (log_q(y_hi) - lq_mode));
  const double uminus = (y_lo - mode) * std::exp(0.5 * (log_q(y_lo) - lq_mode));
  for (;;) {
    const double u = uminus + rng.uniform() * (uplus - uminus);
    const double v = rng.uniform();
    const double x = u / v + mode;
    if (x > 0.0 && 2.0 * std::log(v) <= log_q(x) - lq_mode) return x;
  }
}

}  // namespace

double sample_gig(const GIGParams& params, RngStream& rng) {
  params.validate();
  if (params.chi == 0.0) return sample_gamma(params.nu, 0.5 * params.psi, rng);
  if (params.psi == 0.0)
    return 1.0 / sample_gamma(-params.nu, 0.5 * params.chi, rng);
  const double alpha = std::sqrt(params.chi / params.psi);
  const double beta = std::sqrt(params.psi * params.chi);
  if (params.nu >= 0.0) return alpha * gig_two_param(params.nu, beta, rng);
  return alpha / gig_two_param(-params.nu, beta, rng);
}

double sample_truncated_gamma(double shape, double rate, double lower,
                              RngStream& rng) {
  if (!(shape > 0) || !(rate > 0) || !(lower >= 0))
    throw std::invalid_argument("sample_truncated_gamma: bad parameters");
  if (lower == 0.0) return sample_gamma(shape, rate, rng);
  const double mass_below = boost::math::gamma_p(shape, rate * lower);
  const double tail = 1.0 - mass_below;
  if (tail > 1e-12) {
    double u = mass_below + rng.uniform() * tail;
    u = std::min(u, 1.0 - 1e-16);
    const double x = boost::math::gamma_p_inv(shape, u) / rate;
    return std::max(x, std::nextafter(lower, std::numeric_limits<double>::infinity()));
  }
  // deep tail: rejection from a shifted exponential tangent at `lower`
  const double lam = rate - (shape - 1.0) / lower;
  if (!(lam > 0))
    throw std::runtime_error("sample_truncated_gamma: degenerate tail envelope");
  for (;;) {
    const double x = lower - std::log(rng.uniform()) / lam;
    const double log_accept =
        (shape - 1.0) * (std::log(x / lower) - (x - lower) / lower);
    if (std::log(rng.uniform()) <= log_accept) return x;
  }
}

SkewTMoments skew_t_moments(double nu, double xi) {
  // E|T| for Student t and the Fernandez-Steel first/second moments
  const double abs_moment =
      2.0 * std::sqrt(nu) *
      std::exp(std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu)) /
      (std::sqrt(std::numbers::pi) * (nu - 1.0));
  const double mean = abs_moment * (xi - 1.0 / xi);
  const double second = nu / (nu - 2.0) *
                        (xi * xi * xi + 1.0 / (xi * xi * xi)) / (xi + 1.0 / xi);
  return {mean, std::sqrt(second - mean * mean)};
}

double sample_skew_t(double nu, double xi, RngStream& rng) {
  if (!(nu > 2.0))
    throw std::invalid_argument("sample_skew_t: nu must exceed 2");
  if (!(xi > 0.0)) throw std::invalid_argument("sample_skew_t: xi must be positive");
  const SkewTMoments m = skew_t_moments(nu, xi);
  const double t = std::abs(sample_student_t(nu, rng));
  const double p_plus = xi * xi / (1.0 + xi * xi);
  const double x = rng.uniform() < p_plus ? xi * t : -t / xi;
  return (x - m.mean) / m.sd;
}

}  // namespace benel
