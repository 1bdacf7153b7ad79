#include "qfilt/likelihood.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace qfilt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSqrt1_2 = 0.70710678118654752440;

double log_normal_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

// Phi(b) - Phi(a) for standardized a < b, computed on the side that avoids
// cancellation.
double standard_interval(double a, double b) {
  if (!(a < b)) return 0.0;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kSqrt1_2) - std::erfc(b * kSqrt1_2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kSqrt1_2) - std::erfc(-a * kSqrt1_2));
  return 1.0 - 0.5 * std::erfc(-a * kSqrt1_2) - 0.5 * std::erfc(b * kSqrt1_2);
}

double log_standard_interval(double a, double b) {
  if (!(a < b)) return -kInf;
  if (a >= 0.0) {
    const double na = -b;
    b = -a;
    a = na;
  }
  if (b <= 0.0) {
    const double lb = log_normal_cdf(b);
    const double la = log_normal_cdf(a);
    if (la == -kInf) return lb;
    return lb + std::log1p(-std::exp(la - lb));
  }
  return std::log1p(-(normal_cdf(a) + normal_cdf(-b)));
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x * kSqrt1_2); }

double log_normal_cdf(double x) {
  if (x == -kInf) return -kInf;
  if (x >= 0.0) return std::log1p(-0.5 * std::erfc(x * kSqrt1_2));
  if (x > -35.0) return std::log(0.5 * std::erfc(-x * kSqrt1_2));
  // Mills-ratio asymptotic series
  const double r = 1.0 / (x * x);
  const double series = 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
  return log_normal_pdf(x) - std::log(-x) + std::log(series);
}

double gaussian_interval_probability(double a, double b, double var) {
  const double s = std::sqrt(var);
  return standard_interval(a / s, b / s);
}

double log_gaussian_interval_probability(double a, double b, double var) {
  const double s = std::sqrt(var);
  return log_standard_interval(a / s, b / s);
}

double exact_likelihood_at(double y, double offset, double R, const Quantizer& q) {
  const Interval r = region_bounds(y, q, offset);
  return gaussian_interval_probability(r.lo, r.hi, R);
}

double log_exact_likelihood_at(double y, double offset, double R, const Quantizer& q) {
  const Interval r = region_bounds(y, q, offset);
  return log_gaussian_interval_probability(r.lo, r.hi, R);
}

double exact_likelihood(double y, const Vec& x, const Vec& u, const LinearSSM& m, const Quantizer& q) {
  return exact_likelihood_at(y, m.output_offset(x, u), m.R, q);
}

double log_exact_likelihood(double y, const Vec& x, const Vec& u, const LinearSSM& m, const Quantizer& q) {
  return log_exact_likelihood_at(y, m.output_offset(x, u), m.R, q);
}

GLRule gl_rule(int K) {
  if (K < 1 || K > 64) throw InvalidArgument(fmt::format("Gauss-Legendre order must be in [1, 64], got {}", K));
  GLRule rule;
  rule.nodes.assign(static_cast<std::size_t>(K), 0.0);
  rule.weights.assign(static_cast<std::size_t>(K), 0.0);
  const int half = (K + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (K + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int j = 2; j <= K; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      if (K == 1) p0 = 1.0;
      dp = K * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // re-evaluate derivative at the converged node
    {
      double p0 = 1.0;
      double p1 = x;
      for (int j = 2; j <= K; ++j) {
        const double p2 = ((2.0 * j - 1.0) * x * p1 - (j - 1.0) * p0) / j;
        p0 = p1;
        p1 = p2;
      }
      dp = K == 1 ? 1.0 : K * (x * p1 - p0) / (x * x - 1.0);
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(K - 1 - i);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = w;
    rule.weights[hi] = w;
  }
  if (K % 2 == 1) rule.nodes[static_cast<std::size_t>(K / 2)] = 0.0;
  return rule;
}

LikelihoodMixtureParams likelihood_mixture_params(double y, const Quantizer& q, const GLRule& rule) {
  const Interval r = q.region(y);
  const std::size_t K = rule.nodes.size();
  LikelihoodMixtureParams p;
  p.scale.resize(K);
  p.pseudo_obs.resize(K);
  p.shift.resize(K);
  const bool lo_open = std::isinf(r.lo);
  const bool hi_open = std::isinf(r.hi);
  if (lo_open && hi_open) throw InvalidArgument("single-level quantizer carries no information");
  for (std::size_t k = 0; k < K; ++k) {
    const double node = rule.nodes[k];
    const double w = rule.weights[k];
    if (!lo_open && !hi_open) {
      const double half = 0.5 * (r.hi - r.lo);
      p.scale[k] = w * half;
      p.pseudo_obs[k] = node * half;
      p.shift[k] = -0.5 * (r.hi + r.lo);
    } else {
      const double g = 1.0 + node;
      p.scale[k] = 2.0 * w / (g * g);
      const double ratio = (1.0 - node) / g;
      if (lo_open) {
        p.pseudo_obs[k] = -ratio;
        p.shift[k] = -r.hi;
      } else {
        p.pseudo_obs[k] = ratio;
        p.shift[k] = -r.lo;
      }
    }
  }
  return p;
}

double mixture_likelihood(const LikelihoodMixtureParams& p, double offset, double R) {
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * R);
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double d = p.pseudo_obs[k] - offset - p.shift[k];
    acc += p.scale[k] * norm * std::exp(-0.5 * d * d / R);
  }
  return acc;
}

void SmoothQuantizerCfg::validate() const {
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("smooth quantizer step must be positive");
  if (!(sharpness > 0.0) || !std::isfinite(sharpness)) throw InvalidArgument("smooth quantizer sharpness rho must be positive");
}

SmoothQuantizerValue smooth_quantizer(double z, const SmoothQuantizerCfg& cfg) {
  const double k = std::floor(z / cfg.step);
  const double c = (k + 0.5) * cfg.step;
  const double d = z - c;
  const double amp = cfg.step / std::numbers::pi;
  return {amp * std::atan(d / cfg.sharpness) + c, amp * cfg.sharpness / (d * d + cfg.sharpness * cfg.sharpness)};
}

}  // namespace qfilt
