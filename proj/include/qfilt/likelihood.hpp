#pragma once

#include "qfilt/model.hpp"

#include <vector>

namespace qfilt {

/// Standard normal CDF via erfc (absolute error ~1e-16).
double normal_cdf(double x);

/// log Phi(x), accurate far into the lower tail.
double log_normal_cdf(double x);

/// P(a <= v < b) for v ~ N(0, var). Ends may be infinite.
double gaussian_interval_probability(double a, double b, double var);

/// log P(a <= v < b) for v ~ N(0, var), without underflow in the tails.
double log_gaussian_interval_probability(double a, double b, double var);

/// p(y | x) = Phi(b / sqrt(R)) - Phi(a / sqrt(R)) with (a, b) the region of
/// y shifted by C x + D u.
double exact_likelihood(double y, const Vec& x, const Vec& u, const LinearSSM& m, const Quantizer& q);
double log_exact_likelihood(double y, const Vec& x, const Vec& u, const LinearSSM& m, const Quantizer& q);

/// Same, with the output offset C x + D u already evaluated.
double exact_likelihood_at(double y, double offset, double R, const Quantizer& q);
double log_exact_likelihood_at(double y, double offset, double R, const Quantizer& q);

/// Gauss-Legendre rule on [-1, 1].
struct GLRule {
  std::vector<double> nodes;    // strictly increasing
  std::vector<double> weights;  // positive, sum to 2

  int order() const { return static_cast<int>(nodes.size()); }
};

/// Nodes and weights by Newton iteration on the Legendre polynomial P_K.
/// 1 <= K <= 64.
GLRule gl_rule(int K);

/// Per-node parameters of the Gaussian-sum likelihood model
///   p(y | x) ~= sum_tau scale[tau] * N(pseudo_obs[tau]; C x + D u + shift[tau], R).
struct LikelihoodMixtureParams {
  std::vector<double> scale;
  std::vector<double> pseudo_obs;
  std::vector<double> shift;

  std::size_t size() const { return scale.size(); }
};

/// Quadrature parameters for observed level y. Interior regions use the
/// affine map of [-1, 1] onto [q_{k-1}, q_k]; the two semi-infinite regions
/// of a finite quantizer use the rational map s -> (1 - s) / (1 + s).
LikelihoodMixtureParams likelihood_mixture_params(double y, const Quantizer& q, const GLRule& rule);

/// Evaluates the Gaussian-sum likelihood at the given output offset.
double mixture_likelihood(const LikelihoodMixtureParams& p, double offset, double R);

/// Arctan surrogate of the uniform quantizer used by the EKF.
struct SmoothQuantizerCfg {
  double step = 1.0;
  double sharpness = 0.001;  // rho

  void validate() const;
};

struct SmoothQuantizerValue {
  double h;
  double dh;
};

/// With k = floor(z / step) and c = (k + 1/2) step:
///   h = (step / pi) atan((z - c) / rho) + c,  dh = (step / pi) rho / ((z - c)^2 + rho^2).
SmoothQuantizerValue smooth_quantizer(double z, const SmoothQuantizerCfg& cfg);

}  // namespace qfilt
