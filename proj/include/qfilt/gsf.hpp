#pragma once

#include "qfilt/likelihood.hpp"
#include "qfilt/mixture.hpp"
#include "qfilt/model.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace qfilt {

struct GsfCfg {
  int K = 10;          // quadrature order
  int M_max = 50;      // filter components kept after each measurement update
  int S_red = 10;      // backward components kept after each backward step
  ReduceCfg reduce;

  void validate() const;
};

/// Quadrature parameters for the measurement at time t (0-based) with level y.
using ParamsProvider = std::function<LikelihoodMixtureParams(std::size_t t, double y)>;

/// Provider built from a quantizer and a Gauss-Legendre rule.
ParamsProvider quantized_params(const Quantizer& q, int K);
/// Linear-Gaussian output p(y|x) = N(y; Cx + Du, R) written as a one-term
/// mixture. Used to check the recursions against KF/RTS.
ParamsProvider linear_output_params();

struct GsfStep {
  GaussianMixture posterior;
  GaussianMixture predicted;
};

/// One measurement update (K-fold expansion, normalization, reduction to
/// M_max) followed by the time update.
GsfStep gsf_filter_step(const GaussianMixture& prior, const Vec& u, const LinearSSM& m,
                        const LikelihoodMixtureParams& params, int M_max, const ReduceCfg& reduce = {});

struct GsfResult {
  std::vector<GaussianMixture> filtered;   // p(x_t | y_{1:t})
  std::vector<GaussianMixture> predicted;  // p(x_{t+1} | y_{1:t})
  std::vector<LikelihoodMixtureParams> params;

  std::size_t size() const { return filtered.size(); }
};

GsfResult gsf_filter(const LinearSSM& m, const ParamsProvider& params, const GsfCfg& cfg, const VecSeq& u,
                     const std::vector<double>& y);
GsfResult gsf_filter(const LinearSSM& m, const Quantizer& q, const GsfCfg& cfg, const VecSeq& u,
                     const std::vector<double>& y);

/// eps * exp(log_lambda) * exp(-1/2 (x'F x - 2 G'x + H))
struct BackwardComponent {
  double eps = 1.0;
  double log_lambda = 0.0;
  Mat F;
  Vec G;
  double H = 0.0;

  double log_value(const Vec& x) const;
};

/// exp(log_delta) * N(x; z, U)
struct MomentComponent {
  double log_delta = 0.0;
  Vec z;
  Mat U;
};

/// Completes the square. Returns nothing when F is not safely invertible
/// (reciprocal condition below 1e-12).
std::optional<MomentComponent> canonical_to_moment(const BackwardComponent& c);
/// Inverse of canonical_to_moment; `eps` is carried as the component weight
/// and the remaining scale goes into lambda.
BackwardComponent moment_to_canonical(const MomentComponent& c, double eps = 1.0);

/// Reduced backward likelihood p(y_{t:N} | x_t).
struct ReducedBackward {
  std::vector<MomentComponent> normalizable;
  std::vector<BackwardComponent> singular;  // kept verbatim

  std::size_t size() const { return normalizable.size() + singular.size(); }
};

struct BackwardStep {
  std::vector<BackwardComponent> canonical;
  ReducedBackward reduced;
};

/// Backward measurement update without reduction: every incoming component
/// times every quadrature term of p(y_t | x_t).
std::vector<BackwardComponent> backward_measurement_expand(const std::vector<BackwardComponent>& pred, const Vec& u,
                                                           const LinearSSM& m, const LikelihoodMixtureParams& p);

/// Backward information at t = N from the likelihood of y_N alone, reduced.
BackwardStep backward_init(const Vec& u, const LinearSSM& m, const LikelihoodMixtureParams& params, int S_max,
                           const ReduceCfg& reduce = {});

/// Backward prediction through the dynamics (input u_t), measurement update
/// with the parameters of y_t, then reduction to at most S_max components.
BackwardStep backward_step(const std::vector<BackwardComponent>& next, const Vec& u, const LinearSSM& m,
                           const LikelihoodMixtureParams& params, int S_max, const ReduceCfg& reduce = {});

/// Product of the one-step predicted mixture with the backward likelihood,
/// normalized.
GaussianMixture gss_combine_step(const GaussianMixture& predicted, const ReducedBackward& backward);

struct GssResult {
  std::vector<Gaussian> moments;             // mean and covariance of p(x_t | y_{1:N})
  std::vector<GaussianMixture> mixtures;     // filled when requested
};

GssResult gss_smoother(const LinearSSM& m, const GsfResult& forward, const GsfCfg& cfg, const VecSeq& u,
                       bool keep_mixtures = false);

/// Rows: t, component, weight, mean_1..mean_n, cov_11..cov_nn (row-major); t starts at 1.
void write_mixture_csv(std::ostream& os, const std::vector<GaussianMixture>& mixtures);

}  // namespace qfilt
