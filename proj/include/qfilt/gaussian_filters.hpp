#pragma once

#include "qfilt/likelihood.hpp"
#include "qfilt/model.hpp"

#include <functional>
#include <vector>

namespace qfilt {

/// filtered[t] = N(x_{t|t}), predicted[t] = N(x_{t+1|t}); t is 0-based.
struct GaussianSequence {
  std::vector<Gaussian> filtered;
  std::vector<Gaussian> predicted;

  std::size_t size() const { return filtered.size(); }
};

struct UkfCfg {
  double alpha = 1.0;
  double kappa = 0.0;
  double beta = 2.0;
  /// When true the sigma-point sums run over all 2n+1 points. When false
  /// the center point is left out of the mean, innovation variance and
  /// cross-covariance sums.
  bool include_center = true;

  double lambda(int n) const { return alpha * alpha * (n + kappa) - n; }
  void validate(int n) const;
};

/// Scalar measurement map applied to the predicted output (quantizer or a
/// test substitute).
using OutputMap = std::function<double(double)>;

/// Standard Kalman filter that treats y as a linear measurement C x + D u + v.
GaussianSequence kf_filter(const LinearSSM& m, const VecSeq& u, const std::vector<double>& y);

/// Kalman filter whose innovation is y_t - q(C x_{t|t-1} + D u_t).
GaussianSequence qkf_filter(const LinearSSM& m, const Quantizer& q, const VecSeq& u, const std::vector<double>& y);
GaussianSequence qkf_filter(const LinearSSM& m, const OutputMap& q, const VecSeq& u, const std::vector<double>& y);

/// EKF on the extended model with the arctan quantizer surrogate.
GaussianSequence ekf_filter(const ExtendedSSM& ext, const SmoothQuantizerCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y);

/// UKF on the extended model; sigma points pass through q(Ce x).
GaussianSequence ukf_filter(const ExtendedSSM& ext, const Quantizer& q, const UkfCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y);
GaussianSequence ukf_filter(const ExtendedSSM& ext, const OutputMap& g, const UkfCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y);

/// Rauch-Tung-Striebel backward pass for a filter run with transition matrix A.
std::vector<Gaussian> rts_smoother(const Mat& A, const GaussianSequence& seq);
inline std::vector<Gaussian> rts_smoother(const LinearSSM& m, const GaussianSequence& seq) {
  return rts_smoother(m.A, seq);
}
inline std::vector<Gaussian> rts_smoother(const ExtendedSSM& e, const GaussianSequence& seq) {
  return rts_smoother(e.Ae, seq);
}

/// First `n` entries of every mean (drops the augmented output of extended runs).
VecSeq state_means(const std::vector<Gaussian>& g, int n);

}  // namespace qfilt
