#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

namespace qfilt {

/// Upper bound on every matrix dimension handled by the filters (extended
/// state included). Fixed-capacity storage keeps per-component matrices off
/// the heap in the mixture and particle hot loops.
inline constexpr int kMaxDim = 8;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

/// A sequence indexed by time step (0-based; index t holds time t+1).
using VecSeq = std::vector<Vec>;

/// Gaussian density N(mean, cov).
struct Gaussian {
  Vec mean;
  Mat cov;
};

/// cov <- (cov + cov^T) / 2
inline void symmetrize(Mat& m) {
  Mat t = m.transpose();
  m = 0.5 * (m + t);
}

/// Inverse of a symmetric positive (semi)definite matrix. A near-singular
/// input gets a ridge of 1e-10 * trace added before inversion; `regularized`
/// reports whether that happened.
Mat spd_inverse(const Mat& m, bool* regularized = nullptr);

/// log det of a symmetric positive definite matrix (LDL^T based).
/// Returns -inf for singular input.
double spd_log_det(const Mat& m);

/// Symmetric square root S with S S^T = m. Negative eigenvalues are clamped
/// to zero; `clamped` reports whether any clamping happened.
Mat psd_sqrt(const Mat& m, bool* clamped = nullptr);

/// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Mat& m);

/// Reciprocal condition estimate from the symmetric eigenvalues (0 for
/// indefinite or singular matrices).
double spd_rcond(const Mat& m);

/// log(sum(exp(v))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

Vec zeros(int n);
Mat zeros(int rows, int cols);

}  // namespace qfilt
