#include "qfilt/linalg.hpp"

#include "qfilt/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qfilt {

NumericWarnings& numeric_warnings() {
  static NumericWarnings w;
  return w;
}

Vec zeros(int n) { return Vec::Zero(n); }

Mat zeros(int rows, int cols) { return Mat::Zero(rows, cols); }

namespace {

bool invertible_spd(const Mat& m) {
  const double tr = m.trace();
  if (!(tr > 0.0) || !std::isfinite(tr)) return false;
  return spd_rcond(m) > 1e-14;
}

}  // namespace

Mat spd_inverse(const Mat& m, bool* regularized) {
  const int n = static_cast<int>(m.rows());
  if (regularized) *regularized = false;
  if (n == 1) {
    double v = m(0, 0);
    if (!(v > 0.0)) {
      v = std::numeric_limits<double>::min();
      numeric_warnings().regularized_inverse++;
      if (regularized) *regularized = true;
    }
    Mat r(1, 1);
    r(0, 0) = 1.0 / v;
    return r;
  }
  if (invertible_spd(m)) {
    Eigen::LDLT<Mat> ldlt(m);
    Mat inv = ldlt.solve(Mat::Identity(n, n));
    symmetrize(inv);
    return inv;
  }
  numeric_warnings().regularized_inverse++;
  if (regularized) *regularized = true;
  double tr = std::abs(m.trace());
  if (!(tr > 0.0)) tr = 1.0;
  Mat ridge = m + 1e-10 * tr * Mat::Identity(n, n);
  Eigen::LDLT<Mat> ldlt(ridge);
  Mat inv = ldlt.solve(Mat::Identity(n, n));
  symmetrize(inv);
  return inv;
}

double spd_log_det(const Mat& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 1) {
    return m(0, 0) > 0.0 ? std::log(m(0, 0)) : -std::numeric_limits<double>::infinity();
  }
  if (n == 2) {
    const double d = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return d > 0.0 ? std::log(d) : -std::numeric_limits<double>::infinity();
  }
  Eigen::LDLT<Mat> ldlt(m);
  const auto diag = ldlt.vectorD();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!(diag(i) > 0.0)) return -std::numeric_limits<double>::infinity();
    acc += std::log(diag(i));
  }
  return acc;
}

Mat psd_sqrt(const Mat& m, bool* clamped) {
  const int n = static_cast<int>(m.rows());
  if (clamped) *clamped = false;
  if (n == 1) {
    Mat r(1, 1);
    double v = m(0, 0);
    if (v < 0.0) {
      if (v < -1e-12) {
        numeric_warnings().clamped_sqrt++;
        if (clamped) *clamped = true;
      }
      v = 0.0;
    }
    r(0, 0) = std::sqrt(v);
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  Vec ev = es.eigenvalues();
  bool any = false;
  for (int i = 0; i < n; ++i) {
    if (ev(i) < 0.0) {
      if (ev(i) < -1e-12 * std::max(1.0, std::abs(ev(n - 1)))) any = true;
      ev(i) = 0.0;
    }
    ev(i) = std::sqrt(ev(i));
  }
  if (any) {
    numeric_warnings().clamped_sqrt++;
    if (clamped) *clamped = true;
  }
  const Mat& v = es.eigenvectors();
  return v * ev.asDiagonal() * v.transpose();
}

double min_eigenvalue(const Mat& m) {
  if (m.rows() == 1) return m(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double spd_rcond(const Mat& m) {
  if (m.rows() == 1) return m(0, 0) > 0.0 ? 1.0 : 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double lo = ev(0);
  const double hi = ev(ev.size() - 1);
  if (!(lo > 0.0) || !(hi > 0.0)) return 0.0;
  return lo / hi;
}

}  // namespace qfilt
