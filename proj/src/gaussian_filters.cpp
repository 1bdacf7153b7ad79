#include "qfilt/gaussian_filters.hpp"

#include "qfilt/diagnostics.hpp"

#include <fmt/format.h>

#include <cmath>

namespace qfilt {

namespace {

void check_lengths(std::size_t nu, std::size_t ny) {
  if (nu != ny) throw InvalidArgument(fmt::format("input length {} does not match output length {}", nu, ny));
}

// Scalar-measurement Kalman update with Jacobian row H, predicted measurement
// yhat and measurement noise variance r.
void scalar_update(Gaussian& g, const Mat& H, double innovation, double r) {
  const Mat PHt = g.cov * H.transpose();
  const double S = (H * PHt)(0, 0) + r;
  if (!(S > 0.0) || !std::isfinite(S)) throw NumericalError(fmt::format("innovation variance {} is not positive", S));
  const Mat K = PHt / S;
  g.mean += K * innovation;
  g.cov -= K * PHt.transpose();
  symmetrize(g.cov);
}

Gaussian time_update(const Gaussian& f, const Mat& A, const Mat& B, const Vec& u, const Mat& Q) {
  Gaussian p;
  p.mean = A * f.mean;
  if (B.cols() > 0) p.mean += B * u;
  p.cov = Q + A * f.cov * A.transpose();
  symmetrize(p.cov);
  return p;
}

template <typename Innovation>
GaussianSequence linear_output_filter(const LinearSSM& m, const VecSeq& u, const std::vector<double>& y,
                                      Innovation&& innovation) {
  m.validate();
  check_lengths(u.size(), y.size());
  GaussianSequence seq;
  seq.filtered.reserve(y.size());
  seq.predicted.reserve(y.size());
  Gaussian g{m.mu1, m.P1};
  for (std::size_t t = 0; t < y.size(); ++t) {
    scalar_update(g, m.C, innovation(g.mean, t), m.R);
    seq.filtered.push_back(g);
    g = time_update(g, m.A, m.B, u[t], m.Q);
    seq.predicted.push_back(g);
  }
  return seq;
}

}  // namespace

void UkfCfg::validate(int n) const {
  if (alpha == 0.0 || !std::isfinite(alpha)) throw InvalidArgument("UKF alpha must be nonzero");
  if (!(n + lambda(n) > 0.0)) throw InvalidArgument("UKF parameters give n + lambda <= 0");
}

GaussianSequence kf_filter(const LinearSSM& m, const VecSeq& u, const std::vector<double>& y) {
  return linear_output_filter(m, u, y, [&](const Vec& x, std::size_t t) { return y[t] - m.output_offset(x, u[t]); });
}

GaussianSequence qkf_filter(const LinearSSM& m, const Quantizer& q, const VecSeq& u, const std::vector<double>& y) {
  return qkf_filter(m, OutputMap([&q](double z) { return q(z); }), u, y);
}

GaussianSequence qkf_filter(const LinearSSM& m, const OutputMap& q, const VecSeq& u, const std::vector<double>& y) {
  return linear_output_filter(m, u, y, [&](const Vec& x, std::size_t t) { return y[t] - q(m.output_offset(x, u[t])); });
}

GaussianSequence ekf_filter(const ExtendedSSM& ext, const SmoothQuantizerCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y) {
  cfg.validate();
  check_lengths(u.size(), y.size());
  const int ne = ext.state_dim();
  GaussianSequence seq;
  seq.filtered.reserve(y.size());
  seq.predicted.reserve(y.size());
  Gaussian g{ext.mu1e, ext.P1e};
  Mat H = Mat::Zero(1, ne);
  for (std::size_t t = 0; t < y.size(); ++t) {
    const double zhat = (ext.Ce * g.mean)(0, 0);
    const SmoothQuantizerValue hv = smooth_quantizer(zhat, cfg);
    H = hv.dh * ext.Ce;
    scalar_update(g, H, y[t] - hv.h, ext.eps);
    seq.filtered.push_back(g);
    g = time_update(g, ext.Ae, ext.Be, ext.extended_input(u, t), ext.Qe);
    seq.predicted.push_back(g);
  }
  return seq;
}

GaussianSequence ukf_filter(const ExtendedSSM& ext, const Quantizer& q, const UkfCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y) {
  return ukf_filter(ext, OutputMap([&q](double z) { return q(z); }), cfg, u, y);
}

GaussianSequence ukf_filter(const ExtendedSSM& ext, const OutputMap& g, const UkfCfg& cfg, const VecSeq& u,
                            const std::vector<double>& y) {
  const int n = ext.state_dim();
  cfg.validate(n);
  check_lengths(u.size(), y.size());

  const double lambda = cfg.lambda(n);
  const double zeta = 1.0 / (n + lambda);
  const double scale = std::sqrt(n + lambda);
  const int first = cfg.include_center ? 0 : 1;
  std::vector<double> wm(static_cast<std::size_t>(2 * n + 1), 0.5 * zeta);
  std::vector<double> wc = wm;
  wm[0] = lambda * zeta;
  wc[0] = lambda * zeta + 1.0 - cfg.alpha * cfg.alpha + cfg.beta;

  GaussianSequence seq;
  seq.filtered.reserve(y.size());
  seq.predicted.reserve(y.size());
  Gaussian p{ext.mu1e, ext.P1e};
  std::vector<Vec> pts(static_cast<std::size_t>(2 * n + 1));
  std::vector<double> Y(pts.size());

  for (std::size_t t = 0; t < y.size(); ++t) {
    bool clamped = false;
    const Mat root = psd_sqrt(p.cov, &clamped);
    if (clamped) numeric_warnings().clamped_sqrt++;
    pts[0] = p.mean;
    for (int i = 0; i < n; ++i) {
      pts[static_cast<std::size_t>(1 + i)] = p.mean + scale * root.col(i);
      pts[static_cast<std::size_t>(1 + n + i)] = p.mean - scale * root.col(i);
    }
    for (std::size_t k = 0; k < pts.size(); ++k) Y[k] = g((ext.Ce * pts[k])(0, 0));

    double nu = 0.0;
    for (std::size_t k = static_cast<std::size_t>(first); k < pts.size(); ++k) nu += wm[k] * Y[k];
    double S = ext.eps;
    Vec Gamma = Vec::Zero(n);
    for (std::size_t k = static_cast<std::size_t>(first); k < pts.size(); ++k) {
      const double d = Y[k] - nu;
      S += wc[k] * d * d;
      Gamma += wc[k] * (pts[k] - p.mean) * d;
    }
    if (!(S > 0.0) || !std::isfinite(S)) throw NumericalError(fmt::format("UKF innovation variance {} is not positive", S));
    const Vec K = Gamma / S;
    Gaussian f;
    f.mean = p.mean + K * (y[t] - nu);
    f.cov = p.cov - S * K * K.transpose();
    symmetrize(f.cov);
    seq.filtered.push_back(f);
    p = time_update(f, ext.Ae, ext.Be, ext.extended_input(u, t), ext.Qe);
    seq.predicted.push_back(p);
  }
  return seq;
}

std::vector<Gaussian> rts_smoother(const Mat& A, const GaussianSequence& seq) {
  const std::size_t N = seq.size();
  std::vector<Gaussian> out(N);
  if (N == 0) return out;
  out[N - 1] = seq.filtered[N - 1];
  for (std::size_t t = N - 1; t-- > 0;) {
    const Gaussian& f = seq.filtered[t];
    const Gaussian& p = seq.predicted[t];
    const Mat G = f.cov * A.transpose() * spd_inverse(p.cov);
    out[t].mean = f.mean + G * (out[t + 1].mean - p.mean);
    out[t].cov = f.cov + G * (out[t + 1].cov - p.cov) * G.transpose();
    symmetrize(out[t].cov);
  }
  return out;
}

VecSeq state_means(const std::vector<Gaussian>& g, int n) {
  VecSeq out;
  out.reserve(g.size());
  for (const auto& c : g) out.emplace_back(c.mean.head(n));
  return out;
}

}  // namespace qfilt
