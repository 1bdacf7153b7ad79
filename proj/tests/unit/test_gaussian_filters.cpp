#include "helpers.hpp"

#include "oracles/dense_gaussian.hpp"
#include "oracles/small.hpp"
#include "qfilt/gaussian_filters.hpp"
#include "qfilt/likelihood.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace qfilt;
using testing::scalar;

namespace {

oracle::DenseModel dense(const LinearSSM& m) {
  return {m.A, m.B, m.C, m.D, m.Q, m.P1, m.R, m.mu1};
}

// y = z: the unquantized output
Trajectory linear_data(const LinearSSM& m, std::size_t N, std::uint64_t seed) {
  const VecSeq u = draw_inputs(m.input_dim(), N, 1.0, {seed, 0});
  Trajectory tr = simulate_trajectory(m, Quantizer::uniform(1.0), u, {seed, 0});
  tr.y = tr.z;
  return tr;
}

// The extended model seen as an ordinary linear model with inputs
// [u_t; u_{t+1}], output matrix `gain * Ce` and noise eps.
LinearSSM extended_as_linear(const ExtendedSSM& e, double gain) {
  LinearSSM m;
  m.A = e.Ae;
  m.B = e.Be;
  m.C = gain * e.Ce;
  m.D = Mat::Zero(1, e.Be.cols());
  m.Q = e.Qe;
  m.R = e.eps;
  m.mu1 = e.mu1e;
  m.P1 = e.P1e;
  return m;
}

VecSeq extended_inputs(const ExtendedSSM& e, const VecSeq& u) {
  VecSeq out;
  for (std::size_t t = 0; t < u.size(); ++t) out.push_back(e.extended_input(u, t));
  return out;
}

void check_psd(const std::vector<Gaussian>& g, double tol = 1e-8) {
  for (const auto& x : g) {
    CHECK((x.cov - x.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * std::max(1.0, x.cov.cwiseAbs().maxCoeff()));
    Eigen::SelfAdjointEigenSolver<Mat> es(x.cov);
    CHECK(es.eigenvalues().minCoeff() >= -tol);
  }
}

}  // namespace

TEST_CASE("Kalman filter and RTS smoother match batch conditioning") {
  for (const LinearSSM& m : {testing::benchmark_model(), testing::two_state_model()}) {
    const std::size_t N = 25;
    const Trajectory tr = linear_data(m, N, 11);
    const auto f = kf_filter(m, tr.u, tr.y);
    const auto s = rts_smoother(m, f);
    const oracle::JointGaussian joint(dense(m), testing::dynamic(tr.u));
    for (std::size_t t = 0; t < N; ++t) {
      const auto of = joint.filtered(static_cast<int>(t), tr.y);
      const auto os = joint.smoothed(static_cast<int>(t), tr.y);
      CHECK((f.filtered[t].mean - of.mean).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((f.filtered[t].cov - of.cov).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((s[t].mean - os.mean).cwiseAbs().maxCoeff() < 1e-8);
      CHECK((s[t].cov - os.cov).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("Kalman filter with no process noise and a useless measurement keeps the prediction") {
  LinearSSM m = testing::benchmark_model();
  m.Q = scalar(0.0);
  m.R = 1e14;
  const Trajectory tr = linear_data(testing::benchmark_model(), 10, 3);
  const auto f = kf_filter(m, tr.u, tr.y);
  Vec pred = m.mu1;
  for (std::size_t t = 0; t < 10; ++t) {
    CHECK(f.filtered[t].mean(0) == doctest::Approx(pred(0)).epsilon(1e-10));
    pred = f.predicted[t].mean;
  }
}

TEST_CASE("scalar Kalman variance converges to the Riccati fixed point") {
  const LinearSSM m = testing::benchmark_model();
  const Trajectory tr = linear_data(m, 60, 4);
  const auto f = kf_filter(m, tr.u, tr.y);
  const double fixed = oracle::scalar_riccati_filtered(0.9, 2.2, 1.0, 0.5);
  CHECK(f.filtered.back().cov(0, 0) == doctest::Approx(fixed).epsilon(1e-12));
}

TEST_CASE("RTS smoother anchors and the no-coupling case") {
  const LinearSSM m = testing::two_state_model();
  const Trajectory tr = linear_data(m, 15, 5);
  const auto f = kf_filter(m, tr.u, tr.y);
  const auto s = rts_smoother(m, f);
  CHECK((s.back().mean - f.filtered.back().mean).norm() == 0.0);
  CHECK((s.back().cov - f.filtered.back().cov).norm() == 0.0);

  LinearSSM m0 = m;
  m0.A = Mat::Zero(2, 2);
  const auto f0 = kf_filter(m0, tr.u, tr.y);
  const auto s0 = rts_smoother(m0, f0);
  for (std::size_t t = 0; t < s0.size(); ++t) {
    CHECK((s0[t].mean - f0.filtered[t].mean).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((s0[t].cov - f0.filtered[t].cov).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("quantized KF with an identity quantizer is the KF") {
  const LinearSSM m = testing::two_state_model();
  const Trajectory tr = linear_data(m, 30, 6);
  const auto a = kf_filter(m, tr.u, tr.y);
  const auto b = qkf_filter(m, OutputMap([](double z) { return z; }), tr.u, tr.y);
  for (std::size_t t = 0; t < a.filtered.size(); ++t) {
    CHECK(a.filtered[t].mean == b.filtered[t].mean);
    CHECK(a.filtered[t].cov == b.filtered[t].cov);
  }
  // a vanishing step approaches the identity
  const auto c = qkf_filter(m, Quantizer::uniform(1e-12), tr.u, tr.y);
  for (std::size_t t = 0; t < a.filtered.size(); ++t)
    CHECK((a.filtered[t].mean - c.filtered[t].mean).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("quantized KF leaves the prediction alone when it lands in the observed cell") {
  LinearSSM m = testing::benchmark_model();
  const Quantizer q = Quantizer::uniform(8.0);
  const VecSeq u{Vec::Constant(1, 0.0)};
  // predicted output 2.2 * 1 = 2.2 quantizes to 0
  const auto f = qkf_filter(m, q, u, {0.0});
  CHECK(f.filtered[0].mean(0) == m.mu1(0));
  CHECK(f.filtered[0].cov(0, 0) < m.P1(0, 0));
  // a different cell moves the mean
  const auto g = qkf_filter(m, q, u, {8.0});
  CHECK(g.filtered[0].mean(0) > m.mu1(0));
}

TEST_CASE("quantized KF uses +D u inside the quantizer") {
  LinearSSM m = testing::benchmark_model();
  m.mu1 = Vec::Constant(1, 1.5);
  const Quantizer q = Quantizer::uniform(8.0);
  // C mu1 + D u = 3.3 + 0.75 = 4.05 -> 8 ; with -D u it would be 2.55 -> 0
  const VecSeq u{Vec::Constant(1, 1.0)};
  const auto f = qkf_filter(m, q, u, {8.0});
  CHECK(f.filtered[0].mean(0) == m.mu1(0));
}

TEST_CASE("EKF measurement update against hand-computed formulas") {
  const LinearSSM m = testing::benchmark_model();
  ExtendedSSM e = build_extended(m, 0.05);
  e.mu1e << 0.3, 3.0;
  e.P1e << 0.4, 0.3, 0.3, 2.0;
  const SmoothQuantizerCfg cfg{8.0, 0.5};
  const double y = 8.0;
  const auto f = ekf_filter(e, cfg, {Vec::Constant(1, 0.2)}, {y});

  const SmoothQuantizerValue hv = smooth_quantizer(3.0, cfg);
  const double S = e.eps + hv.dh * hv.dh * 2.0;
  Eigen::Vector2d K(0.3 * hv.dh / S, 2.0 * hv.dh / S);
  const Eigen::Vector2d mean = Eigen::Vector2d(0.3, 3.0) + K * (y - hv.h);
  Eigen::Matrix2d P;
  P << 0.4, 0.3, 0.3, 2.0;
  const Eigen::Matrix2d cov = P - S * K * K.transpose();
  CHECK(f.filtered[0].mean(0) == doctest::Approx(mean(0)).epsilon(1e-12));
  CHECK(f.filtered[0].mean(1) == doctest::Approx(mean(1)).epsilon(1e-12));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(f.filtered[0].cov(i, j) == doctest::Approx(cov(i, j)).epsilon(1e-12));
}

TEST_CASE("EKF barely moves far from a switch point when eps dominates") {
  // with eps = R the gain is about dh * P / R
  const LinearSSM m = testing::benchmark_model();
  ExtendedSSM e = build_extended(m, m.R);
  e.mu1e(1) = 0.0;  // four units from the switch points at +-4
  const auto f = ekf_filter(e, SmoothQuantizerCfg{8.0, 0.008}, {Vec::Constant(1, 0.0)}, {0.0});
  CHECK(std::abs(f.filtered[0].mean(1) - e.mu1e(1)) < 1e-4);
  CHECK(std::abs(f.filtered[0].mean(0) - e.mu1e(0)) < 1e-4);
  CHECK(f.filtered[0].cov(1, 1) == doctest::Approx(e.P1e(1, 1)).epsilon(1e-5));
}

TEST_CASE("EKF gain grows with dh and peaks at the switch point while dh^2 P < eps") {
  const LinearSSM m = testing::benchmark_model();
  ExtendedSSM e = build_extended(m, 10.0);
  const SmoothQuantizerCfg cfg{8.0, 1.0};  // peak dh = 8 / pi, so dh^2 P < eps
  auto gain_at = [&](double zhat) {
    ExtendedSSM ee = e;
    ee.mu1e(1) = zhat;
    const auto f = ekf_filter(ee, cfg, {Vec::Constant(1, 0.0)}, {0.0});
    const double innov = 0.0 - smooth_quantizer(zhat, cfg).h;
    return (f.filtered[0].mean(1) - zhat) / innov;
  };
  const double peak = gain_at(4.0 - 1e-9);
  double previous_gain = 0.0;
  double previous_dh = 0.0;
  for (double z = 0.5; z < 4.0; z += 0.5) {
    const double g = gain_at(z);
    const double dh = smooth_quantizer(z, cfg).dh;
    CHECK(dh > previous_dh);
    CHECK(g > previous_gain);
    CHECK(g < peak);
    previous_gain = g;
    previous_dh = dh;
  }
  CHECK(peak == doctest::Approx(8.0 / std::numbers::pi / (10.0 + 64.0 / (std::numbers::pi * std::numbers::pi)))
                    .epsilon(1e-6));
}

TEST_CASE("UKF weights and scaling") {
  UkfCfg cfg;
  CHECK(cfg.lambda(2) == 0.0);
  cfg.alpha = 0.5;
  CHECK(cfg.lambda(2) == doctest::Approx(0.25 * 2 - 2));
  CHECK_NOTHROW(cfg.validate(2));
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(2), InvalidArgument);
  cfg.alpha = 1.0;
  cfg.kappa = -3.0;
  CHECK_THROWS_AS(cfg.validate(2), InvalidArgument);
}

TEST_CASE("UKF with an affine output map reproduces the Kalman filter") {
  for (const LinearSSM& m : {testing::benchmark_model(), testing::two_state_model()}) {
    const ExtendedSSM e = build_extended(m, 1e-3);
    const std::size_t N = 30;
    const VecSeq u = draw_inputs(1, N, 1.0, {21, 0});
    const Trajectory tr = simulate_trajectory(m, Quantizer::uniform(0.5), u, {21, 0});
    // y = 2 z + 1 seen through g(z) = 2 z + 1
    std::vector<double> y;
    for (double z : tr.z) y.push_back(2.0 * z + 1.0);
    const OutputMap g = [](double z) { return 2.0 * z + 1.0; };
    std::vector<double> y_shift;
    for (double v : y) y_shift.push_back(v - 1.0);
    const LinearSSM lin = extended_as_linear(e, 2.0);
    const auto ref = kf_filter(lin, extended_inputs(e, u), y_shift);
    const auto ref_s = rts_smoother(lin, ref);
    for (double alpha : {1.0, 0.5, 1e-3}) {
      for (bool center : {true, false}) {
        UkfCfg cfg;
        cfg.alpha = alpha;
        cfg.include_center = center;
        if (!center && cfg.lambda(e.state_dim()) != 0.0) continue;  // weights only sum to one when lambda = 0
        const auto f = ukf_filter(e, g, cfg, u, y);
        const auto s = rts_smoother(e, f);
        for (std::size_t t = 0; t < N; ++t) {
          CHECK((f.filtered[t].mean - ref.filtered[t].mean).cwiseAbs().maxCoeff() < 1e-8);
          CHECK((f.filtered[t].cov - ref.filtered[t].cov).cwiseAbs().maxCoeff() < 1e-8);
          CHECK((s[t].mean - ref_s[t].mean).cwiseAbs().maxCoeff() < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("all Gaussian filters keep symmetric PSD covariances on quantized data") {
  const LinearSSM m = testing::benchmark_model();
  const Quantizer q = Quantizer::uniform(8.0);
  const VecSeq u = draw_inputs(1, 200, 1.0, {8, 1});
  const Trajectory tr = simulate_trajectory(m, q, u, {8, 1});
  const ExtendedSSM e = build_extended(m, default_eps(m));

  const auto kf = kf_filter(m, u, tr.y);
  check_psd(kf.filtered);
  check_psd(rts_smoother(m, kf));
  const auto qkf = qkf_filter(m, q, u, tr.y);
  check_psd(qkf.filtered);
  check_psd(rts_smoother(m, qkf));
  UkfCfg cfg;
  for (double alpha : {1.0, 1e-3}) {
    cfg.alpha = alpha;
    const auto ukf = ukf_filter(e, q, cfg, u, tr.y);
    check_psd(ukf.filtered);
    check_psd(ukf.predicted);
    check_psd(rts_smoother(e, ukf));
  }
  // the EKF diverges here, so only check its covariances, which stay bounded
  const auto ekf = ekf_filter(e, SmoothQuantizerCfg{8.0, 0.008}, u, tr.y);
  check_psd(ekf.filtered, 1e-6);
}

TEST_CASE("filters reject inconsistent lengths") {
  const LinearSSM m = testing::benchmark_model();
  const VecSeq u(3, Vec::Zero(1));
  CHECK_THROWS_AS(kf_filter(m, u, {0.0, 0.0}), InvalidArgument);
  CHECK_THROWS_AS(qkf_filter(m, Quantizer::uniform(1.0), u, {0.0}), InvalidArgument);
}
