#pragma once

#include "qfilt/likelihood.hpp"
#include "qfilt/model.hpp"
#include "qfilt/rng.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace qfilt {

/// Particles stored column-wise (n x M) with their weights.
struct ParticleSet {
  Eigen::MatrixXd x;
  std::vector<double> w;

  int dim() const { return static_cast<int>(x.rows()); }
  int size() const { return static_cast<int>(x.cols()); }
};

enum class ResampleScheme { SYS, ML, MT, LS };
enum class MoveKind { None, MH, RWM };

ResampleScheme parse_scheme(const std::string& s);
MoveKind parse_move(const std::string& s);
std::string to_string(ResampleScheme s);
std::string to_string(MoveKind k);

struct McmcCfg {
  MoveKind kind = MoveKind::RWM;
  double rwm_variance = 100.0;  // Lambda^2

  void validate() const;
};

/// log p(y | x) as a function of the output offset C x + D u.
class OutputLikelihood {
 public:
  virtual ~OutputLikelihood() = default;
  virtual double log_prob(double y, double offset) const = 0;
};

/// Exact quantized likelihood through the normal CDF.
class QuantizedLikelihood final : public OutputLikelihood {
 public:
  QuantizedLikelihood(Quantizer q, double R) : q_(std::move(q)), R_(R) {}
  double log_prob(double y, double offset) const override { return log_exact_likelihood_at(y, offset, R_, q_); }

 private:
  Quantizer q_;
  double R_;
};

/// Unquantized output y = C x + D u + v.
class LinearLikelihood final : public OutputLikelihood {
 public:
  explicit LinearLikelihood(double R) : R_(R) {}
  double log_prob(double y, double offset) const override;

 private:
  double R_;
};

struct PfCfg {
  int M = 1000;
  ResampleScheme scheme = ResampleScheme::SYS;
  McmcCfg mcmc;
  int mt_iterations = 20;  // B
  /// Use OpenMP across particles when not already inside a parallel region
  /// and M is at least `parallel_threshold`.
  bool parallel = true;
  int parallel_threshold = 256;

  void validate() const;
};

/// Resampling output: chosen indices and the new weights.
struct Resampled {
  std::vector<int> index;
  std::vector<double> w;
};

/// Resamples normalized weights. SYS draws one offset from stream
/// (time, Resample, 0); ML, MT and LS draw per output slot i from stream
/// (time, Resample, i).
Resampled resample_indices(const std::vector<double>& w, ResampleScheme scheme, StreamKey key, std::uint64_t time,
                           int mt_iterations = 20, bool parallel = false);

ParticleSet resample(const ParticleSet& ps, ResampleScheme scheme, StreamKey key, std::uint64_t time,
                     int mt_iterations = 20);

/// One MCMC move of particle x. `prior_mean` is the mean of the transition
/// prior (A x_{t-1} + B u_{t-1}, or mu1 at t = 1) and `prior_chol` a square
/// root of its covariance. MH proposes from that prior and accepts with
/// p(y|x*)/p(y|x). RWM proposes x + N(0, Lambda^2 I) and also multiplies in
/// the prior ratio, so both moves leave p(x_t | x_{t-1}, y_t) invariant.
Eigen::VectorXd mcmc_move(const Eigen::VectorXd& x, const Eigen::VectorXd& prior_mean, const Mat& prior_chol,
                          double y, const Vec& u, const LinearSSM& m, const OutputLikelihood& lik, const McmcCfg& cfg,
                          Stream& rng, bool* accepted = nullptr);

/// Filter state carried between steps.
struct PfStep {
  ParticleSet set;       // after resampling and the move
  Eigen::VectorXd mean;  // weighted mean of `set`
};

/// One step of the bootstrap filter at time index t (0-based). `prev` is
/// null at t = 0, in which case particles come from N(mu1, P1).
PfStep pf_step(const ParticleSet* prev, double y, const Vec& u_prev, const Vec& u, const LinearSSM& m,
               const OutputLikelihood& lik, const PfCfg& cfg, StreamKey key, std::uint64_t t);

struct PfResult {
  std::vector<ParticleSet> sets;
  VecSeq means;
};

PfResult pf_filter(const LinearSSM& m, const OutputLikelihood& lik, const PfCfg& cfg, const VecSeq& u,
                   const std::vector<double>& y, StreamKey key);

struct SmootherStats {
  std::size_t draws = 0;
  std::size_t accepted = 0;
  std::size_t cap_hits = 0;
};

/// Transition-kernel bound f = exp(-1/2 eta' Q^{-1} eta), eta = x_next - A x - B u.
double transition_bound(const Eigen::VectorXd& x_next, const Eigen::VectorXd& x, const Vec& u, const LinearSSM& m,
                        const Mat& Qinv);

/// Backward-simulation smoother by rejection sampling. Trajectory i starts
/// at filter particle i at t = N and keeps its weight.
std::vector<ParticleSet> ps_rejection(const std::vector<ParticleSet>& filtered, const LinearSSM& m, const VecSeq& u,
                                      StreamKey key, bool parallel = true, SmootherStats* stats = nullptr,
                                      int max_attempts = 10000);

/// Marginal smoother weights w_{t|N} for the filter particles, O(M^2 N).
std::vector<std::vector<double>> ps_marginal(const std::vector<ParticleSet>& filtered, const LinearSSM& m,
                                             const VecSeq& u, bool parallel = true);

Gaussian weighted_moments(const ParticleSet& ps);
Eigen::VectorXd weighted_mean(const ParticleSet& ps);

/// Rows: t, index, weight, x_1..x_n; t starts at 1.
void write_particles_csv(std::ostream& os, const std::vector<ParticleSet>& sets);

}  // namespace qfilt
