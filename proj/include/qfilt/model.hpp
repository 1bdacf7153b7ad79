#pragma once

#include "qfilt/linalg.hpp"
#include "qfilt/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qfilt {

/// Raised for invalid models, quantizers, configs or arguments.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a usable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// x_{t+1} = A x_t + B u_t + w_t,  z_t = C x_t + D u_t + v_t,
/// w ~ N(0, Q), v ~ N(0, R), x_1 ~ N(mu1, P1).
struct LinearSSM {
  Mat A, B, C, D, Q;
  double R = 1.0;
  Vec mu1;
  Mat P1;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }

  /// Throws InvalidArgument on inconsistent dimensions, R <= 0 or a
  /// non-PSD Q / P1. Simulation alone tolerates R == 0.
  void validate(bool allow_zero_R = false) const;

  /// C x + D u
  double output_offset(const Vec& x, const Vec& u) const { return (C * x)(0, 0) + (D * u)(0, 0); }
};

enum class QuantizerKind { Finite, Infinite };

/// Half-open integration interval [lo, hi); either end may be infinite.
struct Interval {
  double lo;
  double hi;
};

/// Output quantizer. Finite-level quantizers store thresholds q_1 < ... <
/// q_{L-1} and levels psi_1..psi_L; the infinite-level uniform quantizer is
/// described by its step alone and produces levels step * k.
class Quantizer {
 public:
  static Quantizer uniform(double step);
  static Quantizer finite(std::vector<double> thresholds, std::vector<double> levels);

  QuantizerKind kind() const { return kind_; }
  double step() const { return step_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<double>& levels() const { return levels_; }

  /// Level of the region containing z. Uniform: step * round(z / step),
  /// halves rounded away from zero.
  double operator()(double z) const;

  /// Region [q_{k-1}, q_k) of output level y; throws InvalidArgument
  /// ("level not in output set") for anything that is not a level.
  Interval region(double y) const;

  /// Levels whose region intersects [lo, hi] (for finite quantizers: all
  /// levels touching the range).
  std::vector<double> levels_between(double lo, double hi) const;

 private:
  Quantizer() = default;
  std::size_t finite_index(double y) const;

  QuantizerKind kind_ = QuantizerKind::Infinite;
  double step_ = 1.0;
  std::vector<double> thresholds_;
  std::vector<double> levels_;
};

inline double quantize(double z, const Quantizer& q) { return q(z); }

/// Integration limits (a_t, b_t) for p(y | x): the region of y shifted by
/// -offset, where offset = C x + D u.
Interval region_bounds(double y, const Quantizer& q, double offset);

/// State augmented with the unquantized output, x^e_t = [x_t; z_t].
struct ExtendedSSM {
  Mat Ae, Be, Ce, Qe;
  Vec mu1e;
  Mat P1e;
  double eps = 0.0;
  int base_state_dim = 0;
  int base_input_dim = 0;

  int state_dim() const { return static_cast<int>(Ae.rows()); }

  /// u^e_t = [u_t; u_{t+1}] with u_{N+1} = 0 (t is 0-based here).
  Vec extended_input(const VecSeq& u, std::size_t t) const;
};

/// Default pseudo-measurement variance: 1e-6 * R.
double default_eps(const LinearSSM& m);

ExtendedSSM build_extended(const LinearSSM& m, double eps);

struct Trajectory {
  VecSeq x;
  std::vector<double> z;
  std::vector<double> y;
  VecSeq u;

  std::size_t size() const { return y.size(); }
  /// FNV-1a over the raw bytes of x, z, y and u.
  std::uint64_t hash() const;
};

/// u_t ~ N(0, stddev^2 I), drawn from the Input stream of `key`.
VecSeq draw_inputs(int input_dim, std::size_t horizon, double stddev, StreamKey key);

/// Forward simulation of the model with quantized output. Deterministic in
/// `key`; the input sequence fixes the horizon.
Trajectory simulate_trajectory(const LinearSSM& m, const Quantizer& q, const VecSeq& u, StreamKey key);

/// CSV with header t,x1..xn,z,y,u1..um (t starts at 1).
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
/// Inverse of write_trajectory_csv; dimensions come from the header.
Trajectory read_trajectory_csv(std::istream& is);

}  // namespace qfilt
