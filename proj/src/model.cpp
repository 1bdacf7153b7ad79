#include "qfilt/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace qfilt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_psd(const Mat& m) {
  if (m.rows() != m.cols()) return false;
  if (!(m - m.transpose()).isZero(1e-9 * std::max(1.0, m.cwiseAbs().maxCoeff()))) return false;
  return min_eigenvalue(m) >= -1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff());
}

void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace

void LinearSSM::validate(bool allow_zero_R) const {
  const int n = state_dim();
  const int m = input_dim();
  require(n >= 1 && A.cols() == n, "A must be square and non-empty");
  require(n + 1 <= kMaxDim, fmt::format("state dimension {} exceeds the supported maximum {}", n, kMaxDim - 1));
  require(2 * m <= kMaxDim, fmt::format("input dimension {} exceeds the supported maximum {}", m, kMaxDim / 2));
  require(B.rows() == n, "B must have as many rows as A");
  require(C.rows() == 1 && C.cols() == n, "C must be 1 x n");
  require(D.rows() == 1 && D.cols() == m, "D must be 1 x m");
  require(Q.rows() == n && Q.cols() == n, "Q must be n x n");
  require(P1.rows() == n && P1.cols() == n, "P1 must be n x n");
  require(mu1.size() == n, "mu1 must have n entries");
  require((R > 0.0 || (allow_zero_R && R == 0.0)) && std::isfinite(R), "R must be positive");
  require(is_psd(Q), "Q must be symmetric positive semidefinite");
  require(is_psd(P1), "P1 must be symmetric positive semidefinite");
}

// ---------------------------------------------------------------------------
// Quantizer

Quantizer Quantizer::uniform(double step) {
  require(step > 0.0 && std::isfinite(step), "uniform quantizer step must be positive");
  Quantizer q;
  q.kind_ = QuantizerKind::Infinite;
  q.step_ = step;
  return q;
}

Quantizer Quantizer::finite(std::vector<double> thresholds, std::vector<double> levels) {
  require(!levels.empty(), "finite quantizer needs at least one level");
  require(thresholds.size() + 1 == levels.size(), "finite quantizer needs L levels and L-1 thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    require(thresholds[i - 1] < thresholds[i], "quantizer thresholds must be strictly increasing");
  }
  for (double v : thresholds) require(std::isfinite(v), "quantizer thresholds must be finite");
  for (double v : levels) require(std::isfinite(v), "quantizer levels must be finite");
  Quantizer q;
  q.kind_ = QuantizerKind::Finite;
  q.thresholds_ = std::move(thresholds);
  q.levels_ = std::move(levels);
  return q;
}

double Quantizer::operator()(double z) const {
  if (kind_ == QuantizerKind::Infinite) return step_ * std::round(z / step_);
  // region k is [q_{k-1}, q_k): count thresholds <= z
  const auto it = std::upper_bound(thresholds_.begin(), thresholds_.end(), z);
  return levels_[static_cast<std::size_t>(it - thresholds_.begin())];
}

std::size_t Quantizer::finite_index(double y) const {
  for (std::size_t k = 0; k < levels_.size(); ++k) {
    if (std::abs(levels_[k] - y) <= 1e-12 * std::max(1.0, std::abs(y))) return k;
  }
  throw InvalidArgument(fmt::format("level not in output set: {}", y));
}

Interval Quantizer::region(double y) const {
  if (kind_ == QuantizerKind::Infinite) {
    const double k = std::round(y / step_);
    if (!std::isfinite(y) || std::abs(y - k * step_) > 1e-9 * step_) {
      throw InvalidArgument(fmt::format("level not in output set: {}", y));
    }
    const double c = k * step_;
    return {c - 0.5 * step_, c + 0.5 * step_};
  }
  const std::size_t k = finite_index(y);
  const double lo = k == 0 ? -kInf : thresholds_[k - 1];
  const double hi = k + 1 == levels_.size() ? kInf : thresholds_[k];
  return {lo, hi};
}

std::vector<double> Quantizer::levels_between(double lo, double hi) const {
  std::vector<double> out;
  if (kind_ == QuantizerKind::Infinite) {
    const auto kmin = static_cast<long long>(std::floor((lo - 0.5 * step_) / step_));
    const auto kmax = static_cast<long long>(std::ceil((hi + 0.5 * step_) / step_));
    for (long long k = kmin; k <= kmax; ++k) {
      const double c = static_cast<double>(k) * step_;
      if (c - 0.5 * step_ <= hi && c + 0.5 * step_ > lo) out.push_back(c);
    }
    return out;
  }
  for (double level : levels_) {
    const Interval r = region(level);
    if (r.lo <= hi && r.hi > lo) out.push_back(level);
  }
  return out;
}

Interval region_bounds(double y, const Quantizer& q, double offset) {
  const Interval r = q.region(y);
  return {r.lo - offset, r.hi - offset};
}

// ---------------------------------------------------------------------------
// Extended system

double default_eps(const LinearSSM& m) { return 1e-6 * m.R; }

ExtendedSSM build_extended(const LinearSSM& m, double eps) {
  m.validate();
  require(eps > 0.0 && std::isfinite(eps), "eps must be positive");
  const int n = m.state_dim();
  const int p = m.input_dim();
  ExtendedSSM e;
  e.base_state_dim = n;
  e.base_input_dim = p;
  e.eps = eps;

  e.Ae = Mat::Zero(n + 1, n + 1);
  e.Ae.topLeftCorner(n, n) = m.A;
  e.Ae.bottomLeftCorner(1, n) = m.C * m.A;

  e.Be = Mat::Zero(n + 1, 2 * p);
  e.Be.topLeftCorner(n, p) = m.B;
  e.Be.bottomLeftCorner(1, p) = m.C * m.B;
  e.Be.bottomRightCorner(1, p) = m.D;

  e.Ce = Mat::Zero(1, n + 1);
  e.Ce(0, n) = 1.0;

  e.Qe = Mat::Zero(n + 1, n + 1);
  e.Qe.topLeftCorner(n, n) = m.Q;
  e.Qe.topRightCorner(n, 1) = m.Q * m.C.transpose();
  e.Qe.bottomLeftCorner(1, n) = m.C * m.Q.transpose();
  e.Qe(n, n) = (m.C * m.Q * m.C.transpose())(0, 0) + m.R;
  symmetrize(e.Qe);

  e.mu1e = Vec::Zero(n + 1);
  e.mu1e.head(n) = m.mu1;
  e.P1e = Mat::Zero(n + 1, n + 1);
  e.P1e.topLeftCorner(n, n) = m.P1;
  e.P1e(n, n) = 1.0;
  return e;
}

Vec ExtendedSSM::extended_input(const VecSeq& u, std::size_t t) const {
  const int p = base_input_dim;
  Vec ue = Vec::Zero(2 * p);
  if (p == 0) return ue;
  ue.head(p) = u.at(t);
  if (t + 1 < u.size()) ue.tail(p) = u[t + 1];
  return ue;
}

// ---------------------------------------------------------------------------
// Simulation

std::uint64_t Trajectory::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const double* data, std::size_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < count * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& v : x) feed(v.data(), static_cast<std::size_t>(v.size()));
  feed(z.data(), z.size());
  feed(y.data(), y.size());
  for (const auto& v : u) feed(v.data(), static_cast<std::size_t>(v.size()));
  return h;
}

VecSeq draw_inputs(int input_dim, std::size_t horizon, double stddev, StreamKey key) {
  VecSeq u(horizon, Vec::Zero(input_dim));
  for (std::size_t t = 0; t < horizon; ++t) {
    Stream s(key, t, Purpose::Input, 0);
    for (int j = 0; j < input_dim; ++j) u[t](j) = stddev * s.normal();
  }
  return u;
}

Trajectory simulate_trajectory(const LinearSSM& m, const Quantizer& q, const VecSeq& u, StreamKey key) {
  m.validate(/*allow_zero_R=*/true);
  require(!u.empty(), "simulation horizon must be at least 1");
  const int n = m.state_dim();
  const std::size_t N = u.size();
  const Mat sqrtQ = psd_sqrt(m.Q);
  const Mat sqrtP1 = psd_sqrt(m.P1);
  const double sqrtR = std::sqrt(m.R);

  Trajectory traj;
  traj.u = u;
  traj.x.resize(N);
  traj.z.resize(N);
  traj.y.resize(N);

  Vec x = m.mu1;
  {
    Stream s(key, 0, Purpose::Simulate, 1);
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = s.normal();
    x += sqrtP1 * xi;
  }
  for (std::size_t t = 0; t < N; ++t) {
    Stream s(key, t, Purpose::Simulate, 0);
    traj.x[t] = x;
    const double v = sqrtR * s.normal();
    traj.z[t] = m.output_offset(x, u[t]) + v;
    traj.y[t] = q(traj.z[t]);
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi(i) = s.normal();
    x = m.A * x + m.B * u[t] + sqrtQ * xi;
  }
  return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  const int n = traj.x.empty() ? 0 : static_cast<int>(traj.x[0].size());
  const int p = traj.u.empty() ? 0 : static_cast<int>(traj.u[0].size());
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << ",z,y";
  for (int j = 1; j <= p; ++j) os << ",u" << j;
  os << '\n';
  for (std::size_t t = 0; t < traj.size(); ++t) {
    os << (t + 1);
    for (int i = 0; i < n; ++i) os << ',' << fmt::format("{:.17g}", traj.x[t](i));
    os << ',' << fmt::format("{:.17g}", traj.z[t]) << ',' << fmt::format("{:.17g}", traj.y[t]);
    for (int j = 0; j < p; ++j) os << ',' << fmt::format("{:.17g}", traj.u[t](j));
    os << '\n';
  }
}

Trajectory read_trajectory_csv(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(is, line)) throw InvalidArgument("trajectory CSV is empty");
  const auto header = split(line);
  int n = 0;
  int p = 0;
  int zcol = -1;
  int ycol = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string& h = header[c];
    if (h == "z") zcol = static_cast<int>(c);
    else if (h == "y") ycol = static_cast<int>(c);
    else if (!h.empty() && h[0] == 'x') ++n;
    else if (!h.empty() && h[0] == 'u') ++p;
  }
  if (ycol < 0 || header.empty() || header[0] != "t") throw InvalidArgument("trajectory CSV header must start with t and contain y");
  Trajectory traj;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw InvalidArgument("trajectory CSV row has the wrong number of columns");
    Vec x(n);
    Vec u(p);
    int xi = 0;
    int ui = 0;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const double v = std::stod(cells[c]);
      const std::string& h = header[c];
      if (static_cast<int>(c) == zcol) traj.z.push_back(v);
      else if (static_cast<int>(c) == ycol) traj.y.push_back(v);
      else if (h[0] == 'x') x(xi++) = v;
      else if (h[0] == 'u') u(ui++) = v;
    }
    if (zcol < 0) traj.z.push_back(std::numeric_limits<double>::quiet_NaN());
    traj.x.push_back(x);
    traj.u.push_back(u);
  }
  return traj;
}

}  // namespace qfilt
