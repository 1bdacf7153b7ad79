#include "qfilt/particle.hpp"

#include "qfilt/diagnostics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace qfilt {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool use_threads(bool requested, int work, int threshold) {
#ifdef _OPENMP
  return requested && work >= threshold && !omp_in_parallel() && omp_get_max_threads() > 1;
#else
  (void)requested;
  (void)work;
  (void)threshold;
  return false;
#endif
}

// Neumaier-compensated running sum.
struct CompensatedSum {
  double sum = 0.0;
  double c = 0.0;

  void add(double v) {
    const double t = sum + v;
    if (std::abs(sum) >= std::abs(v))
      c += (sum - t) + v;
    else
      c += (v - t) + sum;
    sum = t;
  }
  double value() const { return sum + c; }
};

// Normalizes log weights in place into `w`; uniform fallback when every
// weight vanishes.
void normalize_log_weights(const std::vector<double>& logw, std::vector<double>& w) {
  const double total = log_sum_exp(logw);
  w.resize(logw.size());
  if (!std::isfinite(total)) {
    numeric_warnings().zero_weight_fallback++;
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
    return;
  }
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(logw[i] - total);
}

Eigen::VectorXd draw_normal(Stream& s, int n) {
  Eigen::VectorXd z(n);
  for (int k = 0; k < n; ++k) z(k) = s.normal();
  return z;
}

double output_offset(const LinearSSM& m, const Eigen::VectorXd& x, double Du) {
  return m.C.row(0).dot(x) + Du;
}

double input_term(const LinearSSM& m, const Vec& u) { return m.D.cols() > 0 ? (m.D * u)(0, 0) : 0.0; }

Eigen::VectorXd drift(const LinearSSM& m, const Vec& u) {
  if (m.B.cols() == 0) return Eigen::VectorXd::Zero(m.state_dim());
  return Eigen::VectorXd(m.B * u);
}

struct MoveOutcome {
  Eigen::VectorXd x;
  double log_lik;
  bool accepted;
};

// log N(a; mean, S S') - log N(b; mean, S S'), with a pseudo-inverse so a
// singular prior only constrains the directions it covers.
double log_prior_ratio(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& mean,
                       const Mat& root) {
  if (root.rows() == 1) {
    const double s = root(0, 0);
    if (s == 0.0) return 0.0;
    const double da = (a(0) - mean(0)) / s;
    const double db = (b(0) - mean(0)) / s;
    return -0.5 * (da * da - db * db);
  }
  const auto cod = Eigen::MatrixXd(root).completeOrthogonalDecomposition();
  return -0.5 * (cod.solve(a - mean).squaredNorm() - cod.solve(b - mean).squaredNorm());
}

MoveOutcome move_cached(const Eigen::VectorXd& x, double log_lik, const Eigen::VectorXd& prior_mean,
                        const Mat& prior_chol, double y, double Du, const LinearSSM& m, const OutputLikelihood& lik,
                        const McmcCfg& cfg, Stream& rng) {
  if (cfg.kind == MoveKind::None) return {x, log_lik, false};
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd proposal;
  if (cfg.kind == MoveKind::MH)
    proposal = prior_mean + prior_chol * draw_normal(rng, n);
  else
    proposal = x + std::sqrt(cfg.rwm_variance) * draw_normal(rng, n);
  const double lp = lik.log_prob(y, output_offset(m, proposal, Du));
  const double u = rng.uniform();
  if (lp == kNegInf) return {x, log_lik, false};
  // The MH proposal is the transition prior, so the prior cancels and only
  // the likelihood ratio remains. The random walk is symmetric, so the prior
  // has to enter the ratio for the posterior to stay invariant.
  double log_ratio = lp - log_lik;
  if (cfg.kind == MoveKind::RWM) log_ratio += log_prior_ratio(proposal, x, prior_mean, prior_chol);
  if (log_lik == kNegInf || std::log(u) <= log_ratio) return {proposal, lp, true};
  return {x, log_lik, false};
}

std::vector<double> cumulative(const std::vector<double>& w) {
  std::vector<double> c(w.size());
  CompensatedSum s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    s.add(w[i]);
    c[i] = s.value();
  }
  return c;
}

}  // namespace

ResampleScheme parse_scheme(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (l == "sys") return ResampleScheme::SYS;
  if (l == "ml") return ResampleScheme::ML;
  if (l == "mt") return ResampleScheme::MT;
  if (l == "ls") return ResampleScheme::LS;
  throw InvalidArgument(fmt::format("unknown resampling scheme '{}' (expected sys|ml|mt|ls)", s));
}

MoveKind parse_move(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (l == "mh") return MoveKind::MH;
  if (l == "rwm") return MoveKind::RWM;
  if (l == "none") return MoveKind::None;
  throw InvalidArgument(fmt::format("unknown MCMC move '{}' (expected mh|rwm)", s));
}

std::string to_string(ResampleScheme s) {
  switch (s) {
    case ResampleScheme::SYS: return "SYS";
    case ResampleScheme::ML: return "ML";
    case ResampleScheme::MT: return "MT";
    case ResampleScheme::LS: return "LS";
  }
  return "?";
}

std::string to_string(MoveKind k) {
  switch (k) {
    case MoveKind::None: return "NONE";
    case MoveKind::MH: return "MH";
    case MoveKind::RWM: return "RWM";
  }
  return "?";
}

void McmcCfg::validate() const {
  if (kind == MoveKind::RWM && !(rwm_variance > 0.0)) throw InvalidArgument("RWM variance must be positive");
}

void PfCfg::validate() const {
  if (M < 1) throw InvalidArgument("particle count must be at least 1");
  if (mt_iterations < 1) throw InvalidArgument("Metropolis resampling needs at least one iteration");
  mcmc.validate();
}

double LinearLikelihood::log_prob(double y, double offset) const {
  const double d = y - offset;
  return -0.5 * (d * d / R_ + std::log(2.0 * std::numbers::pi * R_));
}

Resampled resample_indices(const std::vector<double>& w, ResampleScheme scheme, StreamKey key, std::uint64_t time,
                           int mt_iterations, bool parallel) {
  const int M = static_cast<int>(w.size());
  Resampled r;
  r.index.assign(static_cast<std::size_t>(M), 0);
  r.w.assign(static_cast<std::size_t>(M), 1.0 / M);
  const bool threads = use_threads(parallel, M, 256);

  switch (scheme) {
    case ResampleScheme::SYS: {
      // Cumulative sums in units of 1/M, snapped to integers when within
      // rounding distance so that equal weights give one copy each.
      std::vector<double> c = cumulative(w);
      const double total = c.back();
      for (auto& v : c) {
        v = v / total * M;
        const double r0 = std::round(v);
        if (std::abs(v - r0) < 1e-9) v = r0;
      }
      const double U = Stream(key, time, Purpose::Resample, 0).uniform();
      int j = 0;
      for (int i = 0; i < M; ++i) {
        while (j < M - 1 && U >= c[static_cast<std::size_t>(j)] - i) ++j;
        r.index[static_cast<std::size_t>(i)] = j;
      }
      break;
    }
    case ResampleScheme::ML: {
      const std::vector<double> c = cumulative(w);
      const double total = c.back();
#pragma omp parallel for schedule(static) if (threads)
      for (int i = 0; i < M; ++i) {
        Stream s(key, time, Purpose::Resample, static_cast<std::uint64_t>(i));
        const double u = s.uniform() * total;
        const auto it = std::upper_bound(c.begin(), c.end(), u);
        r.index[static_cast<std::size_t>(i)] = std::min(M - 1, static_cast<int>(it - c.begin()));
      }
      break;
    }
    case ResampleScheme::MT: {
      const long cap = static_cast<long>(mt_iterations) + 100L * M;
#pragma omp parallel for schedule(static) if (threads)
      for (int i = 0; i < M; ++i) {
        Stream s(key, time, Purpose::Resample, static_cast<std::uint64_t>(i));
        int k = i;
        for (long b = 0; b < cap; ++b) {
          if (b >= mt_iterations && w[static_cast<std::size_t>(k)] > 0.0) break;
          const int j = std::min(M - 1, static_cast<int>(s.uniform() * M));
          const double u = s.uniform();
          if (u * w[static_cast<std::size_t>(k)] < w[static_cast<std::size_t>(j)]) k = j;
        }
        if (!(w[static_cast<std::size_t>(k)] > 0.0))
          k = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
        r.index[static_cast<std::size_t>(i)] = k;
      }
      break;
    }
    case ResampleScheme::LS: {
#pragma omp parallel for schedule(static) if (threads)
      for (int i = 0; i < M; ++i) {
        Stream s(key, time, Purpose::Resample, static_cast<std::uint64_t>(i));
        const int nb[3] = {(i - 1 + M) % M, i, (i + 1) % M};
        const double a = w[static_cast<std::size_t>(nb[0])];
        const double b = w[static_cast<std::size_t>(nb[1])];
        const double c = w[static_cast<std::size_t>(nb[2])];
        const double sum = a + b + c;
        const double u = s.uniform() * sum;
        int pick = i;
        if (sum > 0.0) pick = u < a ? nb[0] : (u < a + b ? nb[1] : nb[2]);
        if (pick == nb[2] && c == 0.0) pick = b > 0.0 ? nb[1] : nb[0];
        r.index[static_cast<std::size_t>(i)] = pick;
        r.w[static_cast<std::size_t>(i)] = sum / 3.0;
      }
      CompensatedSum total;
      for (double v : r.w) total.add(v);
      for (double& v : r.w) v /= total.value();
      break;
    }
  }
  return r;
}

ParticleSet resample(const ParticleSet& ps, ResampleScheme scheme, StreamKey key, std::uint64_t time,
                     int mt_iterations) {
  const Resampled r = resample_indices(ps.w, scheme, key, time, mt_iterations);
  ParticleSet out;
  out.x.resize(ps.dim(), ps.size());
  for (int i = 0; i < ps.size(); ++i) out.x.col(i) = ps.x.col(r.index[static_cast<std::size_t>(i)]);
  out.w = r.w;
  return out;
}

Eigen::VectorXd mcmc_move(const Eigen::VectorXd& x, const Eigen::VectorXd& prior_mean, const Mat& prior_chol,
                          double y, const Vec& u, const LinearSSM& m, const OutputLikelihood& lik, const McmcCfg& cfg,
                          Stream& rng, bool* accepted) {
  const double Du = input_term(m, u);
  const double lp = lik.log_prob(y, output_offset(m, x, Du));
  MoveOutcome o = move_cached(x, lp, prior_mean, prior_chol, y, Du, m, lik, cfg, rng);
  if (accepted) *accepted = o.accepted;
  return o.x;
}

PfStep pf_step(const ParticleSet* prev, double y, const Vec& u_prev, const Vec& u, const LinearSSM& m,
               const OutputLikelihood& lik, const PfCfg& cfg, StreamKey key, std::uint64_t t) {
  const int n = m.state_dim();
  const int M = prev ? prev->size() : cfg.M;
  const bool threads = use_threads(cfg.parallel, M, cfg.parallel_threshold);
  const double Du = input_term(m, u);

  // Mean of the transition prior for every particle, and its square root.
  Eigen::MatrixXd prior_mean(n, M);
  Mat root;
  if (prev) {
    prior_mean.noalias() = Eigen::MatrixXd(m.A) * prev->x;
    prior_mean.colwise() += drift(m, u_prev);
    root = psd_sqrt(m.Q);
  } else {
    prior_mean.colwise() = Eigen::VectorXd(m.mu1);
    root = psd_sqrt(m.P1);
  }
  const Eigen::MatrixXd root_d = root;

  ParticleSet cur;
  cur.x.resize(n, M);
  std::vector<double> logw(static_cast<std::size_t>(M));
  std::vector<double> loglik(static_cast<std::size_t>(M));
  const Purpose draw_purpose = prev ? Purpose::Propagate : Purpose::Init;
#pragma omp parallel for schedule(static) if (threads)
  for (int i = 0; i < M; ++i) {
    Stream s(key, t, draw_purpose, static_cast<std::uint64_t>(i));
    cur.x.col(i) = prior_mean.col(i) + root_d * draw_normal(s, n);
    const double ll = lik.log_prob(y, output_offset(m, cur.x.col(i), Du));
    loglik[static_cast<std::size_t>(i)] = ll;
    const double wp = prev ? prev->w[static_cast<std::size_t>(i)] : 1.0;
    logw[static_cast<std::size_t>(i)] = std::log(wp) + ll;
  }
  normalize_log_weights(logw, cur.w);

  const Resampled r = resample_indices(cur.w, cfg.scheme, key, t, cfg.mt_iterations, cfg.parallel);

  PfStep out;
  out.set.x.resize(n, M);
  out.set.w = r.w;
#pragma omp parallel for schedule(static) if (threads)
  for (int i = 0; i < M; ++i) {
    const int a = r.index[static_cast<std::size_t>(i)];
    Stream s(key, t, Purpose::Move, static_cast<std::uint64_t>(i));
    MoveOutcome o = move_cached(cur.x.col(a), loglik[static_cast<std::size_t>(a)], prior_mean.col(a), root, y, Du, m,
                                lik, cfg.mcmc, s);
    out.set.x.col(i) = o.x;
  }
  out.mean = weighted_mean(out.set);
  return out;
}

PfResult pf_filter(const LinearSSM& m, const OutputLikelihood& lik, const PfCfg& cfg, const VecSeq& u,
                   const std::vector<double>& y, StreamKey key) {
  m.validate();
  cfg.validate();
  if (u.size() != y.size()) throw InvalidArgument("input and output lengths differ");
  PfResult r;
  r.sets.reserve(y.size());
  r.means.reserve(y.size());
  for (std::size_t t = 0; t < y.size(); ++t) {
    const ParticleSet* prev = t == 0 ? nullptr : &r.sets.back();
    const Vec& up = t == 0 ? u[0] : u[t - 1];
    PfStep s = pf_step(prev, y[t], up, u[t], m, lik, cfg, key, t);
    r.means.emplace_back(Vec(s.mean));
    r.sets.push_back(std::move(s.set));
  }
  return r;
}

double transition_bound(const Eigen::VectorXd& x_next, const Eigen::VectorXd& x, const Vec& u, const LinearSSM& m,
                        const Mat& Qinv) {
  const Eigen::VectorXd eta = x_next - Eigen::MatrixXd(m.A) * x - drift(m, u);
  return std::exp(-0.5 * eta.dot(Eigen::MatrixXd(Qinv) * eta));
}

std::vector<ParticleSet> ps_rejection(const std::vector<ParticleSet>& filtered, const LinearSSM& m, const VecSeq& u,
                                      StreamKey key, bool parallel, SmootherStats* stats, int max_attempts) {
  const std::size_t N = filtered.size();
  std::vector<ParticleSet> out(N);
  if (N == 0) return out;
  if (!(min_eigenvalue(m.Q) > 0.0)) throw InvalidArgument("rejection smoothing requires a positive definite Q");
  const Eigen::MatrixXd Qinv = spd_inverse(m.Q);
  const Eigen::MatrixXd A = m.A;
  const int n = m.state_dim();
  const int M = filtered.back().size();
  const bool threads = use_threads(parallel, M, 256);
  out[N - 1] = filtered[N - 1];
  std::size_t draws = 0, acc = 0, caps = 0;

  for (std::size_t t = N - 1; t-- > 0;) {
    const ParticleSet& f = filtered[t];
    const int Mt = f.size();
    const std::vector<double> c = cumulative(f.w);
    const double total = c.back();
    bool uniform = true;
    for (double v : f.w)
      if (v != f.w[0]) {
        uniform = false;
        break;
      }
    const Eigen::VectorXd bu = drift(m, u[t]);
    const Eigen::MatrixXd pred = (A * f.x).colwise() + bu;
    const Eigen::MatrixXd& next = out[t + 1].x;
    out[t].x.resize(n, M);
    out[t].w = out[N - 1].w;
    auto log_f = [&](int i, int tau) {
      const Eigen::VectorXd eta = next.col(i) - pred.col(tau);
      return -0.5 * eta.dot(Qinv * eta);
    };

#pragma omp parallel for schedule(dynamic, 64) if (threads) reduction(+ : draws, acc, caps)
    for (int i = 0; i < M; ++i) {
      Stream s(key, t, Purpose::Smooth, static_cast<std::uint64_t>(i));
      int chosen = -1;
      for (int a = 0; a < max_attempts; ++a) {
        int tau;
        if (uniform) {
          tau = std::min(Mt - 1, static_cast<int>(s.uniform() * Mt));
        } else {
          const auto it = std::upper_bound(c.begin(), c.end(), s.uniform() * total);
          tau = std::min(Mt - 1, static_cast<int>(it - c.begin()));
        }
        const double uu = s.uniform();
        ++draws;
        if (uu <= std::exp(log_f(i, tau))) {
          chosen = tau;
          ++acc;
          break;
        }
      }
      if (chosen < 0) {
        ++caps;
        std::vector<double> lw(static_cast<std::size_t>(Mt));
        for (int k = 0; k < Mt; ++k)
          lw[static_cast<std::size_t>(k)] = std::log(f.w[static_cast<std::size_t>(k)]) + log_f(i, k);
        const double lt = log_sum_exp(lw);
        double target = s.uniform();
        chosen = Mt - 1;
        if (std::isfinite(lt)) {
          for (int k = 0; k < Mt; ++k) {
            target -= std::exp(lw[static_cast<std::size_t>(k)] - lt);
            if (target < 0.0) {
              chosen = k;
              break;
            }
          }
        } else {
          chosen = std::min(Mt - 1, static_cast<int>(target * Mt));
        }
      }
      out[t].x.col(i) = f.x.col(chosen);
    }
  }
  if (caps > 0) numeric_warnings().rejection_cap += caps;
  if (stats) {
    stats->draws += draws;
    stats->accepted += acc;
    stats->cap_hits += caps;
  }
  return out;
}

std::vector<std::vector<double>> ps_marginal(const std::vector<ParticleSet>& filtered, const LinearSSM& m,
                                             const VecSeq& u, bool parallel) {
  const std::size_t N = filtered.size();
  std::vector<std::vector<double>> ws(N);
  if (N == 0) return ws;
  const Eigen::MatrixXd Qinv = spd_inverse(m.Q);
  const Eigen::MatrixXd A = m.A;
  ws[N - 1] = filtered[N - 1].w;

  for (std::size_t t = N - 1; t-- > 0;) {
    const ParticleSet& cur = filtered[t];
    const ParticleSet& nxt = filtered[t + 1];
    const int Mi = cur.size();
    const int Mj = nxt.size();
    const bool threads = use_threads(parallel, Mi, 64);
    const Eigen::MatrixXd pred = (A * cur.x).colwise() + drift(m, u[t]);
    // logk(j, i) = log p(x_{t+1}^j | x_t^i) up to a constant
    Eigen::MatrixXd logk(Mj, Mi);
#pragma omp parallel for schedule(static) if (threads)
    for (int i = 0; i < Mi; ++i)
      for (int j = 0; j < Mj; ++j) {
        const Eigen::VectorXd eta = nxt.x.col(j) - pred.col(i);
        logk(j, i) = -0.5 * eta.dot(Qinv * eta);
      }
    std::vector<double> logw_t(static_cast<std::size_t>(Mi));
    for (int i = 0; i < Mi; ++i) logw_t[static_cast<std::size_t>(i)] = std::log(cur.w[static_cast<std::size_t>(i)]);
    // term_j = log w_{t+1|N}^j - log sum_l w_t^l p(x_{t+1}^j | x_t^l)
    std::vector<double> term(static_cast<std::size_t>(Mj));
#pragma omp parallel for schedule(static) if (threads)
    for (int j = 0; j < Mj; ++j) {
      std::vector<double> v(static_cast<std::size_t>(Mi));
      for (int l = 0; l < Mi; ++l) v[static_cast<std::size_t>(l)] = logw_t[static_cast<std::size_t>(l)] + logk(j, l);
      term[static_cast<std::size_t>(j)] = std::log(ws[t + 1][static_cast<std::size_t>(j)]) - log_sum_exp(v);
    }
    std::vector<double> logs(static_cast<std::size_t>(Mi));
#pragma omp parallel for schedule(static) if (threads)
    for (int i = 0; i < Mi; ++i) {
      std::vector<double> v(static_cast<std::size_t>(Mj));
      for (int j = 0; j < Mj; ++j) v[static_cast<std::size_t>(j)] = term[static_cast<std::size_t>(j)] + logk(j, i);
      logs[static_cast<std::size_t>(i)] = logw_t[static_cast<std::size_t>(i)] + log_sum_exp(v);
    }
    normalize_log_weights(logs, ws[t]);
  }
  return ws;
}

Eigen::VectorXd weighted_mean(const ParticleSet& ps) {
  const int n = ps.dim();
  Eigen::VectorXd mean(n);
  for (int k = 0; k < n; ++k) {
    CompensatedSum s;
    for (int i = 0; i < ps.size(); ++i) s.add(ps.w[static_cast<std::size_t>(i)] * ps.x(k, i));
    mean(k) = s.value();
  }
  return mean;
}

Gaussian weighted_moments(const ParticleSet& ps) {
  const int n = ps.dim();
  const Eigen::VectorXd mean = weighted_mean(ps);
  Gaussian g{Vec(mean), Mat::Zero(n, n)};
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) {
      CompensatedSum s;
      for (int i = 0; i < ps.size(); ++i)
        s.add(ps.w[static_cast<std::size_t>(i)] * (ps.x(a, i) - mean(a)) * (ps.x(b, i) - mean(b)));
      g.cov(a, b) = g.cov(b, a) = s.value();
    }
  return g;
}

void write_particles_csv(std::ostream& os, const std::vector<ParticleSet>& sets) {
  const int n = sets.empty() ? 0 : sets.front().dim();
  os << "t,index,weight";
  for (int k = 1; k <= n; ++k) os << ",x" << k;
  os << '\n';
  for (std::size_t t = 0; t < sets.size(); ++t)
    for (int i = 0; i < sets[t].size(); ++i) {
      os << fmt::format("{},{},{:.17g}", t + 1, i + 1, sets[t].w[static_cast<std::size_t>(i)]);
      for (int k = 0; k < n; ++k) os << fmt::format(",{:.17g}", sets[t].x(k, i));
      os << '\n';
    }
}

}  // namespace qfilt
