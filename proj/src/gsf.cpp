#include "qfilt/gsf.hpp"

#include "qfilt/diagnostics.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <ostream>

namespace qfilt {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

GaussianMixture single(const Vec& mean, const Mat& cov) {
  GaussianMixture g;
  g.components.push_back({1.0, mean, cov});
  return g;
}

// Turns log weights into normalized weights. If nothing survives, the
// heaviest component (first on ties) takes all the mass.
void assign_normalized(std::vector<MixtureComponent>& comps, const std::vector<double>& logw) {
  const double total = log_sum_exp(logw);
  if (!std::isfinite(total)) {
    numeric_warnings().zero_weight_fallback++;
    std::size_t best = 0;
    for (std::size_t i = 1; i < logw.size(); ++i)
      if (logw[i] > logw[best]) best = i;
    MixtureComponent keep = comps[best];
    keep.weight = 1.0;
    comps.assign(1, keep);
    return;
  }
  for (std::size_t i = 0; i < comps.size(); ++i) comps[i].weight = std::exp(logw[i] - total);
}

BackwardStep reduce_backward(std::vector<BackwardComponent> comps, int S_max, const ReduceCfg& reduce) {
  BackwardStep out;
  std::vector<MomentComponent> moments;
  moments.reserve(comps.size());
  for (auto& c : comps) {
    if (auto mc = canonical_to_moment(c)) {
      moments.push_back(std::move(*mc));
    } else {
      out.reduced.singular.push_back(c);
      out.canonical.push_back(std::move(c));
    }
  }
  if (moments.empty()) return out;

  std::vector<double> logd(moments.size());
  for (std::size_t i = 0; i < moments.size(); ++i) logd[i] = moments[i].log_delta;
  const double log_total = log_sum_exp(logd);
  if (!std::isfinite(log_total)) throw NumericalError("backward likelihood vanished");

  GaussianMixture mix;
  mix.components.reserve(moments.size());
  for (std::size_t i = 0; i < moments.size(); ++i)
    mix.components.push_back({std::exp(logd[i] - log_total), moments[i].z, moments[i].U});
  const GaussianMixture reduced = mixture_reduce(mix, S_max, reduce);

  for (const auto& c : reduced.components) {
    MomentComponent mc{log_total + std::log(c.weight), c.mean, c.cov};
    out.canonical.push_back(moment_to_canonical(mc, c.weight));
    out.reduced.normalizable.push_back(std::move(mc));
  }
  return out;
}

}  // namespace

std::vector<BackwardComponent> backward_measurement_expand(const std::vector<BackwardComponent>& pred, const Vec& u,
                                                  const LinearSSM& m, const LikelihoodMixtureParams& p) {
  const double Du = m.D.cols() > 0 ? (m.D * u)(0, 0) : 0.0;
  const Vec Ct = m.C.transpose();
  const Mat CtC = Ct * m.C / m.R;
  const double log_norm = -0.5 * (kLog2Pi + std::log(m.R));
  std::vector<BackwardComponent> out;
  out.reserve(pred.size() * p.size());
  for (const auto& c : pred) {
    const Mat F = c.F + CtC;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double theta = p.pseudo_obs[k] - Du - p.shift[k];
      BackwardComponent b;
      b.eps = p.scale[k] * c.eps;
      b.log_lambda = c.log_lambda + log_norm;
      b.F = F;
      b.G = c.G + Ct * (theta / m.R);
      b.H = c.H + theta * theta / m.R;
      out.push_back(std::move(b));
    }
  }
  return out;
}

void GsfCfg::validate() const {
  if (K < 1 || K > 64) throw InvalidArgument(fmt::format("GSF quadrature order K={} outside [1, 64]", K));
  if (M_max < 1) throw InvalidArgument("GSF M_max must be at least 1");
  if (S_red < 1) throw InvalidArgument("GSS S_red must be at least 1");
}

ParamsProvider quantized_params(const Quantizer& q, int K) {
  GLRule rule = gl_rule(K);
  return [q, rule = std::move(rule)](std::size_t, double y) { return likelihood_mixture_params(y, q, rule); };
}

ParamsProvider linear_output_params() {
  return [](std::size_t, double y) {
    LikelihoodMixtureParams p;
    p.scale = {1.0};
    p.pseudo_obs = {y};
    p.shift = {0.0};
    return p;
  };
}

GsfStep gsf_filter_step(const GaussianMixture& prior, const Vec& u, const LinearSSM& m,
                        const LikelihoodMixtureParams& params, int M_max, const ReduceCfg& reduce) {
  const double Du = m.D.cols() > 0 ? (m.D * u)(0, 0) : 0.0;
  const std::size_t K = params.size();
  std::vector<MixtureComponent> comps;
  std::vector<double> logw;
  comps.reserve(prior.size() * K);
  logw.reserve(prior.size() * K);
  std::vector<double> log_scale(K);
  for (std::size_t k = 0; k < K; ++k) log_scale[k] = std::log(params.scale[k]);

  for (const auto& c : prior.components) {
    if (!(c.weight > 0.0)) continue;
    const Vec PCt = c.cov * m.C.transpose();
    const double V = m.R + (m.C * PCt)(0, 0);
    const Vec gain = PCt / V;
    Mat cov = c.cov - gain * PCt.transpose();
    symmetrize(cov);
    const double Cx = (m.C * c.mean)(0, 0);
    const double base = std::log(c.weight) - 0.5 * (kLog2Pi + std::log(V));
    for (std::size_t k = 0; k < K; ++k) {
      const double d = params.pseudo_obs[k] - (Cx + Du + params.shift[k]);
      logw.push_back(log_scale[k] + base - 0.5 * d * d / V);
      comps.push_back({0.0, c.mean + gain * d, cov});
    }
  }
  if (comps.empty()) throw NumericalError("GSF prior has no component with positive weight");
  assign_normalized(comps, logw);

  GsfStep step;
  GaussianMixture raw;
  raw.components = std::move(comps);
  step.posterior = mixture_reduce(raw, M_max, reduce);

  const Vec Bu = m.B.cols() > 0 ? Vec(m.B * u) : Vec::Zero(m.state_dim());
  step.predicted.components.reserve(step.posterior.size());
  for (const auto& c : step.posterior.components) {
    Mat cov = m.Q + m.A * c.cov * m.A.transpose();
    symmetrize(cov);
    step.predicted.components.push_back({c.weight, m.A * c.mean + Bu, cov});
  }
  return step;
}

GsfResult gsf_filter(const LinearSSM& m, const ParamsProvider& params, const GsfCfg& cfg, const VecSeq& u,
                     const std::vector<double>& y) {
  m.validate();
  cfg.validate();
  if (u.size() != y.size()) throw InvalidArgument("input and output lengths differ");
  GsfResult r;
  r.filtered.reserve(y.size());
  r.predicted.reserve(y.size());
  r.params.reserve(y.size());
  GaussianMixture prior = single(m.mu1, m.P1);
  for (std::size_t t = 0; t < y.size(); ++t) {
    r.params.push_back(params(t, y[t]));
    GsfStep s = gsf_filter_step(prior, u[t], m, r.params.back(), cfg.M_max, cfg.reduce);
    r.filtered.push_back(std::move(s.posterior));
    prior = s.predicted;
    r.predicted.push_back(std::move(s.predicted));
  }
  return r;
}

GsfResult gsf_filter(const LinearSSM& m, const Quantizer& q, const GsfCfg& cfg, const VecSeq& u,
                     const std::vector<double>& y) {
  cfg.validate();
  return gsf_filter(m, quantized_params(q, cfg.K), cfg, u, y);
}

double BackwardComponent::log_value(const Vec& x) const {
  return std::log(eps) + log_lambda - 0.5 * (x.dot(F * x) - 2.0 * G.dot(x) + H);
}

std::optional<MomentComponent> canonical_to_moment(const BackwardComponent& c) {
  const int n = static_cast<int>(c.F.rows());
  if (n == 1) {
    if (!(c.F(0, 0) > 0.0)) return std::nullopt;
  } else if (!(min_eigenvalue(c.F) > 0.0) || spd_rcond(c.F) < 1e-12) {
    return std::nullopt;
  }
  MomentComponent mc;
  mc.U = spd_inverse(c.F);
  mc.z = mc.U * c.G;
  mc.log_delta = std::log(c.eps) + c.log_lambda + 0.5 * n * kLog2Pi - 0.5 * spd_log_det(c.F) -
                 0.5 * (c.H - c.G.dot(mc.z));
  return mc;
}

BackwardComponent moment_to_canonical(const MomentComponent& c, double eps) {
  const int n = static_cast<int>(c.z.size());
  BackwardComponent b;
  b.F = spd_inverse(c.U);
  b.G = b.F * c.z;
  b.H = c.z.dot(b.G);
  b.eps = eps;
  b.log_lambda = c.log_delta - std::log(eps) - 0.5 * n * kLog2Pi + 0.5 * spd_log_det(b.F);
  return b;
}

BackwardStep backward_init(const Vec& u, const LinearSSM& m, const LikelihoodMixtureParams& params, int S_max,
                           const ReduceCfg& reduce) {
  const int n = m.state_dim();
  BackwardComponent flat;
  flat.eps = 1.0;
  flat.log_lambda = 0.0;
  flat.F = Mat::Zero(n, n);
  flat.G = Vec::Zero(n);
  flat.H = 0.0;
  return reduce_backward(backward_measurement_expand({flat}, u, m, params), S_max, reduce);
}

BackwardStep backward_step(const std::vector<BackwardComponent>& next, const Vec& u, const LinearSSM& m,
                           const LikelihoodMixtureParams& params, int S_max, const ReduceCfg& reduce) {
  const Mat Qi = spd_inverse(m.Q);
  const double logdetQ = spd_log_det(m.Q);
  const Vec Bu = m.B.cols() > 0 ? Vec(m.B * u) : Vec::Zero(m.state_dim());
  const Mat At = m.A.transpose();

  std::vector<BackwardComponent> pred;
  pred.reserve(next.size());
  for (const auto& c : next) {
    const Mat Fq = c.F + Qi;
    const Mat Fqi = spd_inverse(Fq);
    Mat M = Qi - Qi * Fqi * Qi;
    symmetrize(M);
    const Vec FqiG = Fqi * c.G;
    const Vec MBu = M * Bu;
    BackwardComponent b;
    b.eps = c.eps;
    b.log_lambda = c.log_lambda - 0.5 * (logdetQ + spd_log_det(Fq));
    b.F = At * M * m.A;
    symmetrize(b.F);
    b.G = At * (Qi * FqiG) - At * MBu;
    b.H = c.H - c.G.dot(FqiG) + Bu.dot(MBu) - 2.0 * Bu.dot(Qi * FqiG);
    pred.push_back(std::move(b));
  }
  return reduce_backward(backward_measurement_expand(pred, u, m, params), S_max, reduce);
}

GaussianMixture gss_combine_step(const GaussianMixture& predicted, const ReducedBackward& backward) {
  const int n = static_cast<int>(predicted.components.front().mean.size());
  struct Prior {
    double log_gamma;
    Vec mean;
    Mat info;
    Vec info_mean;
    double phi2;
    double logdet;
  };
  std::vector<Prior> priors;
  priors.reserve(predicted.size());
  for (const auto& c : predicted.components) {
    if (!(c.weight > 0.0)) continue;
    Prior p;
    p.log_gamma = std::log(c.weight);
    p.mean = c.mean;
    p.info = spd_inverse(c.cov);
    p.info_mean = p.info * c.mean;
    p.phi2 = c.mean.dot(p.info_mean);
    p.logdet = spd_log_det(c.cov);
    priors.push_back(std::move(p));
  }

  std::vector<MixtureComponent> comps;
  std::vector<double> logw;
  comps.reserve(priors.size() * backward.size());
  logw.reserve(priors.size() * backward.size());

  for (const auto& b : backward.normalizable) {
    const Mat Ui = spd_inverse(b.U);
    const Vec Uiz = Ui * b.z;
    const double phi1 = b.z.dot(Uiz);
    const double logdetU = spd_log_det(b.U);
    for (const auto& p : priors) {
      const Mat L = Ui + p.info;
      const Mat Li = spd_inverse(L);
      const Vec rho = Uiz + p.info_mean;
      const Vec mean = Li * rho;
      const double phi3 = rho.dot(mean);
      logw.push_back(p.log_gamma + b.log_delta - 0.5 * (phi1 + p.phi2 - phi3) - 0.5 * n * kLog2Pi -
                     0.5 * (spd_log_det(L) + logdetU + p.logdet));
      comps.push_back({0.0, mean, Li});
    }
  }
  for (const auto& b : backward.singular) {
    for (const auto& p : priors) {
      const Mat L = b.F + p.info;
      const Mat Li = spd_inverse(L);
      const Vec rho = b.G + p.info_mean;
      const Vec mean = Li * rho;
      const double phi3 = rho.dot(mean);
      logw.push_back(p.log_gamma + std::log(b.eps) + b.log_lambda - 0.5 * (b.H + p.phi2 - phi3) -
                     0.5 * (spd_log_det(L) + p.logdet));
      comps.push_back({0.0, mean, Li});
    }
  }
  if (comps.empty()) throw NumericalError("smoothing combine produced no components");
  assign_normalized(comps, logw);
  GaussianMixture out;
  out.components = std::move(comps);
  return out;
}

GssResult gss_smoother(const LinearSSM& m, const GsfResult& forward, const GsfCfg& cfg, const VecSeq& u,
                       bool keep_mixtures) {
  cfg.validate();
  if (!(min_eigenvalue(m.Q) > 0.0)) throw InvalidArgument("Gaussian sum smoothing requires a positive definite Q");
  const std::size_t N = forward.size();
  if (u.size() != N) throw InvalidArgument("input length does not match the filter run");
  GssResult r;
  r.moments.resize(N);
  if (keep_mixtures) r.mixtures.resize(N);
  if (N == 0) return r;

  r.moments[N - 1] = mixture_moments(forward.filtered[N - 1]);
  if (keep_mixtures) r.mixtures[N - 1] = forward.filtered[N - 1];

  BackwardStep step = backward_init(u[N - 1], m, forward.params[N - 1], cfg.S_red, cfg.reduce);
  const GaussianMixture prior = single(m.mu1, m.P1);
  for (std::size_t t = N - 1; t-- > 0;) {
    step = backward_step(step.canonical, u[t], m, forward.params[t], cfg.S_red, cfg.reduce);
    const GaussianMixture& pred = t == 0 ? prior : forward.predicted[t - 1];
    GaussianMixture smoothed = gss_combine_step(pred, step.reduced);
    r.moments[t] = mixture_moments(smoothed);
    if (keep_mixtures) r.mixtures[t] = std::move(smoothed);
  }
  return r;
}

void write_mixture_csv(std::ostream& os, const std::vector<GaussianMixture>& mixtures) {
  int n = 0;
  for (const auto& mix : mixtures)
    if (!mix.empty()) {
      n = static_cast<int>(mix.components.front().mean.size());
      break;
    }
  os << "t,component,weight";
  for (int i = 1; i <= n; ++i) os << ",mean" << i;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) os << ",cov" << i << j;
  os << '\n';
  for (std::size_t t = 0; t < mixtures.size(); ++t) {
    for (std::size_t k = 0; k < mixtures[t].size(); ++k) {
      const auto& c = mixtures[t].components[k];
      os << fmt::format("{},{},{:.17g}", t + 1, k + 1, c.weight);
      for (int i = 0; i < n; ++i) os << fmt::format(",{:.17g}", c.mean(i));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) os << fmt::format(",{:.17g}", c.cov(i, j));
      os << '\n';
    }
  }
}

}  // namespace qfilt
