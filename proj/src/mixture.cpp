#include "qfilt/mixture.hpp"

#include "qfilt/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <queue>
#include <limits>
#include <tuple>

namespace qfilt {

double GaussianMixture::total_weight() const {
  double s = 0.0;
  for (const auto& c : components) s += c.weight;
  return s;
}

void GaussianMixture::normalize() {
  const double s = total_weight();
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericalError(fmt::format("mixture weight total {} cannot be normalized", s));
  for (auto& c : components) c.weight /= s;
}

Gaussian mixture_moments(const GaussianMixture& mix) {
  const int n = static_cast<int>(mix.components.front().mean.size());
  Gaussian g{Vec::Zero(n), Mat::Zero(n, n)};
  for (const auto& c : mix.components) g.mean += c.weight * c.mean;
  for (const auto& c : mix.components) {
    const Vec d = c.mean - g.mean;
    g.cov += c.weight * (c.cov + d * d.transpose());
  }
  symmetrize(g.cov);
  return g;
}

double mixture_pdf(const GaussianMixture& mix, const Vec& x) {
  double acc = 0.0;
  for (const auto& c : mix.components) {
    const int n = static_cast<int>(x.size());
    const Vec d = x - c.mean;
    const double q = d.dot(spd_inverse(c.cov) * d);
    acc += c.weight * std::exp(-0.5 * (q + spd_log_det(c.cov) + n * std::log(2.0 * std::numbers::pi)));
  }
  return acc;
}

MixtureComponent merge_components(const MixtureComponent& a, const MixtureComponent& b) {
  MixtureComponent m;
  m.weight = a.weight + b.weight;
  const double wa = a.weight / m.weight;
  const double wb = b.weight / m.weight;
  m.mean = wa * a.mean + wb * b.mean;
  const Vec d = a.mean - b.mean;
  m.cov = wa * a.cov + wb * b.cov + (wa * wb) * d * d.transpose();
  symmetrize(m.cov);
  return m;
}

double merge_cost(const MixtureComponent& a, const MixtureComponent& b) {
  const MixtureComponent m = merge_components(a, b);
  return 0.5 * (m.weight * spd_log_det(m.cov) - a.weight * spd_log_det(a.cov) - b.weight * spd_log_det(b.cov));
}

namespace {

GaussianMixture prune(const GaussianMixture& mix, double threshold) {
  GaussianMixture out;
  out.components.reserve(mix.size());
  for (const auto& c : mix.components)
    if (c.weight >= threshold) out.components.push_back(c);
  if (out.empty()) {
    const auto it = std::max_element(mix.components.begin(), mix.components.end(),
                                     [](const auto& a, const auto& b) { return a.weight < b.weight; });
    out.components.push_back(*it);
  }
  out.normalize();
  return out;
}

// Principal direction of the spread of component means.
Vec principal_axis(const GaussianMixture& mix) {
  const int n = static_cast<int>(mix.components.front().mean.size());
  if (n == 1) return Vec::Ones(1);
  Vec mean = Vec::Zero(n);
  for (const auto& c : mix.components) mean += c.weight * c.mean;
  Mat S = Mat::Zero(n, n);
  for (const auto& c : mix.components) {
    const Vec d = c.mean - mean;
    S += c.weight * d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(S);
  return es.eigenvectors().col(n - 1);
}

struct Edge {
  double cost;
  int i;
  int j;
  unsigned vi;
  unsigned vj;

  bool operator>(const Edge& o) const { return std::tie(cost, i, j) > std::tie(o.cost, o.i, o.j); }
};

}  // namespace

namespace {

// Flat working copy of a mixture used by the greedy reduction. Means and
// covariances live in contiguous arrays; log determinants are cached.
class ReductionWork {
 public:
  ReductionWork(const GaussianMixture& mix, int n) : n_(n), count_(static_cast<int>(mix.size())) {
    const auto cnt = static_cast<std::size_t>(count_);
    w_.resize(cnt);
    logdet_.resize(cnt);
    mean_.resize(cnt * static_cast<std::size_t>(n));
    cov_.resize(cnt * static_cast<std::size_t>(n * n));
    for (int i = 0; i < count_; ++i) {
      const auto& c = mix.components[static_cast<std::size_t>(i)];
      w_[static_cast<std::size_t>(i)] = c.weight;
      for (int a = 0; a < n; ++a) {
        mean(i)[a] = c.mean(a);
        for (int b = 0; b < n; ++b) cov(i)[a * n + b] = c.cov(a, b);
      }
      logdet_[static_cast<std::size_t>(i)] = log_det(cov(i));
    }
  }

  double cost(int i, int j) const {
    double buf[kMaxDim * kMaxDim];
    const double wi = w_[static_cast<std::size_t>(i)];
    const double wj = w_[static_cast<std::size_t>(j)];
    merged_cov(i, j, buf);
    return 0.5 * ((wi + wj) * log_det(buf) - wi * logdet_[static_cast<std::size_t>(i)] -
                  wj * logdet_[static_cast<std::size_t>(j)]);
  }

  // Merges j into i.
  void merge(int i, int j) {
    double buf[kMaxDim * kMaxDim];
    merged_cov(i, j, buf);
    const double wi = w_[static_cast<std::size_t>(i)];
    const double wj = w_[static_cast<std::size_t>(j)];
    const double w = wi + wj;
    double* mi = mean(i);
    const double* mj = mean(j);
    for (int a = 0; a < n_; ++a) mi[a] = (wi * mi[a] + wj * mj[a]) / w;
    std::copy(buf, buf + n_ * n_, cov(i));
    w_[static_cast<std::size_t>(i)] = w;
    logdet_[static_cast<std::size_t>(i)] = log_det(cov(i));
  }

  double key(int i, const Vec& axis) const {
    double s = 0.0;
    for (int a = 0; a < n_; ++a) s += axis(a) * mean(i)[a];
    return s;
  }

  MixtureComponent component(int i) const {
    MixtureComponent c;
    c.weight = w_[static_cast<std::size_t>(i)];
    c.mean.resize(n_);
    c.cov.resize(n_, n_);
    for (int a = 0; a < n_; ++a) {
      c.mean(a) = mean(i)[a];
      for (int b = 0; b < n_; ++b) c.cov(a, b) = cov(i)[a * n_ + b];
    }
    symmetrize(c.cov);
    return c;
  }

 private:
  double* mean(int i) { return mean_.data() + static_cast<std::size_t>(i) * n_; }
  const double* mean(int i) const { return mean_.data() + static_cast<std::size_t>(i) * n_; }
  double* cov(int i) { return cov_.data() + static_cast<std::size_t>(i) * n_ * n_; }
  const double* cov(int i) const { return cov_.data() + static_cast<std::size_t>(i) * n_ * n_; }

  void merged_cov(int i, int j, double* out) const {
    const double wi = w_[static_cast<std::size_t>(i)];
    const double wj = w_[static_cast<std::size_t>(j)];
    const double w = wi + wj;
    const double a = wi / w;
    const double b = wj / w;
    const double* mi = mean(i);
    const double* mj = mean(j);
    const double* Pi = cov(i);
    const double* Pj = cov(j);
    double d[kMaxDim];
    for (int k = 0; k < n_; ++k) d[k] = mi[k] - mj[k];
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < n_; ++c)
        out[r * n_ + c] = a * Pi[r * n_ + c] + b * Pj[r * n_ + c] + a * b * d[r] * d[c];
  }

  double log_det(const double* P) const {
    if (n_ == 1) return P[0] > 0.0 ? std::log(P[0]) : -std::numeric_limits<double>::infinity();
    if (n_ == 2) {
      const double det = P[0] * P[3] - P[1] * P[2];
      return det > 0.0 ? std::log(det) : -std::numeric_limits<double>::infinity();
    }
    Mat m(n_, n_);
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < n_; ++c) m(r, c) = P[r * n_ + c];
    return spd_log_det(m);
  }

  int n_;
  int count_;
  std::vector<double> w_;
  std::vector<double> logdet_;
  std::vector<double> mean_;
  std::vector<double> cov_;
};

}  // namespace

GaussianMixture mixture_reduce(const GaussianMixture& mix, int target, const ReduceCfg& cfg) {
  if (target < 1) throw InvalidArgument("reduction target must be at least 1");
  if (mix.empty()) return mix;
  if (static_cast<int>(mix.size()) <= target) {
    GaussianMixture out = mix;
    out.normalize();
    return out;
  }
  const GaussianMixture pruned = prune(mix, cfg.prune_threshold);
  const int count = static_cast<int>(pruned.size());
  if (count <= target) return pruned;
  if (cfg.window <= 0 || count <= cfg.window + 1) return mixture_reduce_exhaustive(pruned, target, 0.0);

  const int n = static_cast<int>(pruned.components.front().mean.size());
  ReductionWork work(pruned, n);
  const Vec axis = principal_axis(pruned);
  std::vector<int> order(static_cast<std::size_t>(count));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> key(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) key[static_cast<std::size_t>(i)] = work.key(i, axis);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return key[static_cast<std::size_t>(a)] < key[static_cast<std::size_t>(b)]; });

  std::vector<std::vector<int>> adj(static_cast<std::size_t>(count));
  std::vector<unsigned> version(static_cast<std::size_t>(count), 0);
  std::vector<char> alive(static_cast<std::size_t>(count), 1);
  std::vector<Edge> storage;
  storage.reserve(static_cast<std::size_t>(count) * static_cast<std::size_t>(cfg.window) * 2);
  std::priority_queue<Edge, std::vector<Edge>, std::greater<>> heap(std::greater<>{}, std::move(storage));
  auto push_edge = [&](int a, int b) {
    if (a > b) std::swap(a, b);
    heap.push({work.cost(a, b), a, b, version[static_cast<std::size_t>(a)], version[static_cast<std::size_t>(b)]});
  };
  for (int p = 0; p < count; ++p) {
    for (int q = p + 1; q < std::min(count, p + 1 + cfg.window); ++q) {
      const int a = order[static_cast<std::size_t>(p)];
      const int b = order[static_cast<std::size_t>(q)];
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
      push_edge(a, b);
    }
  }

  int remaining = count;
  std::vector<int> merged;
  while (remaining > target && !heap.empty()) {
    const Edge e = heap.top();
    heap.pop();
    const auto ui = static_cast<std::size_t>(e.i);
    const auto uj = static_cast<std::size_t>(e.j);
    if (!alive[ui] || !alive[uj] || version[ui] != e.vi || version[uj] != e.vj) continue;
    work.merge(e.i, e.j);
    alive[uj] = 0;
    ++version[ui];
    --remaining;
    merged.clear();
    for (int k : adj[ui])
      if (k != e.j && alive[static_cast<std::size_t>(k)]) merged.push_back(k);
    for (int k : adj[uj])
      if (k != e.i && alive[static_cast<std::size_t>(k)]) merged.push_back(k);
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    adj[ui] = merged;
    adj[uj].clear();
    adj[uj].shrink_to_fit();
    for (int k : merged) {
      auto& ak = adj[static_cast<std::size_t>(k)];
      // j's slot now points at i; a duplicate i is harmless.
      std::replace(ak.begin(), ak.end(), e.j, e.i);
      push_edge(e.i, k);
    }
  }

  GaussianMixture out;
  out.components.reserve(static_cast<std::size_t>(remaining));
  for (int i = 0; i < count; ++i)
    if (alive[static_cast<std::size_t>(i)]) out.components.push_back(work.component(i));
  out.normalize();
  return out;
}

GaussianMixture mixture_reduce_exhaustive(const GaussianMixture& mix, int target, double prune_threshold) {
  if (target < 1) throw InvalidArgument("reduction target must be at least 1");
  if (mix.empty()) return mix;
  if (static_cast<int>(mix.size()) <= target) {
    GaussianMixture out = mix;
    out.normalize();
    return out;
  }
  GaussianMixture work = prune(mix, prune_threshold);
  auto& c = work.components;
  while (static_cast<int>(c.size()) > target) {
    std::size_t bi = 0;
    std::size_t bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i)
      for (std::size_t j = i + 1; j < c.size(); ++j) {
        const double cost = merge_cost(c[i], c[j]);
        if (cost < best) {
          best = cost;
          bi = i;
          bj = j;
        }
      }
    c[bi] = merge_components(c[bi], c[bj]);
    c.erase(c.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  work.normalize();
  return work;
}

}  // namespace qfilt
