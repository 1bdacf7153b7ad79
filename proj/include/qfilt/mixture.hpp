#pragma once

#include "qfilt/linalg.hpp"

#include <vector>

namespace qfilt {

struct MixtureComponent {
  double weight = 0.0;
  Vec mean;
  Mat cov;
};

struct GaussianMixture {
  std::vector<MixtureComponent> components;

  std::size_t size() const { return components.size(); }
  bool empty() const { return components.empty(); }
  double total_weight() const;
  /// Rescales weights to sum to one. Throws NumericalError if the total is
  /// not positive and finite.
  void normalize();
};

/// Overall mean and covariance of the mixture (weights assumed normalized).
Gaussian mixture_moments(const GaussianMixture& mix);

/// Mixture density at x.
double mixture_pdf(const GaussianMixture& mix, const Vec& x);

/// Moment-preserving merge of two weighted components.
MixtureComponent merge_components(const MixtureComponent& a, const MixtureComponent& b);

/// Upper bound on the KL discrepancy caused by merging a and b (Runnalls).
double merge_cost(const MixtureComponent& a, const MixtureComponent& b);

struct ReduceCfg {
  /// Components lighter than this are dropped before merging.
  double prune_threshold = 1e-12;
  /// Each component only considers merge partners among its `window`
  /// nearest neighbours along the principal axis of the mixture. Zero means
  /// all pairs.
  int window = 2;
};

/// Prune, then greedily merge the cheapest pair until at most `target`
/// components remain. Weights of the result sum to one.
GaussianMixture mixture_reduce(const GaussianMixture& mix, int target, const ReduceCfg& cfg = {});

/// All-pairs greedy reduction with an O(n^3) loop; reference for tests.
GaussianMixture mixture_reduce_exhaustive(const GaussianMixture& mix, int target, double prune_threshold = 1e-12);

}  // namespace qfilt
