#include "helpers.hpp"

#include "qfilt/likelihood.hpp"
#include "oracles/small.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace qfilt;

namespace {

// Reference Phi in long double.
long double ref_cdf(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

double max_mixture_error(const Quantizer& q, int K, double R, double lo, double hi, double step) {
  const GLRule rule = gl_rule(K);
  double worst = 0.0;
  for (double y : q.levels_between(lo, hi)) {
    const auto p = likelihood_mixture_params(y, q, rule);
    for (double o = lo; o <= hi; o += step)
      worst = std::max(worst, std::abs(mixture_likelihood(p, o, R) - exact_likelihood_at(y, o, R, q)));
  }
  return worst;
}

}  // namespace

TEST_CASE("normal CDF against a long double reference") {
  for (double x = -30.0; x <= 8.0; x += 0.173) {
    const double ref = static_cast<double>(ref_cdf(x));
    CHECK(std::abs(normal_cdf(x) - ref) <= 1e-15 + 1e-14 * ref);
    if (x < 30 && ref > 0.0) CHECK(log_normal_cdf(x) == doctest::Approx(std::log(ref)).epsilon(1e-12));
  }
  // deep lower tail stays finite and decreasing
  CHECK(std::isfinite(log_normal_cdf(-60.0)));
  CHECK(log_normal_cdf(-60.0) < log_normal_cdf(-40.0));
  CHECK(log_normal_cdf(-40.0) == doctest::Approx(-804.608442013754).epsilon(1e-10));
}

TEST_CASE("exact likelihood of the zero level at zero offset") {
  const LinearSSM m = testing::benchmark_model();
  const Quantizer q = Quantizer::uniform(8.0);
  // Phi(4/sqrt(0.5)) - Phi(-4/sqrt(0.5)) = 1 - erfc(4)
  const double expected = 1.0 - std::erfc(4.0);
  CHECK(exact_likelihood_at(0.0, 0.0, 0.5, q) == doctest::Approx(expected).epsilon(1e-15));
  // x and u chosen so that C x + D u = 0
  const Vec x = Vec::Constant(1, -0.75 / 2.2);
  const Vec u = Vec::Constant(1, 1.0);
  CHECK(exact_likelihood(0.0, x, u, m, q) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(log_exact_likelihood(0.0, x, u, m, q) == doctest::Approx(std::log(expected)).epsilon(1e-14));
}

TEST_CASE("likelihood sums to one over all levels") {
  const Quantizer ilq = Quantizer::uniform(8.0);
  const double R = 0.5;
  for (double offset = -25.0; offset <= 25.0; offset += 0.37) {
    const double reach = 8.0 * std::sqrt(R) + ilq.step();
    double total = 0.0;
    for (double y : ilq.levels_between(offset - reach, offset + reach)) total += exact_likelihood_at(y, offset, R, ilq);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
  }
  const Quantizer flq = Quantizer::finite({-3.0, -1.0, 1.0, 3.0}, {-4.0, -2.0, 0.0, 2.0, 4.0});
  for (double offset = -10.0; offset <= 10.0; offset += 0.41) {
    double total = 0.0;
    for (double y : flq.levels()) total += exact_likelihood_at(y, offset, R, flq);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("finite quantizer saturates at the edge levels") {
  const Quantizer flq = Quantizer::finite({-1.0, 1.0}, {-2.0, 0.0, 2.0});
  CHECK(exact_likelihood_at(-2.0, -50.0, 0.5, flq) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(exact_likelihood_at(2.0, 50.0, 0.5, flq) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(exact_likelihood_at(2.0, -50.0, 0.5, flq) == 0.0);
  CHECK(std::isfinite(log_exact_likelihood_at(2.0, -50.0, 0.5, flq)));
}

TEST_CASE("log likelihood agrees with the likelihood and survives underflow") {
  const Quantizer q = Quantizer::uniform(1.0);
  for (double offset = -6.0; offset <= 6.0; offset += 0.29) {
    const double p = exact_likelihood_at(0.0, offset, 0.01, q);
    if (p > 1e-300) CHECK(log_exact_likelihood_at(0.0, offset, 0.01, q) == doctest::Approx(std::log(p)).epsilon(1e-10));
  }
  const double far = log_exact_likelihood_at(0.0, 40.0, 0.01, q);
  CHECK(std::isfinite(far));
  CHECK(far < -1000.0);
  // mirrored case gives the same value
  CHECK(log_exact_likelihood_at(0.0, -40.0, 0.01, q) == doctest::Approx(far).epsilon(1e-12));
}

TEST_CASE("Gauss-Legendre rules") {
  const GLRule r1 = gl_rule(1);
  REQUIRE(r1.order() == 1);
  CHECK(r1.nodes[0] == 0.0);
  CHECK(r1.weights[0] == doctest::Approx(2.0).epsilon(1e-15));

  const GLRule r2 = gl_rule(2);
  CHECK(r2.nodes[0] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(r2.nodes[1] == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
  CHECK(r2.weights[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r2.weights[1] == doctest::Approx(1.0).epsilon(1e-15));

  const GLRule r10 = gl_rule(10);
  double x8 = 0.0;
  for (int i = 0; i < 10; ++i) x8 += r10.weights[static_cast<std::size_t>(i)] * std::pow(r10.nodes[static_cast<std::size_t>(i)], 8);
  CHECK(std::abs(x8 - 2.0 / 9.0) < 1e-13);

  for (int K = 1; K <= 64; ++K) {
    const GLRule r = gl_rule(K);
    double sum = 0.0;
    for (double w : r.weights) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(std::abs(sum - 2.0) < 1e-12);
    for (int i = 0; i < K; ++i) {
      const auto a = static_cast<std::size_t>(i);
      const auto b = static_cast<std::size_t>(K - 1 - i);
      CHECK(std::abs(r.nodes[a] + r.nodes[b]) < 1e-15);
      if (i > 0) CHECK(r.nodes[a] > r.nodes[a - 1]);
    }
    // exact for the highest even degree 2K - 2 (odd degrees vanish by symmetry)
    if (K <= 20) {
      double acc = 0.0;
      for (int i = 0; i < K; ++i)
        acc += r.weights[static_cast<std::size_t>(i)] * std::pow(r.nodes[static_cast<std::size_t>(i)], 2 * K - 2);
      CHECK(std::abs(acc - oracle::monomial_integral(2 * K - 2)) < 1e-13);
    }
  }
  CHECK_THROWS_AS(gl_rule(0), InvalidArgument);
  CHECK_THROWS_AS(gl_rule(65), InvalidArgument);
}

TEST_CASE("mixture parameters for interior and edge regions") {
  const Quantizer flq = Quantizer::finite({-1.0, 3.0}, {-2.0, 1.0, 5.0});
  // K = 1 on the interior region [-1, 3)
  auto p = likelihood_mixture_params(1.0, flq, gl_rule(1));
  REQUIRE(p.size() == 1);
  CHECK(p.scale[0] == doctest::Approx(4.0));
  CHECK(p.pseudo_obs[0] == 0.0);
  CHECK(p.shift[0] == doctest::Approx(-1.0));

  // K = 3 has a node at zero, weight 8/9
  const GLRule r3 = gl_rule(3);
  p = likelihood_mixture_params(-2.0, flq, r3);
  CHECK(p.scale[1] == doctest::Approx(16.0 / 9.0));
  CHECK(p.pseudo_obs[1] == doctest::Approx(-1.0));
  CHECK(p.shift[1] == doctest::Approx(1.0));  // -q_1
  for (std::size_t k = 0; k < 3; ++k) {
    const double s = r3.nodes[k];
    CHECK(p.scale[k] == doctest::Approx(2.0 * r3.weights[k] / ((1 + s) * (1 + s))));
    CHECK(p.pseudo_obs[k] == doctest::Approx(-(1 - s) / (1 + s)));
  }
  p = likelihood_mixture_params(5.0, flq, r3);
  CHECK(p.pseudo_obs[1] == doctest::Approx(1.0));
  CHECK(p.shift[1] == doctest::Approx(-3.0));  // -q_{L-1}

  const Quantizer one = Quantizer::finite({}, {0.0});
  CHECK_THROWS_AS(likelihood_mixture_params(0.0, one, r3), InvalidArgument);
  CHECK_THROWS_AS(likelihood_mixture_params(2.0, flq, r3), InvalidArgument);
}

TEST_CASE("uniform-quantizer mixture error decreases with K and converges") {
  const Quantizer q = Quantizer::uniform(8.0);
  double previous = std::numeric_limits<double>::infinity();
  for (int K : {2, 4, 6, 8, 10}) {
    const double e = max_mixture_error(q, K, 0.5, -20.0, 20.0, 0.01);
    CHECK(e <= previous);
    previous = e;
  }
  CHECK(max_mixture_error(q, 20, 0.5, -20.0, 20.0, 0.01) < 1e-8);
  CHECK(max_mixture_error(q, 30, 0.5, -20.0, 20.0, 0.01) < 1e-13);
}

// Measured maximum error at K = 10 is 3.6e-3: ten nodes cannot resolve a
// Gaussian of standard deviation 0.71 over a region of width 8. Kept as an
// expected failure so the measurement stays visible.
TEST_CASE("uniform-quantizer mixture with K = 10 is within 1e-6 of the exact likelihood" *
          doctest::should_fail()) {
  CHECK(max_mixture_error(Quantizer::uniform(8.0), 10, 0.5, -20.0, 20.0, 0.01) < 1e-6);
}

TEST_CASE("edge-region mixture converges to the semi-infinite integral") {
  const Quantizer flq = Quantizer::finite({-1.0, 1.0}, {-2.0, 0.0, 2.0});
  const double R = 0.5;
  auto edge_error = [&](int K) {
    const GLRule rule = gl_rule(K);
    double worst = 0.0;
    for (double y : {-2.0, 2.0}) {
      const auto p = likelihood_mixture_params(y, flq, rule);
      const double edge = y < 0 ? -1.0 : 1.0;
      for (double s = -4.0; s <= 4.0; s += 0.01) {
        const double o = edge + s * std::sqrt(R);
        worst = std::max(worst, std::abs(mixture_likelihood(p, o, R) - exact_likelihood_at(y, o, R, flq)));
      }
    }
    return worst;
  };
  CHECK(edge_error(20) < edge_error(10));
  CHECK(edge_error(40) < edge_error(20));
  CHECK(edge_error(64) < 1e-8);
}

// Measured: 0.11 at K = 10, 1.0e-5 at K = 40. The rational map leaves most
// nodes far from the threshold.
TEST_CASE("edge-region mixture with K = 10 is within 1e-4 for standardized offsets up to 4" *
          doctest::should_fail()) {
  const Quantizer flq = Quantizer::finite({-1.0, 1.0}, {-2.0, 0.0, 2.0});
  const double R = 0.5;
  const auto p = likelihood_mixture_params(2.0, flq, gl_rule(10));
  double worst = 0.0;
  for (double s = -4.0; s <= 4.0; s += 0.01) {
    const double o = 1.0 + s * std::sqrt(R);
    worst = std::max(worst, std::abs(mixture_likelihood(p, o, R) - exact_likelihood_at(2.0, o, R, flq)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("arctan quantizer surrogate") {
  const SmoothQuantizerCfg cfg{8.0, 0.008};
  auto v = smooth_quantizer(4.0, cfg);
  CHECK(v.h == doctest::Approx(4.0));
  CHECK(v.dh == doctest::Approx(8.0 / (std::numbers::pi * 0.008)));

  const SmoothQuantizerCfg sharp{8.0, 1e-9};
  CHECK(std::abs(smooth_quantizer(0.8, sharp).h) < 1e-6);
  // at 0.9 step the distance to the switch point is 0.4 step, so
  // dh = rho_rel / (0.16 pi) whatever the step
  CHECK(smooth_quantizer(7.2, cfg).dh == doctest::Approx(0.001 / (0.16 * std::numbers::pi)).epsilon(1e-3));
  CHECK(smooth_quantizer(7.2, cfg).dh < 2e-3);

  // derivative against a centered difference away from switch points
  const SmoothQuantizerCfg soft{8.0, 0.5};
  for (double z = -20.0; z <= 20.0; z += 0.37) {
    if (std::abs(z - std::floor(z / 8.0) * 8.0) < 0.05 || std::abs(z - std::ceil(z / 8.0) * 8.0) < 0.05) continue;
    const double hstep = 1e-5;
    const double fd = (smooth_quantizer(z + hstep, soft).h - smooth_quantizer(z - hstep, soft).h) / (2 * hstep);
    CHECK(fd == doctest::Approx(smooth_quantizer(z, soft).dh).epsilon(1e-6));
  }

  CHECK_THROWS_AS((SmoothQuantizerCfg{8.0, 0.0}.validate()), InvalidArgument);
  CHECK_THROWS_AS((SmoothQuantizerCfg{0.0, 1.0}.validate()), InvalidArgument);
}

// The closed form gives 1.99e-3 here, so a 1e-3 bound cannot hold.
TEST_CASE("arctan derivative at 0.9 step is below 1e-3" * doctest::should_fail()) {
  CHECK(smooth_quantizer(7.2, SmoothQuantizerCfg{8.0, 0.008}).dh < 1e-3);
}
