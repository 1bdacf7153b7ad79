#include "qfilt/bench.hpp"

#include "qfilt/gaussian_filters.hpp"
#include "qfilt/gsf.hpp"
#include "qfilt/particle.hpp"

#include <boost/algorithm/string.hpp>
#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>

namespace qfilt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); }

VecSeq mixture_means(const std::vector<GaussianMixture>& mixtures) {
  VecSeq out;
  out.reserve(mixtures.size());
  for (const auto& m : mixtures) out.push_back(mixture_moments(m).mean);
  return out;
}

VecSeq gaussian_means(const std::vector<Gaussian>& g) {
  VecSeq out;
  out.reserve(g.size());
  for (const auto& x : g) out.push_back(x.mean);
  return out;
}

VecSeq particle_means(const std::vector<ParticleSet>& sets) {
  VecSeq out;
  out.reserve(sets.size());
  for (const auto& s : sets) out.push_back(Vec(weighted_mean(s)));
  return out;
}

double nan_as_inf(double v) { return std::isnan(v) ? std::numeric_limits<double>::infinity() : v; }

std::string csv_safe(std::string s) {
  std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r' || c == '"'; }, ' ');
  return s;
}

std::string name_of(const ResultRow& row, bool smoother) { return smoother ? row.r.smoother : row.r.filter; }

// Groups a field by variant name, keeping run order.
std::map<std::string, std::vector<double>> group(const std::vector<ResultRow>& rows, bool smoother,
                                                 double VariantResult::* field) {
  std::map<std::string, std::vector<double>> g;
  for (const auto& row : rows) g[name_of(row, smoother)].push_back(row.r.*field);
  return g;
}

double quantile(const std::vector<double>& sorted, double p) {
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double a = sorted[lo];
  const double b = sorted[hi];
  if (a == b) return a;
  return a + (h - static_cast<double>(lo)) * (b - a);
}

}  // namespace

double mse_per_run(const VecSeq& estimates, const VecSeq& truth) {
  if (estimates.size() != truth.size())
    throw InvalidArgument(fmt::format("mse: {} estimates for {} true states", estimates.size(), truth.size()));
  if (estimates.empty()) throw InvalidArgument("mse: empty sequence");
  double acc = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    if (estimates[t].size() < truth[t].size())
      throw InvalidArgument(fmt::format("mse: estimate dimension {} < state dimension {}", estimates[t].size(),
                                        truth[t].size()));
    acc += (estimates[t].head(truth[t].size()) - truth[t]).squaredNorm();
  }
  return acc / static_cast<double>(truth.size());
}

namespace {

VariantEstimates run_variant_once(const VariantSpec& v, const ExperimentConfig& cfg, const VecSeq& u,
                                  const std::vector<double>& y, StreamKey key) {
  const LinearSSM& m = cfg.model;
  const int n = m.state_dim();
  VariantEstimates out;
  const auto start = Clock::now();
  switch (v.family) {
    case Family::KF:
    case Family::QKF: {
      const GaussianSequence f = v.family == Family::KF ? kf_filter(m, u, y) : qkf_filter(m, cfg.quantizer, u, y);
      out.filter_time = seconds_since(start);
      const auto s = rts_smoother(m, f);
      out.smooth_time = seconds_since(start);
      out.filtered = state_means(f.filtered, n);
      out.smoothed = state_means(s, n);
      break;
    }
    case Family::EKF:
    case Family::UKF: {
      const ExtendedSSM ext = cfg.extended();
      const GaussianSequence f = v.family == Family::EKF ? ekf_filter(ext, cfg.smooth_quantizer(), u, y)
                                                         : ukf_filter(ext, cfg.quantizer, cfg.ukf, u, y);
      out.filter_time = seconds_since(start);
      const auto s = rts_smoother(ext, f);
      out.smooth_time = seconds_since(start);
      out.filtered = state_means(f.filtered, n);
      out.smoothed = state_means(s, n);
      break;
    }
    case Family::GSF: {
      const GsfResult f = gsf_filter(m, cfg.quantizer, cfg.gsf, u, y);
      out.filter_time = seconds_since(start);
      const GssResult s = gss_smoother(m, f, cfg.gsf, u);
      out.smooth_time = seconds_since(start);
      out.filtered = mixture_means(f.filtered);
      out.smoothed = gaussian_means(s.moments);
      break;
    }
    case Family::PF: {
      const QuantizedLikelihood lik(cfg.quantizer, m.R);
      const PfCfg pc = cfg.pf_cfg(v);
      const PfResult f = pf_filter(m, lik, pc, u, y, key);
      out.filter_time = seconds_since(start);
      const auto s = ps_rejection(f.sets, m, u, key, pc.parallel);
      out.smooth_time = seconds_since(start);
      out.filtered = f.means;
      out.smoothed = particle_means(s);
      break;
    }
  }
  return out;
}

// Calls shorter than this are repeated and timed by their fastest repetition;
// a single call of the Kalman-type variants is close to the clock resolution
// and dominated by cache state.
constexpr double kMinTimed = 2e-3;
constexpr int kMaxRepeats = 50;

}  // namespace

VariantEstimates run_variant(const VariantSpec& v, const ExperimentConfig& cfg, const VecSeq& u,
                             const std::vector<double>& y, StreamKey key) {
  VariantEstimates out = run_variant_once(v, cfg, u, y, key);
  double spent = out.smooth_time;
  for (int k = 0; k < kMaxRepeats && spent < kMinTimed; ++k) {
    const VariantEstimates again = run_variant_once(v, cfg, u, y, key);
    out.filter_time = std::min(out.filter_time, again.filter_time);
    out.smooth_time = std::min(out.smooth_time, again.smooth_time);
    spent += again.smooth_time;
  }
  return out;
}

Trajectory simulate_run(const ExperimentConfig& cfg, std::size_t run) {
  const StreamKey key{cfg.seed, run};
  const VecSeq u = draw_inputs(cfg.model.input_dim(), cfg.horizon, cfg.input_std, key);
  return simulate_trajectory(cfg.model, cfg.quantizer, u, key);
}

std::vector<RunResult> run_monte_carlo(const ExperimentConfig& cfg, const std::function<void(std::size_t)>& progress) {
  cfg.validate();
  const auto runs = static_cast<std::size_t>(cfg.runs);
  std::vector<RunResult> out(runs);
  std::mutex progress_mutex;
  std::size_t done = 0;
  const int threads = cfg.threads > 0 ? cfg.threads : omp_get_max_threads();

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t r = 0; r < runs; ++r) {
    RunResult& rr = out[r];
    rr.run = r;
    const Trajectory traj = simulate_run(cfg, r);
    rr.trajectory_hash = traj.hash();
    const StreamKey key{cfg.seed, r};
    for (const auto& v : cfg.variants) {
      VariantResult res;
      res.filter = v.filter_name();
      res.smoother = v.smoother_name();
      try {
        const VariantEstimates e = run_variant(v, cfg, traj.u, traj.y, key);
        res.filter_mse = mse_per_run(e.filtered, traj.x);
        res.smooth_mse = mse_per_run(e.smoothed, traj.x);
        res.filter_time = e.filter_time;
        res.smooth_time = e.smooth_time;
        if (!std::isfinite(res.filter_mse) || !std::isfinite(res.smooth_mse)) res.status = "nonfinite";
      } catch (const std::exception& ex) {
        res.filter_mse = res.smooth_mse = std::numeric_limits<double>::quiet_NaN();
        res.status = "error: " + csv_safe(ex.what());
      }
      rr.variants.push_back(std::move(res));
    }
    if (progress) {
      std::lock_guard lock(progress_mutex);
      progress(++done);
    }
  }
  return out;
}

std::vector<ResultRow> flatten(const std::vector<RunResult>& runs) {
  std::vector<ResultRow> rows;
  for (const auto& rr : runs)
    for (const auto& v : rr.variants) rows.push_back({rr.run, v});
  std::stable_sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
    return std::tie(a.run, a.r.filter) < std::tie(b.run, b.r.filter);
  });
  return rows;
}

std::vector<RankEntry> rank_by_mean(const std::vector<ResultRow>& rows, bool smoother, double VariantResult::* field) {
  std::vector<RankEntry> ranks;
  for (const auto& [name, values] : group(rows, smoother, field)) {
    double acc = 0.0;
    for (double v : values) acc += nan_as_inf(v);
    ranks.push_back({0, name, acc / static_cast<double>(values.size())});
  }
  std::stable_sort(ranks.begin(), ranks.end(), [](const RankEntry& a, const RankEntry& b) {
    return std::tie(a.value, a.name) < std::tie(b.value, b.name);
  });
  for (std::size_t i = 0; i < ranks.size(); ++i) ranks[i].rank = static_cast<int>(i) + 1;
  return ranks;
}

std::vector<Quartiles> quartiles(const std::vector<ResultRow>& rows, bool smoother, double VariantResult::* field) {
  std::vector<Quartiles> out;
  for (auto& [name, values] : group(rows, smoother, field)) {
    Quartiles q{};
    q.name = name;
    double acc = 0.0;
    for (double& v : values) {
      if (!std::isfinite(v)) ++q.nonfinite;
      v = nan_as_inf(v);
      acc += v;
    }
    std::sort(values.begin(), values.end());
    q.min = values.front();
    q.q1 = quantile(values, 0.25);
    q.median = quantile(values, 0.5);
    q.q3 = quantile(values, 0.75);
    q.max = values.back();
    q.mean = acc / static_cast<double>(values.size());
    out.push_back(q);
  }
  return out;
}

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "run,filter,smoother,filter_mse,smooth_mse,status\n";
  for (const auto& row : rows)
    os << fmt::format("{},{},{},{:.17g},{:.17g},{}\n", row.run, row.r.filter, row.r.smoother, row.r.filter_mse,
                      row.r.smooth_mse, row.r.status);
}

void write_timings_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << "run,filter,smoother,filter_time_s,smooth_time_s\n";
  for (const auto& row : rows)
    os << fmt::format("{},{},{},{:.9g},{:.9g}\n", row.run, row.r.filter, row.r.smoother, row.r.filter_time,
                      row.r.smooth_time);
}

void write_runs_csv(std::ostream& os, const std::vector<RunResult>& runs) {
  os << "run,trajectory_hash\n";
  for (const auto& r : runs) os << fmt::format("{},{:016x}\n", r.run, r.trajectory_hash);
}

void write_rank_csv(std::ostream& os, const std::vector<RankEntry>& ranks, const std::string& value_name) {
  os << "rank,variant," << value_name << "\n";
  for (const auto& r : ranks) os << fmt::format("{},{},{:.10g}\n", r.rank, r.name, r.value);
}

void write_boxplot_csv(std::ostream& os, const std::vector<Quartiles>& q) {
  os << "variant,min,q1,median,q3,max,mean,nonfinite\n";
  for (const auto& x : q)
    os << fmt::format("{},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{:.10g},{}\n", x.name, x.min, x.q1, x.median, x.q3,
                      x.max, x.mean, x.nonfinite);
}

std::vector<ResultRow> read_results_csv(std::istream& results, std::istream* timings) {
  auto parse_rows = [](std::istream& is, const std::string& expected) {
    std::string line;
    if (!std::getline(is, line) || boost::algorithm::trim_copy(line) != expected)
      throw InvalidArgument(fmt::format("unexpected CSV header, want '{}'", expected));
    std::vector<std::vector<std::string>> rows;
    while (std::getline(is, line)) {
      boost::algorithm::trim(line);
      if (line.empty()) continue;
      std::vector<std::string> f;
      boost::algorithm::split(f, line, boost::algorithm::is_any_of(","));
      rows.push_back(std::move(f));
    }
    return rows;
  };
  auto num = [](const std::string& s) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      // stod rejects "nan"/"inf" spellings fmt produces on some platforms
      if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
      if (s == "inf") return std::numeric_limits<double>::infinity();
      throw InvalidArgument(fmt::format("'{}' is not a number", s));
    }
  };
  std::vector<ResultRow> out;
  std::map<std::pair<std::size_t, std::string>, std::size_t> index;
  for (const auto& f : parse_rows(results, "run,filter,smoother,filter_mse,smooth_mse,status")) {
    if (f.size() != 6) throw InvalidArgument("results.csv row does not have 6 fields");
    ResultRow row;
    row.run = static_cast<std::size_t>(num(f[0]));
    row.r.filter = f[1];
    row.r.smoother = f[2];
    row.r.filter_mse = num(f[3]);
    row.r.smooth_mse = num(f[4]);
    row.r.status = f[5];
    index[{row.run, row.r.filter}] = out.size();
    out.push_back(std::move(row));
  }
  if (timings) {
    for (const auto& f : parse_rows(*timings, "run,filter,smoother,filter_time_s,smooth_time_s")) {
      if (f.size() != 5) throw InvalidArgument("timings.csv row does not have 5 fields");
      const auto it = index.find({static_cast<std::size_t>(num(f[0])), f[1]});
      if (it == index.end()) throw InvalidArgument(fmt::format("timings.csv row for {} run {} has no result", f[1], f[0]));
      out[it->second].r.filter_time = num(f[3]);
      out[it->second].r.smooth_time = num(f[4]);
    }
  }
  return out;
}

std::string summary_table(const std::vector<ResultRow>& rows) {
  const auto fr = rank_by_mean(rows, false, &VariantResult::filter_mse);
  const auto sr = rank_by_mean(rows, true, &VariantResult::smooth_mse);
  const auto tr = rank_by_mean(rows, true, &VariantResult::smooth_time);
  std::size_t w = 8;
  for (const auto& r : fr) w = std::max(w, r.name.size());
  std::ostringstream os;
  os << fmt::format("{:>4}  {:<{}}  {:>12}  {:<{}}  {:>12}  {:<{}}  {:>10}\n", "rank", "filter", w, "MSE", "smoother", w,
                    "MSE", "smoother", w, "time [s]");
  for (std::size_t i = 0; i < fr.size(); ++i)
    os << fmt::format("{:>4}  {:<{}}  {:>12.6g}  {:<{}}  {:>12.6g}  {:<{}}  {:>10.4g}\n", i + 1, fr[i].name, w,
                      fr[i].value, sr[i].name, w, sr[i].value, tr[i].name, w, tr[i].value);
  std::size_t runs = 0;
  for (const auto& r : rows) runs = std::max(runs, r.run + 1);
  os << fmt::format("runs: {}\n", runs);
  return os.str();
}

}  // namespace qfilt
