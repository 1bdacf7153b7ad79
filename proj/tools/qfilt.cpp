// qfilt: simulate / filter / smooth / bench / report

#include "qfilt/bench.hpp"
#include "qfilt/config.hpp"
#include "qfilt/gaussian_filters.hpp"
#include "qfilt/gsf.hpp"
#include "qfilt/particle.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <omp.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace qfilt;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<int> runs;
  std::string out = "out";
  std::vector<std::string> set;
  std::string variant;
  std::optional<int> particles;
  std::string data;
  std::size_t run = 0;
  std::string results;
  std::string timings;
};

// Every output is rendered in memory first and only written once all of it
// exists; each file goes through a temporary name and a rename.
class OutputSet {
 public:
  std::ostringstream& add(const std::string& name) { return files_[name]; }

  void commit(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, content] : files_) {
      const fs::path target = dir / name;
      const fs::path tmp = dir / ("." + name + ".tmp");
      {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os << content.str();
        if (!os) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
      }
      fs::rename(tmp, target);
    }
  }

 private:
  std::map<std::string, std::ostringstream> files_;
};

ExperimentConfig build_config(const Options& o) {
  std::vector<std::string> overrides = o.set;
  if (o.seed) overrides.push_back(fmt::format("bench.seed={}", *o.seed));
  if (o.threads) overrides.push_back(fmt::format("bench.threads={}", *o.threads));
  if (o.runs) overrides.push_back(fmt::format("bench.runs={}", *o.runs));
  ExperimentConfig cfg = load_config(o.config, overrides);
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  return cfg;
}

Trajectory dataset(const Options& o, const ExperimentConfig& cfg) {
  if (o.data.empty()) return simulate_run(cfg, o.run);
  std::ifstream in(o.data);
  if (!in) throw InvalidArgument(fmt::format("cannot read data file '{}'", o.data));
  return read_trajectory_csv(in);
}

void write_estimates(std::ostream& os, const VecSeq& est, int n) {
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << "\n";
  for (std::size_t t = 0; t < est.size(); ++t) {
    os << t + 1;
    for (int i = 0; i < n; ++i) os << fmt::format(",{:.17g}", est[t](i));
    os << "\n";
  }
}

void write_gaussians(std::ostream& os, const std::vector<Gaussian>& g, int n) {
  os << "t,component,weight";
  for (int i = 1; i <= n; ++i) os << ",mean_" << i;
  for (int i = 1; i <= n; ++i)
    for (int j = 1; j <= n; ++j) os << ",cov_" << i << j;
  os << "\n";
  for (std::size_t t = 0; t < g.size(); ++t) {
    os << t + 1 << ",0,1";
    for (int i = 0; i < n; ++i) os << fmt::format(",{:.17g}", g[t].mean(i));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) os << fmt::format(",{:.17g}", g[t].cov(i, j));
    os << "\n";
  }
}

std::vector<Gaussian> head_block(const std::vector<Gaussian>& g, int n) {
  std::vector<Gaussian> out;
  for (const auto& x : g) out.push_back({x.mean.head(n), x.cov.topLeftCorner(n, n)});
  return out;
}

// filter and smooth: estimates.csv plus density.csv for one variant
void estimate(const Options& o, bool smooth) {
  const ExperimentConfig cfg = build_config(o);
  if (o.variant.empty()) throw InvalidArgument("--variant is required");
  VariantSpec v = parse_variant(o.variant, o.particles.value_or(cfg.default_particles));
  if (o.particles && v.family == Family::PF) v.particles = *o.particles;
  if (v.family == Family::PF) cfg.pf_cfg(v).validate();
  const Trajectory traj = dataset(o, cfg);
  const LinearSSM& m = cfg.model;
  const int n = m.state_dim();
  if (traj.u.size() != traj.y.size() || (!traj.u.empty() && traj.u.front().size() != m.input_dim()))
    throw InvalidArgument("data inputs do not match the model input dimension");
  const StreamKey key{cfg.seed, o.run};

  OutputSet out;
  VecSeq est;
  auto& density = out.add("density.csv");
  switch (v.family) {
    case Family::KF:
    case Family::QKF: {
      const auto f = v.family == Family::KF ? kf_filter(m, traj.u, traj.y) : qkf_filter(m, cfg.quantizer, traj.u, traj.y);
      const auto g = smooth ? rts_smoother(m, f) : f.filtered;
      est = state_means(g, n);
      write_gaussians(density, g, n);
      break;
    }
    case Family::EKF:
    case Family::UKF: {
      const ExtendedSSM ext = cfg.extended();
      const auto f = v.family == Family::EKF ? ekf_filter(ext, cfg.smooth_quantizer(), traj.u, traj.y)
                                             : ukf_filter(ext, cfg.quantizer, cfg.ukf, traj.u, traj.y);
      const auto g = head_block(smooth ? rts_smoother(ext, f) : f.filtered, n);
      est = state_means(g, n);
      write_gaussians(density, g, n);
      break;
    }
    case Family::GSF: {
      const auto f = gsf_filter(m, cfg.quantizer, cfg.gsf, traj.u, traj.y);
      if (smooth) {
        const auto s = gss_smoother(m, f, cfg.gsf, traj.u, true);
        for (const auto& g : s.moments) est.push_back(g.mean);
        write_mixture_csv(density, s.mixtures);
      } else {
        for (const auto& mix : f.filtered) est.push_back(mixture_moments(mix).mean);
        write_mixture_csv(density, f.filtered);
      }
      break;
    }
    case Family::PF: {
      const QuantizedLikelihood lik(cfg.quantizer, m.R);
      const auto f = pf_filter(m, lik, cfg.pf_cfg(v), traj.u, traj.y, key);
      const auto sets = smooth ? ps_rejection(f.sets, m, traj.u, key) : f.sets;
      for (const auto& s : sets) est.push_back(Vec(weighted_mean(s)));
      write_particles_csv(density, sets);
      break;
    }
  }
  write_estimates(out.add("estimates.csv"), est, n);
  out.add("effective_config.ini") << effective_config(cfg);
  if (!traj.x.empty() && traj.x.front().size() == n)
    fmt::print(std::cerr, "{}: MSE {:.6g} over {} steps\n", smooth ? v.smoother_name() : v.filter_name(),
               mse_per_run(est, traj.x), est.size());
  out.commit(o.out);
}

void simulate(const Options& o) {
  const ExperimentConfig cfg = build_config(o);
  const Trajectory traj = simulate_run(cfg, o.run);
  OutputSet out;
  write_trajectory_csv(out.add("trajectory.csv"), traj);
  out.add("effective_config.ini") << effective_config(cfg);
  out.commit(o.out);
}

void report_into(OutputSet& out, const std::vector<ResultRow>& rows) {
  write_rank_csv(out.add("rank_filter.csv"), rank_by_mean(rows, false, &VariantResult::filter_mse), "mean_filter_mse");
  write_rank_csv(out.add("rank_smooth.csv"), rank_by_mean(rows, true, &VariantResult::smooth_mse), "mean_smooth_mse");
  write_rank_csv(out.add("rank_time.csv"), rank_by_mean(rows, true, &VariantResult::smooth_time), "mean_smooth_time_s");
  write_boxplot_csv(out.add("boxplot_filter.csv"), quartiles(rows, false, &VariantResult::filter_mse));
  write_boxplot_csv(out.add("boxplot_smooth.csv"), quartiles(rows, true, &VariantResult::smooth_mse));
  out.add("summary.txt") << summary_table(rows);
}

void bench(const Options& o) {
  const ExperimentConfig cfg = build_config(o);
  const std::size_t runs = static_cast<std::size_t>(cfg.runs);
  const std::size_t step = std::max<std::size_t>(1, runs / 10);
  const auto results = run_monte_carlo(cfg, [&](std::size_t done) {
    if (done % step == 0 || done == runs) fmt::print(std::cerr, "bench: {}/{} runs\n", done, runs);
  });
  const auto rows = flatten(results);
  OutputSet out;
  write_results_csv(out.add("results.csv"), rows);
  write_timings_csv(out.add("timings.csv"), rows);
  write_runs_csv(out.add("runs.csv"), results);
  report_into(out, rows);
  out.add("effective_config.ini") << effective_config(cfg);
  std::size_t failures = 0;
  for (const auto& r : rows) failures += r.r.status != "ok";
  if (failures > 0) fmt::print(std::cerr, "bench: {} variant runs did not finish cleanly (see status column)\n", failures);
  out.commit(o.out);
  std::cerr << summary_table(rows);
}

void report(const Options& o) {
  const fs::path results = o.results.empty() ? fs::path(o.out) / "results.csv" : fs::path(o.results);
  std::ifstream rin(results);
  if (!rin) throw InvalidArgument(fmt::format("cannot read '{}'", results.string()));
  fs::path timings = o.timings.empty() ? results.parent_path() / "timings.csv" : fs::path(o.timings);
  std::ifstream tin(timings);
  if (!o.timings.empty() && !tin) throw InvalidArgument(fmt::format("cannot read '{}'", timings.string()));
  const auto rows = read_results_csv(rin, tin ? &tin : nullptr);
  if (rows.empty()) throw InvalidArgument("results file has no rows");
  if (!tin) fmt::print(std::cerr, "report: no timings file, time ranks are all zero\n");
  OutputSet out;
  report_into(out, rows);
  out.commit(o.out);
  std::cout << summary_table(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Filtering and smoothing for linear systems with quantized output"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "config file")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--threads", o.threads, "worker threads (0 = all)");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
    sub->add_option("--set", o.set, "override, section.key=value (repeatable)");
  };

  auto* sim = app.add_subcommand("simulate", "simulate one trajectory");
  common(sim, true);
  sim->add_option("--run", o.run, "run index");

  auto* filt = app.add_subcommand("filter", "filter one dataset with one variant");
  auto* smth = app.add_subcommand("smooth", "smooth one dataset with one variant");
  for (auto* sub : {filt, smth}) {
    common(sub, true);
    sub->add_option("--variant", o.variant, "kf, qkf, ekf, ukf, gsf or pf-<mh|rwm>-<sys|ml|mt|ls>")->required();
    sub->add_option("--particles", o.particles, "particle count for pf variants");
    sub->add_option("--data", o.data, "trajectory CSV (default: simulate run --run)");
    sub->add_option("--run", o.run, "run index for simulated data and particle streams");
  }

  auto* bch = app.add_subcommand("bench", "Monte Carlo battery over all configured variants");
  common(bch, true);
  bch->add_option("--runs", o.runs, "number of runs");

  auto* rep = app.add_subcommand("report", "rankings from an existing results.csv");
  rep->add_option("--results", o.results, "results.csv (default: <out>/results.csv)");
  rep->add_option("--timings", o.timings, "timings.csv (default: next to results.csv)");
  rep->add_option("--out", o.out, "output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*sim) simulate(o);
    else if (*filt) estimate(o, false);
    else if (*smth) estimate(o, true);
    else if (*bch) bench(o);
    else if (*rep) report(o);
  } catch (const NumericalError& e) {
    fmt::print(std::cerr, "numerical failure: {}\n", e.what());
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::out_of_range& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "failure: {}\n", e.what());
    return kExitNumeric;
  }
  return 0;
}
