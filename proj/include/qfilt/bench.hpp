#pragma once

#include "qfilt/config.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace qfilt {

/// (1/N) sum_t |est_t - truth_t|^2. Throws InvalidArgument on length or
/// dimension mismatch.
double mse_per_run(const VecSeq& estimates, const VecSeq& truth);

struct VariantResult {
  std::string filter;    // e.g. "PF-RWM-SYS(1000)"
  std::string smoother;  // e.g. "PS-RWM-SYS(1000)"
  double filter_mse = 0.0;
  double smooth_mse = 0.0;
  double filter_time = 0.0;  // seconds, filter alone
  double smooth_time = 0.0;  // seconds, filter plus smoother
  std::string status = "ok";
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t trajectory_hash = 0;
  std::vector<VariantResult> variants;
};

/// Point estimates of one variant on one dataset.
struct VariantEstimates {
  VecSeq filtered;
  VecSeq smoothed;
  double filter_time = 0.0;
  double smooth_time = 0.0;
};

/// Runs one variant on (u, y). `key` seeds the particle variants; within a
/// run every variant gets the run's key, so particle filters with the same
/// M see the same initial particles and process noise.
VariantEstimates run_variant(const VariantSpec& v, const ExperimentConfig& cfg, const VecSeq& u,
                             const std::vector<double>& y, StreamKey key);

/// Simulated dataset of run r, drawn from key (seed, r).
Trajectory simulate_run(const ExperimentConfig& cfg, std::size_t run);

/// Runs the whole battery; runs are distributed over OpenMP threads and the
/// result does not depend on the thread count. `progress` (optional) gets
/// the number of finished runs and is called under a lock.
std::vector<RunResult> run_monte_carlo(const ExperimentConfig& cfg,
                                       const std::function<void(std::size_t)>& progress = {});

// ---- reporting ----

struct RankEntry {
  int rank = 0;
  std::string name;
  double value = 0.0;
};

struct Quartiles {
  std::string name;
  double min, q1, median, q3, max, mean;
  std::size_t nonfinite;
};

/// Flat per-(run, variant) record, the content of results.csv plus timings.
struct ResultRow {
  std::size_t run = 0;
  VariantResult r;
};

std::vector<ResultRow> flatten(const std::vector<RunResult>& runs);

/// Sorted ascending by mean; NaN counts as +infinity, ties go by name.
std::vector<RankEntry> rank_by_mean(const std::vector<ResultRow>& rows, bool smoother,
                                    double VariantResult::* field);

std::vector<Quartiles> quartiles(const std::vector<ResultRow>& rows, bool smoother, double VariantResult::* field);

/// results.csv: run,filter,smoother,filter_mse,smooth_mse,status (no timings,
/// so identical seeds give identical bytes).
void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
/// timings.csv: run,filter,smoother,filter_time_s,smooth_time_s
void write_timings_csv(std::ostream& os, const std::vector<ResultRow>& rows);
/// runs.csv: run,trajectory_hash
void write_runs_csv(std::ostream& os, const std::vector<RunResult>& runs);
void write_rank_csv(std::ostream& os, const std::vector<RankEntry>& ranks, const std::string& value_name);
void write_boxplot_csv(std::ostream& os, const std::vector<Quartiles>& q);

/// Reads results.csv and, when given, timings.csv back into rows.
std::vector<ResultRow> read_results_csv(std::istream& results, std::istream* timings = nullptr);

/// Three-column rank table: filtering MSE, smoothing MSE, smoother time.
std::string summary_table(const std::vector<ResultRow>& rows);

}  // namespace qfilt
