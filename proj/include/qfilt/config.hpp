#pragma once

#include "qfilt/gaussian_filters.hpp"
#include "qfilt/gsf.hpp"
#include "qfilt/model.hpp"
#include "qfilt/particle.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace qfilt {

enum class Family { KF, QKF, EKF, UKF, GSF, PF };

/// One estimator in a battery. Names follow the XX-YY-ZZ(M) convention:
/// "KF", "GSF", "PF-RWM-SYS(1000)"; the smoother name swaps the prefix
/// ("KS", "GSS", "PS-RWM-SYS(1000)").
struct VariantSpec {
  Family family = Family::KF;
  MoveKind move = MoveKind::RWM;
  ResampleScheme scheme = ResampleScheme::SYS;
  int particles = 0;

  std::string filter_name() const;
  std::string smoother_name() const;
  /// Lowercase CLI spelling, e.g. "pf-rwm-sys".
  std::string cli_name() const;
};

/// Parses "kf", "QKS", "gsf", "pf-mh-ls(500)", "ps-rwm-sys" (particle count
/// taken from `default_particles` when omitted).
VariantSpec parse_variant(const std::string& text, int default_particles = 1000);

struct ExperimentConfig {
  LinearSSM model;
  Quantizer quantizer = Quantizer::uniform(1.0);
  std::size_t horizon = 200;
  int runs = 1000;
  std::uint64_t seed = 42;
  double input_std = 1.0;
  int threads = 0;  // 0: OpenMP default

  double eps_rel = 1e-6;  // pseudo-measurement variance as a multiple of R
  double rho_rel = 1e-3;  // arctan sharpness as a multiple of the step
  UkfCfg ukf;
  GsfCfg gsf;
  McmcCfg mcmc;
  int mt_iterations = 20;
  int default_particles = 1000;

  std::vector<VariantSpec> variants;

  void validate() const;
  ExtendedSSM extended() const;
  SmoothQuantizerCfg smooth_quantizer() const;
  PfCfg pf_cfg(const VariantSpec& v) const;
};

/// Parses "0.9", "1, 0; 0, 2", "[[1, 0], [0, 2]]" or "[1, 2]" (one row).
Mat parse_matrix(const std::string& text);
/// Column vector from the same syntax (a row or a column is accepted).
Vec parse_vector(const std::string& text);

/// Reads the sectioned key/value config. Overrides are "section.key=value"
/// and win over file contents. Throws InvalidArgument on any error.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});
ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides = {});

/// Every key with its effective value, in the input format.
std::string effective_config(const ExperimentConfig& cfg);

}  // namespace qfilt
