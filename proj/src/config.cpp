#include "qfilt/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

namespace qfilt {

namespace {

std::string upper(std::string s) {
  boost::algorithm::to_upper(s);
  return s;
}

double parse_double(const std::string& raw, const std::string& what) {
  const std::string s = boost::algorithm::trim_copy(raw);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != end)
    throw InvalidArgument(fmt::format("{}: '{}' is not a number", what, raw));
  return v;
}

long long parse_int(const std::string& raw, const std::string& what) {
  const std::string s = boost::algorithm::trim_copy(raw);
  long long v = 0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != end)
    throw InvalidArgument(fmt::format("{}: '{}' is not an integer", what, raw));
  return v;
}

bool parse_bool(const std::string& raw, const std::string& what) {
  const std::string s = boost::algorithm::to_lower_copy(boost::algorithm::trim_copy(raw));
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InvalidArgument(fmt::format("{}: '{}' is not a boolean", what, raw));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  boost::algorithm::split(parts, s, boost::algorithm::is_any_of(","));
  std::vector<std::string> out;
  for (auto& p : parts) {
    boost::algorithm::trim(p);
    if (!p.empty()) out.push_back(p);
  }
  return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& what) {
  std::string body = s;
  boost::algorithm::erase_all(body, "[");
  boost::algorithm::erase_all(body, "]");
  std::vector<double> out;
  for (const auto& p : split_list(body)) out.push_back(parse_double(p, what));
  return out;
}

// Drops '#' comments outside double quotes and removes surrounding quotes
// from values, so that the result is plain INI.
std::string preprocess(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    bool quoted = false;
    std::size_t cut = line.size();
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        cut = i;
        break;
      }
    }
    line.resize(cut);
    boost::algorithm::trim(line);
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.front() != '[') {
      std::string key = boost::algorithm::trim_copy(line.substr(0, eq));
      std::string value = boost::algorithm::trim_copy(line.substr(eq + 1));
      if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
      line = key + " = " + value;
    }
    out << line << '\n';
  }
  return out.str();
}

using Table = std::map<std::string, std::map<std::string, std::string>>;

Table read_table(const std::string& text) {
  boost::property_tree::ptree pt;
  std::istringstream in(preprocess(text));
  try {
    boost::property_tree::ini_parser::read_ini(in, pt);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw InvalidArgument(fmt::format("config syntax error on line {}: {}", e.line(), e.message()));
  }
  Table t;
  for (const auto& [section, sub] : pt) {
    if (sub.empty() && !sub.data().empty())
      throw InvalidArgument(fmt::format("config key '{}' is outside any section", section));
    for (const auto& [key, value] : sub) t[section][key] = value.data();
  }
  return t;
}

const std::set<std::string>& known_keys(const std::string& section) {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"model", {"A", "B", "C", "D", "Q", "R", "mu1", "P1", "eps_rel"}},
      {"quantizer", {"type", "step", "thresholds", "levels"}},
      {"bench", {"runs", "horizon", "seed", "input_std", "threads", "variants"}},
      {"variants.gsf", {"K", "M_max", "S_red", "prune_threshold", "window"}},
      {"variants.ukf", {"alpha", "beta", "kappa", "include_center"}},
      {"variants.ekf", {"rho_rel"}},
      {"variants.pf", {"particles", "moves", "schemes", "rwm_variance", "mt_iterations"}},
  };
  const auto it = keys.find(section);
  if (it == keys.end()) throw InvalidArgument(fmt::format("unknown config section [{}]", section));
  return it->second;
}

std::string format_matrix(const Mat& m) {
  std::string s;
  for (int r = 0; r < m.rows(); ++r) {
    if (r > 0) s += "; ";
    for (int c = 0; c < m.cols(); ++c) s += fmt::format("{}{}", c > 0 ? ", " : "", m(r, c));
  }
  return s;
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += fmt::format("{}{}", i > 0 ? ", " : "", v[i]);
  return s;
}

}  // namespace

std::string VariantSpec::filter_name() const {
  switch (family) {
    case Family::KF: return "KF";
    case Family::QKF: return "QKF";
    case Family::EKF: return "EKF";
    case Family::UKF: return "UKF";
    case Family::GSF: return "GSF";
    case Family::PF: return fmt::format("PF-{}-{}({})", to_string(move), to_string(scheme), particles);
  }
  return "?";
}

std::string VariantSpec::smoother_name() const {
  switch (family) {
    case Family::KF: return "KS";
    case Family::QKF: return "QKS";
    case Family::EKF: return "EKS";
    case Family::UKF: return "UKS";
    case Family::GSF: return "GSS";
    case Family::PF: return fmt::format("PS-{}-{}({})", to_string(move), to_string(scheme), particles);
  }
  return "?";
}

std::string VariantSpec::cli_name() const {
  std::string s = family == Family::PF ? fmt::format("pf-{}-{}", to_string(move), to_string(scheme)) : filter_name();
  boost::algorithm::to_lower(s);
  return s;
}

VariantSpec parse_variant(const std::string& text, int default_particles) {
  static const std::regex pf_re(R"(^P[FS]-(MH|RWM)-(SYS|ML|MT|LS)(?:\((\d+)\))?$)");
  const std::string s = upper(boost::algorithm::trim_copy(text));
  static const std::map<std::string, Family> simple = {
      {"KF", Family::KF},   {"KS", Family::KF},   {"QKF", Family::QKF}, {"QKS", Family::QKF}, {"EKF", Family::EKF},
      {"EKS", Family::EKF}, {"UKF", Family::UKF}, {"UKS", Family::UKF}, {"GSF", Family::GSF}, {"GSS", Family::GSF},
  };
  VariantSpec v;
  if (const auto it = simple.find(s); it != simple.end()) {
    v.family = it->second;
    return v;
  }
  std::smatch m;
  if (!std::regex_match(s, m, pf_re)) throw InvalidArgument(fmt::format("unknown variant '{}'", text));
  v.family = Family::PF;
  v.move = parse_move(m[1].str());
  v.scheme = parse_scheme(m[2].str());
  v.particles = m[3].matched ? static_cast<int>(parse_int(m[3].str(), "particle count")) : default_particles;
  if (v.particles < 1) throw InvalidArgument(fmt::format("variant '{}' needs at least one particle", text));
  return v;
}

Mat parse_matrix(const std::string& text) {
  std::string s = boost::algorithm::trim_copy(text);
  std::vector<std::string> rows;
  if (s.starts_with("[[")) {
    s = s.substr(1, s.size() - 2);  // outer brackets
    std::regex row_re(R"(\[([^\]]*)\])");
    for (auto it = std::sregex_iterator(s.begin(), s.end(), row_re); it != std::sregex_iterator(); ++it)
      rows.push_back((*it)[1].str());
  } else {
    boost::algorithm::erase_all(s, "[");
    boost::algorithm::erase_all(s, "]");
    boost::algorithm::split(rows, s, boost::algorithm::is_any_of(";"));
  }
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    if (boost::algorithm::trim_copy(r).empty()) continue;
    values.push_back(parse_list(r, "matrix entry"));
  }
  if (values.empty()) throw InvalidArgument(fmt::format("empty matrix '{}'", text));
  const std::size_t cols = values.front().size();
  for (const auto& r : values)
    if (r.size() != cols) throw InvalidArgument(fmt::format("ragged matrix '{}'", text));
  if (values.size() > static_cast<std::size_t>(kMaxDim) || cols > static_cast<std::size_t>(kMaxDim))
    throw InvalidArgument(fmt::format("matrix '{}' exceeds the supported dimension {}", text, kMaxDim));
  Mat m(static_cast<int>(values.size()), static_cast<int>(cols));
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) m(r, c) = values[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  return m;
}

Vec parse_vector(const std::string& text) {
  const Mat m = parse_matrix(text);
  if (m.rows() != 1 && m.cols() != 1) throw InvalidArgument(fmt::format("'{}' is not a vector", text));
  Vec v(m.size());
  for (int i = 0; i < m.size(); ++i) v(i) = m.rows() == 1 ? m(0, i) : m(i, 0);
  return v;
}

void ExperimentConfig::validate() const {
  model.validate();
  if (runs < 1) throw InvalidArgument("bench.runs must be at least 1");
  if (horizon < 1) throw InvalidArgument("bench.horizon must be at least 1");
  if (!(input_std >= 0.0) || !std::isfinite(input_std)) throw InvalidArgument("bench.input_std must be non-negative");
  if (threads < 0) throw InvalidArgument("bench.threads must be non-negative");
  if (!(eps_rel > 0.0)) throw InvalidArgument("model.eps_rel must be positive");
  if (!(rho_rel > 0.0)) throw InvalidArgument("variants.ekf.rho_rel must be positive");
  ukf.validate(model.state_dim() + 1);
  gsf.validate();
  mcmc.validate();
  if (mt_iterations < 1) throw InvalidArgument("variants.pf.mt_iterations must be at least 1");
  if (variants.empty()) throw InvalidArgument("bench.variants is empty");
  for (const auto& v : variants) {
    if (v.family == Family::EKF && quantizer.kind() != QuantizerKind::Infinite)
      throw InvalidArgument("EKF needs the uniform (infinite-level) quantizer");
    if (v.family == Family::PF) pf_cfg(v).validate();
  }
}

ExtendedSSM ExperimentConfig::extended() const { return build_extended(model, eps_rel * model.R); }

SmoothQuantizerCfg ExperimentConfig::smooth_quantizer() const {
  return {quantizer.step(), rho_rel * quantizer.step()};
}

PfCfg ExperimentConfig::pf_cfg(const VariantSpec& v) const {
  PfCfg c;
  c.M = v.particles;
  c.scheme = v.scheme;
  c.mcmc = mcmc;
  c.mcmc.kind = v.move;
  c.mt_iterations = mt_iterations;
  return c;
}

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  Table t = read_table(text);
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = eq == std::string::npos ? std::string::npos : o.rfind('.', eq);
    if (eq == std::string::npos || dot == std::string::npos)
      throw InvalidArgument(fmt::format("override '{}' is not section.key=value", o));
    t[boost::algorithm::trim_copy(o.substr(0, dot))][boost::algorithm::trim_copy(o.substr(dot + 1, eq - dot - 1))] =
        boost::algorithm::trim_copy(o.substr(eq + 1));
  }
  for (const auto& [section, kv] : t) {
    const auto& keys = known_keys(section);
    for (const auto& [k, v] : kv)
      if (!keys.contains(k)) throw InvalidArgument(fmt::format("unknown config key {}.{}", section, k));
  }
  auto get = [&](const std::string& section, const std::string& key) -> const std::string* {
    const auto s = t.find(section);
    if (s == t.end()) return nullptr;
    const auto k = s->second.find(key);
    return k == s->second.end() ? nullptr : &k->second;
  };
  auto name = [](const std::string& s, const std::string& k) { return s + "." + k; };

  ExperimentConfig cfg;
  auto set_double = [&](const std::string& s, const std::string& k, double& out) {
    if (const auto* v = get(s, k)) out = parse_double(*v, name(s, k));
  };
  auto set_int = [&](const std::string& s, const std::string& k, auto& out) {
    if (const auto* v = get(s, k)) {
      const long long x = parse_int(*v, name(s, k));
      if (x < 0) throw InvalidArgument(fmt::format("{} must be non-negative", name(s, k)));
      out = static_cast<std::remove_reference_t<decltype(out)>>(x);
    }
  };

  // model: scalar defaults, dimensions follow whatever is given
  auto& m = cfg.model;
  auto mat = [&](const std::string& k, double fallback) {
    const auto* v = get("model", k);
    return v ? parse_matrix(*v) : Mat::Constant(1, 1, fallback);
  };
  m.A = mat("A", 0.9);
  m.B = mat("B", 1.2);
  m.C = mat("C", 2.2);
  m.D = mat("D", 0.75);
  m.Q = mat("Q", 1.0);
  m.P1 = mat("P1", 0.01);
  m.mu1 = get("model", "mu1") ? parse_vector(*get("model", "mu1")) : Vec::Ones(m.state_dim());
  m.R = 0.5;
  set_double("model", "R", m.R);
  set_double("model", "eps_rel", cfg.eps_rel);

  const auto* qtype = get("quantizer", "type");
  const std::string kind = qtype ? boost::algorithm::to_lower_copy(*qtype) : "uniform";
  if (kind == "uniform") {
    double step = 8.0;
    set_double("quantizer", "step", step);
    if (get("quantizer", "thresholds") || get("quantizer", "levels"))
      throw InvalidArgument("quantizer.thresholds/levels only apply to type = finite");
    cfg.quantizer = Quantizer::uniform(step);
  } else if (kind == "finite") {
    const auto* th = get("quantizer", "thresholds");
    const auto* lv = get("quantizer", "levels");
    if (!th || !lv) throw InvalidArgument("finite quantizer needs quantizer.thresholds and quantizer.levels");
    cfg.quantizer = Quantizer::finite(parse_list(*th, "quantizer.thresholds"), parse_list(*lv, "quantizer.levels"));
  } else {
    throw InvalidArgument(fmt::format("quantizer.type must be uniform or finite, got '{}'", kind));
  }

  set_int("bench", "runs", cfg.runs);
  set_int("bench", "horizon", cfg.horizon);
  set_int("bench", "seed", cfg.seed);
  set_double("bench", "input_std", cfg.input_std);
  set_int("bench", "threads", cfg.threads);

  set_int("variants.gsf", "K", cfg.gsf.K);
  set_int("variants.gsf", "M_max", cfg.gsf.M_max);
  set_int("variants.gsf", "S_red", cfg.gsf.S_red);
  set_double("variants.gsf", "prune_threshold", cfg.gsf.reduce.prune_threshold);
  set_int("variants.gsf", "window", cfg.gsf.reduce.window);

  set_double("variants.ukf", "alpha", cfg.ukf.alpha);
  set_double("variants.ukf", "beta", cfg.ukf.beta);
  set_double("variants.ukf", "kappa", cfg.ukf.kappa);
  if (const auto* v = get("variants.ukf", "include_center"))
    cfg.ukf.include_center = parse_bool(*v, "variants.ukf.include_center");

  set_double("variants.ekf", "rho_rel", cfg.rho_rel);

  set_double("variants.pf", "rwm_variance", cfg.mcmc.rwm_variance);
  set_int("variants.pf", "mt_iterations", cfg.mt_iterations);
  std::vector<int> particles{100, 500, 1000};
  if (const auto* v = get("variants.pf", "particles")) {
    particles.clear();
    for (double p : parse_list(*v, "variants.pf.particles")) {
      if (p < 1 || p != std::floor(p)) throw InvalidArgument("variants.pf.particles must be positive integers");
      particles.push_back(static_cast<int>(p));
    }
    if (particles.empty()) throw InvalidArgument("variants.pf.particles is empty");
  }
  cfg.default_particles = particles.back();
  std::vector<std::string> moves{"mh", "rwm"};
  std::vector<std::string> schemes{"sys", "ml", "mt", "ls"};
  if (const auto* v = get("variants.pf", "moves")) moves = split_list(*v);
  if (const auto* v = get("variants.pf", "schemes")) schemes = split_list(*v);

  // "pf" in the variant list expands to moves x schemes x particles
  const auto* list = get("bench", "variants");
  const std::vector<std::string> names = list ? split_list(*list) : std::vector<std::string>{"kf", "qkf", "ekf", "ukf", "gsf", "pf"};
  std::set<std::string> seen;
  auto add = [&](const VariantSpec& v) {
    if (seen.insert(v.filter_name()).second) cfg.variants.push_back(v);
  };
  for (const auto& n : names) {
    if (boost::algorithm::iequals(n, "pf")) {
      for (const auto& mv : moves)
        for (const auto& sc : schemes)
          for (int p : particles) add(parse_variant(fmt::format("pf-{}-{}({})", mv, sc, p)));
    } else {
      add(parse_variant(n, cfg.default_particles));
    }
  }

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot read config file '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string effective_config(const ExperimentConfig& cfg) {
  const auto& m = cfg.model;
  std::string s;
  s += "[model]\n";
  s += fmt::format("A = \"{}\"\nB = \"{}\"\nC = \"{}\"\nD = \"{}\"\nQ = \"{}\"\nR = {}\n", format_matrix(m.A),
                   format_matrix(m.B), format_matrix(m.C), format_matrix(m.D), format_matrix(m.Q), m.R);
  s += fmt::format("mu1 = \"{}\"\nP1 = \"{}\"\neps_rel = {}\n\n", format_matrix(m.mu1.transpose()), format_matrix(m.P1),
                   cfg.eps_rel);
  s += "[quantizer]\n";
  if (cfg.quantizer.kind() == QuantizerKind::Infinite) {
    s += fmt::format("type = \"uniform\"\nstep = {}\n\n", cfg.quantizer.step());
  } else {
    s += fmt::format("type = \"finite\"\nthresholds = \"{}\"\nlevels = \"{}\"\n\n",
                     format_list(cfg.quantizer.thresholds()), format_list(cfg.quantizer.levels()));
  }
  std::string variants;
  for (const auto& v : cfg.variants) variants += (variants.empty() ? "" : ", ") + v.filter_name();
  s += fmt::format("[bench]\nruns = {}\nhorizon = {}\nseed = {}\ninput_std = {}\nthreads = {}\nvariants = \"{}\"\n\n",
                   cfg.runs, cfg.horizon, cfg.seed, cfg.input_std, cfg.threads, variants);
  s += fmt::format("[variants.gsf]\nK = {}\nM_max = {}\nS_red = {}\nprune_threshold = {}\nwindow = {}\n\n", cfg.gsf.K,
                   cfg.gsf.M_max, cfg.gsf.S_red, cfg.gsf.reduce.prune_threshold, cfg.gsf.reduce.window);
  s += fmt::format("[variants.ukf]\nalpha = {}\nbeta = {}\nkappa = {}\ninclude_center = {}\n\n", cfg.ukf.alpha,
                   cfg.ukf.beta, cfg.ukf.kappa, cfg.ukf.include_center);
  s += fmt::format("[variants.ekf]\nrho_rel = {}\n\n", cfg.rho_rel);
  s += fmt::format("[variants.pf]\nrwm_variance = {}\nmt_iterations = {}\n", cfg.mcmc.rwm_variance,
                   cfg.mt_iterations);
  return s;
}

}  // namespace qfilt
