#include "qfilt/config.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace qfilt;

namespace {

const char* kBase = R"(
[model]
A = 0.9
B = 1.2
C = 2.2
D = 0.75
Q = 1.0
R = 0.5
mu1 = 1.0
P1 = 0.01

[quantizer]
type = "uniform"   # ILQ
step = 8

[bench]
runs = 10
horizon = 50
seed = 7
variants = "kf, gsf, pf"

[variants.gsf]
K = 10
M_max = 10

[variants.pf]
particles = "100, 500"
moves = "mh, rwm"
schemes = "sys, ls"
)";

}  // namespace

TEST_CASE("matrix and vector literals") {
  CHECK(parse_matrix("0.9")(0, 0) == 0.9);
  const Mat a = parse_matrix("1, 2; 3, 4");
  REQUIRE(a.rows() == 2);
  CHECK(a(1, 0) == 3.0);
  const Mat b = parse_matrix("[[1, 2], [3, 4]]");
  CHECK(a == b);
  const Mat r = parse_matrix("[1, 2, 3]");
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 3);
  const Vec v = parse_vector("[1, 2, 3]");
  CHECK(v.size() == 3);
  CHECK(parse_vector("1; 2").size() == 2);
  CHECK_THROWS_AS(parse_matrix("1, 2; 3"), InvalidArgument);
  CHECK_THROWS_AS(parse_matrix("1, x"), InvalidArgument);
  CHECK_THROWS_AS(parse_matrix(""), InvalidArgument);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("kf").filter_name() == "KF");
  CHECK(parse_variant("KS").smoother_name() == "KS");
  CHECK(parse_variant("gss").filter_name() == "GSF");
  CHECK(parse_variant("qkf").smoother_name() == "QKS");
  CHECK(parse_variant("ekf").smoother_name() == "EKS");
  CHECK(parse_variant("ukf").smoother_name() == "UKS");
  const VariantSpec p = parse_variant("pf-mh-ls(500)");
  CHECK(p.family == Family::PF);
  CHECK(p.particles == 500);
  CHECK(p.filter_name() == "PF-MH-LS(500)");
  CHECK(p.smoother_name() == "PS-MH-LS(500)");
  CHECK(p.cli_name() == "pf-mh-ls");
  CHECK(parse_variant("ps-rwm-sys", 250).filter_name() == "PF-RWM-SYS(250)");
  CHECK_THROWS_AS(parse_variant("pf-rwm"), InvalidArgument);
  CHECK_THROWS_AS(parse_variant("pf-rwm-sys(0)"), InvalidArgument);
  CHECK_THROWS_AS(parse_variant("lkf"), InvalidArgument);
}

TEST_CASE("a full configuration parses with comments and quotes") {
  const ExperimentConfig cfg = parse_config(kBase);
  CHECK(cfg.model.A(0, 0) == 0.9);
  CHECK(cfg.model.R == 0.5);
  CHECK(cfg.quantizer(4.0) == 8.0);
  CHECK(cfg.runs == 10);
  CHECK(cfg.horizon == 50);
  CHECK(cfg.seed == 7);
  CHECK(cfg.gsf.M_max == 10);
  // kf + gsf + 2 particle counts x 2 moves x 2 schemes
  CHECK(cfg.variants.size() == 10);
  CHECK(cfg.variants.back().filter_name() == "PF-RWM-LS(500)");
}

TEST_CASE("overrides win over the file") {
  const ExperimentConfig cfg = parse_config(kBase, {"bench.runs=3", "model.A=0.5", "bench.variants=kf"});
  CHECK(cfg.runs == 3);
  CHECK(cfg.model.A(0, 0) == 0.5);
  REQUIRE(cfg.variants.size() == 1);
  CHECK_THROWS_AS(parse_config(kBase, {"bench.runs"}), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"nosuch.key=1"}), InvalidArgument);
}

TEST_CASE("configuration errors are reported") {
  CHECK_THROWS_WITH_AS(parse_config(kBase, {"bench.colour=blue"}), doctest::Contains("colour"), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"bench.runs=0"}), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"model.R=-1"}), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"quantizer.type=log"}), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"variants.gsf.K=0"}), InvalidArgument);
  CHECK_THROWS_AS(parse_config(kBase, {"model.B=1, 2"}), InvalidArgument);
  // the arctan surrogate needs a uniform quantizer
  CHECK_THROWS_AS(parse_config(kBase, {"quantizer.type=finite", "quantizer.thresholds=-1, 1",
                                       "quantizer.levels=-2, 0, 2", "bench.variants=ekf"}),
                  InvalidArgument);
  CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), InvalidArgument);
}

TEST_CASE("finite quantizer from the configuration") {
  const ExperimentConfig cfg = parse_config(
      kBase, {"quantizer.type=finite", "quantizer.thresholds=-1, 1", "quantizer.levels=-2, 0, 2"});
  CHECK(cfg.quantizer(-5.0) == -2.0);
  CHECK(cfg.quantizer(0.5) == 0.0);
  CHECK(cfg.quantizer(1.0) == 2.0);
}

TEST_CASE("effective configuration round-trips") {
  const ExperimentConfig a = parse_config(kBase, {"variants.ukf.alpha=0.001"});
  const std::string text = effective_config(a);
  const ExperimentConfig b = parse_config(text);
  CHECK(effective_config(b) == text);
  CHECK(b.ukf.alpha == 0.001);
  CHECK(b.variants.size() == a.variants.size());
}

TEST_CASE("the shipped preset loads") {
  const auto path = std::filesystem::path(QFILT_SOURCE_DIR) / "configs" / "scalar_step8.toml";
  const ExperimentConfig cfg = load_config(path);
  CHECK(cfg.runs == 1000);
  CHECK(cfg.horizon == 200);
  CHECK(cfg.quantizer(4.0) == 8.0);
  // kf, qkf, ekf, ukf, gsf and 3 x 2 x 4 particle variants
  CHECK(cfg.variants.size() == 29);
}
