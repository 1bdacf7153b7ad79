#pragma once

#include "qfilt/model.hpp"

#include <Eigen/Dense>

#include <vector>

namespace testing {

inline qfilt::Mat scalar(double v) { return qfilt::Mat::Constant(1, 1, v); }

// The scalar benchmark model: A=0.9, B=1.2, C=2.2, D=0.75, Q=1, R=0.5,
// mu1=1, P1=0.01.
inline qfilt::LinearSSM benchmark_model() {
  qfilt::LinearSSM m;
  m.A = scalar(0.9);
  m.B = scalar(1.2);
  m.C = scalar(2.2);
  m.D = scalar(0.75);
  m.Q = scalar(1.0);
  m.R = 0.5;
  m.mu1 = qfilt::Vec::Ones(1);
  m.P1 = scalar(0.01);
  return m;
}

// Two-state, one-input model with correlated dynamics.
inline qfilt::LinearSSM two_state_model() {
  qfilt::LinearSSM m;
  m.A.resize(2, 2);
  m.A << 0.8, 0.2, -0.1, 0.7;
  m.B.resize(2, 1);
  m.B << 1.0, 0.5;
  m.C.resize(1, 2);
  m.C << 1.0, -0.5;
  m.D = scalar(0.3);
  m.Q.resize(2, 2);
  m.Q << 0.5, 0.1, 0.1, 0.3;
  m.R = 0.2;
  m.mu1.resize(2);
  m.mu1 << 0.5, -0.5;
  m.P1.resize(2, 2);
  m.P1 << 0.4, 0.05, 0.05, 0.2;
  return m;
}

inline std::vector<double> column(const qfilt::VecSeq& v, int i = 0) {
  std::vector<double> out;
  for (const auto& x : v) out.push_back(x(i));
  return out;
}

inline std::vector<Eigen::VectorXd> dynamic(const qfilt::VecSeq& v) {
  std::vector<Eigen::VectorXd> out;
  for (const auto& x : v) out.emplace_back(x);
  return out;
}

}  // namespace testing
