#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

#include "quadgen/error.hpp"

namespace quadgen {

inline double log_sum_exp(const Eigen::VectorXd& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

inline Eigen::VectorXd log_softmax(const Eigen::VectorXd& v) {
  return v.array() - log_sum_exp(v);
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  Eigen::VectorXd e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericError(layer, "non-finite value");
}

template <class Derived>
void fill_uniform(Eigen::MatrixBase<Derived>& m, double limit, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = u(rng);
}

/// Backward pass of softmax: given y = softmax(x) and dL/dy, returns dL/dx.
inline Eigen::VectorXd softmax_backward(const Eigen::VectorXd& y, const Eigen::VectorXd& dy) {
  return y.array() * (dy.array() - y.dot(dy));
}

}  // namespace quadgen
