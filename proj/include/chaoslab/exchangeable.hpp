#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaoslab/partitions.hpp"

namespace chaoslab {

// Exchangeable law of N letters over the alphabet {0..q-1}: a mixture of the uniform laws on
// type classes (counts n_0..n_{q-1}).
struct ExchangeableLaw {
  int N = 0;
  int q = 0;
  std::vector<std::vector<int>> types;  // counts per class
  std::vector<double> weights;          // sums to 1
};

std::vector<std::vector<int>> type_classes(int N, int q);

ExchangeableLaw extreme_law(int N, int q, const std::vector<int>& counts);
ExchangeableLaw random_exchangeable_law(int N, int q, std::uint64_t seed);

// j-point marginal F^j as a flat symmetric tensor.
Eigen::VectorXd marginal_tensor(const ExchangeableLaw& law, int j);

// Exact E[<phi,mu^N>^k], k = 1..m, with phi given by its values on the alphabet.
std::vector<double> empirical_moments(const ExchangeableLaw& law, const Eigen::VectorXd& phi, int m);

// Exact pairing int phi^{p_1} x ... x phi^{p_r} G^r from correlation tensors.
double tensor_pairing(const TensorList& correlations, int q, const Eigen::VectorXd& phi, const PowerKey& powers);

struct OracleReport {
  int laws_checked = 0;
  int identities_checked = 0;
  double max_identity_error = 0.0;
  double max_moment_roundtrip_error = 0.0;
  double max_correlation_roundtrip_error = 0.0;
  double max_solve_error = 0.0;
  bool pass(double tol) const {
    return max_identity_error <= tol && max_moment_roundtrip_error <= tol &&
           max_correlation_roundtrip_error <= tol && max_solve_error <= tol;
  }
};

// Exhaustive identity suite: every extreme exchangeable law over q letters with N <= max_N,
// plus `random_mixtures` random mixtures per N, orders m <= max_m.
OracleReport run_exchangeable_oracle(int q, int max_N, int max_m, int random_mixtures, std::uint64_t seed);

}  // namespace chaoslab
