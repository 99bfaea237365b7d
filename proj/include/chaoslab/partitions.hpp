#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include <Eigen/Dense>

namespace chaoslab {

// A partition of {0..n-1}. Blocks are sorted and ordered by least element.
struct SetPartition {
  int n = 0;
  std::vector<std::vector<int>> blocks;

  int size() const { return static_cast<int>(blocks.size()); }
};

struct CumulantTable {
  std::vector<double> values;  // values[j-1] = kappa^j
  std::vector<double> stderrs; // empty when exact
  bool estimated = false;

  int order() const { return static_cast<int>(values.size()); }
};

struct Estimate {
  double value = 0.0;
  double stderr = 0.0;
};

// All partitions of an n-set, each exactly once, in canonical order. 1 <= n <= 12.
std::vector<SetPartition> enumerate_partitions(int n);

// Cached version for hot loops; reference stays valid for the program lifetime.
const std::vector<SetPartition>& partitions_of(int n);

long long bell_number(int n);
double factorial(int n);
double binomial(int n, int k);

// moments[k-1] = E[X^k]
CumulantTable cumulants_from_moments(const std::vector<double>& moments);
std::vector<double> moments_from_cumulants(const std::vector<double>& cumulants);

// Recurrence E[X^m] = sum_j C(m-1,j-1) kappa^j E[X^{m-j}].
std::vector<double> moments_from_cumulants_recursive(const std::vector<double>& cumulants);

// joint_moments maps a bitmask over {0..m-1} to E[prod_{i in S} X_i]; all nonempty S required.
double joint_cumulant(const std::map<std::uint32_t, double>& joint_moments, int m);

// Joint cumulant of the columns of `samples` under the weights `w` (finite outer space).
double weighted_joint_cumulant(const Eigen::MatrixXd& samples, const Eigen::VectorXd& w);

// Law of total cumulance. inner[j-1](s) = kappa_B^j[X] on outer outcome s, w = outer law.
double total_cumulance(const std::vector<Eigen::VectorXd>& inner, const Eigen::VectorXd& w, int m);

// Finite-alphabet correlation tensors. A j-point tensor over alphabet q is stored flat with
// index sum_i a_i q^i. marginals[j-1] holds F^j.
using TensorList = std::vector<Eigen::VectorXd>;

TensorList correlations_from_marginals(const TensorList& marginals, int q);
TensorList marginals_from_correlations(const TensorList& correlations, int q);
bool is_symmetric_tensor(const Eigen::VectorXd& t, int q, int order, double tol = 1e-12);

// Pairings g(p_1..p_r) = int phi^{p_1} x ... x phi^{p_r} G^r, keyed by the sorted
// (descending) list of powers.
using PowerKey = std::vector<int>;
using PairingTable = std::map<PowerKey, Estimate>;

PowerKey canonical_key(PowerKey key);

// K_N(rho): rho given by the sizes (number of merged particle slots) of its blocks.
double k_coefficient(const std::vector<int>& block_sizes, int N);

// Joint cumulant of <phi^{p_1},mu^N>, ..., <phi^{p_r},mu^N> in terms of G-pairings.
double cumulant_from_pairings(const PowerKey& powers, const PairingTable& pairings, int N);

// Solves the identity above for the top pairing int phi^{(x)m} G^m given kappa^m[<phi,mu^N>]
// and all lower pairings. Standard errors are propagated linearly (independent inputs).
Estimate empirical_pairing_identity(int m, const Estimate& kappa_m, const PairingTable& lower, int N);

// Keys needed (besides the top one) to solve for the order-m pairing.
std::vector<PowerKey> lower_pairing_keys(int m);

// Fisher k-statistics k_1..k_m (m <= 4) with delete-1 jackknife standard errors.
CumulantTable k_statistics(const Eigen::VectorXd& samples, int m);

// Unbiased joint cumulant estimators of order <= 3 for the given columns.
double unbiased_joint_cumulant(const std::vector<const Eigen::VectorXd*>& columns);

}  // namespace chaoslab
