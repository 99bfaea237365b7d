#include "chaoslab/exchangeable.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

namespace chaoslab {

namespace {

double falling(int n, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= n - i;
  return r;
}

long ipow(int q, int e) {
  long r = 1;
  while (e-- > 0) r *= q;
  return r;
}

}  // namespace

std::vector<std::vector<int>> type_classes(int N, int q) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur(q, 0);
  std::function<void(int, int)> rec = [&](int letter, int remaining) {
    if (letter == q - 1) {
      cur[letter] = remaining;
      out.push_back(cur);
      return;
    }
    for (int c = remaining; c >= 0; --c) {
      cur[letter] = c;
      rec(letter + 1, remaining - c);
    }
  };
  rec(0, N);
  return out;
}

ExchangeableLaw extreme_law(int N, int q, const std::vector<int>& counts) {
  ExchangeableLaw law{N, q, {counts}, {1.0}};
  return law;
}

ExchangeableLaw random_exchangeable_law(int N, int q, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::exponential_distribution<double> ex(1.0);
  ExchangeableLaw law{N, q, type_classes(N, q), {}};
  double total = 0.0;
  for (std::size_t i = 0; i < law.types.size(); ++i) {
    law.weights.push_back(ex(gen));
    total += law.weights.back();
  }
  for (double& w : law.weights) w /= total;
  return law;
}

Eigen::VectorXd marginal_tensor(const ExchangeableLaw& law, int j) {
  if (j > law.N) throw std::invalid_argument("marginal_tensor: order exceeds N");
  Eigen::VectorXd t(ipow(law.q, j));
  std::vector<int> c(law.q);
  for (long idx = 0; idx < t.size(); ++idx) {
    std::fill(c.begin(), c.end(), 0);
    long r = idx;
    for (int i = 0; i < j; ++i) {
      ++c[r % law.q];
      r /= law.q;
    }
    double p = 0.0;
    for (std::size_t k = 0; k < law.types.size(); ++k) {
      double num = 1.0;
      for (int a = 0; a < law.q; ++a) num *= falling(law.types[k][a], c[a]);
      p += law.weights[k] * num;
    }
    t(idx) = p / falling(law.N, j);
  }
  return t;
}

std::vector<double> empirical_moments(const ExchangeableLaw& law, const Eigen::VectorXd& phi, int m) {
  std::vector<double> mom(m, 0.0);
  for (std::size_t k = 0; k < law.types.size(); ++k) {
    double x = 0.0;
    for (int a = 0; a < law.q; ++a) x += law.types[k][a] * phi(a);
    x /= law.N;
    double p = 1.0;
    for (int i = 0; i < m; ++i) {
      p *= x;
      mom[i] += law.weights[k] * p;
    }
  }
  return mom;
}

namespace {

// Exact joint cumulant of <phi^{p_1},mu^N>, ..., <phi^{p_r},mu^N>.
double exact_joint_cumulant(const ExchangeableLaw& law, const Eigen::VectorXd& phi, const PowerKey& powers) {
  const int r = static_cast<int>(powers.size());
  Eigen::MatrixXd vals(law.types.size(), r);
  for (std::size_t k = 0; k < law.types.size(); ++k)
    for (int i = 0; i < r; ++i) {
      double x = 0.0;
      for (int a = 0; a < law.q; ++a) x += law.types[k][a] * std::pow(phi(a), powers[i]);
      vals(k, i) = x / law.N;
    }
  Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(law.weights.data(), law.weights.size());
  return weighted_joint_cumulant(vals, w);
}

}  // namespace

double tensor_pairing(const TensorList& correlations, int q, const Eigen::VectorXd& phi, const PowerKey& powers) {
  const int r = static_cast<int>(powers.size());
  const Eigen::VectorXd& g = correlations.at(r - 1);
  double acc = 0.0;
  for (long idx = 0; idx < g.size(); ++idx) {
    long rem = idx;
    double prod = g(idx);
    for (int i = 0; i < r; ++i) {
      prod *= std::pow(phi(rem % q), powers[i]);
      rem /= q;
    }
    acc += prod;
  }
  return acc;
}

OracleReport run_exchangeable_oracle(int q, int max_N, int max_m, int random_mixtures, std::uint64_t seed) {
  OracleReport rep;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  for (int N = 1; N <= max_N; ++N) {
    std::vector<ExchangeableLaw> laws;
    for (const auto& t : type_classes(N, q)) laws.push_back(extreme_law(N, q, t));
    for (int i = 0; i < random_mixtures; ++i) laws.push_back(random_exchangeable_law(N, q, gen()));
    const int mmax = std::min(max_m, N);

    for (const auto& law : laws) {
      ++rep.laws_checked;
      TensorList F;
      for (int j = 1; j <= mmax; ++j) F.push_back(marginal_tensor(law, j));
      const TensorList G = correlations_from_marginals(F, q);
      const TensorList F2 = marginals_from_correlations(G, q);
      for (int j = 0; j < mmax; ++j)
        rep.max_correlation_roundtrip_error =
            std::max(rep.max_correlation_roundtrip_error, (F2[j] - F[j]).cwiseAbs().maxCoeff());

      Eigen::VectorXd phi(q);
      for (int a = 0; a < q; ++a) phi(a) = unif(gen);

      PairingTable exact;
      for (int m = 1; m <= mmax; ++m) {
        exact[PowerKey(m, 1)] = {tensor_pairing(G, q, phi, PowerKey(m, 1)), 0.0};
        for (const auto& key : lower_pairing_keys(m))
          if (static_cast<int>(key.size()) <= mmax) exact[key] = {tensor_pairing(G, q, phi, key), 0.0};
      }

      const auto mom = empirical_moments(law, phi, mmax);
      const auto cum = cumulants_from_moments(mom);
      const auto back = moments_from_cumulants(cum.values);
      for (int j = 0; j < mmax; ++j)
        rep.max_moment_roundtrip_error =
            std::max(rep.max_moment_roundtrip_error, std::abs(back[j] - mom[j]));

      for (int m = 1; m <= mmax; ++m) {
        auto keys = lower_pairing_keys(m);
        keys.push_back(PowerKey(m, 1));
        for (const auto& key : keys) {
          int sum = 0;
          for (int p : key) sum += p;
          if (sum != m) continue;
          const double lhs = exact_joint_cumulant(law, phi, key);
          const double rhs = cumulant_from_pairings(key, exact, N);
          rep.max_identity_error = std::max(rep.max_identity_error, std::abs(lhs - rhs));
          ++rep.identities_checked;
        }
        PairingTable lower = exact;
        lower.erase(PowerKey(m, 1));
        const Estimate top = empirical_pairing_identity(m, {cum.values[m - 1], 0.0}, lower, N);
        rep.max_solve_error =
            std::max(rep.max_solve_error, std::abs(top.value - exact[PowerKey(m, 1)].value));
      }
    }
  }
  return rep;
}

}  // namespace chaoslab
