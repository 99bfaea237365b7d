#include "chaoslab/partitions.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>

namespace chaoslab {

namespace {

void extend_partitions(int i, int n, std::vector<std::vector<int>>& blocks,
                       std::vector<SetPartition>& out) {
  if (i == n) {
    out.push_back(SetPartition{n, blocks});
    return;
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].push_back(i);
    extend_partitions(i + 1, n, blocks, out);
    blocks[b].pop_back();
  }
  blocks.push_back({i});
  extend_partitions(i + 1, n, blocks, out);
  blocks.pop_back();
}

double moebius_weight(int blocks) {
  // (-1)^{b-1} (b-1)!
  double w = factorial(blocks - 1);
  return (blocks % 2 == 1) ? w : -w;
}

}  // namespace

std::vector<SetPartition> enumerate_partitions(int n) {
  if (n < 1 || n > 12) throw std::out_of_range("enumerate_partitions: n must be in [1, 12]");
  std::vector<SetPartition> out;
  out.reserve(static_cast<std::size_t>(bell_number(n)));
  std::vector<std::vector<int>> blocks;
  extend_partitions(0, n, blocks, out);
  return out;
}

const std::vector<SetPartition>& partitions_of(int n) {
  static std::array<std::vector<SetPartition>, 13> cache;
  static std::array<std::once_flag, 13> flags;
  if (n < 1 || n > 12) throw std::out_of_range("partitions_of: n must be in [1, 12]");
  std::call_once(flags[n], [n] { cache[n] = enumerate_partitions(n); });
  return cache[n];
}

long long bell_number(int n) {
  std::vector<std::vector<long long>> tri(n + 1);
  tri[0] = {1};
  for (int i = 1; i <= n; ++i) {
    tri[i].resize(i + 1);
    tri[i][0] = tri[i - 1][i - 1];
    for (int j = 1; j <= i; ++j) tri[i][j] = tri[i][j - 1] + tri[i - 1][j - 1];
  }
  return tri[n][0];
}

double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return std::round(c);
}

CumulantTable cumulants_from_moments(const std::vector<double>& moments) {
  const int m = static_cast<int>(moments.size());
  CumulantTable t;
  t.values.resize(m);
  for (int k = 1; k <= m; ++k) {
    long double acc = 0.0L;
    for (const auto& p : partitions_of(k)) {
      long double prod = moebius_weight(p.size());
      for (const auto& b : p.blocks) prod *= moments[b.size() - 1];
      acc += prod;
    }
    t.values[k - 1] = static_cast<double>(acc);
  }
  return t;
}

std::vector<double> moments_from_cumulants(const std::vector<double>& cumulants) {
  const int m = static_cast<int>(cumulants.size());
  std::vector<double> mom(m);
  for (int k = 1; k <= m; ++k) {
    long double acc = 0.0L;
    for (const auto& p : partitions_of(k)) {
      long double prod = 1.0L;
      for (const auto& b : p.blocks) prod *= cumulants[b.size() - 1];
      acc += prod;
    }
    mom[k - 1] = static_cast<double>(acc);
  }
  return mom;
}

std::vector<double> moments_from_cumulants_recursive(const std::vector<double>& cumulants) {
  const int m = static_cast<int>(cumulants.size());
  std::vector<long double> mom(m + 1, 0.0L);
  mom[0] = 1.0L;
  for (int k = 1; k <= m; ++k) {
    long double acc = 0.0L;
    for (int j = 1; j <= k; ++j) acc += binomial(k - 1, j - 1) * cumulants[j - 1] * mom[k - j];
    mom[k] = acc;
  }
  return std::vector<double>(mom.begin() + 1, mom.end());
}

double joint_cumulant(const std::map<std::uint32_t, double>& joint_moments, int m) {
  double acc = 0.0;
  for (const auto& p : partitions_of(m)) {
    double prod = moebius_weight(p.size());
    for (const auto& b : p.blocks) {
      std::uint32_t mask = 0;
      for (int i : b) mask |= 1u << i;
      auto it = joint_moments.find(mask);
      if (it == joint_moments.end())
        throw std::invalid_argument("joint_cumulant: missing subset " + std::to_string(mask));
      prod *= it->second;
    }
    acc += prod;
  }
  return acc;
}

double weighted_joint_cumulant(const Eigen::MatrixXd& samples, const Eigen::VectorXd& w) {
  if (samples.rows() != w.size())
    throw std::invalid_argument("weighted_joint_cumulant: weight length mismatch");
  const int m = static_cast<int>(samples.cols());
  std::map<std::uint32_t, double> mom;
  for (std::uint32_t mask = 1; mask < (1u << m); ++mask) {
    Eigen::VectorXd prod = Eigen::VectorXd::Ones(samples.rows());
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) prod = prod.cwiseProduct(samples.col(i));
    mom[mask] = w.dot(prod);
  }
  return joint_cumulant(mom, m);
}

double total_cumulance(const std::vector<Eigen::VectorXd>& inner, const Eigen::VectorXd& w, int m) {
  if (static_cast<int>(inner.size()) < m)
    throw std::invalid_argument("total_cumulance: need inner cumulants up to order m");
  for (const auto& v : inner)
    if (v.size() != w.size()) throw std::invalid_argument("total_cumulance: array length mismatch");
  double acc = 0.0;
  for (const auto& p : partitions_of(m)) {
    Eigen::MatrixXd cols(w.size(), p.size());
    for (int j = 0; j < p.size(); ++j) cols.col(j) = inner[p.blocks[j].size() - 1];
    acc += weighted_joint_cumulant(cols, w);
  }
  return acc;
}

namespace {

long ipow(int q, int e) {
  long r = 1;
  while (e-- > 0) r *= q;
  return r;
}

std::vector<int> digits(long idx, int q, int order) {
  std::vector<int> d(order);
  for (int i = 0; i < order; ++i) {
    d[i] = static_cast<int>(idx % q);
    idx /= q;
  }
  return d;
}

long sub_index(const std::vector<int>& d, const std::vector<int>& block, int q) {
  long idx = 0;
  long s = 1;
  for (int i : block) {
    idx += d[i] * s;
    s *= q;
  }
  return idx;
}

TensorList moebius_transform(const TensorList& in, int q, bool inverse) {
  TensorList out(in.size());
  for (std::size_t j = 1; j <= in.size(); ++j) {
    const int order = static_cast<int>(j);
    if (in[j - 1].size() != ipow(q, order))
      throw std::invalid_argument("tensor size does not match alphabet^order");
    if (!is_symmetric_tensor(in[j - 1], q, order, 1e-12))
      throw std::invalid_argument("non-symmetric input tensor of order " + std::to_string(order));
    Eigen::VectorXd t(in[j - 1].size());
    for (long idx = 0; idx < t.size(); ++idx) {
      const auto d = digits(idx, q, order);
      double acc = 0.0;
      for (const auto& p : partitions_of(order)) {
        double prod = inverse ? 1.0 : moebius_weight(p.size());
        for (const auto& b : p.blocks) prod *= in[b.size() - 1](sub_index(d, b, q));
        acc += prod;
      }
      t(idx) = acc;
    }
    out[j - 1] = std::move(t);
  }
  return out;
}

}  // namespace

bool is_symmetric_tensor(const Eigen::VectorXd& t, int q, int order, double tol) {
  for (long idx = 0; idx < t.size(); ++idx) {
    auto d = digits(idx, q, order);
    std::sort(d.begin(), d.end());
    long s = 0, base = 1;
    for (int i = 0; i < order; ++i) {
      s += d[i] * base;
      base *= q;
    }
    if (std::abs(t(idx) - t(s)) > tol * std::max(1.0, std::abs(t(s)))) return false;
  }
  return true;
}

TensorList correlations_from_marginals(const TensorList& marginals, int q) {
  return moebius_transform(marginals, q, false);
}

TensorList marginals_from_correlations(const TensorList& correlations, int q) {
  return moebius_transform(correlations, q, true);
}

PowerKey canonical_key(PowerKey key) {
  std::sort(key.begin(), key.end(), std::greater<>());
  return key;
}

double k_coefficient(const std::vector<int>& block_sizes, int N) {
  const int r = static_cast<int>(block_sizes.size());
  int total = 0;
  for (int s : block_sizes) total += s;
  if (N < total) throw std::invalid_argument("K_N evaluated with N smaller than the order");
  double acc = 0.0;
  for (const auto& sigma : partitions_of(r)) {
    double prod = moebius_weight(sigma.size());
    for (const auto& c : sigma.blocks) {
      int s = 0;
      for (int d : c) s += block_sizes[d];
      for (int i = 1; i < s; ++i) prod *= 1.0 - static_cast<double>(i) / N;
    }
    acc += prod;
  }
  return acc;
}

namespace {

// Sum over (pi, rho) of the identity, calling `visit(coefficient, keys)` for each term.
template <class Visit>
void for_each_identity_term(const PowerKey& powers, int N, Visit&& visit) {
  const int r = static_cast<int>(powers.size());
  for (const auto& pi : partitions_of(r)) {
    const int np = pi.size();
    std::vector<int> merged(np);
    for (int b = 0; b < np; ++b) {
      merged[b] = 0;
      for (int i : pi.blocks[b]) merged[b] += powers[i];
    }
    const double npow = std::pow(static_cast<double>(N), np - r);
    for (const auto& rho : partitions_of(np)) {
      std::vector<int> sizes;
      std::vector<PowerKey> keys;
      for (const auto& d : rho.blocks) {
        sizes.push_back(static_cast<int>(d.size()));
        PowerKey k;
        for (int b : d) k.push_back(merged[b]);
        keys.push_back(canonical_key(std::move(k)));
      }
      visit(npow * k_coefficient(sizes, N), keys);
    }
  }
}

}  // namespace

double cumulant_from_pairings(const PowerKey& powers, const PairingTable& pairings, int N) {
  int m = 0;
  for (int p : powers) m += p;
  if (N < static_cast<int>(powers.size()))
    throw std::invalid_argument("cumulant_from_pairings: N < order");
  (void)m;
  double acc = 0.0;
  for_each_identity_term(powers, N, [&](double coeff, const std::vector<PowerKey>& keys) {
    double prod = coeff;
    for (const auto& k : keys) {
      auto it = pairings.find(k);
      if (it == pairings.end()) throw std::invalid_argument("cumulant_from_pairings: missing pairing");
      prod *= it->second.value;
    }
    acc += prod;
  });
  return acc;
}

std::vector<PowerKey> lower_pairing_keys(int m) {
  std::vector<PowerKey> out;
  std::function<void(PowerKey&, int, int)> rec = [&](PowerKey& cur, int remaining, int maxpart) {
    if (!cur.empty()) out.push_back(cur);
    for (int p = std::min(maxpart, remaining); p >= 1; --p) {
      cur.push_back(p);
      rec(cur, remaining - p, p);
      cur.pop_back();
    }
  };
  PowerKey cur;
  rec(cur, m, m);
  const PowerKey top(m, 1);
  out.erase(std::remove(out.begin(), out.end(), top), out.end());
  std::sort(out.begin(), out.end(), [](const PowerKey& a, const PowerKey& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    return a > b;
  });
  return out;
}

Estimate empirical_pairing_identity(int m, const Estimate& kappa_m, const PairingTable& lower, int N) {
  if (N < m) throw std::invalid_argument("empirical_pairing_identity: N < m");
  const PowerKey top(m, 1);
  PairingTable table = lower;
  table[top] = Estimate{0.0, 0.0};
  const double rest = cumulant_from_pairings(top, table, N);
  table[top] = Estimate{1.0, 0.0};
  const double c_top = cumulant_from_pairings(top, table, N) - rest;

  Estimate out;
  out.value = (kappa_m.value - rest) / c_top;
  double var = kappa_m.stderr * kappa_m.stderr;
  table[top] = Estimate{0.0, 0.0};
  for (auto& [key, est] : table) {
    if (key == top || est.stderr == 0.0) continue;
    const double v0 = est.value;
    const double h = 1e-4 * std::max(std::abs(v0), 1e-8);
    est.value = v0 + h;
    const double up = cumulant_from_pairings(top, table, N);
    est.value = v0 - h;
    const double dn = cumulant_from_pairings(top, table, N);
    est.value = v0;
    const double g = (up - dn) / (2 * h);
    var += g * g * est.stderr * est.stderr;
  }
  out.stderr = std::sqrt(var) / std::abs(c_top);
  return out;
}

namespace {

std::array<double, 5> k_from_central_sums(double n, const std::array<double, 5>& c) {
  std::array<double, 5> k{};
  k[1] = c[1];  // caller stores the mean here
  k[2] = c[2] / (n - 1);
  k[3] = n * c[3] / ((n - 1) * (n - 2));
  k[4] = (n * (n + 1) * c[4] - 3 * (n - 1) * c[2] * c[2]) / ((n - 1) * (n - 2) * (n - 3));
  return k;
}

// Central sums of the sample described by power sums s (about a fixed shift) with count n.
std::array<double, 5> central_sums(double n, const std::array<double, 5>& s, double shift) {
  const double d = s[1] / n;
  std::array<double, 5> c{};
  c[1] = shift + d;
  for (int a = 2; a <= 4; ++a) {
    double acc = 0.0;
    for (int b = 0; b <= a; ++b) acc += binomial(a, b) * std::pow(-d, a - b) * (b == 0 ? n : s[b]);
    c[a] = acc;
  }
  return c;
}

}  // namespace

CumulantTable k_statistics(const Eigen::VectorXd& samples, int m) {
  const long R = samples.size();
  if (m < 1 || m > 4) throw std::invalid_argument("k_statistics: m must be in [1, 4]");
  if (R <= m) throw std::invalid_argument("k_statistics: R too small for order m");
  const double shift = samples.mean();
  std::array<double, 5> s{};
  for (long i = 0; i < R; ++i) {
    const double y = samples(i) - shift;
    double p = 1.0;
    for (int a = 1; a <= 4; ++a) {
      p *= y;
      s[a] += p;
    }
  }
  const auto full = k_from_central_sums(static_cast<double>(R), central_sums(R, s, shift));

  CumulantTable t;
  t.estimated = true;
  t.values.assign(full.begin() + 1, full.begin() + 1 + m);
  t.stderrs.assign(m, 0.0);
  if (R - 1 <= m) return t;

  std::vector<std::vector<double>> jk(m, std::vector<double>(R));
  for (long i = 0; i < R; ++i) {
    const double y = samples(i) - shift;
    std::array<double, 5> si = s;
    double p = 1.0;
    for (int a = 1; a <= 4; ++a) {
      p *= y;
      si[a] -= p;
    }
    const auto ki = k_from_central_sums(R - 1.0, central_sums(R - 1.0, si, shift));
    for (int j = 0; j < m; ++j) jk[j][i] = ki[j + 1];
  }
  for (int j = 0; j < m; ++j) {
    double mean = 0.0;
    for (double v : jk[j]) mean += v;
    mean /= R;
    double ss = 0.0;
    for (double v : jk[j]) ss += (v - mean) * (v - mean);
    t.stderrs[j] = std::sqrt((R - 1.0) / R * ss);
  }
  return t;
}

double unbiased_joint_cumulant(const std::vector<const Eigen::VectorXd*>& columns) {
  const int r = static_cast<int>(columns.size());
  if (r < 1 || r > 3) throw std::invalid_argument("unbiased_joint_cumulant: order must be 1..3");
  const long R = columns[0]->size();
  if (R <= r) throw std::invalid_argument("unbiased_joint_cumulant: too few samples");
  std::vector<Eigen::VectorXd> c;
  for (const auto* col : columns) {
    if (col->size() != R) throw std::invalid_argument("unbiased_joint_cumulant: length mismatch");
    c.push_back(col->array() - col->mean());
  }
  if (r == 1) return columns[0]->mean();
  const double n = static_cast<double>(R);
  if (r == 2) return c[0].dot(c[1]) / (n - 1);
  return n * (c[0].array() * c[1].array() * c[2].array()).sum() / ((n - 1) * (n - 2));
}

}  // namespace chaoslab
