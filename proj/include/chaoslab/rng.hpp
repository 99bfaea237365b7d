#pragma once

#include <cstdint>

namespace chaoslab {

std::uint64_t mix64(std::uint64_t z);

// Counter-based generator: every draw is a pure function of (seed, replica, step, index), so
// streams do not depend on scheduling or on how many draws other replicas made.
class CounterRng {
 public:
  CounterRng(std::uint64_t master_seed, std::uint64_t replica);

  // Uniform in (0, 1), never 0 or 1.
  double uniform(std::uint64_t step, std::uint64_t index) const;
  // Standard normals (ziggurat) for indices [0, count) at `step`.
  void normals(std::uint64_t step, std::uint64_t count, double* out) const;
  double normal(std::uint64_t step, std::uint64_t index) const;

  // Step tag reserved for initial-condition draws.
  static constexpr std::uint64_t kInitStep = ~std::uint64_t{0};

 private:
  std::uint64_t bits(std::uint64_t step, std::uint64_t index) const;
  std::uint64_t key_;
};

}  // namespace chaoslab
