#include "chaoslab/rng.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace chaoslab {

namespace {

constexpr std::uint64_t kStepMul = 0x8cb92ba72f3d8dd7ULL;
constexpr std::uint64_t kRetryMul = 0x9e3779b97f4a7c15ULL;

double unit(std::uint64_t b) { return (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53; }

// 256-layer ziggurat for the standard normal.
struct Ziggurat {
  static constexpr double R = 3.6541528853610088;
  static constexpr double V = 0.00492867323399;
  std::array<double, 257> x{};
  std::array<double, 257> f{};

  Ziggurat() {
    auto pdf = [](double t) { return std::exp(-0.5 * t * t); };
    x[0] = V / pdf(R);
    x[1] = R;
    for (int i = 2; i < 256; ++i) x[i] = std::sqrt(-2.0 * std::log(V / x[i - 1] + pdf(x[i - 1])));
    x[256] = 0.0;
    for (int i = 0; i <= 256; ++i) f[i] = pdf(x[i]);
  }
};

const Ziggurat& zig() {
  static const Ziggurat z;
  return z;
}

double ziggurat_normal(std::uint64_t base, std::uint64_t index) {
  const Ziggurat& Z = zig();
  for (std::uint64_t attempt = 0;; ++attempt) {
    const std::uint64_t b = mix64(base + index + attempt * kRetryMul);
    const int i = static_cast<int>(b & 255u);
    const double u = 2.0 * unit(b) - 1.0;
    const double z = u * Z.x[i];
    if (std::abs(z) < Z.x[i + 1]) return z;
    if (i == 0) {
      // tail beyond R
      for (std::uint64_t k = 1;; ++k) {
        const double a = -std::log(unit(mix64(b + 2 * k))) / Ziggurat::R;
        const double y = -std::log(unit(mix64(b + 2 * k + 1)));
        if (2.0 * y >= a * a) return u < 0.0 ? -(Ziggurat::R + a) : Ziggurat::R + a;
      }
    }
    const double w = unit(mix64(b ^ kStepMul));
    if (Z.f[i + 1] + w * (Z.f[i] - Z.f[i + 1]) < std::exp(-0.5 * z * z)) return z;
  }
}

}  // namespace

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t master_seed, std::uint64_t replica)
    : key_(mix64(mix64(master_seed) ^ (replica * 0xd1b54a32d192ed03ULL))) {}

std::uint64_t CounterRng::bits(std::uint64_t step, std::uint64_t index) const {
  return mix64(mix64(key_ ^ (step * kStepMul)) + index);
}

double CounterRng::uniform(std::uint64_t step, std::uint64_t index) const { return unit(bits(step, index)); }

void CounterRng::normals(std::uint64_t step, std::uint64_t count, double* out) const {
  const std::uint64_t base = mix64(key_ ^ (step * kStepMul)) ^ 0x5851f42d4c957f2dULL;
  for (std::uint64_t k = 0; k < count; ++k) out[k] = ziggurat_normal(base, k);
}

double CounterRng::normal(std::uint64_t step, std::uint64_t index) const {
  const std::uint64_t base = mix64(key_ ^ (step * kStepMul)) ^ 0x5851f42d4c957f2dULL;
  return ziggurat_normal(base, index);
}

}  // namespace chaoslab
