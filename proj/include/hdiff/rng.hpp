#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace hdiff {

/// Stream families. Mixed into the key so that, e.g., the propagation noise of
/// particle j at step t never shares a stream with the resampling draws of t.
enum class StreamKind : std::uint64_t {
  simulate = 1,
  pf_init = 2,
  pf_propagate = 3,
  pf_resample = 4,
  experiment = 5,
  test = 99,
};

/// 64-bit finalizer from SplitMix64.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and two counters.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) noexcept {
  std::uint64_t k = mix64(seed + 0x9e3779b97f4a7c15ULL);
  k = mix64(k ^ (a * 0xd1b54a32d192ed03ULL + 0x8cb92ba72f3d8dd7ULL));
  k = mix64(k ^ (b * 0xabc98388fb8fac03ULL + 0x2545f4914f6cdd1dULL));
  return k;
}

/// SplitMix64 engine; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t state = 0) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

/// An independent random stream addressed by (seed, kind, a, b).
///
/// Streams are cheap to construct, so kernels create one per (time step,
/// particle) pair. The draws of a particle therefore depend only on its
/// address, never on which thread processed it or in which order.
class Stream {
 public:
  Stream(std::uint64_t seed, StreamKind kind, std::uint64_t a = 0, std::uint64_t b = 0) noexcept
      : engine_(derive_seed(derive_seed(seed, static_cast<std::uint64_t>(kind)), a, b)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal.
  double normal() { return gauss_(engine_); }

  SplitMix64& engine() noexcept { return engine_; }

 private:
  SplitMix64 engine_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace hdiff
