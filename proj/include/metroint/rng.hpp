#pragma once

// Counter-based random streams.
//
// Every random number in the library is addressed by (seed, stream, role,
// lane, position). The generator is Philox4x32-10 (Salmon et al., SC'11):
// a keyed bijection of a 128-bit counter, so any position of any stream can
// be produced without touching other streams. This is what makes ensemble
// results independent of how realizations are scheduled onto threads.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace metroint {

/// Purpose of a stream. Brownian increments and Metropolis coins never share
/// a stream, so coupled coarse/fine runs see identical Brownian numbers while
/// their acceptance coins stay independent.
enum class StreamRole : std::uint32_t {
  brownian = 0,
  metropolis_uniform = 1,
  initial_condition = 2,
};

struct RngStreamSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // realization number
  StreamRole role = StreamRole::brownian;
  std::uint32_t lane = 0;  // sub-stream within a role (e.g. one per step size)
};

namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Counter round(const Counter& c, const Key& k) {
  const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * c[0];
  const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

/// Philox4x32 with 10 rounds.
constexpr Counter philox4x32_10(Counter ctr, Key key) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    ctr = round(ctr, key);
  }
  return ctr;
}

}  // namespace philox

/// SplitMix64 finalizer; used only to derive Philox keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Random-access block source for one (seed, stream, role, lane).
/// Block i is the Philox image of the counter (i, stream); the key is derived
/// from (seed, role, lane).
class PhiloxStream {
 public:
  using Block = philox::Counter;

  explicit PhiloxStream(const RngStreamSpec& spec) : stream_(spec.stream) {
    const std::uint64_t tag =
        (static_cast<std::uint64_t>(spec.role) << 32) | spec.lane;
    const std::uint64_t k = mix64(spec.seed ^ mix64(tag));
    key_ = {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)};
  }

  Block block(std::uint64_t index) const {
    const philox::Counter ctr{
        static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    return philox::philox4x32_10(ctr, key_);
  }

  Block next_block() { return block(position_++); }

  std::uint64_t position() const { return position_; }
  void seek(std::uint64_t block_index) { position_ = block_index; }

 private:
  philox::Key key_{};
  std::uint64_t stream_ = 0;
  std::uint64_t position_ = 0;
};

/// 53-bit uniform in [0, 1) from two 32-bit words.
constexpr double to_unit_interval(std::uint32_t hi, std::uint32_t lo) {
  const std::uint64_t bits =
      ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
  return static_cast<double>(bits) * 0x1.0p-53;
}

/// Uniform variates in [0, 1). Variate k comes from half of block k/2.
class UniformStream {
 public:
  explicit UniformStream(const RngStreamSpec& spec) : blocks_(spec) {}

  double next() {
    if (!has_spare_) {
      const auto b = blocks_.next_block();
      spare_ = to_unit_interval(b[2], b[3]);
      has_spare_ = true;
      return to_unit_interval(b[0], b[1]);
    }
    has_spare_ = false;
    return spare_;
  }

  double operator()() { return next(); }

 private:
  PhiloxStream blocks_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Standard normal variates by Box-Muller; one Philox block yields a pair.
class GaussianStream {
 public:
  explicit GaussianStream(const RngStreamSpec& spec) : blocks_(spec) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const auto b = blocks_.next_block();
    // 1 - u lies in (0, 1], so the logarithm is finite.
    const double u1 = 1.0 - to_unit_interval(b[0], b[1]);
    const double u2 = to_unit_interval(b[2], b[3]);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  void fill(std::span<double> out) {
    for (double& v : out) v = next();
  }

  double operator()() { return next(); }

 private:
  PhiloxStream blocks_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline std::vector<double> draw_gaussian_vector(GaussianStream& rng, std::size_t n) {
  std::vector<double> out(n);
  rng.fill(out);
  return out;
}

}  // namespace metroint
