#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace itogen {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
//
// A stream is identified by a 64-bit key and a 64-bit stream id; the
// remaining 64 counter bits enumerate 128-bit output blocks.  Streams with
// different (key, stream) pairs never overlap, so per-path substreams can be
// consumed in any order or in parallel with identical results.
class Philox4x32 {
 public:
  using result_type = std::uint32_t;
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  Philox4x32(std::uint64_t key, std::uint64_t stream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()();

  // Uniform double on the open interval (0, 1) built from 53 random bits.
  double uniform();
  // Standard normal via Box-Muller; the second variate is cached.
  double normal();

  // Raw block function, exposed for known-answer tests.
  static Counter block(Counter ctr, Key key);

 private:
  void refill();

  Key key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Counter buffer_{};
  int used_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Purpose tags so that, e.g., simulation noise and observation sampling
// drawn under the same user seed are independent.
enum class StreamDomain : std::uint64_t {
  kSimulate = 1,
  kObserve = 2,
  kSplit = 3,
  kInit = 4,
  kDropout = 5,
  kShuffle = 6,
  kGenerate = 7,
  kAugment = 8,
};

std::uint64_t derive_key(std::uint64_t seed, StreamDomain domain);

inline Philox4x32 make_stream(std::uint64_t seed, StreamDomain domain,
                              std::uint64_t stream) {
  return Philox4x32(derive_key(seed, domain), stream);
}

}  // namespace itogen
