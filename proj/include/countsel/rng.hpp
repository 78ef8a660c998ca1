#pragma once

#include <cstdint>
#include <random>

namespace countsel {

/// splitmix64 finalizer; used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random stream keyed by (seed, stream, substream).
///
/// The engine state is a pure function of the key, so replication r of
/// scenario s draws the same numbers no matter which worker runs it or in
/// which order. A stream must not be shared between threads.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0,
                     std::uint64_t substream = 0)
      : engine_(derive_key(seed, stream, substream)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 64>(engine_); }

  static constexpr std::uint64_t derive_key(std::uint64_t seed,
                                            std::uint64_t stream,
                                            std::uint64_t substream) {
    std::uint64_t k = mix64(seed);
    k = mix64(k ^ mix64(stream + 0x632BE59BD9B4E019ULL));
    k = mix64(k ^ mix64(substream + 0x8CB92BA72F3D8DD7ULL));
    return k;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace countsel
