#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace pforge {

// Philox4x32-10 block function (Salmon et al., Random123).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key);

// Counter-based random stream. The (seed, stream_id, counter) triple fully
// determines the output, so any batch or sample index can own a stream
// without sharing state.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t counter = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }
  // Number of 32-bit words consumed so far.
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Box-Muller. A single normal() discards the second variate so the stream
  // position stays a pure function of the counter.
  double normal();
  void fill_normal(std::span<double> out);
  void fill_normal(std::span<float> out);
  bool bernoulli(double p);

  // Child stream derived deterministically from this stream's seed and id.
  RngStream split(std::uint64_t child) const;

  friend bool operator==(const RngStream& a, const RngStream& b) noexcept {
    return a.seed_ == b.seed_ && a.stream_id_ == b.stream_id_ && a.counter_ == b.counter_;
  }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t counter_;
  std::array<std::uint32_t, 4> block_{};
  std::uint64_t block_index_ = ~std::uint64_t{0};
};

// Deterministic 64-bit mixing of two words; used to derive child seeds.
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace pforge
