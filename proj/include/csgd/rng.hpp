#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace csgd {

// Philox4x32-10 block function. Exposed for known-answer testing.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Counter-based random stream. The output is a pure function of
// (seed, stream, counter): the seed is the Philox key, the stream id and the
// block index form the 128-bit Philox counter. Each 64-bit draw advances the
// counter by one; two draws share a Philox block.
//
// Draw accounting (each "draw" is one 64-bit output):
//   next_u64, uniform, below   -> 1 draw
//   normal                     -> 2 draws (Box-Muller, sine branch discarded)
//   normals(out)               -> 2 * ceil(out.size() / 2) draws
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64();

  // Uniform on (0, 1], 53-bit resolution.
  double uniform();

  // Integer in [0, n) by 64x64 multiply-high; n must be positive.
  std::uint64_t below(std::uint64_t n);

  double normal();
  void normals(std::span<double> out);

  void skip(std::uint64_t draws) noexcept { counter_ += draws; }

  RngStream child(std::uint64_t offset) const noexcept {
    return RngStream(seed_, stream_ + offset, 0);
  }

  static constexpr std::uint64_t normal_draws(std::size_t n) noexcept {
    return 2 * ((static_cast<std::uint64_t>(n) + 1) / 2);
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t cached_block_ = ~std::uint64_t{0};
  std::array<std::uint64_t, 2> cache_{};
};

// SplitMix64 finalizer, used to spread hashed identifiers over stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

// FNV-1a over bytes.
std::uint64_t fnv1a64(std::span<const char> bytes) noexcept;

}  // namespace csgd
