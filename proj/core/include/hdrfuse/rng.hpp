#ifndef HDRFUSE_RNG_HPP
#define HDRFUSE_RNG_HPP

#include <array>
#include <cstdint>

namespace hdrfuse {

// Counter-based random stream (Philox-4x32-10). A stream is addressed by
// (seed, domain, measurement, pixel) and consumes an internal 64-bit draw
// counter, so every pixel of every measurement owns an independent,
// reproducible substream regardless of evaluation order or thread count.
// All state transitions are pure integer arithmetic.
class CounterRng {
public:
  enum class Domain : std::uint32_t {
    Background = 0, // per-pixel true background levels
    Counts = 1,     // photon count draws
    DarkFrames = 2, // dark calibration frame draws
    Generic = 3,    // library consumers and tests
  };

  CounterRng(std::uint64_t seed, Domain domain, std::uint32_t measurement,
             std::uint64_t pixel);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double next_double();
  // Uniform on (0, 1]; safe as a log argument.
  double next_double_pos();

  // Standard normal via the Box-Muller transform:
  //   z = sqrt(-2 ln u1) * cos(2 pi u2), u1 in (0,1], u2 in [0,1).
  double next_normal();

  // Exact Poisson(lambda) sample. Product-of-uniforms inversion for
  // lambda < 10, transformed rejection (PTRS) above; both draw a
  // variable number of uniforms from this stream.
  std::uint64_t next_poisson(double lambda);

private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 2> prefix_; // pixel and (domain, measurement)
  std::uint64_t draw_ = 0;
  std::array<std::uint32_t, 4> block_{};
  unsigned block_pos_ = 4;
};

} // namespace hdrfuse

#endif
