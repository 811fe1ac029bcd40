#include "hdrfuse/rng.hpp"

#include <cmath>

namespace hdrfuse {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  for (int round = 0;; ++round) {
    std::uint64_t p0 = std::uint64_t(kPhiloxM0) * ctr[0];
    std::uint64_t p1 = std::uint64_t(kPhiloxM1) * ctr[2];
    ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
           std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
    if (round == 9)
      return ctr;
    key[0] += kPhiloxW0;
    key[1] += kPhiloxW1;
  }
}

} // namespace

CounterRng::CounterRng(std::uint64_t seed, Domain domain,
                       std::uint32_t measurement, std::uint64_t pixel)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)},
      // Stream address: 32 pixel bits and a (domain, measurement) word
      // with 24 measurement bits. The remaining 64 counter bits index
      // draws within the stream.
      prefix_{std::uint32_t(pixel),
              (std::uint32_t(domain) << 24) | (measurement & 0x00FFFFFFu)} {}

std::uint32_t CounterRng::next_u32() {
  if (block_pos_ == 4) {
    block_ = philox4x32_10(
        {std::uint32_t(draw_), std::uint32_t(draw_ >> 32), prefix_[0],
         prefix_[1]},
        key_);
    ++draw_;
    block_pos_ = 0;
  }
  return block_[block_pos_++];
}

std::uint64_t CounterRng::next_u64() {
  std::uint64_t lo = next_u32();
  std::uint64_t hi = next_u32();
  return (hi << 32) | lo;
}

double CounterRng::next_double() {
  return double(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::next_double_pos() {
  return double((next_u64() >> 11) + 1) * 0x1.0p-53;
}

double CounterRng::next_normal() {
  double u1 = next_double_pos();
  double u2 = next_double();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint64_t CounterRng::next_poisson(double lambda) {
  if (lambda <= 0.0)
    return 0;

  if (lambda < 10.0) {
    // Inversion by products of uniforms; expected lambda + 1 draws.
    double threshold = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= next_double();
    } while (p > threshold);
    return k - 1;
  }

  // Transformed rejection with squeeze (Hormann's PTRS), exact for
  // lambda >= 10.
  double slam = std::sqrt(lambda);
  double loglam = std::log(lambda);
  double b = 0.931 + 2.53 * slam;
  double a = -0.059 + 0.02483 * b;
  double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  double vr = 0.9277 - 3.6224 / (b - 2.0);

  for (;;) {
    double u = next_double() - 0.5;
    double v = next_double();
    double us = 0.5 - std::fabs(u);
    if (us <= 0.0)
      continue;
    double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (us >= 0.07 && v <= vr)
      return std::uint64_t(kf);
    if (kf < 0.0 || (us < 0.013 && v > us))
      continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        kf * loglam - lambda - std::lgamma(kf + 1.0))
      return std::uint64_t(kf);
  }
}

} // namespace hdrfuse
