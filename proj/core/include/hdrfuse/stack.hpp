#ifndef HDRFUSE_STACK_HPP
#define HDRFUSE_STACK_HPP

#include <cstdint>
#include <vector>

#include "hdrfuse/image.hpp"

namespace hdrfuse {

// One exposure: observed counts, its acquisition time (the nominal flux
// factor), and the per-pixel expected background. Counts are stored as
// reals so synthetic fixed-point inputs can be injected exactly; data
// loaded from files is always integral.
struct Measurement {
  Image<double> counts;
  double acquisition_time = 1.0;
  Image<double> background;
};

// A co-registered set of exposures of one scene, censored at n_max:
// recorded counts never exceed n_max, and a count equal to n_max means
// "at least n_max photons arrived".
struct ExposureStack {
  std::uint32_t n_max = 0;
  std::vector<Measurement> measurements;

  std::size_t count() const { return measurements.size(); }
  std::size_t height() const {
    return measurements.empty() ? 0 : measurements.front().counts.height();
  }
  std::size_t width() const {
    return measurements.empty() ? 0 : measurements.front().counts.width();
  }
};

// Per-measurement validity weights: 1 where the detector did not
// saturate (n < n_max), 0 where it did.
struct SaturationMask {
  std::vector<Image<std::uint8_t>> valid;
};

// Throws std::invalid_argument when the stack violates its invariants
// (no measurements, shape mismatches, counts outside [0, n_max],
// nonpositive times, negative or non-finite backgrounds).
void validate_stack(const ExposureStack &stack);

SaturationMask saturation_mask(const ExposureStack &stack);

} // namespace hdrfuse

#endif
