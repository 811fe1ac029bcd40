#include "hdrfuse/stack.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hdrfuse {

void validate_stack(const ExposureStack &stack) {
  if (stack.measurements.empty())
    throw std::invalid_argument("stack: at least one measurement required");
  if (stack.n_max < 1)
    throw std::invalid_argument("stack: n_max must be >= 1");
  const auto &first = stack.measurements.front().counts;
  if (first.empty())
    throw std::invalid_argument("stack: empty count image");
  for (std::size_t i = 0; i < stack.measurements.size(); ++i) {
    const auto &m = stack.measurements[i];
    std::string where = "stack measurement " + std::to_string(i);
    if (!m.counts.same_shape(first) || !m.background.same_shape(first))
      throw std::invalid_argument(where + ": shape mismatch");
    if (!(m.acquisition_time > 0.0) || !std::isfinite(m.acquisition_time))
      throw std::invalid_argument(where + ": acquisition time must be > 0");
    for (std::size_t p = 0; p < m.counts.size(); ++p) {
      double n = m.counts[p];
      if (!std::isfinite(n) || n < 0.0 || n > double(stack.n_max))
        throw std::invalid_argument(where + ": counts outside [0, n_max]");
      double b = m.background[p];
      if (!std::isfinite(b) || b < 0.0)
        throw std::invalid_argument(where + ": background must be >= 0");
    }
  }
}

SaturationMask saturation_mask(const ExposureStack &stack) {
  validate_stack(stack);
  SaturationMask mask;
  mask.valid.reserve(stack.count());
  double limit = double(stack.n_max);
  for (const auto &m : stack.measurements) {
    Image<std::uint8_t> w(m.counts.height(), m.counts.width());
    for (std::size_t p = 0; p < m.counts.size(); ++p)
      w[p] = m.counts[p] < limit ? 1 : 0;
    mask.valid.push_back(std::move(w));
  }
  return mask;
}

} // namespace hdrfuse
