#ifndef HDRFUSE_METRICS_HPP
#define HDRFUSE_METRICS_HPP

#include <cstdint>

#include "hdrfuse/image.hpp"

namespace hdrfuse {

struct SsimParams {
  unsigned window = 9;       // odd window side length
  double sigma = 1.0;        // Gaussian weight scale, in pixels
  double k1 = 0.01;
  double k2 = 0.03;
  // Dynamic range L for the stabilizers C1 = (k1 L)^2, C2 = (k2 L)^2.
  // <= 0 means "compute from the data": max - min over both images.
  double dynamic_range = 0.0;
};

// Local structural similarity over every fully interior window position
// (stride 1, no padding): output is (H - w + 1) x (W - w + 1). Window
// statistics are weighted by a unit-sum circular Gaussian. Values are
// clamped to the analytic range [-1, 1] to shed last-ulp excursions.
Image<double> ssim_map(const Image<double> &x, const Image<double> &y,
                       const SsimParams &params = {});

// Mean of ssim_map. Symmetric in its arguments; mssim(x, x) = 1 for any
// non-constant x.
double mssim(const Image<double> &x, const Image<double> &y,
             const SsimParams &params = {});

// sqrt(mean over masked pixels of ((estimate - truth) / truth)^2).
// Requires a nonempty mask and strictly positive truth on the mask.
double masked_relative_rmse(const Image<double> &estimate,
                            const Image<double> &truth,
                            const Image<std::uint8_t> &mask);

// Elementwise log(1 + v); the usual compression before comparing
// diffraction-scale images.
Image<double> log1p_image(const Image<double> &img);

} // namespace hdrfuse

#endif
