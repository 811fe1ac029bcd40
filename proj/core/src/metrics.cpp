#include "hdrfuse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hdrfuse {

namespace {

std::vector<double> gaussian_window(unsigned window, double sigma) {
  int half = int(window) / 2;
  std::vector<double> weights(std::size_t(window) * window);
  double sum = 0.0;
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) {
      double w = std::exp(-(double(dy) * dy + double(dx) * dx) /
                          (2.0 * sigma * sigma));
      weights[std::size_t(dy + half) * window + std::size_t(dx + half)] = w;
      sum += w;
    }
  }
  for (double &w : weights)
    w /= sum;
  return weights;
}

void validate_ssim_inputs(const Image<double> &x, const Image<double> &y,
                          const SsimParams &params) {
  require_same_shape(x, y, "ssim");
  if (params.window < 1 || params.window % 2 == 0)
    throw std::invalid_argument("ssim: window must be odd and >= 1");
  if (params.window > x.height() || params.window > x.width())
    throw std::invalid_argument("ssim: window larger than image");
  if (!(params.sigma > 0.0) || !(params.k1 > 0.0) || !(params.k2 > 0.0))
    throw std::invalid_argument("ssim: sigma, k1, k2 must be > 0");
}

double data_range(const Image<double> &x, const Image<double> &y) {
  double lo = x[0];
  double hi = x[0];
  for (double v : x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi - lo;
}

} // namespace

Image<double> ssim_map(const Image<double> &x, const Image<double> &y,
                       const SsimParams &params) {
  validate_ssim_inputs(x, y, params);

  double range = params.dynamic_range > 0.0 ? params.dynamic_range
                                            : data_range(x, y);
  double c1 = (params.k1 * range) * (params.k1 * range);
  double c2 = (params.k2 * range) * (params.k2 * range);
  unsigned w = params.window;
  std::vector<double> weights = gaussian_window(w, params.sigma);

  std::size_t out_h = x.height() - w + 1;
  std::size_t out_w = x.width() - w + 1;
  Image<double> map(out_h, out_w);

  for (std::size_t r = 0; r < out_h; ++r) {
    for (std::size_t c = 0; c < out_w; ++c) {
      double mu_x = 0.0;
      double mu_y = 0.0;
      for (unsigned dy = 0; dy < w; ++dy) {
        for (unsigned dx = 0; dx < w; ++dx) {
          double wt = weights[dy * w + dx];
          mu_x += wt * x(r + dy, c + dx);
          mu_y += wt * y(r + dy, c + dx);
        }
      }
      double var_x = 0.0;
      double var_y = 0.0;
      double cov = 0.0;
      for (unsigned dy = 0; dy < w; ++dy) {
        for (unsigned dx = 0; dx < w; ++dx) {
          double wt = weights[dy * w + dx];
          double ex = x(r + dy, c + dx) - mu_x;
          double ey = y(r + dy, c + dx) - mu_y;
          var_x += wt * ex * ex;
          var_y += wt * ey * ey;
          cov += wt * ex * ey;
        }
      }
      double value = ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) /
                     ((mu_x * mu_x + mu_y * mu_y + c1) *
                      (var_x + var_y + c2));
      map(r, c) = std::clamp(value, -1.0, 1.0);
    }
  }
  return map;
}

double mssim(const Image<double> &x, const Image<double> &y,
             const SsimParams &params) {
  Image<double> map = ssim_map(x, y, params);
  double sum = 0.0;
  for (double v : map)
    sum += v;
  return sum / double(map.size());
}

double masked_relative_rmse(const Image<double> &estimate,
                            const Image<double> &truth,
                            const Image<std::uint8_t> &mask) {
  require_same_shape(estimate, truth, "masked_relative_rmse");
  if (mask.height() != truth.height() || mask.width() != truth.width())
    throw std::invalid_argument("masked_relative_rmse: mask shape mismatch");

  double sum = 0.0;
  std::size_t selected = 0;
  for (std::size_t q = 0; q < truth.size(); ++q) {
    if (!mask[q])
      continue;
    if (!(truth[q] > 0.0))
      throw std::invalid_argument(
          "masked_relative_rmse: truth must be > 0 on the mask");
    double rel = (estimate[q] - truth[q]) / truth[q];
    sum += rel * rel;
    ++selected;
  }
  if (selected == 0)
    throw std::invalid_argument("masked_relative_rmse: empty mask");
  return std::sqrt(sum / double(selected));
}

Image<double> log1p_image(const Image<double> &img) {
  Image<double> out(img.height(), img.width());
  for (std::size_t q = 0; q < img.size(); ++q)
    out[q] = std::log1p(img[q]);
  return out;
}

} // namespace hdrfuse
