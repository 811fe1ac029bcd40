#include "hdrfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hdrfuse/errors.hpp"
#include "hdrfuse/parallel.hpp"
#include "hdrfuse/stats.hpp"

namespace hdrfuse {

namespace {

void validate_flux(const std::vector<double> &flux, std::size_t k_expected,
                   const char *what) {
  if (flux.size() != k_expected)
    throw std::invalid_argument(std::string(what) +
                                ": flux vector length must match stack");
  for (double c : flux)
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument(std::string(what) +
                                  ": flux factors must be finite and > 0");
}

std::vector<GammaPrior> resolved_flux_priors(const ExposureStack &stack,
                                             const FusionConfig &config) {
  if (!config.flux_priors.empty()) {
    if (config.flux_priors.size() != stack.count())
      throw std::invalid_argument("flux_priors length must match stack");
    for (const auto &p : config.flux_priors)
      if (!(p.alpha >= 0.0) || !(p.beta >= 0.0) || !std::isfinite(p.alpha) ||
          !std::isfinite(p.beta))
        throw std::invalid_argument("flux_priors must be finite and >= 0");
    return config.flux_priors;
  }
  // Exponential prior with mean t_i: weak, scaled to the acquisition.
  std::vector<GammaPrior> priors(stack.count());
  for (std::size_t i = 0; i < stack.count(); ++i)
    priors[i] = {1.0, 1.0 / stack.measurements[i].acquisition_time};
  return priors;
}

void validate_intensity_prior(const FusionConfig &config) {
  if (!(config.alpha_I >= 0.0) || !std::isfinite(config.alpha_I) ||
      !(config.beta_I >= 0.0) || !std::isfinite(config.beta_I))
    throw std::invalid_argument("alpha_I and beta_I must be finite and >= 0");
}

double rel_change(double a, double b) {
  if (a == b)
    return 0.0;
  return std::fabs(a - b) / std::max(std::fabs(a), std::fabs(b));
}

} // namespace

FusionResult conventional_mef(const ExposureStack &stack,
                              const std::vector<double> &flux) {
  validate_stack(stack);
  validate_flux(flux, stack.count(), "conventional_mef");
  SaturationMask mask = saturation_mask(stack);

  std::size_t n = stack.measurements.front().counts.size();
  std::size_t k_count = stack.count();
  Image<double> fused(stack.height(), stack.width());
  std::size_t fallback = 0;

  for (std::size_t q = 0; q < n; ++q) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < k_count; ++i) {
      if (!mask.valid[i][q])
        continue;
      const auto &m = stack.measurements[i];
      num += std::max(0.0, m.counts[q] - m.background[q]);
      den += flux[i];
    }
    if (den > 0.0) {
      fused[q] = num / den;
    } else {
      // Every exposure saturated: report the largest intensity still
      // consistent with the censoring floor.
      double b_min = stack.measurements[0].background[q];
      double c_min = flux[0];
      for (std::size_t i = 1; i < k_count; ++i) {
        b_min = std::min(b_min, stack.measurements[i].background[q]);
        c_min = std::min(c_min, flux[i]);
      }
      fused[q] = std::max(0.0, (double(stack.n_max) - b_min) / c_min);
      ++fallback;
    }
  }

  FusionResult result;
  result.fused = std::move(fused);
  result.flux_factors = flux;
  result.iterations_run = 1;
  result.converged = true;
  result.fallback_pixels = fallback;

  FusionConfig likelihood_only;
  likelihood_only.alpha_I = 0.0;
  likelihood_only.beta_I = 0.0;
  likelihood_only.flux_mode = FluxMode::Fixed;
  TraceEntry entry;
  entry.iteration = 1;
  entry.log_posterior =
      log_posterior(stack, mask, result.fused, flux, likelihood_only);
  entry.max_rel_delta = 0.0;
  entry.flux = flux;
  result.trace.push_back(std::move(entry));
  return result;
}

std::vector<double> heuristic_flux(const ExposureStack &stack,
                                   std::optional<std::size_t> reference_index) {
  validate_stack(stack);
  SaturationMask mask = saturation_mask(stack);
  std::size_t k_count = stack.count();
  std::size_t ref = reference_index.value_or(k_count / 2);
  if (ref >= k_count)
    throw std::invalid_argument("heuristic_flux: reference index out of range");

  std::size_t n = stack.measurements.front().counts.size();
  std::vector<double> flux(k_count);
  for (std::size_t i = 0; i < k_count; ++i) {
    if (i == ref) {
      flux[i] = 1.0;
      continue;
    }
    double sum_i = 0.0;
    double sum_ref = 0.0;
    std::size_t joint = 0;
    for (std::size_t q = 0; q < n; ++q) {
      if (!mask.valid[i][q] || !mask.valid[ref][q])
        continue;
      ++joint;
      sum_i += stack.measurements[i].counts[q];
      sum_ref += stack.measurements[ref].counts[q];
    }
    if (joint == 0)
      throw DataError("heuristic_flux: no jointly unsaturated pixels between "
                      "measurements " +
                      std::to_string(i) + " and " + std::to_string(ref));
    if (!(sum_ref > 0.0) || !(sum_i > 0.0))
      throw DataError("heuristic_flux: zero joint counts between measurements " +
                      std::to_string(i) + " and " + std::to_string(ref));
    flux[i] = sum_i / sum_ref;
  }
  return flux;
}

Image<double> estimate_uncensored(const Image<double> &rate,
                                  const Image<double> &counts,
                                  const Image<std::uint8_t> &valid,
                                  std::uint32_t n_max) {
  require_same_shape(rate, counts, "estimate_uncensored");
  if (rate.height() != valid.height() || rate.width() != valid.width())
    throw std::invalid_argument("estimate_uncensored: shape mismatch");
  if (n_max < 1)
    throw std::invalid_argument("estimate_uncensored: n_max must be >= 1");

  Image<double> expected(rate.height(), rate.width());
  std::int64_t k = std::int64_t(n_max) - 1;
  for (std::size_t q = 0; q < rate.size(); ++q) {
    if (valid[q]) {
      expected[q] = counts[q];
    } else {
      if (rate[q] == 0.0)
        throw std::domain_error(
            "estimate_uncensored: zero rate cannot explain saturation at "
            "pixel " +
            std::to_string(q));
      expected[q] = truncated_poisson_mean(rate[q], k);
    }
  }
  return expected;
}

EmStepResult em_step(const ExposureStack &stack, const SaturationMask &mask,
                     const Image<double> &intensity,
                     const std::vector<double> &flux,
                     const FusionConfig &config) {
  validate_stack(stack);
  validate_flux(flux, stack.count(), "em_step");
  validate_intensity_prior(config);
  if (intensity.height() != stack.height() ||
      intensity.width() != stack.width())
    throw std::invalid_argument("em_step: intensity shape mismatch");
  if (mask.valid.size() != stack.count())
    throw std::invalid_argument("em_step: mask size mismatch");

  std::size_t k_count = stack.count();
  std::size_t height = stack.height();
  std::size_t width = stack.width();
  std::int64_t trunc_k = std::int64_t(stack.n_max) - 1;
  unsigned threads = resolve_thread_count(config.threads);

  EmStepResult out;
  out.signal_counts.assign(k_count, Image<double>(height, width));

  // Expected signal counts per (measurement, row) chunk; the chunk
  // layout is fixed so reductions below are thread-count independent.
  std::vector<double> row_signal(k_count * height, 0.0);
  parallel_for_chunks(k_count * height, threads, [&](std::size_t chunk) {
    std::size_t i = chunk / height;
    std::size_t r = chunk % height;
    const auto &m = stack.measurements[i];
    const auto &valid = mask.valid[i];
    auto &sig = out.signal_counts[i];
    double c_i = flux[i];
    double acc = 0.0;
    for (std::size_t col = 0; col < width; ++col) {
      std::size_t q = r * width + col;
      double signal_rate = c_i * intensity[q];
      double rate = signal_rate + m.background[q];
      double nu;
      if (valid[q]) {
        nu = m.counts[q];
      } else {
        if (rate == 0.0)
          throw NumericalError(
              "em_step: zero model rate at saturated pixel " +
              std::to_string(q) + " of measurement " + std::to_string(i));
        nu = truncated_poisson_mean(rate, trunc_k);
      }
      double nu_signal;
      if (rate == 0.0) {
        if (nu != 0.0)
          throw NumericalError("em_step: zero model rate with nonzero "
                               "counts at pixel " +
                               std::to_string(q) + " of measurement " +
                               std::to_string(i));
        nu_signal = 0.0;
      } else {
        nu_signal = binomial_split_mean(signal_rate, m.background[q], nu);
      }
      sig[q] = nu_signal;
      acc += nu_signal;
    }
    row_signal[chunk] = acc;
  });

  out.flux = flux;
  if (config.flux_mode == FluxMode::Estimate) {
    auto priors = resolved_flux_priors(stack, config);
    // Flux update uses the incoming intensity; the intensity update
    // below already sees the refreshed flux.
    double intensity_sum = 0.0;
    for (std::size_t q = 0; q < intensity.size(); ++q)
      intensity_sum += intensity[q];
    for (std::size_t i = 0; i < k_count; ++i) {
      double signal_sum = 0.0;
      for (std::size_t r = 0; r < height; ++r)
        signal_sum += row_signal[i * height + r];
      out.flux[i] = (priors[i].alpha + signal_sum) /
                    (priors[i].beta + intensity_sum);
    }
  }

  double flux_sum = 0.0;
  for (double c : out.flux)
    flux_sum += c;
  double denom = config.beta_I + flux_sum;

  out.intensity = Image<double>(height, width);
  parallel_for_chunks(height, threads, [&](std::size_t r) {
    for (std::size_t col = 0; col < width; ++col) {
      std::size_t q = r * width + col;
      double num = config.alpha_I;
      for (std::size_t i = 0; i < k_count; ++i)
        num += out.signal_counts[i][q];
      out.intensity[q] = num / denom;
    }
  });
  return out;
}

double log_posterior(const ExposureStack &stack, const SaturationMask &mask,
                     const Image<double> &intensity,
                     const std::vector<double> &flux,
                     const FusionConfig &config) {
  validate_stack(stack);
  validate_flux(flux, stack.count(), "log_posterior");
  validate_intensity_prior(config);
  if (intensity.height() != stack.height() ||
      intensity.width() != stack.width())
    throw std::invalid_argument("log_posterior: intensity shape mismatch");
  if (mask.valid.size() != stack.count())
    throw std::invalid_argument("log_posterior: mask size mismatch");

  std::int64_t trunc_k = std::int64_t(stack.n_max) - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < stack.count(); ++i) {
    const auto &m = stack.measurements[i];
    const auto &valid = mask.valid[i];
    for (std::size_t q = 0; q < intensity.size(); ++q) {
      double rate = flux[i] * intensity[q] + m.background[q];
      if (valid[q])
        total += poisson_log_pmf(m.counts[q], rate);
      else
        total += poisson_sf_log(rate, trunc_k);
    }
  }

  for (std::size_t q = 0; q < intensity.size(); ++q) {
    if (config.alpha_I > 0.0)
      total += config.alpha_I * std::log(intensity[q]);
    total -= config.beta_I * intensity[q];
  }

  if (config.flux_mode == FluxMode::Estimate) {
    auto priors = resolved_flux_priors(stack, config);
    for (std::size_t i = 0; i < stack.count(); ++i) {
      if (priors[i].alpha > 0.0)
        total += priors[i].alpha * std::log(flux[i]);
      total -= priors[i].beta * flux[i];
    }
  }
  return total;
}

FusionResult bayesian_mef(const ExposureStack &stack,
                          const FusionConfig &config) {
  validate_stack(stack);
  validate_intensity_prior(config);
  if (config.max_iterations < 1)
    throw std::invalid_argument("bayesian_mef: max_iterations must be >= 1");
  if (!(config.tolerance >= 0.0) || !std::isfinite(config.tolerance))
    throw std::invalid_argument("bayesian_mef: tolerance must be >= 0");

  SaturationMask mask = saturation_mask(stack);
  std::size_t k_count = stack.count();

  std::vector<double> flux;
  switch (config.flux_init) {
  case FluxInit::AcquisitionTimes:
    flux.reserve(k_count);
    for (const auto &m : stack.measurements)
      flux.push_back(m.acquisition_time);
    break;
  case FluxInit::Heuristic:
    flux = heuristic_flux(stack);
    break;
  case FluxInit::Explicit:
    validate_flux(config.explicit_flux, k_count, "bayesian_mef explicit flux");
    flux = config.explicit_flux;
    break;
  }

  // Validity-weighted count ratio; all-saturated pixels start from the
  // prior mean (or zero under an improper prior).
  Image<double> intensity(stack.height(), stack.width());
  for (std::size_t q = 0; q < intensity.size(); ++q) {
    double num = config.alpha_I;
    double den = config.beta_I;
    for (std::size_t i = 0; i < k_count; ++i) {
      if (!mask.valid[i][q])
        continue;
      num += stack.measurements[i].counts[q];
      den += flux[i];
    }
    intensity[q] = den > 0.0 ? num / den : 0.0;
  }

  FusionResult result;
  result.converged = false;
  for (std::uint32_t iter = 1; iter <= config.max_iterations; ++iter) {
    EmStepResult step = em_step(stack, mask, intensity, flux, config);

    for (std::size_t i = 0; i < k_count; ++i)
      if (!std::isfinite(step.flux[i]))
        throw NumericalError("bayesian_mef: non-finite flux factor for "
                             "measurement " +
                             std::to_string(i) + " at iteration " +
                             std::to_string(iter));
    for (std::size_t q = 0; q < step.intensity.size(); ++q)
      if (!std::isfinite(step.intensity[q]))
        throw NumericalError("bayesian_mef: non-finite intensity at pixel " +
                             std::to_string(q) + " at iteration " +
                             std::to_string(iter));

    double delta = 0.0;
    for (std::size_t q = 0; q < intensity.size(); ++q)
      delta = std::max(delta, rel_change(step.intensity[q], intensity[q]));
    for (std::size_t i = 0; i < k_count; ++i)
      delta = std::max(delta, rel_change(step.flux[i], flux[i]));

    intensity = std::move(step.intensity);
    flux = std::move(step.flux);

    TraceEntry entry;
    entry.iteration = iter;
    entry.log_posterior = log_posterior(stack, mask, intensity, flux, config);
    entry.max_rel_delta = delta;
    entry.flux = flux;
    result.trace.push_back(std::move(entry));

    if (delta <= config.tolerance) {
      result.converged = true;
      break;
    }
  }

  result.iterations_run = std::uint32_t(result.trace.size());
  result.fused = std::move(intensity);
  result.flux_factors = std::move(flux);
  return result;
}

Image<double> mean_dark_frames(const std::vector<Image<double>> &frames) {
  if (frames.empty())
    throw std::invalid_argument("mean_dark_frames: no frames");
  Image<double> mean(frames.front().height(), frames.front().width());
  for (const auto &f : frames) {
    require_same_shape(f, mean, "mean_dark_frames");
    for (std::size_t q = 0; q < f.size(); ++q)
      mean[q] += f[q];
  }
  double inv = 1.0 / double(frames.size());
  for (std::size_t q = 0; q < mean.size(); ++q)
    mean[q] *= inv;
  return mean;
}

} // namespace hdrfuse
