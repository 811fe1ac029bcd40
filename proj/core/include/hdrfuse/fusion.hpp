#ifndef HDRFUSE_FUSION_HPP
#define HDRFUSE_FUSION_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "hdrfuse/image.hpp"
#include "hdrfuse/stack.hpp"

namespace hdrfuse {

enum class FluxMode { Fixed, Estimate };

enum class FluxInit { AcquisitionTimes, Heuristic, Explicit };

// Gamma prior (shape alpha, rate beta) on one flux factor.
struct GammaPrior {
  double alpha = 1.0;
  double beta = 1.0;
};

struct FusionConfig {
  // Gamma prior on the fused intensity. Small symmetric values keep the
  // intensity update stable at all-saturated pixels without noticeably
  // biasing well-measured ones. Both zero is allowed (improper prior;
  // reduces to maximum likelihood where data are unsaturated).
  double alpha_I = 1e-3;
  double beta_I = 1e-3;

  FluxMode flux_mode = FluxMode::Fixed;
  FluxInit flux_init = FluxInit::AcquisitionTimes;
  // Required iff flux_init == Explicit; length K, all entries > 0.
  std::vector<double> explicit_flux;

  // Per-measurement priors on flux factors, used when flux_mode ==
  // Estimate. Empty means the default alpha_i = 1, beta_i = 1 / t_i,
  // an exponential prior whose mean is the acquisition time.
  std::vector<GammaPrior> flux_priors;

  std::uint32_t max_iterations = 200;
  double tolerance = 1e-6;

  // Worker threads for the per-pixel loops; 0 picks the machine default.
  // Results are bit-identical for every value.
  unsigned threads = 1;
};

struct TraceEntry {
  std::uint32_t iteration = 0;
  double log_posterior = 0.0;
  double max_rel_delta = 0.0;
  std::vector<double> flux;
};

struct FusionResult {
  Image<double> fused;
  std::vector<double> flux_factors;
  std::uint32_t iterations_run = 0;
  bool converged = false;
  std::vector<TraceEntry> trace;
  // Pixels where every exposure saturated and the estimate fell back to
  // the censoring-floor value (conventional estimator only).
  std::size_t fallback_pixels = 0;
};

// Per-pixel weighted maximum-likelihood fusion of background-subtracted
// counts, using only unsaturated exposures:
//   I(q) = sum_i w_i max(0, n_i - b_i) / sum_i w_i c_i.
// Pixels saturated in every exposure fall back to the largest intensity
// consistent with the censoring floor, (n_max - min_i b_i) / min_i c_i,
// clamped at zero, and are tallied in fallback_pixels.
FusionResult conventional_mef(const ExposureStack &stack,
                              const std::vector<double> &flux);

// Ratio-of-sums flux estimate: c_i = S_i / S_ref with both sums taken
// over pixels unsaturated in measurement i and in the reference. The
// reference entry is exactly 1. reference_index defaults to K / 2.
std::vector<double> heuristic_flux(const ExposureStack &stack,
                                   std::optional<std::size_t> reference_index =
                                       std::nullopt);

// Posterior expectation of the uncensored count at every pixel: the
// observed count where valid, the truncated-Poisson mean above the
// censoring threshold where saturated.
Image<double> estimate_uncensored(const Image<double> &rate,
                                  const Image<double> &counts,
                                  const Image<std::uint8_t> &valid,
                                  std::uint32_t n_max);

struct EmStepResult {
  Image<double> intensity;
  std::vector<double> flux;
  // Expected signal-only counts nu_Ii(q) from the binomial split.
  std::vector<Image<double>> signal_counts;
};

// One expectation-maximization sweep: censored-count expectation,
// signal/background split, then flux update (when estimating; uses the
// incoming intensity) followed by the intensity update (uses the fresh
// flux). All reductions run in fixed chunk order, so the result is
// independent of config.threads.
EmStepResult em_step(const ExposureStack &stack, const SaturationMask &mask,
                     const Image<double> &intensity,
                     const std::vector<double> &flux,
                     const FusionConfig &config);

// Full fusion loop. Initializes flux from config.flux_init, the
// intensity from the validity-weighted count ratio, and iterates em_step
// until the largest relative change in intensity or flux drops to
// config.tolerance or max_iterations is reached. Non-finite intermediate
// values raise NumericalError naming the pixel or measurement.
FusionResult bayesian_mef(const ExposureStack &stack,
                          const FusionConfig &config);

// The objective the EM loop ascends: censored Poisson log-likelihood
// (Poisson pmf where valid, tail mass where saturated) plus gamma prior
// terms alpha*log(x) - beta*x for the intensity and, when flux_mode ==
// Estimate, for each flux factor. Parameter-independent constants are
// omitted consistently, so only differences are meaningful.
double log_posterior(const ExposureStack &stack, const SaturationMask &mask,
                     const Image<double> &intensity,
                     const std::vector<double> &flux,
                     const FusionConfig &config);

// Pixel-wise mean of dark calibration frames.
Image<double> mean_dark_frames(const std::vector<Image<double>> &frames);

} // namespace hdrfuse

#endif
