#ifndef HDRFUSE_SYNTH_HPP
#define HDRFUSE_SYNTH_HPP

#include <complex>
#include <cstdint>
#include <vector>

#include "hdrfuse/image.hpp"
#include "hdrfuse/stack.hpp"

namespace hdrfuse {

using ComplexImage = Image<std::complex<double>>;

enum class TargetPattern { Spokes, Flat, Custom };

// Phase screen applied to the illumination: phi(q) in [0, rho] with
// max phi = rho (rho = 0 means a flat zero screen).
struct PhaseTarget {
  Image<double> phase;
  double rho = 0.0;
  TargetPattern pattern = TargetPattern::Flat;
};

struct SimulationParams {
  std::vector<double> flux_factors = {1.0, 8.0, 64.0};
  std::uint32_t repeats = 6;
  double background_mean = 100.0;
  double background_variance = 0.8;
  std::uint32_t censor_threshold = 2048;
  double peak_counts = 128.0;
  std::uint64_t seed = 0;
  // Optional per-measurement multipliers emulating source power drift:
  // the true photon rate uses flux_factor * jitter while the recorded
  // acquisition time keeps the nominal flux_factor. Empty means no
  // drift. Length must be flux_factors.size() * repeats when set.
  std::vector<double> flux_jitter;
};

struct SyntheticScene {
  PhaseTarget target;
  SimulationParams params;
  Image<double> ground_truth; // noise-free intensity, max = peak_counts
  std::vector<Image<double>> backgrounds; // true per-measurement b_i(q)
};

// Binary angular star: num_spokes bright wedges of phase rho alternating
// with dark gaps, each wedge spanning half of a 2 pi / num_spokes period.
// num_spokes must be even so the pattern is symmetric under point
// reflection through the center. size >= 8, num_spokes >= 2, rho >= 0.
PhaseTarget spokes_target(std::size_t size, unsigned num_spokes, double rho);

// Uniform screen of phase rho.
PhaseTarget flat_target(std::size_t size, double rho);

// Arbitrary nonnegative pattern, rescaled so its maximum equals rho.
PhaseTarget custom_target(const Image<double> &pattern, double rho);

// Circular aperture with a cosine-tapered rim, diameter half the grid,
// carrying a quadratic (defocus) phase that spreads the far-field direct
// beam over a disk of roughly a third of the grid. The defocus makes the
// peak-normalized far field sensitive to the object's phase strength;
// see kProbeDefocusFraction in synth.cpp.
ComplexImage make_probe(std::size_t size);

// 2-D discrete Fourier transform with the zero-frequency component at
// the grid center (input and output both centered).
ComplexImage centered_dft2(const ComplexImage &field);

// Far-field intensity |DFT[exp(i phi) * probe]|^2, rescaled so its
// maximum equals peak_counts.
Image<double> diffraction_intensity(const PhaseTarget &target,
                                    const ComplexImage &probe,
                                    double peak_counts);

// Builds the noise-free scene: probe, far-field ground truth, and true
// background maps drawn from Normal(background_mean, background_variance)
// clamped at zero, one map per measurement.
SyntheticScene make_scene(const PhaseTarget &target,
                          const SimulationParams &params);

// How the sampled stack's background field is filled in.
enum class BackgroundMode {
  Exact,          // the scene's true b_i(q), known-background assumption
  DarkFrameMean,  // pixel mean of freshly sampled Poisson dark frames
};

struct SampleOptions {
  BackgroundMode background = BackgroundMode::Exact;
  std::uint32_t dark_frames = 150; // used by DarkFrameMean
};

// Draws the censored count stack: for measurement i and pixel q,
// nu ~ Poisson(c_i * jitter_i * I(q) + b_i(q)) recorded as
// min(nu, censor_threshold), with acquisition_time = c_i. Measurements
// are ordered by flux factor, repeats contiguous. Identical seeds give
// bit-identical stacks.
ExposureStack sample_stack(const SyntheticScene &scene,
                           const SampleOptions &options = {});

} // namespace hdrfuse

#endif
