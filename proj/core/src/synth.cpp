#include "hdrfuse/synth.hpp"

#include <cmath>
#include <mutex>
#include <stdexcept>

#include <fftw3.h>

#include "hdrfuse/errors.hpp"
#include "hdrfuse/rng.hpp"

namespace hdrfuse {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate_params(const SimulationParams &params) {
  if (params.flux_factors.empty())
    throw std::invalid_argument("params: at least one flux factor required");
  for (double c : params.flux_factors)
    if (!(c > 0.0) || !std::isfinite(c))
      throw std::invalid_argument("params: flux factors must be > 0");
  if (params.repeats < 1)
    throw std::invalid_argument("params: repeats must be >= 1");
  if (!(params.background_mean >= 0.0) ||
      !(params.background_variance >= 0.0))
    throw std::invalid_argument("params: background moments must be >= 0");
  if (params.censor_threshold < 1)
    throw std::invalid_argument("params: censor threshold must be >= 1");
  if (!(params.peak_counts > 0.0) || !std::isfinite(params.peak_counts))
    throw std::invalid_argument("params: peak_counts must be > 0");
  std::size_t k_count = params.flux_factors.size() * params.repeats;
  if (!params.flux_jitter.empty()) {
    if (params.flux_jitter.size() != k_count)
      throw std::invalid_argument("params: flux_jitter length mismatch");
    for (double j : params.flux_jitter)
      if (!(j > 0.0) || !std::isfinite(j))
        throw std::invalid_argument("params: flux jitter must be > 0");
  }
}

// FFTW plan creation is not thread-safe; execution of distinct plans is.
std::mutex &fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

} // namespace

PhaseTarget spokes_target(std::size_t size, unsigned num_spokes, double rho) {
  if (size < 8)
    throw std::invalid_argument("spokes_target: size must be >= 8");
  if (num_spokes < 2 || num_spokes % 2 != 0)
    throw std::invalid_argument(
        "spokes_target: num_spokes must be even and >= 2");
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("spokes_target: rho must be finite and >= 0");

  PhaseTarget target;
  target.rho = rho;
  target.pattern = TargetPattern::Spokes;
  target.phase = Image<double>(size, size);
  double center = (double(size) - 1.0) / 2.0;
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t col = 0; col < size; ++col) {
      double theta = std::atan2(double(r) - center, double(col) - center);
      // Angular period 2 pi / num_spokes; bright in the first half of
      // each period. Even num_spokes keeps point symmetry: theta + pi
      // advances the phase by a whole number of periods.
      double turns = theta / (2.0 * kPi) * double(num_spokes);
      double frac = turns - std::floor(turns);
      target.phase(r, col) = frac < 0.5 ? rho : 0.0;
    }
  }
  return target;
}

PhaseTarget flat_target(std::size_t size, double rho) {
  if (size < 8)
    throw std::invalid_argument("flat_target: size must be >= 8");
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("flat_target: rho must be finite and >= 0");
  PhaseTarget target;
  target.rho = rho;
  target.pattern = TargetPattern::Flat;
  target.phase = Image<double>(size, size, rho);
  return target;
}

PhaseTarget custom_target(const Image<double> &pattern, double rho) {
  if (pattern.height() < 8 || pattern.width() < 8)
    throw std::invalid_argument("custom_target: pattern must be >= 8x8");
  if (!(rho >= 0.0) || !std::isfinite(rho))
    throw std::invalid_argument("custom_target: rho must be finite and >= 0");
  double max_val = 0.0;
  for (double v : pattern) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("custom_target: pattern must be >= 0");
    max_val = std::max(max_val, v);
  }
  PhaseTarget target;
  target.rho = rho;
  target.pattern = TargetPattern::Custom;
  target.phase = Image<double>(pattern.height(), pattern.width());
  if (max_val > 0.0 && rho > 0.0) {
    for (std::size_t q = 0; q < pattern.size(); ++q)
      target.phase[q] = pattern[q] == max_val ? rho : rho * pattern[q] / max_val;
  }
  return target;
}

// Quadratic illumination phase at the aperture edge, as a fraction of
// pi*radius. The defocus spreads the direct beam over a far-field disk of
// radius ~0.35*size (aliasing-free for any fraction < 0.5 at this aperture),
// so phase-object speckle modulates the top of the intensity histogram and
// weak scatterers saturate more pixels than strong ones. A collimated probe
// concentrates the far field into a few-pixel core whose peak-normalized
// shape is independent of the object, erasing that asymmetry.
constexpr double kProbeDefocusFraction = 0.35;

ComplexImage make_probe(std::size_t size) {
  if (size < 8)
    throw std::invalid_argument("make_probe: size must be >= 8");
  ComplexImage probe(size, size);
  double center = (double(size) - 1.0) / 2.0;
  double radius = double(size) / 4.0;
  double taper = radius / 4.0;
  double flat_radius = radius - taper;
  double edge_phase = kProbeDefocusFraction * kPi * radius;
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t col = 0; col < size; ++col) {
      double dy = double(r) - center;
      double dx = double(col) - center;
      double dist = std::sqrt(dx * dx + dy * dy);
      double amp;
      if (dist <= flat_radius)
        amp = 1.0;
      else if (dist <= radius)
        amp = 0.5 * (1.0 + std::cos(kPi * (dist - flat_radius) / taper));
      else
        amp = 0.0;
      double curvature = edge_phase * (dist / radius) * (dist / radius);
      probe(r, col) = std::polar(amp, curvature);
    }
  }
  return probe;
}

ComplexImage centered_dft2(const ComplexImage &field) {
  std::size_t h = field.height();
  std::size_t w = field.width();
  if (h == 0 || w == 0)
    throw std::invalid_argument("centered_dft2: empty input");

  // Centering via index shifts: ifftshift on input, fftshift on output,
  // around the standard DFT with the origin at index 0.
  std::size_t sh = h / 2;
  std::size_t sw = w / 2;

  std::vector<std::complex<double>> in(h * w), out(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      in[r * w + c] = field((r + sh) % h, (c + sw) % w);

  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_plan plan = fftw_plan_dft_2d(
        int(h), int(w), reinterpret_cast<fftw_complex *>(in.data()),
        reinterpret_cast<fftw_complex *>(out.data()), FFTW_FORWARD,
        FFTW_ESTIMATE);
    if (!plan)
      throw std::runtime_error("centered_dft2: planning failed");
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  ComplexImage result(h, w);
  std::size_t uh = h - sh; // fftshift offset (inverse of ifftshift)
  std::size_t uw = w - sw;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      result(r, c) = out[((r + uh) % h) * w + (c + uw) % w];
  return result;
}

Image<double> diffraction_intensity(const PhaseTarget &target,
                                    const ComplexImage &probe,
                                    double peak_counts) {
  if (target.phase.height() != probe.height() ||
      target.phase.width() != probe.width())
    throw std::invalid_argument("diffraction_intensity: shape mismatch");
  if (!(peak_counts > 0.0) || !std::isfinite(peak_counts))
    throw std::invalid_argument("diffraction_intensity: peak must be > 0");

  ComplexImage exit_wave(probe.height(), probe.width());
  for (std::size_t q = 0; q < probe.size(); ++q)
    exit_wave[q] = std::polar(1.0, target.phase[q]) * probe[q];

  ComplexImage far_field = centered_dft2(exit_wave);
  Image<double> intensity(probe.height(), probe.width());
  double max_val = 0.0;
  for (std::size_t q = 0; q < intensity.size(); ++q) {
    double v = std::norm(far_field[q]);
    intensity[q] = v;
    max_val = std::max(max_val, v);
  }
  if (!(max_val > 0.0) || !std::isfinite(max_val))
    throw NumericalError("diffraction_intensity: degenerate far field");
  // Divide first so the peak pixel lands on peak_counts exactly.
  for (std::size_t q = 0; q < intensity.size(); ++q)
    intensity[q] = intensity[q] / max_val * peak_counts;
  return intensity;
}

SyntheticScene make_scene(const PhaseTarget &target,
                          const SimulationParams &params) {
  validate_params(params);
  SyntheticScene scene;
  scene.target = target;
  scene.params = params;

  ComplexImage probe = make_probe(target.phase.height());
  scene.ground_truth =
      diffraction_intensity(target, probe, params.peak_counts);

  std::size_t k_count = params.flux_factors.size() * params.repeats;
  double sigma = std::sqrt(params.background_variance);
  scene.backgrounds.reserve(k_count);
  for (std::size_t i = 0; i < k_count; ++i) {
    Image<double> b(target.phase.height(), target.phase.width());
    for (std::size_t q = 0; q < b.size(); ++q) {
      CounterRng rng(params.seed, CounterRng::Domain::Background,
                     std::uint32_t(i), q);
      b[q] = std::max(0.0, params.background_mean + sigma * rng.next_normal());
    }
    scene.backgrounds.push_back(std::move(b));
  }
  return scene;
}

ExposureStack sample_stack(const SyntheticScene &scene,
                           const SampleOptions &options) {
  validate_params(scene.params);
  const SimulationParams &params = scene.params;
  std::size_t k_count = params.flux_factors.size() * params.repeats;
  if (scene.backgrounds.size() != k_count)
    throw std::invalid_argument("sample_stack: background count mismatch");
  if (scene.ground_truth.empty())
    throw std::invalid_argument("sample_stack: missing ground truth");
  if (options.background == BackgroundMode::DarkFrameMean &&
      options.dark_frames < 1)
    throw std::invalid_argument("sample_stack: dark_frames must be >= 1");

  ExposureStack stack;
  stack.n_max = params.censor_threshold;
  stack.measurements.reserve(k_count);
  double censor = double(params.censor_threshold);

  for (std::size_t i = 0; i < k_count; ++i) {
    double nominal = params.flux_factors[i / params.repeats];
    double true_flux =
        params.flux_jitter.empty() ? nominal : nominal * params.flux_jitter[i];
    const Image<double> &truth = scene.ground_truth;
    const Image<double> &b = scene.backgrounds[i];

    Measurement m;
    m.acquisition_time = nominal;
    m.counts = Image<double>(truth.height(), truth.width());
    for (std::size_t q = 0; q < truth.size(); ++q) {
      CounterRng rng(params.seed, CounterRng::Domain::Counts,
                     std::uint32_t(i), q);
      double rate = true_flux * truth[q] + b[q];
      double nu = double(rng.next_poisson(rate));
      m.counts[q] = std::min(nu, censor);
    }

    if (options.background == BackgroundMode::Exact) {
      m.background = b;
    } else {
      Image<double> dark_mean(truth.height(), truth.width());
      double inv = 1.0 / double(options.dark_frames);
      for (std::size_t q = 0; q < truth.size(); ++q) {
        CounterRng rng(params.seed, CounterRng::Domain::DarkFrames,
                       std::uint32_t(i), q);
        double acc = 0.0;
        for (std::uint32_t j = 0; j < options.dark_frames; ++j)
          acc += double(rng.next_poisson(b[q]));
        dark_mean[q] = acc * inv;
      }
      m.background = std::move(dark_mean);
    }
    stack.measurements.push_back(std::move(m));
  }
  return stack;
}

} // namespace hdrfuse
