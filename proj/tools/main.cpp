// hdrfuse: simulate, fuse, evaluate, and render multi-exposure
// photon-count stacks with censoring-aware Bayesian fusion.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "hdrfuse/bundle.hpp"
#include "hdrfuse/errors.hpp"
#include "hdrfuse/fusion.hpp"
#include "hdrfuse/metrics.hpp"
#include "hdrfuse/parallel.hpp"
#include "hdrfuse/rng.hpp"
#include "hdrfuse/synth.hpp"

namespace fs = std::filesystem;
using namespace hdrfuse;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr int kExitNoConvergence = 5;

unsigned default_threads() {
  if (const char *env = std::getenv("HDRFUSE_THREADS")) {
    char *end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v > 0)
      return unsigned(v);
  }
  return 0; // auto
}

std::vector<double> parse_double_list(const std::string &text,
                                      const char *what) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size())
        throw std::invalid_argument(item);
      values.push_back(v);
    } catch (const std::exception &) {
      throw CLI::ValidationError(std::string(what) +
                                 ": cannot parse number '" + item + "'");
    }
  }
  if (values.empty())
    throw CLI::ValidationError(std::string(what) + ": empty list");
  return values;
}

struct SimulateOptions {
  std::string out;
  std::size_t size = 128;
  double rho = 0.5;
  unsigned spokes = 16;
  std::string pattern = "spokes";
  std::string fluxes = "1,8,64";
  std::uint32_t repeats = 6;
  double mu_b = 100.0;
  double var_b = 0.8;
  std::uint32_t censor = 2048;
  double peak = 128.0;
  std::uint64_t seed = 0;
  std::string jitter; // "lo,hi" or empty
  std::string dark_mode = "exact";
  std::uint32_t dark_frames = 150;
};

int run_simulate(const SimulateOptions &opt) {
  SimulationParams params;
  params.flux_factors = parse_double_list(opt.fluxes, "--fluxes");
  params.repeats = opt.repeats;
  params.background_mean = opt.mu_b;
  params.background_variance = opt.var_b;
  params.censor_threshold = opt.censor;
  params.peak_counts = opt.peak;
  params.seed = opt.seed;

  std::size_t k_count = params.flux_factors.size() * params.repeats;
  if (!opt.jitter.empty()) {
    std::vector<double> range = parse_double_list(opt.jitter, "--flux-jitter");
    if (range.size() != 2 || !(range[0] > 0.0) || !(range[1] >= range[0]))
      throw CLI::ValidationError("--flux-jitter expects lo,hi with 0 < lo <= hi");
    params.flux_jitter.resize(k_count);
    for (std::size_t i = 0; i < k_count; ++i) {
      CounterRng rng(params.seed, CounterRng::Domain::Generic,
                     std::uint32_t(i), 0);
      params.flux_jitter[i] = range[0] + (range[1] - range[0]) * rng.next_double();
    }
  }

  PhaseTarget target = opt.pattern == "flat"
                           ? flat_target(opt.size, opt.rho)
                           : spokes_target(opt.size, opt.spokes, opt.rho);
  SyntheticScene scene = make_scene(target, params);

  SampleOptions sample;
  sample.background = opt.dark_mode == "sampled" ? BackgroundMode::DarkFrameMean
                                                 : BackgroundMode::Exact;
  sample.dark_frames = opt.dark_frames;

  StackBundle bundle;
  bundle.stack = sample_stack(scene, sample);
  bundle.ground_truth = scene.ground_truth;
  bundle.seed = params.seed;
  if (!params.flux_jitter.empty()) {
    bundle.true_flux.resize(k_count);
    for (std::size_t i = 0; i < k_count; ++i)
      bundle.true_flux[i] =
          params.flux_factors[i / params.repeats] * params.flux_jitter[i];
  }
  save_bundle(opt.out, bundle);

  std::cout << "seed=" << params.seed << "\n"
            << "measurements=" << k_count << "\n"
            << "out=" << opt.out << "\n";
  return kExitOk;
}

struct FuseOptions {
  std::string in;
  std::string out;
  std::string method = "bayes";
  std::string flux = "times";
  std::string flux_mode = "fixed";
  double tol = 1e-6;
  std::uint32_t max_iter = 200;
  double alpha_I = 1e-3;
  double beta_I = 1e-3;
  unsigned threads = 0;
  bool batch = false;
  unsigned jobs = 0;
};

FusionResult fuse_one(const StackBundle &bundle, const FuseOptions &opt) {
  FusionConfig config;
  config.alpha_I = opt.alpha_I;
  config.beta_I = opt.beta_I;
  config.tolerance = opt.tol;
  config.max_iterations = opt.max_iter;
  config.threads = opt.threads;
  config.flux_mode =
      opt.flux_mode == "estimate" ? FluxMode::Estimate : FluxMode::Fixed;

  std::vector<double> fixed_list;
  if (opt.flux.rfind("fixed:", 0) == 0) {
    fixed_list = parse_double_list(opt.flux.substr(6), "--flux fixed:");
    config.flux_init = FluxInit::Explicit;
    config.explicit_flux = fixed_list;
  } else if (opt.flux == "heuristic") {
    config.flux_init = FluxInit::Heuristic;
  } else {
    config.flux_init = FluxInit::AcquisitionTimes;
  }

  if (opt.method == "conventional") {
    std::vector<double> flux;
    if (!fixed_list.empty()) {
      flux = fixed_list;
    } else if (opt.flux == "heuristic") {
      flux = heuristic_flux(bundle.stack);
    } else {
      for (const auto &m : bundle.stack.measurements)
        flux.push_back(m.acquisition_time);
    }
    return conventional_mef(bundle.stack, flux);
  }
  return bayesian_mef(bundle.stack, config);
}

std::vector<double> initial_flux_for_report(const StackBundle &bundle,
                                            const FuseOptions &opt) {
  if (opt.flux.rfind("fixed:", 0) == 0)
    return parse_double_list(opt.flux.substr(6), "--flux fixed:");
  if (opt.flux == "heuristic")
    return heuristic_flux(bundle.stack);
  std::vector<double> times;
  for (const auto &m : bundle.stack.measurements)
    times.push_back(m.acquisition_time);
  return times;
}

// Saturated anywhere among the highest-flux measurements.
Image<std::uint8_t> longest_exposure_saturation(const ExposureStack &stack) {
  double t_max = 0.0;
  for (const auto &m : stack.measurements)
    t_max = std::max(t_max, m.acquisition_time);
  Image<std::uint8_t> mask(stack.height(), stack.width(), 0);
  for (const auto &m : stack.measurements) {
    if (m.acquisition_time != t_max)
      continue;
    for (std::size_t q = 0; q < m.counts.size(); ++q)
      if (m.counts[q] >= double(stack.n_max))
        mask[q] = 1;
  }
  return mask;
}

int fuse_bundle_dir(const fs::path &in_dir, const fs::path &out_dir,
                    const FuseOptions &opt) {
  StackBundle bundle = load_bundle(in_dir);
  std::vector<double> flux_initial = initial_flux_for_report(bundle, opt);

  auto t0 = std::chrono::steady_clock::now();
  FusionResult result = fuse_one(bundle, opt);
  auto t1 = std::chrono::steady_clock::now();

  fs::create_directories(out_dir);
  save_real_image(out_dir / "fused.json", result.fused);
  save_trace_csv(out_dir / "trace.csv", result.trace);

  RunReport report;
  report.method = opt.method;
  report.config = {
      {"flux", opt.flux},
      {"flux_mode", opt.flux_mode},
      {"tolerance", format_double(opt.tol)},
      {"max_iterations", std::to_string(opt.max_iter)},
      {"alpha_I", format_double(opt.alpha_I)},
      {"beta_I", format_double(opt.beta_I)},
      {"threads", std::to_string(resolve_thread_count(opt.threads))},
  };
  report.flux_initial = flux_initial;
  report.flux_final = result.flux_factors;
  report.iterations = result.iterations_run;
  report.converged = result.converged;
  report.fallback_pixels = result.fallback_pixels;
  report.wall_time_seconds =
      std::chrono::duration<double>(t1 - t0).count();

  if (bundle.ground_truth) {
    const Image<double> &truth = *bundle.ground_truth;
    report.metrics["mssim_log"] =
        mssim(log1p_image(truth), log1p_image(result.fused));
    Image<std::uint8_t> positive(truth.height(), truth.width(), 0);
    for (std::size_t q = 0; q < truth.size(); ++q)
      positive[q] = truth[q] > 0.0 ? 1 : 0;
    report.metrics["rmse_positive"] =
        masked_relative_rmse(result.fused, truth, positive);
    Image<std::uint8_t> saturated = longest_exposure_saturation(bundle.stack);
    std::size_t n_sat = 0;
    for (std::size_t q = 0; q < saturated.size(); ++q)
      n_sat += saturated[q];
    report.metrics["saturated_pixels"] = double(n_sat);
    if (n_sat > 0)
      report.metrics["rmse_saturated"] =
          masked_relative_rmse(result.fused, truth, saturated);
  }
  save_report(out_dir / "report.json", report);
  return result.converged ? kExitOk : kExitNoConvergence;
}

int run_fuse(const FuseOptions &opt) {
  if (!opt.batch)
    return fuse_bundle_dir(opt.in, opt.out, opt);

  // Batch: every immediate subdirectory holding a manifest is a bundle.
  std::vector<fs::path> bundles;
  for (const auto &entry : fs::directory_iterator(opt.in))
    if (entry.is_directory() && fs::exists(entry.path() / "manifest.json"))
      bundles.push_back(entry.path());
  std::sort(bundles.begin(), bundles.end());
  if (bundles.empty())
    throw DataError("no bundles found under " + opt.in);

  unsigned jobs = opt.jobs > 0 ? opt.jobs : resolve_thread_count(0);
  std::vector<int> codes(bundles.size(), kExitOk);
  std::vector<std::string> failures(bundles.size());
  parallel_for_chunks(bundles.size(), jobs, [&](std::size_t idx) {
    try {
      codes[idx] = fuse_bundle_dir(bundles[idx],
                                   fs::path(opt.out) / bundles[idx].filename(),
                                   opt);
    } catch (const DataError &e) {
      codes[idx] = kExitData;
      failures[idx] = e.what();
    } catch (const NumericalError &e) {
      codes[idx] = kExitNumerical;
      failures[idx] = e.what();
    }
  });

  int exit_code = kExitOk;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    if (!failures[i].empty())
      std::cerr << "error: " << bundles[i].string() << ": " << failures[i]
                << "\n";
    // Data/numerical failures outrank non-convergence.
    if (codes[i] == kExitData || codes[i] == kExitNumerical)
      exit_code = codes[i];
    else if (codes[i] == kExitNoConvergence && exit_code == kExitOk)
      exit_code = kExitNoConvergence;
  }
  std::cout << "bundles=" << bundles.size() << "\n";
  return exit_code;
}

struct EvaluateOptions {
  std::string in;
  std::string fused;
  std::string report;
};

int run_evaluate(const EvaluateOptions &opt) {
  StackBundle bundle = load_bundle(opt.in);
  if (!bundle.ground_truth)
    throw DataError("bundle " + opt.in + " carries no ground truth");
  const Image<double> &truth = *bundle.ground_truth;

  fs::path fused_path = opt.fused;
  if (fs::is_directory(fused_path))
    fused_path /= "fused.json";
  Image<double> fused = load_real_image(fused_path);
  if (fused.height() != truth.height() || fused.width() != truth.width())
    throw DataError("fused image shape does not match ground truth");

  double mssim_log = mssim(log1p_image(truth), log1p_image(fused));
  Image<std::uint8_t> positive(truth.height(), truth.width(), 0);
  for (std::size_t q = 0; q < truth.size(); ++q)
    positive[q] = truth[q] > 0.0 ? 1 : 0;
  double rmse = masked_relative_rmse(fused, truth, positive);

  Image<std::uint8_t> saturated = longest_exposure_saturation(bundle.stack);
  std::size_t n_sat = 0;
  for (std::size_t q = 0; q < saturated.size(); ++q)
    n_sat += saturated[q];

  std::ostringstream lines;
  lines << "mssim_log=" << format_double(mssim_log) << "\n";
  lines << "rmse_positive=" << format_double(rmse) << "\n";
  lines << "saturated_pixels=" << n_sat << "\n";
  if (n_sat > 0)
    lines << "rmse_saturated="
          << format_double(masked_relative_rmse(fused, truth, saturated))
          << "\n";

  std::cout << lines.str();
  fs::path report_path = opt.report.empty()
                             ? fused_path.parent_path() / "evaluation.txt"
                             : fs::path(opt.report);
  write_file_atomic(report_path, lines.str());
  return kExitOk;
}

struct RenderOptions {
  std::string in;
  std::string out;
  int measurement = -1;
  bool mark_saturated = false;
};

int run_render(const RenderOptions &opt) {
  Image<double> img;
  Image<std::uint8_t> saturated;

  fs::path in_path = opt.in;
  if (fs::is_directory(in_path) && fs::exists(in_path / "manifest.json")) {
    StackBundle bundle = load_bundle(in_path);
    if (opt.measurement < 0 ||
        std::size_t(opt.measurement) >= bundle.stack.count())
      throw CLI::ValidationError(
          "--measurement required (0.." +
          std::to_string(bundle.stack.count() - 1) + ") for a bundle input");
    const Measurement &m = bundle.stack.measurements[opt.measurement];
    img = m.counts;
    if (opt.mark_saturated) {
      saturated = Image<std::uint8_t>(img.height(), img.width(), 0);
      for (std::size_t q = 0; q < img.size(); ++q)
        saturated[q] = img[q] >= double(bundle.stack.n_max) ? 1 : 0;
    }
  } else {
    if (opt.mark_saturated)
      throw CLI::ValidationError(
          "--mark-saturated applies only to bundle measurements");
    img = load_real_image(in_path);
  }

  // log(1+v) mapped linearly to [0, 65535]; constant images render as 0.
  double lo = std::log1p(img[0]);
  double hi = lo;
  for (double v : img) {
    double s = std::log1p(v);
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;

  std::string body;
  body.reserve(img.size() * 2);
  for (std::size_t q = 0; q < img.size(); ++q) {
    double mapped = (std::log1p(img[q]) - lo) * scale;
    auto v = std::uint16_t(std::llround(mapped));
    if (!saturated.empty() && saturated[q])
      v = 65535;
    body.push_back(char(v >> 8)); // network byte order per the PGM spec
    body.push_back(char(v & 0xFF));
  }

  std::ostringstream header;
  header << "P5\n" << img.width() << " " << img.height() << "\n65535\n";
  write_file_atomic(opt.out, header.str() + body);
  return kExitOk;
}

struct FluxOptions {
  std::string in;
  int reference = -1;
};

int run_flux(const FluxOptions &opt) {
  StackBundle bundle = load_bundle(opt.in);
  std::optional<std::size_t> ref;
  if (opt.reference >= 0)
    ref = std::size_t(opt.reference);
  std::vector<double> flux = heuristic_flux(bundle.stack, ref);
  for (std::size_t i = 0; i < flux.size(); ++i)
    std::cout << "c_" << i << "=" << format_double(flux[i]) << "\n";
  return kExitOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Multi-exposure fusion of censored photon-count stacks"};
  app.require_subcommand(1);

  SimulateOptions sim;
  CLI::App *c_sim = app.add_subcommand(
      "simulate", "Generate a synthetic exposure-stack bundle");
  c_sim->add_option("--out", sim.out, "Output bundle directory")->required();
  c_sim->add_option("--size", sim.size, "Grid side length (>= 8)");
  c_sim->add_option("--rho", sim.rho, "Peak phase of the target");
  c_sim->add_option("--spokes", sim.spokes, "Spoke count (even)");
  c_sim->add_option("--pattern", sim.pattern, "Target pattern")
      ->check(CLI::IsMember({"spokes", "flat"}));
  c_sim->add_option("--fluxes", sim.fluxes, "Comma-separated flux factors");
  c_sim->add_option("--repeats", sim.repeats, "Repeats per flux factor");
  c_sim->add_option("--mu-b", sim.mu_b, "Background mean");
  c_sim->add_option("--var-b", sim.var_b, "Background variance");
  c_sim->add_option("--censor", sim.censor, "Censoring threshold (>= 1)");
  c_sim->add_option("--peak", sim.peak, "Peak counts at unit flux");
  c_sim->add_option("--seed", sim.seed, "RNG seed");
  c_sim->add_option("--flux-jitter", sim.jitter,
                    "lo,hi: per-measurement true-flux multipliers ~ U[lo,hi]");
  c_sim->add_option("--dark-mode", sim.dark_mode,
                    "Background handed to fusion: exact or sampled")
      ->check(CLI::IsMember({"exact", "sampled"}));
  c_sim->add_option("--dark-frames", sim.dark_frames,
                    "Dark frames averaged in sampled mode");

  FuseOptions fus;
  fus.threads = default_threads();
  CLI::App *c_fuse =
      app.add_subcommand("fuse", "Fuse a bundle into an intensity image");
  c_fuse->add_option("--in", fus.in, "Bundle directory (or parent in batch mode)")
      ->required();
  c_fuse->add_option("--out", fus.out, "Output directory")->required();
  c_fuse->add_option("--method", fus.method, "Fusion method")
      ->check(CLI::IsMember({"bayes", "conventional"}));
  c_fuse->add_option("--flux", fus.flux,
                     "Flux initialization: times, heuristic, or fixed:<list>");
  c_fuse->add_option("--flux-mode", fus.flux_mode, "fixed or estimate")
      ->check(CLI::IsMember({"fixed", "estimate"}));
  c_fuse->add_option("--tol", fus.tol, "Convergence tolerance");
  c_fuse->add_option("--max-iter", fus.max_iter, "Iteration cap");
  c_fuse->add_option("--alpha-I", fus.alpha_I, "Intensity prior shape");
  c_fuse->add_option("--beta-I", fus.beta_I, "Intensity prior rate");
  c_fuse->add_option("--threads", fus.threads,
                     "Worker threads per fusion (0 = auto; env HDRFUSE_THREADS)");
  c_fuse->add_flag("--batch", fus.batch, "Treat --in as a directory of bundles");
  c_fuse->add_option("--jobs", fus.jobs, "Concurrent bundles in batch mode");

  EvaluateOptions ev;
  CLI::App *c_eval = app.add_subcommand(
      "evaluate", "Compare a fused image against bundle ground truth");
  c_eval->add_option("--in", ev.in, "Bundle directory")->required();
  c_eval->add_option("--fused", ev.fused, "Fused run directory or image manifest")
      ->required();
  c_eval->add_option("--report", ev.report, "Report file path");

  RenderOptions ren;
  CLI::App *c_render = app.add_subcommand(
      "render", "Write a 16-bit log-scale graymap preview");
  c_render->add_option("--in", ren.in, "Image manifest or bundle directory")
      ->required();
  c_render->add_option("--out", ren.out, "Output .pgm path")->required();
  c_render->add_option("--measurement", ren.measurement,
                       "Measurement index when --in is a bundle");
  c_render->add_flag("--mark-saturated", ren.mark_saturated,
                     "Paint censored pixels full white");

  FluxOptions flx;
  CLI::App *c_flux = app.add_subcommand(
      "flux", "Print heuristic flux factors for a bundle");
  c_flux->add_option("--in", flx.in, "Bundle directory")->required();
  c_flux->add_option("--reference", flx.reference,
                     "Reference measurement (default K/2)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(c_sim))
      return run_simulate(sim);
    if (app.got_subcommand(c_fuse))
      return run_fuse(fus);
    if (app.got_subcommand(c_eval))
      return run_evaluate(ev);
    if (app.got_subcommand(c_render))
      return run_render(ren);
    if (app.got_subcommand(c_flux))
      return run_flux(flx);
  } catch (const CLI::ValidationError &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError &e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError &e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::invalid_argument &e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::domain_error &e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
