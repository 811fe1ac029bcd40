#ifndef HDRFUSE_BUNDLE_HPP
#define HDRFUSE_BUNDLE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hdrfuse/fusion.hpp"
#include "hdrfuse/image.hpp"
#include "hdrfuse/stack.hpp"

namespace hdrfuse {

// On-disk exposure stack: a directory holding manifest.json plus raw
// row-major little-endian arrays (counts as uint32, reals as float64).
// Per-measurement dark data is either a scalar in the manifest or a
// float64 image file. Ground truth and simulation metadata are optional.
struct StackBundle {
  ExposureStack stack;
  std::optional<Image<double>> ground_truth;
  std::vector<double> true_flux; // empty when unknown
  std::optional<std::uint64_t> seed;
};

StackBundle load_bundle(const std::filesystem::path &dir);

// Writes manifest and raw files; every file lands atomically (temp file
// plus rename). Counts must be integral, in [0, n_max].
void save_bundle(const std::filesystem::path &dir, const StackBundle &bundle);

// Standalone real image: <name>.json manifest next to a float64 raw
// file. The manifest path identifies the image.
Image<double> load_real_image(const std::filesystem::path &manifest_path);
void save_real_image(const std::filesystem::path &manifest_path,
                     const Image<double> &image);

// One fusion run, serialized as JSON for the run directory.
struct RunReport {
  std::string method;
  std::map<std::string, std::string> config;
  std::vector<double> flux_initial;
  std::vector<double> flux_final;
  std::uint32_t iterations = 0;
  bool converged = false;
  std::size_t fallback_pixels = 0;
  double wall_time_seconds = 0.0;
  std::map<std::string, double> metrics;
};

void save_report(const std::filesystem::path &path, const RunReport &report);

// Columns: iter, logpost, max_rel_delta, c_0..c_{K-1}; one header line.
void save_trace_csv(const std::filesystem::path &path,
                    const std::vector<TraceEntry> &trace);

// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double value);

// Atomic file write used by all writers above: the content appears under
// `path` completely or not at all.
void write_file_atomic(const std::filesystem::path &path,
                       const std::string &content);

} // namespace hdrfuse

#endif
