#include "hdrfuse/bundle.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hdrfuse/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "raw array serialization assumes a little-endian host");

namespace hdrfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof())
    throw DataError("read failure on " + path.string());
  return std::move(buf).str();
}

json load_manifest(const fs::path &path) {
  json manifest;
  try {
    manifest = json::parse(read_file(path));
  } catch (const json::exception &e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  }
  return manifest;
}

Image<double> read_f64_image(const fs::path &path, std::size_t height,
                             std::size_t width) {
  std::string bytes = read_file(path);
  if (bytes.size() != height * width * sizeof(double))
    throw DataError("size of " + path.string() +
                    " does not match manifest dimensions");
  Image<double> img(height, width);
  std::memcpy(img.data(), bytes.data(), bytes.size());
  return img;
}

Image<double> read_u32_image(const fs::path &path, std::size_t height,
                             std::size_t width, std::uint32_t n_max) {
  std::string bytes = read_file(path);
  if (bytes.size() != height * width * sizeof(std::uint32_t))
    throw DataError("size of " + path.string() +
                    " does not match manifest dimensions");
  std::vector<std::uint32_t> raw(height * width);
  std::memcpy(raw.data(), bytes.data(), bytes.size());
  Image<double> img(height, width);
  for (std::size_t q = 0; q < raw.size(); ++q) {
    if (raw[q] > n_max)
      throw DataError("count above n_max in " + path.string());
    img[q] = double(raw[q]);
  }
  return img;
}

std::string f64_image_bytes(const Image<double> &img) {
  std::string bytes(img.size() * sizeof(double), '\0');
  std::memcpy(bytes.data(), img.data(), bytes.size());
  return bytes;
}

std::string u32_image_bytes(const Image<double> &img, std::uint32_t n_max) {
  std::vector<std::uint32_t> raw(img.size());
  for (std::size_t q = 0; q < img.size(); ++q) {
    double v = img[q];
    if (!(v >= 0.0) || v > double(n_max) || v != std::floor(v))
      throw DataError("counts must be integers in [0, n_max] to serialize");
    raw[q] = std::uint32_t(v);
  }
  std::string bytes(raw.size() * sizeof(std::uint32_t), '\0');
  std::memcpy(bytes.data(), raw.data(), bytes.size());
  return bytes;
}

std::string measurement_stem(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03zu", i);
  return buf;
}

} // namespace

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

void write_file_atomic(const fs::path &path, const std::string &content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw DataError("cannot create " + tmp.string());
    out.write(content.data(), std::streamsize(content.size()));
    out.flush();
    if (!out.good())
      throw DataError("write failure on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw DataError("cannot move " + tmp.string() + " into place: " +
                    ec.message());
  }
}

StackBundle load_bundle(const fs::path &dir) {
  json manifest = load_manifest(dir / "manifest.json");
  StackBundle bundle;
  try {
    if (manifest.value("version", 0) != 1)
      throw DataError("unsupported bundle version in " + dir.string());
    std::size_t height = manifest.at("height").get<std::size_t>();
    std::size_t width = manifest.at("width").get<std::size_t>();
    if (height == 0 || width == 0)
      throw DataError("bundle dimensions must be positive");
    bundle.stack.n_max = manifest.at("n_max").get<std::uint32_t>();

    for (const auto &entry : manifest.at("measurements")) {
      Measurement m;
      m.counts = read_u32_image(dir / entry.at("file").get<std::string>(),
                                height, width, bundle.stack.n_max);
      m.acquisition_time = entry.at("t").get<double>();
      const auto &dark = entry.at("dark");
      if (dark.is_number()) {
        m.background = Image<double>(height, width, dark.get<double>());
      } else {
        m.background =
            read_f64_image(dir / dark.get<std::string>(), height, width);
      }
      bundle.stack.measurements.push_back(std::move(m));
    }

    if (manifest.contains("truth"))
      bundle.ground_truth = read_f64_image(
          dir / manifest.at("truth").get<std::string>(), height, width);
    if (manifest.contains("true_flux"))
      bundle.true_flux = manifest.at("true_flux").get<std::vector<double>>();
    if (manifest.contains("seed"))
      bundle.seed = manifest.at("seed").get<std::uint64_t>();
  } catch (const json::exception &e) {
    throw DataError("malformed manifest in " + dir.string() + ": " + e.what());
  }

  try {
    validate_stack(bundle.stack);
  } catch (const std::invalid_argument &e) {
    throw DataError("invalid bundle " + dir.string() + ": " + e.what());
  }
  return bundle;
}

void save_bundle(const fs::path &dir, const StackBundle &bundle) {
  validate_stack(bundle.stack);
  fs::create_directories(dir);

  json manifest;
  manifest["version"] = 1;
  manifest["height"] = bundle.stack.height();
  manifest["width"] = bundle.stack.width();
  manifest["n_max"] = bundle.stack.n_max;
  manifest["measurements"] = json::array();

  for (std::size_t i = 0; i < bundle.stack.count(); ++i) {
    const Measurement &m = bundle.stack.measurements[i];
    std::string stem = measurement_stem(i);
    std::string counts_name = "m" + stem + ".u32";
    write_file_atomic(dir / counts_name,
                      u32_image_bytes(m.counts, bundle.stack.n_max));

    json entry;
    entry["file"] = counts_name;
    entry["t"] = m.acquisition_time;
    // A spatially constant dark level collapses to a manifest scalar.
    bool constant = true;
    for (double b : m.background)
      if (b != m.background[0]) {
        constant = false;
        break;
      }
    if (constant) {
      entry["dark"] = m.background[0];
    } else {
      std::string dark_name = "d" + stem + ".f64";
      write_file_atomic(dir / dark_name, f64_image_bytes(m.background));
      entry["dark"] = dark_name;
    }
    manifest["measurements"].push_back(std::move(entry));
  }

  if (bundle.ground_truth) {
    write_file_atomic(dir / "truth.f64", f64_image_bytes(*bundle.ground_truth));
    manifest["truth"] = "truth.f64";
  }
  if (!bundle.true_flux.empty())
    manifest["true_flux"] = bundle.true_flux;
  if (bundle.seed)
    manifest["seed"] = *bundle.seed;

  write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Image<double> load_real_image(const fs::path &manifest_path) {
  json manifest = load_manifest(manifest_path);
  try {
    std::size_t height = manifest.at("height").get<std::size_t>();
    std::size_t width = manifest.at("width").get<std::size_t>();
    if (height == 0 || width == 0)
      throw DataError("image dimensions must be positive");
    return read_f64_image(manifest_path.parent_path() /
                              manifest.at("file").get<std::string>(),
                          height, width);
  } catch (const json::exception &e) {
    throw DataError("malformed image manifest " + manifest_path.string() +
                    ": " + e.what());
  }
}

void save_real_image(const fs::path &manifest_path, const Image<double> &image) {
  if (image.empty())
    throw std::invalid_argument("save_real_image: empty image");
  fs::create_directories(manifest_path.parent_path().empty()
                             ? fs::path(".")
                             : manifest_path.parent_path());
  fs::path raw_path = manifest_path;
  raw_path.replace_extension(".f64");
  write_file_atomic(raw_path, f64_image_bytes(image));

  json manifest;
  manifest["version"] = 1;
  manifest["height"] = image.height();
  manifest["width"] = image.width();
  manifest["file"] = raw_path.filename().string();
  write_file_atomic(manifest_path, manifest.dump(2) + "\n");
}

void save_report(const fs::path &path, const RunReport &report) {
  json j;
  j["method"] = report.method;
  j["config"] = report.config;
  j["flux_initial"] = report.flux_initial;
  j["flux_final"] = report.flux_final;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["fallback_pixels"] = report.fallback_pixels;
  j["wall_time_seconds"] = report.wall_time_seconds;
  if (!report.metrics.empty())
    j["metrics"] = report.metrics;
  write_file_atomic(path, j.dump(2) + "\n");
}

void save_trace_csv(const fs::path &path,
                    const std::vector<TraceEntry> &trace) {
  std::ostringstream out;
  std::size_t k_count = trace.empty() ? 0 : trace.front().flux.size();
  out << "iter,logpost,max_rel_delta";
  for (std::size_t i = 0; i < k_count; ++i)
    out << ",c_" << i;
  out << "\n";
  for (const auto &entry : trace) {
    out << entry.iteration << ',' << format_double(entry.log_posterior) << ','
        << format_double(entry.max_rel_delta);
    for (double c : entry.flux)
      out << ',' << format_double(c);
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

} // namespace hdrfuse
