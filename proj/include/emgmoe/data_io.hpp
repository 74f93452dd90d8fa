#pragma once

// Segment pools on disk, contaminated-dataset split files, the dataset
// manifest, and surrogate EEG/EMG generators.
//
// Pool CSV: header `# role=<clean_eeg|emg_artifact> length=<L> rate=<hz>`,
// then one segment per line as comma-separated shortest-round-trip decimals.
// Benchmark matrices (.mat/.npy) are exported to this layout externally.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgmoe/contamination.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe {

enum class PoolRole { CleanEEG, EmgArtifact };

inline std::string to_string(PoolRole r) { return r == PoolRole::CleanEEG ? "clean_eeg" : "emg_artifact"; }

inline PoolRole parse_pool_role(std::string_view s) {
  if (s == "clean_eeg") return PoolRole::CleanEEG;
  if (s == "emg_artifact") return PoolRole::EmgArtifact;
  fail(ErrorKind::Format, "unknown pool role '" + std::string(s) + "'");
}

struct SegmentPool {
  PoolRole role = PoolRole::CleanEEG;
  std::vector<Segment> segments;
  std::string source;

  std::size_t length() const { return segments.empty() ? 0 : segments.front().size(); }
  double sample_rate_hz() const { return segments.empty() ? kDefaultSampleRateHz : segments.front().sample_rate_hz(); }
};

namespace detail {

struct CsvHeader {
  std::map<std::string, std::string> fields;
};

inline CsvHeader parse_header(const std::string& line, std::size_t lineno) {
  if (line.rfind("# ", 0) != 0) {
    fail(ErrorKind::Format, "row " + std::to_string(lineno) + ": missing '# key=value' header");
  }
  CsvHeader h;
  std::istringstream ss(line.substr(2));
  std::string tok;
  while (ss >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::Format, "row " + std::to_string(lineno) + ": bad header token");
    h.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return h;
}

inline const std::string& header_field(const CsvHeader& h, const std::string& key) {
  const auto it = h.fields.find(key);
  if (it == h.fields.end()) fail(ErrorKind::Format, "header lacks '" + key + "'");
  return it->second;
}

inline std::size_t parse_count(const std::string& s, const std::string& what) {
  double v = 0.0;
  if (!parse_double(s, v) || v < 0.0 || v != std::floor(v)) fail(ErrorKind::Format, "bad " + what + " '" + s + "'");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> parse_row(const std::string& line, std::size_t lineno, std::size_t expected) {
  std::vector<double> vals;
  vals.reserve(expected);
  std::size_t col = 0;
  for (auto cell : split(line, ',')) {
    ++col;
    double v = 0.0;
    if (!parse_double(cell, v) || !std::isfinite(v)) {
      fail(ErrorKind::Format, "row " + std::to_string(lineno) + ", column " + std::to_string(col) +
                                  ": non-numeric cell '" + std::string(cell) + "'");
    }
    vals.push_back(v);
  }
  if (vals.size() != expected) {
    fail(ErrorKind::Format, "row " + std::to_string(lineno) + " has " + std::to_string(vals.size()) +
                                " values, expected " + std::to_string(expected));
  }
  return vals;
}

inline void append_row(std::string& out, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
}

}  // namespace detail

inline std::string serialize_pool(const SegmentPool& pool) {
  const std::size_t L = pool.length();
  const double rate = pool.sample_rate_hz();
  std::string out = "# role=" + to_string(pool.role) + " length=" + std::to_string(L) + " rate=" + format_double(rate) + "\n";
  for (const auto& s : pool.segments) {
    if (s.size() != L || s.sample_rate_hz() != rate) fail(ErrorKind::InvalidInput, "pool segments are not homogeneous");
    detail::append_row(out, s.view());
    out += '\n';
  }
  return out;
}

inline SegmentPool parse_pool(const std::string& text, std::optional<PoolRole> expected_role, std::string source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, "row 1: empty pool file");
  const auto header = detail::parse_header(line, 1);
  SegmentPool pool;
  pool.role = parse_pool_role(detail::header_field(header, "role"));
  pool.source = std::move(source);
  if (expected_role && *expected_role != pool.role) {
    fail(ErrorKind::Format, "pool role is " + to_string(pool.role) + ", expected " + to_string(*expected_role));
  }
  const std::size_t L = detail::parse_count(detail::header_field(header, "length"), "length");
  double rate = 0.0;
  if (!parse_double(detail::header_field(header, "rate"), rate) || !(rate > 0.0)) fail(ErrorKind::Format, "bad rate");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    pool.segments.emplace_back(detail::parse_row(line, lineno, L), rate);
  }
  return pool;
}

inline SegmentPool load_pool(const std::string& path, std::optional<PoolRole> role = std::nullopt) {
  return parse_pool(read_file(path), role, path);
}

inline void write_pool(const SegmentPool& pool, const std::string& path) { write_file(path, serialize_pool(pool)); }

// --- surrogate generators --------------------------------------------------

inline constexpr double kSurrogateAr1 = 1.5;
inline constexpr double kSurrogateAr2 = -0.6;

/// AR(2) (a1 = 1.5, a2 = -0.6) driven by seeded white noise, standardized
/// to zero mean and unit variance. Spectral peak near 10 Hz at 256 Hz.
inline SegmentPool synth_surrogate_eeg(std::size_t n, std::size_t length, std::uint64_t seed,
                                       double rate = kDefaultSampleRateHz) {
  if (n == 0) fail(ErrorKind::InvalidInput, "surrogate pool size must be >= 1");
  if (length < 2) fail(ErrorKind::InvalidInput, "segment length must be >= 2");
  constexpr std::size_t kBurnIn = 256;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> white(0.0, 1.0);
  SegmentPool pool{PoolRole::CleanEEG, {}, "surrogate-eeg seed=" + std::to_string(seed)};
  pool.segments.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> x(length);
    double p1 = 0.0, p2 = 0.0;
    for (std::size_t t = 0; t < kBurnIn + length; ++t) {
      const double v = kSurrogateAr1 * p1 + kSurrogateAr2 * p2 + white(rng);
      p2 = p1;
      p1 = v;
      if (t >= kBurnIn) x[t - kBurnIn] = v;
    }
    pool.segments.emplace_back(standardize(x), rate);
  }
  return pool;
}

/// High-frequency bursty surrogate EMG. Per segment a latent intensity
/// u ~ U(0, 1) sets the variance factor 10^(3u - 1.5) (three orders of
/// magnitude) and also the waveform: higher intensity means denser,
/// longer bursts and a flatter, higher-frequency spectrum, so the
/// recording-time variance tercile leaves a trace in the waveform shape.
inline SegmentPool synth_surrogate_emg(std::size_t n, std::size_t length, std::uint64_t seed,
                                       double rate = kDefaultSampleRateHz) {
  if (n == 0) fail(ErrorKind::InvalidInput, "surrogate pool size must be >= 1");
  if (length < 2) fail(ErrorKind::InvalidInput, "segment length must be >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> white(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SegmentPool pool{PoolRole::EmgArtifact, {}, "surrogate-emg seed=" + std::to_string(seed)};
  pool.segments.reserve(n);
  const double len = static_cast<double>(length);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = unit(rng);
    // First-difference high-pass, then a one-pole smoother whose pole
    // shrinks with intensity.
    const double pole = 0.55 * (1.0 - u);
    std::vector<double> e(length);
    double prev_w = white(rng), smooth = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
      const double w = white(rng);
      smooth = (w - prev_w) + pole * smooth;
      prev_w = w;
      e[t] = smooth;
    }
    // Burst envelope: count and width grow with intensity over a floor.
    const std::size_t bursts = 1 + static_cast<std::size_t>(std::floor(u * 5.0 + unit(rng)));
    const double width = len * (0.03 + 0.12 * u);
    std::vector<double> env(length, 0.08);
    for (std::size_t b = 0; b < bursts; ++b) {
      const double centre = unit(rng) * len;
      const double amp = 0.6 + 0.8 * unit(rng);
      for (std::size_t t = 0; t < length; ++t) {
        const double d = (static_cast<double>(t) - centre) / width;
        env[t] += amp * std::exp(-0.5 * d * d);
      }
    }
    for (std::size_t t = 0; t < length; ++t) e[t] *= env[t];
    const double target_std = std::sqrt(std::pow(10.0, 3.0 * u - 1.5));
    const double cur_std = std::max(std::sqrt(variance(e)), kStdFloor);
    for (double& v : e) v *= target_std / cur_std;
    pool.segments.emplace_back(std::move(e), rate);
  }
  return pool;
}

// --- contaminated dataset split files --------------------------------------
//
// Header `# kind=dataset length=<L> rate=<hz> count=<n>`, then per sample:
// snr_db,lambda,emg_type,snr_tier,<L clean values>,<L artifact values>.
// The contaminated segment is recomputed as clean + lambda * artifact.

inline std::string serialize_samples(std::span<const ContaminatedSample> samples) {
  const std::size_t L = samples.empty() ? 0 : samples.front().clean.size();
  const double rate = samples.empty() ? kDefaultSampleRateHz : samples.front().clean.sample_rate_hz();
  std::string out = "# kind=dataset length=" + std::to_string(L) + " rate=" + format_double(rate) +
                    " count=" + std::to_string(samples.size()) + "\n";
  for (const auto& s : samples) {
    if (s.clean.size() != L) fail(ErrorKind::InvalidInput, "samples are not equal length");
    out += format_double(s.snr_db) + "," + format_double(s.lambda) + "," + to_string(s.emg_type) + "," +
           to_string(s.snr_tier) + ",";
    detail::append_row(out, s.clean.view());
    out += ',';
    detail::append_row(out, s.artifact.view());
    out += '\n';
  }
  return out;
}

inline std::vector<ContaminatedSample> parse_samples(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Format, "row 1: empty dataset file");
  const auto header = detail::parse_header(line, 1);
  const std::size_t L = detail::parse_count(detail::header_field(header, "length"), "length");
  const std::size_t count = detail::parse_count(detail::header_field(header, "count"), "count");
  double rate = 0.0;
  if (!parse_double(detail::header_field(header, "rate"), rate) || !(rate > 0.0)) fail(ErrorKind::Format, "bad rate");
  std::vector<ContaminatedSample> out;
  out.reserve(count);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line, ',');
    if (cells.size() != 4 + 2 * L) {
      fail(ErrorKind::Format, "row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                  " cells, expected " + std::to_string(4 + 2 * L));
    }
    ContaminatedSample s;
    if (!parse_double(cells[0], s.snr_db) || !parse_double(cells[1], s.lambda)) {
      fail(ErrorKind::Format, "row " + std::to_string(lineno) + ": bad snr/lambda");
    }
    s.emg_type = parse_emg_type(cells[2]);
    s.snr_tier = parse_snr_tier(cells[3]);
    std::vector<double> x(L), a(L), y(L);
    for (std::size_t i = 0; i < L; ++i) {
      if (!parse_double(cells[4 + i], x[i]) || !parse_double(cells[4 + L + i], a[i])) {
        fail(ErrorKind::Format, "row " + std::to_string(lineno) + ": non-numeric cell");
      }
      y[i] = x[i] + s.lambda * a[i];
    }
    s.clean = Segment(std::move(x), rate);
    s.artifact = Segment(std::move(a), rate);
    s.contaminated = Segment(std::move(y), rate);
    out.push_back(std::move(s));
  }
  if (out.size() != count) {
    fail(ErrorKind::Format, "dataset declares " + std::to_string(count) + " rows, found " + std::to_string(out.size()));
  }
  return out;
}

// --- manifest ---------------------------------------------------------------

struct DatasetManifest {
  std::uint64_t seed = 0;
  SnrRange snr_range;
  std::map<std::string, std::size_t> counts;
  TercileThresholds thresholds;
  std::map<std::string, std::string> files;  // split name -> file name relative to the manifest
  std::string config_hash;
};

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["seed"] = m.seed;
  j["snr_range"] = {m.snr_range.lo, m.snr_range.hi};
  j["counts"] = m.counts;
  j["thresholds"] = {{"t1_upper", m.thresholds.t1_upper}, {"t2_upper", m.thresholds.t2_upper}};
  j["files"] = m.files;
  j["config_hash"] = m.config_hash;
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.snr_range = {j.at("snr_range").at(0).get<double>(), j.at("snr_range").at(1).get<double>()};
    m.counts = j.at("counts").get<std::map<std::string, std::size_t>>();
    m.thresholds = {j.at("thresholds").at("t1_upper").get<double>(), j.at("thresholds").at("t2_upper").get<double>()};
    m.files = j.at("files").get<std::map<std::string, std::string>>();
    m.config_hash = j.value("config_hash", "");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("manifest: ") + e.what());
  }
}

inline constexpr const char* kManifestFile = "manifest.json";

/// Writes every split as `<name>.csv` plus manifest.json into `dir`.
inline void write_dataset(const std::string& dir, DatasetManifest manifest,
                          const std::map<std::string, std::vector<ContaminatedSample>>& splits) {
  std::filesystem::create_directories(dir);
  manifest.counts.clear();
  manifest.files.clear();
  for (const auto& [name, samples] : splits) {
    const std::string file = name + ".csv";
    write_file((std::filesystem::path(dir) / file).string(), serialize_samples(samples));
    manifest.counts[name] = samples.size();
    manifest.files[name] = file;
  }
  write_file((std::filesystem::path(dir) / kManifestFile).string(), to_json(manifest).dump(2) + "\n");
}

inline DatasetManifest read_manifest(const std::string& dir) {
  try {
    return manifest_from_json(nlohmann::json::parse(read_file((std::filesystem::path(dir) / kManifestFile).string())));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Format, std::string("manifest: ") + e.what());
  }
}

/// Loads one split and checks it against the manifest: file present, row
/// count as declared, every sample passing its invariants.
inline std::vector<ContaminatedSample> load_split(const std::string& dir, const DatasetManifest& m,
                                                  const std::string& split_name) {
  const auto f = m.files.find(split_name);
  if (f == m.files.end()) fail(ErrorKind::InvalidInput, "manifest has no split '" + split_name + "'");
  const auto path = (std::filesystem::path(dir) / f->second).string();
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "split file missing: " + path);
  auto samples = parse_samples(read_file(path));
  if (samples.size() != m.counts.at(split_name)) fail(ErrorKind::Format, "row count differs from manifest");
  for (const auto& s : samples) validate_sample(s, m.thresholds);
  return samples;
}

}  // namespace emgmoe
