#pragma once

// Semi-synthetic mixing y = x + lambda * n at an exact target SNR, plus the
// ground-truth labels used for partitioning: EMG variance tercile ("type")
// and SNR tier.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "emgmoe/error.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe {

enum class EmgType : std::uint8_t { T1 = 0, T2 = 1, T3 = 2 };
enum class SnrTier : std::uint8_t { Low = 0, Mid = 1, High = 2 };

inline constexpr std::array<EmgType, 3> kEmgTypes{EmgType::T1, EmgType::T2, EmgType::T3};
inline constexpr std::array<SnrTier, 3> kSnrTiers{SnrTier::Low, SnrTier::Mid, SnrTier::High};

inline constexpr double kSnrMinDb = -7.0;
inline constexpr double kSnrMaxDb = 2.0;
inline constexpr double kLowMidBoundaryDb = -4.0;
inline constexpr double kMidHighBoundaryDb = -1.0;

inline std::string to_string(EmgType t) {
  switch (t) {
    case EmgType::T1: return "t1";
    case EmgType::T2: return "t2";
    case EmgType::T3: return "t3";
  }
  return "?";
}

inline std::string to_string(SnrTier t) {
  switch (t) {
    case SnrTier::Low: return "low";
    case SnrTier::Mid: return "mid";
    case SnrTier::High: return "high";
  }
  return "?";
}

inline EmgType parse_emg_type(std::string_view s) {
  for (EmgType t : kEmgTypes) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorKind::Format, "unknown EMG type '" + std::string(s) + "'");
}

inline SnrTier parse_snr_tier(std::string_view s) {
  for (SnrTier t : kSnrTiers) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorKind::Format, "unknown SNR tier '" + std::string(s) + "'");
}

inline std::size_t index_of(EmgType t) { return static_cast<std::size_t>(t); }
inline std::size_t index_of(SnrTier t) { return static_cast<std::size_t>(t); }

struct TercileThresholds {
  double t1_upper = 0.0;
  double t2_upper = 0.0;
  friend bool operator==(const TercileThresholds&, const TercileThresholds&) = default;
};

struct ContaminatedSample {
  Segment contaminated;
  Segment clean;
  Segment artifact;
  double lambda = 0.0;
  double snr_db = 0.0;
  EmgType emg_type = EmgType::T1;
  SnrTier snr_tier = SnrTier::Low;
  friend bool operator==(const ContaminatedSample&, const ContaminatedSample&) = default;
};

/// Cut points at the 1/3 and 2/3 empirical quantiles. Bins are closed above.
inline TercileThresholds compute_terciles(std::span<const double> variances) {
  if (variances.size() < 3) fail(ErrorKind::InvalidInput, "terciles need at least 3 values");
  std::vector<double> sorted(variances.begin(), variances.end());
  for (double v : sorted) {
    if (!std::isfinite(v) || v < 0.0) fail(ErrorKind::InvalidInput, "variances must be finite and nonnegative");
  }
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t k1 = (n + 2) / 3;      // ceil(n/3)
  const std::size_t k2 = (2 * n + 2) / 3;  // ceil(2n/3)
  return {sorted[k1 - 1], sorted[k2 - 1]};
}

inline EmgType assign_emg_type(double variance_value, const TercileThresholds& th) {
  if (variance_value <= th.t1_upper) return EmgType::T1;
  if (variance_value <= th.t2_upper) return EmgType::T2;
  return EmgType::T3;
}

/// Tiers [-7,-4), [-4,-1), [-1,2].
inline SnrTier assign_snr_tier(double snr_db) {
  if (!(snr_db >= kSnrMinDb && snr_db <= kSnrMaxDb)) {
    fail(ErrorKind::OutOfRange, "SNR " + std::to_string(snr_db) + " dB outside [-7, 2]");
  }
  if (snr_db < kLowMidBoundaryDb) return SnrTier::Low;
  if (snr_db < kMidHighBoundaryDb) return SnrTier::Mid;
  return SnrTier::High;
}

inline double solve_lambda(std::span<const double> clean, std::span<const double> artifact, double target_snr_db) {
  const double rc = rms(clean);
  const double ra = rms(artifact);
  if (rc == 0.0 || ra == 0.0) fail(ErrorKind::Degenerate, "zero-rms input to solve_lambda");
  return (rc / ra) * std::pow(10.0, -target_snr_db / 10.0);
}

inline ContaminatedSample contaminate(const Segment& clean, const Segment& artifact, double target_snr_db,
                                      const TercileThresholds& thresholds) {
  detail::require_same_length(clean, artifact);
  const double lambda = solve_lambda(clean, artifact, target_snr_db);
  std::vector<double> y(clean.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = clean[i] + lambda * artifact[i];
  ContaminatedSample s;
  s.contaminated = Segment(std::move(y), clean.sample_rate_hz());
  s.clean = clean;
  s.artifact = artifact;
  s.lambda = lambda;
  s.snr_db = target_snr_db;
  s.emg_type = assign_emg_type(variance(artifact), thresholds);
  s.snr_tier = assign_snr_tier(target_snr_db);
  return s;
}

/// Checks every ContaminatedSample invariant; throws InvalidInput naming the
/// first one violated.
inline void validate_sample(const ContaminatedSample& s, const TercileThresholds& thresholds) {
  detail::require_same_length(s.clean, s.artifact);
  detail::require_same_length(s.clean, s.contaminated);
  if (!(s.lambda > 0.0)) fail(ErrorKind::InvalidInput, "lambda must be positive");
  for (std::size_t i = 0; i < s.clean.size(); ++i) {
    if (std::abs(s.contaminated[i] - s.clean[i] - s.lambda * s.artifact[i]) > 1e-12) {
      fail(ErrorKind::InvalidInput, "y != x + lambda*n at index " + std::to_string(i));
    }
  }
  std::vector<double> scaled(s.artifact.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = s.lambda * s.artifact[i];
  if (std::abs(measured_snr_db(s.clean, scaled) - s.snr_db) > 1e-6) {
    fail(ErrorKind::InvalidInput, "measured SNR disagrees with recorded snr_db");
  }
  if (assign_snr_tier(s.snr_db) != s.snr_tier) fail(ErrorKind::InvalidInput, "snr_tier inconsistent with snr_db");
  if (assign_emg_type(variance(s.artifact), thresholds) != s.emg_type) {
    fail(ErrorKind::InvalidInput, "emg_type inconsistent with artifact variance");
  }
}

struct SnrRange {
  double lo = kSnrMinDb;
  double hi = kSnrMaxDb;
};

inline std::vector<double> segment_variances(std::span<const Segment> pool) {
  std::vector<double> v;
  v.reserve(pool.size());
  for (const auto& s : pool) v.push_back(variance(s));
  return v;
}

/// Draws n samples: clean and artifact indices uniform, SNR uniform on
/// [lo, hi]. Terciles come from the whole artifact pool unless provided.
inline std::vector<ContaminatedSample> build_dataset(std::span<const Segment> cleans, std::span<const Segment> artifacts,
                                                     SnrRange range, std::size_t n, std::uint64_t seed,
                                                     const TercileThresholds* thresholds = nullptr) {
  if (cleans.empty() || artifacts.empty()) fail(ErrorKind::InvalidInput, "empty segment pool");
  if (!(range.lo <= range.hi) || range.lo < kSnrMinDb || range.hi > kSnrMaxDb) {
    fail(ErrorKind::InvalidInput, "SNR range must satisfy -7 <= lo <= hi <= 2");
  }
  const TercileThresholds th = thresholds ? *thresholds : compute_terciles(segment_variances(artifacts));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_clean(0, cleans.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_artifact(0, artifacts.size() - 1);
  std::uniform_real_distribution<double> pick_snr(range.lo, range.hi);
  std::vector<ContaminatedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ci = pick_clean(rng);
    const std::size_t ai = pick_artifact(rng);
    const double snr = range.lo == range.hi ? range.lo : pick_snr(rng);
    out.push_back(contaminate(cleans[ci], artifacts[ai], snr, th));
  }
  return out;
}

}  // namespace emgmoe
