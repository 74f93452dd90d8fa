#pragma once

// Segment carrier, evaluation metrics (CC, temporal and spectral RRMSE) and
// the periodogram they rely on. Everything here is a pure function.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "emgmoe/error.hpp"

namespace emgmoe {

inline constexpr std::size_t kDefaultSegmentLength = 512;
inline constexpr double kDefaultSampleRateHz = 256.0;

/// Fixed-length single-channel time series. Samples are finite, L >= 2.
class Segment {
 public:
  Segment() = default;

  explicit Segment(std::vector<double> samples, double sample_rate_hz = kDefaultSampleRateHz)
      : samples_(std::move(samples)), rate_(sample_rate_hz) {
    if (samples_.size() < 2) fail(ErrorKind::InvalidInput, "segment needs at least 2 samples");
    if (!(rate_ > 0.0) || !std::isfinite(rate_)) fail(ErrorKind::InvalidInput, "sample rate must be positive");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      if (!std::isfinite(samples_[i])) {
        fail(ErrorKind::InvalidInput, "non-finite sample at index " + std::to_string(i));
      }
    }
  }

  static Segment zeros(std::size_t length, double sample_rate_hz = kDefaultSampleRateHz) {
    return Segment(std::vector<double>(length, 0.0), sample_rate_hz);
  }

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  double sample_rate_hz() const noexcept { return rate_; }
  double operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<double>& samples() const noexcept { return samples_; }
  std::span<const double> view() const noexcept { return samples_; }
  operator std::span<const double>() const noexcept { return samples_; }  // NOLINT
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  friend bool operator==(const Segment&, const Segment&) = default;

 private:
  std::vector<double> samples_;
  double rate_ = kDefaultSampleRateHz;
};

struct MetricsRecord {
  double cc = 0.0;
  double trrmse = 0.0;
  double srrmse = 0.0;
  double snr_db = 0.0;
  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

/// One-sided power spectrum, length floor(L/2)+1.
struct Spectrum {
  std::vector<double> power;
  double bin_width_hz = 0.0;
};

/// Per-segment standardization statistics (population std, floored).
struct Normalization {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kStdFloor = 1e-8;

namespace detail {

inline void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::InvalidInput,
         "length mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
}

inline bool is_constant(std::span<const double> x) {
  if (x.empty()) return true;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *lo == *hi;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey; a.size() must be a power of two.
inline void fft_radix2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles evaluated directly rather than by recurrence to keep
        // round-off at machine precision for long transforms.
        const std::complex<double> w = std::polar(1.0, ang * static_cast<double>(k));
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& z : a) z /= static_cast<double>(n);
  }
}

// Forward DFT of a real sequence of any length: radix-2 when possible,
// Bluestein's chirp-z otherwise.
inline std::vector<std::complex<double>> dft(std::span<const double> x) {
  const std::size_t n = x.size();
  if (is_power_of_two(n)) {
    std::vector<std::complex<double>> a(x.begin(), x.end());
    fft_radix2(a, false);
    return a;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the chirp phase small and exact.
    const std::size_t k2 = (k * k) % (2 * n);
    chirp[k] = std::polar(1.0, -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  std::vector<std::complex<double>> a(m), b(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
  b[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) b[k] = b[m - k] = std::conj(chirp[k]);
  fft_radix2(a, false);
  fft_radix2(b, false);
  for (std::size_t i = 0; i < m; ++i) a[i] *= b[i];
  fft_radix2(a, true);
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  return out;
}

}  // namespace detail

inline double mean(std::span<const double> x) {
  if (x.empty()) fail(ErrorKind::InvalidInput, "mean of empty sequence");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Population variance.
inline double variance(std::span<const double> x) {
  const double m = mean(x);
  double acc = 0.0;
  for (double v : x) acc += (v - m) * (v - m);
  return acc / static_cast<double>(x.size());
}

inline double rms(std::span<const double> x) {
  if (x.empty()) fail(ErrorKind::InvalidInput, "rms of empty segment");
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

inline double pearson_cc(std::span<const double> a, std::span<const double> b) {
  detail::require_same_length(a, b);
  if (a.size() < 2) fail(ErrorKind::InvalidInput, "correlation needs at least 2 samples");
  if (detail::is_constant(a) || detail::is_constant(b)) {
    fail(ErrorKind::Degenerate, "zero variance input to pearson_cc");
  }
  const double ma = mean(a);
  const double mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) fail(ErrorKind::Degenerate, "zero variance input to pearson_cc");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double trrmse(std::span<const double> est, std::span<const double> truth) {
  detail::require_same_length(est, truth);
  const double denom = rms(truth);
  if (denom == 0.0) fail(ErrorKind::Degenerate, "trrmse against an all-zero truth");
  double acc = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) acc += (est[i] - truth[i]) * (est[i] - truth[i]);
  return std::sqrt(acc / static_cast<double>(est.size())) / denom;
}

/// Unwindowed one-sided periodogram, scaled so that the bins sum to the
/// mean squared amplitude of the segment.
inline Spectrum power_spectrum(std::span<const double> x, double sample_rate_hz = kDefaultSampleRateHz) {
  const std::size_t n = x.size();
  if (n < 2) fail(ErrorKind::InvalidInput, "power spectrum needs at least 2 samples");
  const auto coeffs = detail::dft(x);
  const std::size_t bins = n / 2 + 1;
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
  Spectrum s;
  s.power.resize(bins);
  s.bin_width_hz = sample_rate_hz / static_cast<double>(n);
  for (std::size_t k = 0; k < bins; ++k) {
    const bool unpaired = k == 0 || (n % 2 == 0 && k == n / 2);
    s.power[k] = std::norm(coeffs[k]) * norm * (unpaired ? 1.0 : 2.0);
  }
  return s;
}

inline Spectrum power_spectrum(const Segment& x) { return power_spectrum(x.view(), x.sample_rate_hz()); }

inline double srrmse(std::span<const double> est, std::span<const double> truth) {
  detail::require_same_length(est, truth);
  const Spectrum pe = power_spectrum(est);
  const Spectrum pt = power_spectrum(truth);
  const double denom = rms(pt.power);
  if (denom == 0.0) fail(ErrorKind::Degenerate, "srrmse against a zero spectrum");
  std::vector<double> diff(pe.power.size());
  for (std::size_t k = 0; k < diff.size(); ++k) diff[k] = pe.power[k] - pt.power[k];
  return rms(diff) / denom;
}

/// SNR convention: 10*log10 of the RMS ratio.
inline double measured_snr_db(std::span<const double> clean, std::span<const double> scaled_noise) {
  const double rc = rms(clean);
  const double rn = rms(scaled_noise);
  if (rc == 0.0 || rn == 0.0) fail(ErrorKind::Degenerate, "zero-rms input to measured_snr_db");
  return 10.0 * std::log10(rc / rn);
}

inline Normalization normalization_of(std::span<const double> x) {
  const double m = mean(x);
  return {m, std::max(std::sqrt(variance(x)), kStdFloor)};
}

inline std::vector<double> apply_normalization(std::span<const double> x, const Normalization& n) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - n.mean) / n.std;
  return out;
}

inline std::vector<double> standardize(std::span<const double> x) { return apply_normalization(x, normalization_of(x)); }

/// Fraction of spectral power strictly below `cutoff_hz`.
inline double power_fraction_below(const Spectrum& s, double cutoff_hz) {
  double below = 0.0, total = 0.0;
  for (std::size_t k = 0; k < s.power.size(); ++k) {
    total += s.power[k];
    if (static_cast<double>(k) * s.bin_width_hz < cutoff_hz) below += s.power[k];
  }
  return total > 0.0 ? below / total : 0.0;
}

inline double spectral_centroid_hz(const Spectrum& s) {
  double num = 0.0, total = 0.0;
  for (std::size_t k = 0; k < s.power.size(); ++k) {
    num += static_cast<double>(k) * s.bin_width_hz * s.power[k];
    total += s.power[k];
  }
  return total > 0.0 ? num / total : 0.0;
}

/// All three metrics for one estimate. A constant estimate has no defined
/// correlation and scores cc = 0.
inline MetricsRecord score(std::span<const double> est, std::span<const double> truth, double snr_db) {
  MetricsRecord r;
  r.snr_db = snr_db;
  r.cc = (detail::is_constant(est) || detail::is_constant(truth)) ? 0.0 : pearson_cc(est, truth);
  r.trrmse = trrmse(est, truth);
  r.srrmse = srrmse(est, truth);
  return r;
}

}  // namespace emgmoe
