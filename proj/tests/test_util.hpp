#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "emgmoe/config.hpp"
#include "emgmoe/format.hpp"

namespace emgmoe::testing {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double scale = 1.0, double offset = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = offset + scale * g(rng);
  return v;
}

// Straight-from-definition oracles, deliberately naive.

inline double oracle_mean(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += v;
  return static_cast<double>(s / x.size());
}

inline double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const long double ma = oracle_mean(a), mb = oracle_mean(b);
  long double num = 0, da = 0, db = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(num / std::sqrt(da * db));
}

inline double oracle_rms(const std::vector<double>& x) {
  long double s = 0;
  for (double v : x) s += static_cast<long double>(v) * v;
  return static_cast<double>(std::sqrt(s / x.size()));
}

inline double oracle_trrmse(const std::vector<double>& est, const std::vector<double>& truth) {
  std::vector<double> d(est.size());
  for (std::size_t i = 0; i < est.size(); ++i) d[i] = est[i] - truth[i];
  return oracle_rms(d) / oracle_rms(truth);
}

/// O(L^2) one-sided periodogram: |X_k|^2 / L^2, doubled off DC/Nyquist.
inline std::vector<double> oracle_psd(const std::vector<double>& x) {
  const std::size_t L = x.size();
  const std::size_t bins = L / 2 + 1;
  std::vector<double> p(bins);
  const long double pi = 3.141592653589793238462643383279502884L;
  for (std::size_t k = 0; k < bins; ++k) {
    long double re = 0, im = 0;
    for (std::size_t t = 0; t < L; ++t) {
      const long double ang = -2.0L * pi * static_cast<long double>(k * t % L) / L;
      re += x[t] * std::cos(ang);
      im += x[t] * std::sin(ang);
    }
    long double v = (re * re + im * im) / (static_cast<long double>(L) * L);
    const bool nyquist = L % 2 == 0 && k == L / 2;
    if (k != 0 && !nyquist) v *= 2;
    p[k] = static_cast<double>(v);
  }
  return p;
}

inline double oracle_srrmse(const std::vector<double>& est, const std::vector<double>& truth) {
  const auto pe = oracle_psd(est), pt = oracle_psd(truth);
  std::vector<double> d(pe.size());
  for (std::size_t i = 0; i < pe.size(); ++i) d[i] = pe[i] - pt[i];
  return oracle_rms(d) / oracle_rms(pt);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

inline std::string source_path(const std::string& rel) { return std::string(EMGMOE_SOURCE_DIR) + "/" + rel; }

/// Fast config for tests: small networks, a few epochs.
inline RunConfig tiny_config(std::uint64_t seed = 11) {
  auto j = nlohmann::json::parse(read_file(source_path("tests/data/tiny.json")));
  j["seed"] = seed;
  return parse_config(j);
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("emgmoe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace emgmoe::testing
