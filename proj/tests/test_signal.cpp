#include <gtest/gtest.h>

#include <numbers>

#include "emgmoe/signal.hpp"
#include "test_util.hpp"

using namespace emgmoe;
using emgmoe::testing::oracle_pearson;
using emgmoe::testing::oracle_psd;
using emgmoe::testing::random_vector;
using emgmoe::testing::rel_err;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an emgmoe::Error";
  return ErrorKind::InvalidState;
}

}  // namespace

TEST(Segment, RejectsShortOrNonFinite) {
  EXPECT_EQ(kind_of([] { Segment({1.0}); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { Segment({1.0, std::nan("")}); }), ErrorKind::InvalidInput);
  EXPECT_EQ(kind_of([] { Segment({1.0, 2.0}, 0.0); }), ErrorKind::InvalidInput);
  EXPECT_NO_THROW(Segment({1.0, 2.0}));
}

TEST(Rms, Examples) {
  EXPECT_DOUBLE_EQ(rms(std::vector<double>{1, 1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(rms(std::vector<double>{0, 0, 0, 0}), 0.0);
  EXPECT_NEAR(rms(std::vector<double>{3, 4}), std::sqrt(12.5), 1e-15);
  EXPECT_EQ(kind_of([] { rms(std::vector<double>{}); }), ErrorKind::InvalidInput);
}

TEST(Pearson, Examples) {
  std::mt19937_64 rng(1);
  const auto x = random_vector(rng, 50);
  std::vector<double> neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
  EXPECT_NEAR(pearson_cc(x, x), 1.0, 1e-15);
  EXPECT_NEAR(pearson_cc(x, neg), -1.0, 1e-15);
  EXPECT_NEAR(pearson_cc(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 4}), 9.0 / std::sqrt(84.0), 1e-12);
}

TEST(Pearson, DegenerateAndMismatch) {
  EXPECT_EQ(kind_of([] { pearson_cc(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}); }), ErrorKind::Degenerate);
  EXPECT_EQ(kind_of([] { pearson_cc(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}); }), ErrorKind::InvalidInput);
}

TEST(Pearson, MatchesOracleOnRandomPairs) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> len(2, 64);
  for (int i = 0; i < 200; ++i) {
    const std::size_t L = len(rng);
    const auto a = random_vector(rng, L, 3.0, 1.0);
    const auto b = random_vector(rng, L, 0.5, -2.0);
    const double r = pearson_cc(a, b);
    EXPECT_LE(rel_err(r, oracle_pearson(a, b)), 1e-9) << "L=" << L;
    EXPECT_LE(std::abs(r), 1.0);
  }
}

TEST(Trrmse, Examples) {
  std::mt19937_64 rng(3);
  const auto x = random_vector(rng, 40);
  std::vector<double> zeros(x.size(), 0.0), twice(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) twice[i] = 2 * x[i];
  EXPECT_DOUBLE_EQ(trrmse(x, x), 0.0);
  EXPECT_NEAR(trrmse(zeros, x), 1.0, 1e-15);
  EXPECT_NEAR(trrmse(twice, x), 1.0, 1e-15);
  EXPECT_EQ(kind_of([&] { trrmse(x, zeros); }), ErrorKind::Degenerate);
}

TEST(Trrmse, MatchesOracle) {
  std::mt19937_64 rng(4);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_vector(rng, 2 + i % 63);
    const auto b = random_vector(rng, a.size(), 2.0);
    EXPECT_LE(rel_err(trrmse(a, b), emgmoe::testing::oracle_trrmse(a, b)), 1e-9);
  }
}

TEST(PowerSpectrum, SinusoidAtExactBin) {
  const std::size_t L = 64, k = 5;
  std::vector<double> x(L);
  for (std::size_t t = 0; t < L; ++t) x[t] = std::sin(2 * std::numbers::pi * k * t / L);
  const auto s = power_spectrum(x, 64.0);
  ASSERT_EQ(s.power.size(), L / 2 + 1);
  EXPECT_DOUBLE_EQ(s.bin_width_hz, 1.0);
  const double peak = s.power[k];
  EXPECT_NEAR(peak, 0.5, 1e-12);  // mean square of a unit sinusoid
  for (std::size_t b = 0; b < s.power.size(); ++b) {
    if (b != k) {
      EXPECT_LT(s.power[b], 1e-9 * peak);
    }
  }
}

TEST(PowerSpectrum, ConstantIsDcOnly) {
  const std::vector<double> x(30, 2.5);
  const auto s = power_spectrum(x);
  EXPECT_NEAR(s.power[0], 6.25, 1e-12);
  for (std::size_t b = 1; b < s.power.size(); ++b) EXPECT_LT(s.power[b], 1e-20);
}

TEST(PowerSpectrum, ParsevalForPowerOfTwoAndOddLengths) {
  std::mt19937_64 rng(5);
  for (std::size_t L : {2u, 3u, 17u, 64u, 100u, 512u, 511u}) {
    const auto x = random_vector(rng, L);
    double ms = 0;
    for (double v : x) ms += v * v;
    ms /= static_cast<double>(L);
    const auto s = power_spectrum(x);
    double total = 0;
    for (double p : s.power) total += p;
    EXPECT_LE(rel_err(total, ms), 1e-9) << "L=" << L;
  }
}

TEST(PowerSpectrum, MatchesNaiveDft) {
  std::mt19937_64 rng(6);
  for (std::size_t L : {2u, 5u, 8u, 33u, 64u, 97u}) {
    const auto x = random_vector(rng, L);
    const auto fast = power_spectrum(x).power;
    const auto slow = oracle_psd(x);
    ASSERT_EQ(fast.size(), slow.size());
    double peak = 0;
    for (double v : slow) peak = std::max(peak, v);
    for (std::size_t k = 0; k < fast.size(); ++k) EXPECT_NEAR(fast[k], slow[k], 1e-10 * peak) << "L=" << L << " k=" << k;
  }
}

TEST(Srrmse, Examples) {
  std::mt19937_64 rng(7);
  const auto x = random_vector(rng, 64);
  const std::vector<double> zeros(x.size(), 0.0);
  EXPECT_DOUBLE_EQ(srrmse(x, x), 0.0);
  EXPECT_NEAR(srrmse(zeros, x), 1.0, 1e-12);
  EXPECT_EQ(kind_of([&] { srrmse(x, zeros); }), ErrorKind::Degenerate);
}

TEST(Srrmse, CircularShiftMatchesOracle) {
  std::mt19937_64 rng(8);
  const auto x = random_vector(rng, 64);
  std::vector<double> shifted(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) shifted[i] = x[(i + 32) % 64];
  // Circular shift only changes phase, so the periodogram is unchanged.
  EXPECT_NEAR(srrmse(shifted, x), emgmoe::testing::oracle_srrmse(shifted, x), 1e-9);
  EXPECT_LT(srrmse(shifted, x), 1e-9);
  const auto y = random_vector(rng, 64);
  EXPECT_LE(rel_err(srrmse(y, x), emgmoe::testing::oracle_srrmse(y, x)), 1e-9);
}

TEST(MeasuredSnr, ClosedForms) {
  std::mt19937_64 rng(9);
  const auto c = random_vector(rng, 64);
  const double rc = rms(c);
  auto scaled = [&](double factor) {
    auto n = random_vector(rng, 64);
    const double rn = rms(n);
    for (double& v : n) v *= factor * rc / rn;
    return n;
  };
  EXPECT_NEAR(measured_snr_db(c, scaled(1.0)), 0.0, 1e-12);
  EXPECT_NEAR(measured_snr_db(c, scaled(10.0)), -10.0, 1e-12);
  EXPECT_NEAR(measured_snr_db(c, scaled(std::pow(10.0, -0.7))), 7.0, 1e-12);
  const std::vector<double> zeros(64, 0.0);
  EXPECT_EQ(kind_of([&] { measured_snr_db(c, zeros); }), ErrorKind::Degenerate);
}

TEST(Normalization, StandardizeAndFloor) {
  std::mt19937_64 rng(10);
  const auto x = random_vector(rng, 100, 4.0, 3.0);
  const auto z = standardize(x);
  EXPECT_NEAR(mean(z), 0.0, 1e-12);
  EXPECT_NEAR(variance(z), 1.0, 1e-12);
  const auto n = normalization_of(std::vector<double>(10, 5.0));
  EXPECT_DOUBLE_EQ(n.mean, 5.0);
  EXPECT_DOUBLE_EQ(n.std, kStdFloor);
}

TEST(Score, ConstantEstimateScoresZeroCc) {
  std::mt19937_64 rng(11);
  const auto t = random_vector(rng, 32);
  const std::vector<double> flat(32, 0.0);
  const auto m = score(flat, t, -3.0);
  EXPECT_EQ(m.cc, 0.0);
  EXPECT_NEAR(m.trrmse, 1.0, 1e-12);
  EXPECT_NEAR(m.srrmse, 1.0, 1e-12);
  EXPECT_EQ(m.snr_db, -3.0);
}

TEST(SpectralHelpers, FractionAndCentroid) {
  const std::size_t L = 64;
  std::vector<double> x(L);
  for (std::size_t t = 0; t < L; ++t) x[t] = std::sin(2 * std::numbers::pi * 4 * t / L);
  const auto s = power_spectrum(x, 64.0);
  EXPECT_NEAR(power_fraction_below(s, 5.0), 1.0, 1e-9);
  EXPECT_NEAR(power_fraction_below(s, 3.0), 0.0, 1e-9);
  EXPECT_NEAR(spectral_centroid_hz(s), 4.0, 1e-9);
}
