#include <gtest/gtest.h>

#include <algorithm>

#include "emgmoe/contamination.hpp"
#include "emgmoe/partition.hpp"
#include "test_util.hpp"

using namespace emgmoe;
using emgmoe::testing::random_vector;

namespace {

Segment random_segment(std::mt19937_64& rng, std::size_t L, double scale = 1.0) {
  return Segment(random_vector(rng, L, scale));
}

std::vector<Segment> random_pool(std::mt19937_64& rng, std::size_t n, std::size_t L) {
  std::vector<Segment> pool;
  std::uniform_real_distribution<double> scale(0.1, 5.0);
  for (std::size_t i = 0; i < n; ++i) pool.push_back(random_segment(rng, L, scale(rng)));
  return pool;
}

/// Brute force: bin sizes from the sorted rank rule k1 = ceil(n/3), k2 = ceil(2n/3).
std::array<std::size_t, 3> bin_sizes(const std::vector<double>& v, const TercileThresholds& th) {
  std::array<std::size_t, 3> c{};
  for (double x : v) ++c[index_of(assign_emg_type(x, th))];
  return c;
}

}  // namespace

TEST(Terciles, ExactPool) {
  std::vector<double> v{5, 9, 1, 3, 7, 2, 8, 4, 6};
  const auto th = compute_terciles(v);
  EXPECT_EQ(th.t1_upper, 3);
  EXPECT_EQ(th.t2_upper, 6);
  const auto c = bin_sizes(v, th);
  EXPECT_EQ(c, (std::array<std::size_t, 3>{3, 3, 3}));
  EXPECT_EQ(assign_emg_type(5, th), EmgType::T2);
  EXPECT_EQ(assign_emg_type(3, th), EmgType::T1);
  EXPECT_EQ(assign_emg_type(0.5, th), EmgType::T1);
  EXPECT_EQ(assign_emg_type(100, th), EmgType::T3);
}

TEST(Terciles, AllEqualGoesToT1) {
  const std::vector<double> v(10, 2.0);
  const auto th = compute_terciles(v);
  EXPECT_EQ(th.t1_upper, th.t2_upper);
  EXPECT_EQ(bin_sizes(v, th), (std::array<std::size_t, 3>{10, 0, 0}));
}

TEST(Terciles, RandomPoolBinSizes) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::vector<double> v(1000);
  for (double& x : v) x = u(rng);
  const auto c = bin_sizes(v, compute_terciles(v));
  EXPECT_NEAR(static_cast<double>(c[0]), 333, 1);
  EXPECT_NEAR(static_cast<double>(c[1]), 333, 1);
  EXPECT_NEAR(static_cast<double>(c[2]), 334, 1);
  // Brute-force oracle: thresholds are order statistics at the ceil ranks.
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const auto th = compute_terciles(v);
  EXPECT_EQ(th.t1_upper, sorted[333]);
  EXPECT_EQ(th.t2_upper, sorted[666]);
}

TEST(Terciles, Errors) {
  EXPECT_THROW(compute_terciles(std::vector<double>{1, 2}), Error);
  EXPECT_THROW(compute_terciles(std::vector<double>{1, -2, 3}), Error);
  EXPECT_THROW(compute_terciles(std::vector<double>{1, std::nan(""), 3}), Error);
}

TEST(SnrTier, Boundaries) {
  EXPECT_EQ(assign_snr_tier(-7.0), SnrTier::Low);
  EXPECT_EQ(assign_snr_tier(-4.000001), SnrTier::Low);
  EXPECT_EQ(assign_snr_tier(-4.0), SnrTier::Mid);
  EXPECT_EQ(assign_snr_tier(-1.000001), SnrTier::Mid);
  EXPECT_EQ(assign_snr_tier(-1.0), SnrTier::High);
  EXPECT_EQ(assign_snr_tier(2.0), SnrTier::High);
  for (double bad : {-7.0001, 2.0001, std::nan("")}) {
    try {
      assign_snr_tier(bad);
      ADD_FAILURE() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
    }
  }
}

TEST(SolveLambda, ClosedForms) {
  std::mt19937_64 rng(2);
  const auto c = random_vector(rng, 64);
  auto a = random_vector(rng, 64);
  const double k = rms(c) / rms(a);
  for (double& v : a) v *= k;
  EXPECT_NEAR(solve_lambda(c, a, 0.0), 1.0, 1e-12);
  EXPECT_NEAR(solve_lambda(c, a, -7.0), std::pow(10.0, 0.7), 1e-12);
  const std::vector<double> z(64, 0.0);
  try {
    solve_lambda(c, z, 0.0);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Degenerate);
  }
}

TEST(Contaminate, DefinitionAndRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> snr(-7.0, 2.0);
  const TercileThresholds th{1.0, 2.0};
  for (int i = 0; i < 300; ++i) {
    const auto c = random_segment(rng, 48, 2.0);
    const auto a = random_segment(rng, 48, 0.3);
    const double target = snr(rng);
    const auto s = contaminate(c, a, target, th);
    for (std::size_t t = 0; t < 48; ++t) EXPECT_NEAR(s.contaminated[t] - s.clean[t] - s.lambda * s.artifact[t], 0.0, 1e-12);
    std::vector<double> scaled(48);
    for (std::size_t t = 0; t < 48; ++t) scaled[t] = s.lambda * a[t];
    EXPECT_NEAR(measured_snr_db(c, scaled), target, 1e-6);
    EXPECT_EQ(s.snr_tier, assign_snr_tier(target));
    EXPECT_NO_THROW(validate_sample(s, th));
  }
  const auto low = contaminate(random_segment(rng, 8), random_segment(rng, 8), -7.0, th);
  EXPECT_EQ(low.snr_tier, SnrTier::Low);
  EXPECT_THROW(contaminate(random_segment(rng, 8), random_segment(rng, 9), 0.0, th), Error);
}

TEST(Contaminate, ValidateSampleDetectsTampering) {
  std::mt19937_64 rng(4);
  const TercileThresholds th{0.5, 1.5};
  auto s = contaminate(random_segment(rng, 16), random_segment(rng, 16), -2.0, th);
  auto bad = s;
  bad.snr_db = -1.0;
  EXPECT_THROW(validate_sample(bad, th), Error);
  bad = s;
  bad.emg_type = s.emg_type == EmgType::T1 ? EmgType::T3 : EmgType::T1;
  EXPECT_THROW(validate_sample(bad, th), Error);
  bad = s;
  bad.lambda *= 1.01;
  EXPECT_THROW(validate_sample(bad, th), Error);
}

TEST(BuildDataset, CountsDeterminismAndErrors) {
  std::mt19937_64 rng(5);
  const auto cleans = random_pool(rng, 20, 16);
  const auto arts = random_pool(rng, 21, 16);
  EXPECT_TRUE(build_dataset(cleans, arts, {}, 0, 1).empty());
  const auto a = build_dataset(cleans, arts, {}, 9000, 42);
  const auto b = build_dataset(cleans, arts, {}, 9000, 42);
  EXPECT_EQ(a, b);
  std::array<std::size_t, 3> tiers{};
  for (const auto& s : a) ++tiers[index_of(s.snr_tier)];
  for (std::size_t t = 0; t < 3; ++t) EXPECT_NEAR(static_cast<double>(tiers[t]), 3000.0, 150.0);
  const auto c = build_dataset(cleans, arts, {}, 50, 43);
  EXPECT_NE(std::vector<ContaminatedSample>(a.begin(), a.begin() + 50), c);
  EXPECT_THROW(build_dataset({}, arts, {}, 5, 1), Error);
  EXPECT_THROW(build_dataset(cleans, arts, {-8.0, 2.0}, 5, 1), Error);
  EXPECT_THROW(build_dataset(cleans, arts, {1.0, 0.0}, 5, 1), Error);
  const auto fixed = build_dataset(cleans, arts, {-3.0, -3.0}, 10, 1);
  for (const auto& s : fixed) EXPECT_EQ(s.snr_db, -3.0);
}

TEST(Labels, StringRoundTrip) {
  for (EmgType t : kEmgTypes) EXPECT_EQ(parse_emg_type(to_string(t)), t);
  for (SnrTier t : kSnrTiers) EXPECT_EQ(parse_snr_tier(to_string(t)), t);
  EXPECT_THROW(parse_emg_type("t4"), Error);
  EXPECT_THROW(parse_snr_tier("extreme"), Error);
}

TEST(Partition, TotalityAndCollapse) {
  std::set<PartitionId> seen;
  for (SnrTier tier : kSnrTiers) {
    for (EmgType type : kEmgTypes) {
      const auto p = partition_for(tier, type);
      seen.insert(p);
      if (tier == SnrTier::High) {
        EXPECT_EQ(p, PartitionId::HighAll);
      } else {
        EXPECT_EQ(slot_of(p).tier, tier);
        EXPECT_EQ(slot_of(p).type, type);
      }
    }
  }
  EXPECT_EQ(seen.size(), 7u);
  for (PartitionId p : kPartitions) EXPECT_EQ(ExpertSlot::parse(to_string(p)), slot_of(p));
  EXPECT_EQ(ExpertSlot::parse("all").name(), "all");
  EXPECT_EQ(ExpertSlot::parse("t2").type, EmgType::T2);
  EXPECT_EQ(ExpertSlot::parse("mid").tier, SnrTier::Mid);
}
