#include <gtest/gtest.h>

#include "emgmoe/data_io.hpp"
#include "emgmoe/routing.hpp"
#include "test_util.hpp"

using namespace emgmoe;
using emgmoe::testing::random_vector;

namespace {

/// Classifier whose probabilities ignore the input: pool, zero-weight
/// dense with the given logits as bias, softmax.
nn::Model constant_classifier(std::size_t L, std::array<double, 3> logits) {
  using nn::LayerSpec;
  nn::Model m({1, L}, {LayerSpec::global_avg_pool(), LayerSpec::dense(1, 3), LayerSpec::softmax()}, 1);
  m.set_params({0, 0, 0, logits[0], logits[1], logits[2]});
  return m;
}

std::array<double, 3> favour(std::size_t k) {
  std::array<double, 3> l{0, 0, 0};
  l[k] = 2.0;
  return l;
}

RouterBundle stub_router(std::size_t L, std::size_t tier, std::size_t type) {
  return {constant_classifier(L, favour(type)), constant_classifier(L, favour(tier)), true};
}

std::vector<ContaminatedSample> dataset(std::size_t n, std::uint64_t seed, SnrRange range = {}) {
  const auto eeg = synth_surrogate_eeg(20, 128, seed);
  const auto emg = synth_surrogate_emg(30, 128, seed + 1);
  return build_dataset(eeg.segments, emg.segments, range, n, seed + 2);
}

}  // namespace

TEST(RouteFromProbs, TwoStageRule) {
  const ClassProbs low{0.6, 0.3, 0.1}, mid{0.2, 0.5, 0.3}, high{0.1, 0.2, 0.7};
  const ClassProbs t1{0.5, 0.3, 0.2}, t3{0.1, 0.1, 0.8};
  EXPECT_EQ(route_from_probs(low, t3), PartitionId::LowT3);
  EXPECT_EQ(route_from_probs(mid, t1), PartitionId::MidT1);
  EXPECT_EQ(route_from_probs(high, t1), PartitionId::HighAll);
  EXPECT_EQ(route_from_probs(high, t3), PartitionId::HighAll);
  // Ties resolve to the lower index.
  EXPECT_EQ(argmax3({0.4, 0.4, 0.2}), 0u);
  EXPECT_EQ(argmax3({0.2, 0.4, 0.4}), 1u);
}

TEST(Route, StubClassifiersCoverAllPartitions) {
  std::mt19937_64 rng(1);
  const Segment y(random_vector(rng, 64));
  std::set<PartitionId> seen;
  for (std::size_t tier = 0; tier < 3; ++tier) {
    for (std::size_t type = 0; type < 3; ++type) {
      const auto p = route(stub_router(64, tier, type), y);
      EXPECT_EQ(p, partition_for(kSnrTiers[tier], kEmgTypes[type]));
      seen.insert(p);
    }
  }
  EXPECT_EQ(seen.size(), 7u);
}

TEST(Route, HighTierSkipsTypeClassifier) {
  std::mt19937_64 rng(2);
  const Segment y(random_vector(rng, 64));
  // A type classifier of the wrong input length throws if consulted.
  RouterBundle b{constant_classifier(32, favour(0)), constant_classifier(64, favour(2)), true};
  const auto p = predict_labels(b, y);
  EXPECT_EQ(p.tier, SnrTier::High);
  EXPECT_FALSE(p.type.has_value());
  EXPECT_EQ(route(b, y), PartitionId::HighAll);
  b.snr_classifier = constant_classifier(64, favour(1));
  EXPECT_THROW(route(b, y), Error);
}

TEST(Route, RequiresFrozenRouterWithBothClassifiers) {
  const Segment y(std::vector<double>(64, 0.5));
  auto b = stub_router(64, 0, 0);
  b.frozen = false;
  try {
    route(b, y);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidState);
  }
  b.frozen = true;
  b.type_classifier.reset();
  EXPECT_THROW(route(b, y), Error);
  EXPECT_NO_THROW(predict_labels(b, y));
}

TEST(Classify, ProbabilitiesAreScaleInvariant) {
  const auto cfg = emgmoe::testing::tiny_config();
  const nn::Model m({1, 64}, cfg.classifier.layers, 3);
  std::mt19937_64 rng(3);
  const auto x = random_vector(rng, 64);
  auto scaled = x;
  for (double& v : scaled) v = 1e3 * v + 5.0;
  const auto a = classify(m, x), b = classify(m, scaled);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], b[k], 1e-9);
  EXPECT_NEAR(a[0] + a[1] + a[2], 1.0, 1e-12);
  EXPECT_THROW(classify(m, std::vector<double>(63, 1.0)), Error);
}

TEST(TrainClassifier, LearnsSnrTierAboveChance) {
  auto cfg = emgmoe::testing::tiny_config();
  cfg.classifier.train.epochs = 15;
  const auto train = dataset(300, 4);
  const auto test = dataset(150, 40);
  const auto r = train_classifier(train, RouterTarget::SnrTier, cfg.classifier, 1, 2);
  EXPECT_EQ(r.history.epochs.size(), 15u);
  EXPECT_TRUE(std::isnan(r.history.epochs.back().val_cc));
  const auto cm = confusion(r.model, test, RouterTarget::SnrTier);
  EXPECT_EQ(cm.total(), 150u);
  // Chance is about 1/3; the SNR tier is visible in the broadband power ratio.
  EXPECT_GT(cm.accuracy(), 0.5);
  const auto again = train_classifier(train, RouterTarget::SnrTier, cfg.classifier, 1, 2);
  EXPECT_EQ(again.model, r.model);
}

TEST(TrainClassifier, MissingClassIsNamed) {
  const auto cfg = emgmoe::testing::tiny_config();
  const auto data = dataset(30, 5, {-7.0, -5.0});
  try {
    train_classifier(data, RouterTarget::SnrTier, cfg.classifier, 1, 2);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidInput);
    EXPECT_NE(std::string(e.what()).find("'mid'"), std::string::npos) << e.what();
  }
  try {
    train_classifier(std::span(data).first(1), RouterTarget::EmgType, cfg.classifier, 1, 2);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
  }
}

TEST(Confusion, CountsAndCsv) {
  const auto data = dataset(60, 6);
  const auto m = constant_classifier(128, favour(1));
  const auto cm = confusion(m, data, RouterTarget::EmgType);
  std::array<std::size_t, 3> truth{};
  for (const auto& s : data) ++truth[index_of(s.emg_type)];
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(cm.counts[t][1], truth[t]);
    EXPECT_EQ(cm.row_total(t), truth[t]);
  }
  EXPECT_DOUBLE_EQ(cm.accuracy(), static_cast<double>(truth[1]) / 60.0);
  const auto csv = confusion_csv(cm, RouterTarget::EmgType);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "truth\\pred,t1,t2,t3");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(ConfusionMatrix{}.accuracy(), 0.0);
}

TEST(RouterPersistence, RoundTripFreezesAndPreservesChecksum) {
  const auto dir = emgmoe::testing::temp_dir("router");
  auto b = stub_router(64, 1, 2);
  b.frozen = false;
  const auto sum = router_checksum(b);
  save_router(dir.string(), b, "hash");
  const auto back = load_router(dir.string());
  EXPECT_TRUE(back.frozen);
  EXPECT_EQ(router_checksum(back), sum);
  EXPECT_NE(router_checksum(stub_router(64, 2, 1)), sum);
  const auto empty = emgmoe::testing::temp_dir("router_empty");
  EXPECT_THROW(load_router(empty.string()), Error);
}
