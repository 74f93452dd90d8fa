#include <gtest/gtest.h>

#include "emgmoe/data_io.hpp"
#include "emgmoe/moe.hpp"
#include "test_util.hpp"

using namespace emgmoe;

namespace {

std::vector<ContaminatedSample> tiny_data(const RunConfig& cfg, SnrRange range = {}, std::size_t n = 0) {
  const auto eeg = synth_surrogate_eeg(cfg.data.n_clean, cfg.data.length, derive_seed(cfg.seed, "data/eeg"));
  const auto emg = synth_surrogate_emg(cfg.data.n_emg, cfg.data.length, derive_seed(cfg.seed, "data/emg"));
  return build_dataset(eeg.segments, emg.segments, range, n ? n : cfg.data.n_samples, derive_seed(cfg.seed, "data/mix"));
}

nn::Model constant_classifier(std::size_t L, std::size_t favoured) {
  using nn::LayerSpec;
  nn::Model m({1, L}, {LayerSpec::global_avg_pool(), LayerSpec::dense(1, 3), LayerSpec::softmax()}, 1);
  std::vector<double> p{0, 0, 0, 0, 0, 0};
  p[3 + favoured] = 2.0;
  m.set_params(p);
  return m;
}

/// Hand-built system whose experts are per-timestep scalar gains, so each
/// expert's output identifies it.
MoeSystem stub_system(MoeVariant v, std::size_t L, std::size_t tier, std::size_t type) {
  MoeSystem s;
  s.variant = v;
  if (uses_type(v)) s.router.type_classifier = constant_classifier(L, type);
  if (uses_tier(v)) s.router.snr_classifier = constant_classifier(L, tier);
  s.router.frozen = true;
  double gain = 1.0;
  for (const auto& slot : variant_slots(v)) {
    DenoisingExpert e;
    e.partition = slot;
    e.kind = kind_for(slot);
    e.primary = nn::Model({1, L}, {nn::LayerSpec::dense(1, 1)}, 1);
    e.primary.set_params({gain, 0.0});
    if (e.kind == ExpertKind::CorrPlusRescale) e.rescale = e.primary;
    s.experts.emplace(slot, std::move(e));
    gain += 1.0;
  }
  attach_counters(s);
  check_system(s);
  return s;
}

class TrainedFull7 : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    cfg_ = new RunConfig(emgmoe::testing::tiny_config());
    data_ = new std::vector<ContaminatedSample>(tiny_data(*cfg_));
    log_ = new BuildLog;
    sys_ = new MoeSystem(build_moe(MoeVariant::Full7, *data_, *cfg_, nullptr, log_));
  }
  static void TearDownTestSuite() {
    delete sys_;
    delete log_;
    delete data_;
    delete cfg_;
  }
  static RunConfig* cfg_;
  static std::vector<ContaminatedSample>* data_;
  static BuildLog* log_;
  static MoeSystem* sys_;
};

RunConfig* TrainedFull7::cfg_ = nullptr;
std::vector<ContaminatedSample>* TrainedFull7::data_ = nullptr;
BuildLog* TrainedFull7::log_ = nullptr;
MoeSystem* TrainedFull7::sys_ = nullptr;

}  // namespace

TEST(Variants, Cardinalities) {
  EXPECT_EQ(variant_slots(MoeVariant::EmgOnly3).size(), 3u);
  EXPECT_EQ(variant_slots(MoeVariant::SnrOnly3).size(), 3u);
  EXPECT_EQ(variant_slots(MoeVariant::Full9).size(), 9u);
  EXPECT_EQ(variant_slots(MoeVariant::Full7).size(), 7u);
  for (MoeVariant v : kMoeVariants) EXPECT_EQ(parse_variant(to_string(v)), v);
  EXPECT_THROW(parse_variant("full8"), Error);
}

TEST(Variants, SlotMappingAndKinds) {
  EXPECT_EQ(slot_for(MoeVariant::Full7, SnrTier::High, EmgType::T2).name(), "high");
  EXPECT_EQ(slot_for(MoeVariant::Full9, SnrTier::High, EmgType::T2).name(), "high-t2");
  EXPECT_EQ(slot_for(MoeVariant::EmgOnly3, SnrTier::Mid, EmgType::T3).name(), "t3");
  EXPECT_EQ(slot_for(MoeVariant::SnrOnly3, SnrTier::Mid, EmgType::T3).name(), "mid");
  EXPECT_EQ(kind_for(ExpertSlot::parse("high")), ExpertKind::MseOnly);
  EXPECT_EQ(kind_for(ExpertSlot::parse("high-t1")), ExpertKind::MseOnly);
  EXPECT_EQ(kind_for(ExpertSlot::parse("t3")), ExpertKind::CorrPlusRescale);
  EXPECT_EQ(kind_for(ExpertSlot::parse("low-t2")), ExpertKind::CorrPlusRescale);
}

TEST(Variants, PartitionSamplesIsTotal) {
  const auto cfg = emgmoe::testing::tiny_config();
  const auto data = tiny_data(cfg, {}, 90);
  for (MoeVariant v : kMoeVariants) {
    const auto parts = partition_samples(v, data);
    EXPECT_EQ(parts.size(), variant_slots(v).size());
    std::size_t total = 0;
    for (const auto& [slot, subset] : parts) {
      total += subset.size();
      for (const auto& s : subset) EXPECT_EQ(truth_slot(v, s), slot);
    }
    EXPECT_EQ(total, data.size());
  }
}

TEST(StubSystem, RoutesToTheClassifiedCell) {
  const Segment y(std::vector<double>{1, -2, 3, 0.5, -1, 2, 0, 1});
  for (MoeVariant v : kMoeVariants) {
    for (std::size_t tier = 0; tier < 3; ++tier) {
      for (std::size_t type = 0; type < 3; ++type) {
        const auto s = stub_system(v, 8, tier, type);
        const auto out = moe_denoise(s, y);
        EXPECT_EQ(out.chosen, slot_for(v, kSnrTiers[tier], kEmgTypes[type])) << to_string(v);
        EXPECT_EQ(out.expert_forwards, 1u);
        EXPECT_EQ(s.counters->total(), 1u);
        EXPECT_EQ(s.counters->count(out.chosen), 1u);
      }
    }
  }
}

TEST(StubSystem, Full7SkipsTypeClassifierAtHighTier) {
  auto s = stub_system(MoeVariant::Full7, 8, 2, 0);
  s.router.type_classifier = constant_classifier(4, 0);  // throws if consulted
  const Segment y(std::vector<double>{1, -2, 3, 0.5, -1, 2, 0, 1});
  EXPECT_EQ(route_system(s, y).name(), "high");
  s.router.snr_classifier = constant_classifier(8, 0);
  EXPECT_THROW(route_system(s, y), Error);
}

TEST(StubSystem, CheckSystemRejectsIncompleteSystems) {
  auto s = stub_system(MoeVariant::Full9, 8, 0, 0);
  s.experts.erase(ExpertSlot::parse("high-t3"));
  try {
    check_system(s);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidState);
  }
  auto t = stub_system(MoeVariant::SnrOnly3, 8, 0, 0);
  t.experts.at(ExpertSlot::parse("high")).kind = ExpertKind::CorrPlusRescale;
  EXPECT_THROW(check_system(t), Error);
  auto u = stub_system(MoeVariant::EmgOnly3, 8, 0, 0);
  u.router.frozen = false;
  EXPECT_THROW(check_system(u), Error);
  EXPECT_THROW(moe_denoise(u, Segment(std::vector<double>(8, 1.0))), Error);
}

TEST_F(TrainedFull7, HasSevenExpertsAndTwoClassifiers) {
  EXPECT_EQ(sys_->experts.size(), 7u);
  EXPECT_EQ(classifier_count(*sys_), 2u);
  EXPECT_EQ(sys_->validation.size(), 7u);
  EXPECT_TRUE(log_->type_history.has_value());
  EXPECT_EQ(log_->expert_history.size(), 7u);
  EXPECT_EQ(log_->rescale_history.size(), 6u);
  EXPECT_EQ(sys_->experts.at(ExpertSlot::parse("high")).kind, ExpertKind::MseOnly);
}

TEST_F(TrainedFull7, EachInputRunsExactlyOneExpert) {
  sys_->counters->reset();
  std::size_t n = 0;
  for (std::size_t i = 0; i < data_->size(); i += 7, ++n) {
    const auto& s = (*data_)[i];
    const auto before = sys_->counters->total();
    const auto out = moe_denoise(*sys_, s.contaminated);
    EXPECT_EQ(out.expert_forwards, 1u);
    EXPECT_EQ(sys_->counters->total(), before + 1);
    EXPECT_EQ(out.chosen, route_system(*sys_, s.contaminated));
    EXPECT_EQ(out.denoised, expert_denoise(sys_->experts.at(out.chosen), s.contaminated));
  }
  EXPECT_EQ(sys_->counters->total(), n);
  const auto oracle = moe_denoise_oracle(*sys_, (*data_)[0]);
  EXPECT_EQ(oracle.chosen, truth_slot(MoeVariant::Full7, (*data_)[0]));
}

TEST_F(TrainedFull7, RouterIsFrozenDuringExpertTraining) {
  EXPECT_TRUE(sys_->router.frozen);
  EXPECT_EQ(log_->router_checksum_before, log_->router_checksum_after);
  // Independent retraining of the router alone reproduces the same weights.
  const auto fresh = train_router(MoeVariant::Full7, *data_, *cfg_);
  EXPECT_EQ(router_checksum(fresh.bundle), router_checksum(sys_->router));
}

TEST_F(TrainedFull7, ExpertsAreIndependentOfTrainingOrder) {
  const auto parts = partition_samples(MoeVariant::Full7, *data_);
  // Train in reverse slot order, standalone, and compare.
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    const auto te = train_expert(it->first, it->second, *cfg_);
    const auto& built = sys_->experts.at(it->first);
    EXPECT_EQ(te.expert.primary, built.primary) << it->first.name();
    EXPECT_EQ(te.expert.rescale.has_value(), built.rescale.has_value());
    if (built.rescale) {
      EXPECT_EQ(*te.expert.rescale, *built.rescale);
    }
    EXPECT_DOUBLE_EQ(te.validation.mean_cc, sys_->validation.at(it->first).mean_cc);
  }
}

TEST_F(TrainedFull7, PretrainedRouterAndCacheAreReused) {
  ExpertCache cache;
  BuildLog log;
  const auto full9 = build_moe(MoeVariant::Full9, *data_, *cfg_, &sys_->router, &log, &cache);
  EXPECT_EQ(full9.experts.size(), 9u);
  EXPECT_EQ(cache.size(), 9u);
  EXPECT_EQ(log.router_checksum_after, router_checksum(sys_->router));
  // Low/Mid cells are the same slots as in Full7 and train identically.
  EXPECT_EQ(full9.experts.at(ExpertSlot::parse("mid-t2")).primary,
            sys_->experts.at(ExpertSlot::parse("mid-t2")).primary);
  const auto emg3 = build_moe(MoeVariant::EmgOnly3, *data_, *cfg_, &sys_->router);
  EXPECT_EQ(classifier_count(emg3), 1u);
  EXPECT_FALSE(emg3.router.snr_classifier.has_value());
  const auto again = build_moe(MoeVariant::Full9, *data_, *cfg_, &sys_->router, nullptr, &cache);
  EXPECT_EQ(system_checksum(again), system_checksum(full9));
}

TEST_F(TrainedFull7, AggregateValidationCcIsSampleWeighted) {
  double acc = 0;
  std::size_t n = 0;
  for (const auto& [slot, v] : sys_->validation) {
    acc += v.mean_cc * static_cast<double>(v.count);
    n += v.count;
    EXPECT_GT(v.count, 0u) << slot.name();
  }
  EXPECT_NEAR(aggregate_validation_cc(*sys_), acc / static_cast<double>(n), 1e-15);
}

TEST_F(TrainedFull7, SaveLoadPreservesChecksumAndOutputs) {
  const auto dir = emgmoe::testing::temp_dir("system");
  save_system(dir.string(), *sys_);
  const auto back = load_system(dir.string());
  EXPECT_EQ(system_checksum(back), system_checksum(*sys_));
  EXPECT_EQ(back.variant, MoeVariant::Full7);
  EXPECT_EQ(back.seed, sys_->seed);
  EXPECT_DOUBLE_EQ(aggregate_validation_cc(back), aggregate_validation_cc(*sys_));
  for (std::size_t i = 0; i < 10; ++i) {
    const auto& y = (*data_)[i].contaminated;
    EXPECT_EQ(moe_denoise(back, y).denoised, moe_denoise(*sys_, y).denoised);
  }
  // Re-saving is byte-identical.
  const auto dir2 = emgmoe::testing::temp_dir("system2");
  save_system(dir2.string(), back);
  EXPECT_EQ(read_file((dir / "system.json").string()), read_file((dir2 / "system.json").string()));

  // A tampered checkpoint no longer matches the recorded checksum.
  const auto ck = (dir / "experts" / "high" / "mse.ckpt").string();
  auto text = read_file(ck);
  const auto last = text.rfind('\n', text.size() - 2);
  text = text.substr(0, last + 1) + "0.123\n";
  write_file(ck, text);
  try {
    load_system(dir.string());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Format);
  }
}

TEST(BuildMoe, EmptyPartitionIsInsufficientData) {
  const auto cfg = emgmoe::testing::tiny_config();
  const auto data = tiny_data(cfg, {-7.0, -4.5}, 40);
  auto router = stub_system(MoeVariant::SnrOnly3, cfg.data.length, 0, 0).router;
  try {
    build_moe(MoeVariant::SnrOnly3, data, cfg, &router);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    EXPECT_NE(std::string(e.what()).find("'mid'"), std::string::npos) << e.what();
  }
  EXPECT_THROW(build_moe(MoeVariant::Full7, {}, cfg), Error);
}
