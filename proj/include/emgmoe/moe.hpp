#pragma once

// Mixture-of-experts assembly: the four partition variants, router and
// expert training, single-expert inference and system persistence.

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgmoe/config.hpp"
#include "emgmoe/contamination.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/experts.hpp"
#include "emgmoe/partition.hpp"
#include "emgmoe/routing.hpp"

namespace emgmoe {

enum class MoeVariant { EmgOnly3, SnrOnly3, Full9, Full7 };

inline constexpr std::array<MoeVariant, 4> kMoeVariants{MoeVariant::EmgOnly3, MoeVariant::SnrOnly3, MoeVariant::Full9,
                                                        MoeVariant::Full7};

inline std::string to_string(MoeVariant v) {
  switch (v) {
    case MoeVariant::EmgOnly3: return "emg3";
    case MoeVariant::SnrOnly3: return "snr3";
    case MoeVariant::Full9: return "full9";
    case MoeVariant::Full7: return "full7";
  }
  return "?";
}

inline MoeVariant parse_variant(std::string_view s) {
  for (MoeVariant v : kMoeVariants) {
    if (to_string(v) == s) return v;
  }
  fail(ErrorKind::InvalidInput, "unknown MoE variant '" + std::string(s) + "' (expected emg3, snr3, full9, full7)");
}

inline bool uses_type(MoeVariant v) { return v != MoeVariant::SnrOnly3; }
inline bool uses_tier(MoeVariant v) { return v != MoeVariant::EmgOnly3; }

/// Partition that serves a (tier, type) cell under a variant. Total over
/// the 3x3 grid for every variant.
inline ExpertSlot slot_for(MoeVariant v, SnrTier tier, EmgType type) {
  switch (v) {
    case MoeVariant::EmgOnly3: return {std::nullopt, type};
    case MoeVariant::SnrOnly3: return {tier, std::nullopt};
    case MoeVariant::Full9: return {tier, type};
    case MoeVariant::Full7: return slot_of(partition_for(tier, type));
  }
  fail(ErrorKind::InvalidInput, "unknown variant");
}

inline std::vector<ExpertSlot> variant_slots(MoeVariant v) {
  std::set<ExpertSlot> s;
  for (SnrTier t : kSnrTiers)
    for (EmgType e : kEmgTypes) s.insert(slot_for(v, t, e));
  return {s.begin(), s.end()};
}

inline ExpertKind kind_for(const ExpertSlot& slot) {
  return slot.high_tier() ? ExpertKind::MseOnly : ExpertKind::CorrPlusRescale;
}

inline ExpertSlot truth_slot(MoeVariant v, const ContaminatedSample& s) { return slot_for(v, s.snr_tier, s.emg_type); }

/// Ground-truth partition subsets, in slot order.
inline std::map<ExpertSlot, std::vector<ContaminatedSample>> partition_samples(MoeVariant v,
                                                                               std::span<const ContaminatedSample> data) {
  std::map<ExpertSlot, std::vector<ContaminatedSample>> out;
  for (const auto& slot : variant_slots(v)) out[slot];
  for (const auto& s : data) out[truth_slot(v, s)].push_back(s);
  return out;
}

// --- training -------------------------------------------------------------------

struct RouterTraining {
  RouterBundle bundle;
  std::optional<nn::TrainHistory> type_history;
  std::optional<nn::TrainHistory> snr_history;
};

/// Trains the classifiers a variant needs and freezes the bundle.
inline RouterTraining train_router(MoeVariant v, std::span<const ContaminatedSample> train, const RunConfig& cfg) {
  RouterTraining r;
  if (uses_type(v)) {
    auto t = train_classifier(train, RouterTarget::EmgType, cfg.classifier, derive_seed(cfg.seed, "router/type/train"),
                              derive_seed(cfg.seed, "router/type/init"));
    r.bundle.type_classifier = std::move(t.model);
    r.type_history = std::move(t.history);
  }
  if (uses_tier(v)) {
    auto t = train_classifier(train, RouterTarget::SnrTier, cfg.classifier, derive_seed(cfg.seed, "router/snr/train"),
                              derive_seed(cfg.seed, "router/snr/init"));
    r.bundle.snr_classifier = std::move(t.model);
    r.snr_history = std::move(t.history);
  }
  r.bundle.frozen = true;
  return r;
}

struct TrainedExpert {
  DenoisingExpert expert;
  ExpertValidation validation;
  nn::TrainHistory history;                          // corr model, or the MSE model
  std::optional<nn::TrainHistory> rescale_history;  // CorrPlusRescale only
};

/// Trains one expert on its ground-truth subset. Depends only on the slot,
/// the subset and the config, never on other experts.
inline TrainedExpert train_expert(const ExpertSlot& slot, std::span<const ContaminatedSample> subset,
                                  const RunConfig& cfg) {
  if (subset.size() < 2) {
    fail(ErrorKind::InsufficientData, "partition '" + slot.name() + "' has " + std::to_string(subset.size()) +
                                          " training samples (need at least 2)");
  }
  const auto seeds = expert_seeds(cfg.seed, slot);
  TrainedExpert te;
  te.expert.partition = slot;
  te.expert.kind = kind_for(slot);
  te.expert.rescale_mode = cfg.rescale_mode;
  std::vector<std::size_t> val;
  if (te.expert.kind == ExpertKind::CorrPlusRescale) {
    auto t = train_corr_expert(subset, cfg.denoiser_cnn, cfg.rescale_rnn, seeds);
    te.expert.primary = std::move(t.corr_model);
    te.expert.rescale = std::move(t.rescale_model);
    te.history = std::move(t.corr_history);
    te.rescale_history = std::move(t.rescale_history);
    val = std::move(t.split.val);
  } else {
    auto t = train_mse_expert(subset, cfg.mse_rnn, seeds);
    te.expert.primary = std::move(t.model);
    te.history = std::move(t.history);
    val = std::move(t.split.val);
  }
  te.validation = validate_expert(te.expert, subset, val);
  return te;
}

// --- system -----------------------------------------------------------------------

/// Per-expert forward counters, shared by copies of a system.
class InvocationCounters {
 public:
  explicit InvocationCounters(const std::vector<ExpertSlot>& slots) {
    for (const auto& s : slots) counts_.try_emplace(s, 0);
  }
  void hit(const ExpertSlot& s) { counts_.at(s).fetch_add(1, std::memory_order_relaxed); }
  std::uint64_t count(const ExpertSlot& s) const { return counts_.at(s).load(std::memory_order_relaxed); }
  std::uint64_t total() const {
    std::uint64_t n = 0;
    for (const auto& [k, v] : counts_) n += v.load(std::memory_order_relaxed);
    return n;
  }
  void reset() {
    for (auto& [k, v] : counts_) v.store(0, std::memory_order_relaxed);
  }

 private:
  std::map<ExpertSlot, std::atomic<std::uint64_t>> counts_;
};

struct MoeSystem {
  MoeVariant variant = MoeVariant::Full7;
  RouterBundle router;
  std::map<ExpertSlot, DenoisingExpert> experts;
  std::map<ExpertSlot, ExpertValidation> validation;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::shared_ptr<InvocationCounters> counters;
};

inline void attach_counters(MoeSystem& s) {
  std::vector<ExpertSlot> slots;
  for (const auto& [k, v] : s.experts) slots.push_back(k);
  s.counters = std::make_shared<InvocationCounters>(slots);
}

inline void check_system(const MoeSystem& s) {
  const auto slots = variant_slots(s.variant);
  if (s.experts.size() != slots.size()) {
    fail(ErrorKind::InvalidState, "variant " + to_string(s.variant) + " needs " + std::to_string(slots.size()) +
                                      " experts, system has " + std::to_string(s.experts.size()));
  }
  for (const auto& slot : slots) {
    const auto it = s.experts.find(slot);
    if (it == s.experts.end()) fail(ErrorKind::InvalidState, "partition '" + slot.name() + "' has no expert");
    if (it->second.kind != kind_for(slot)) fail(ErrorKind::InvalidState, "partition '" + slot.name() + "' has the wrong expert kind");
  }
  if (uses_type(s.variant) && !s.router.type_classifier) fail(ErrorKind::InvalidState, "missing type classifier");
  if (uses_tier(s.variant) && !s.router.snr_classifier) fail(ErrorKind::InvalidState, "missing SNR classifier");
  if (!s.router.frozen) fail(ErrorKind::InvalidState, "router is not frozen");
}

inline std::size_t classifier_count(const MoeSystem& s) {
  return (s.router.type_classifier ? 1 : 0) + (s.router.snr_classifier ? 1 : 0);
}

/// Trained experts keyed by slot. Training depends only on (slot, subset,
/// config), so variants over the same split may share entries.
using ExpertCache = std::map<ExpertSlot, TrainedExpert>;

struct BuildLog {
  std::optional<nn::TrainHistory> type_history;
  std::optional<nn::TrainHistory> snr_history;
  std::map<ExpertSlot, nn::TrainHistory> expert_history;
  std::map<ExpertSlot, nn::TrainHistory> rescale_history;
  std::uint64_t router_checksum_before = 0;
  std::uint64_t router_checksum_after = 0;
};

/// Router first (or the given pretrained one), frozen; then one expert per
/// partition on its ground-truth subset.
inline MoeSystem build_moe(MoeVariant v, std::span<const ContaminatedSample> train, const RunConfig& cfg,
                           const RouterBundle* pretrained = nullptr, BuildLog* log = nullptr,
                           ExpertCache* cache = nullptr) {
  if (train.empty()) fail(ErrorKind::InvalidInput, "empty training split");
  MoeSystem sys;
  sys.variant = v;
  sys.config_hash = cfg.hash;
  sys.seed = cfg.seed;
  if (pretrained) {
    sys.router = *pretrained;
    sys.router.frozen = true;
    if (!uses_type(v)) sys.router.type_classifier.reset();
    if (!uses_tier(v)) sys.router.snr_classifier.reset();
  } else {
    auto r = train_router(v, train, cfg);
    sys.router = std::move(r.bundle);
    if (log) {
      log->type_history = std::move(r.type_history);
      log->snr_history = std::move(r.snr_history);
    }
  }
  const std::uint64_t before = router_checksum(sys.router);
  for (auto& [slot, subset] : partition_samples(v, train)) {
    TrainedExpert te;
    if (cache && cache->count(slot)) {
      te = cache->at(slot);
    } else {
      te = train_expert(slot, subset, cfg);
      if (cache) cache->emplace(slot, te);
    }
    if (log) {
      log->expert_history[slot] = std::move(te.history);
      if (te.rescale_history) log->rescale_history[slot] = std::move(*te.rescale_history);
    }
    sys.validation[slot] = te.validation;
    sys.experts.emplace(slot, std::move(te.expert));
  }
  if (log) {
    log->router_checksum_before = before;
    log->router_checksum_after = router_checksum(sys.router);
  }
  attach_counters(sys);
  check_system(sys);
  return sys;
}

// --- inference --------------------------------------------------------------------

inline ExpertSlot route_system(const MoeSystem& s, const Segment& contaminated) {
  const auto& b = s.router;
  if (!b.frozen) fail(ErrorKind::InvalidState, "router must be frozen before routing");
  std::optional<SnrTier> tier;
  std::optional<EmgType> type;
  if (uses_tier(s.variant)) tier = kSnrTiers[argmax3(classify(*b.snr_classifier, contaminated))];
  // Full7 never needs the type classifier on High-tier inputs.
  const bool skip_type = s.variant == MoeVariant::Full7 && tier == SnrTier::High;
  if (uses_type(s.variant) && !skip_type) type = kEmgTypes[argmax3(classify(*b.type_classifier, contaminated))];
  return slot_for(s.variant, tier.value_or(SnrTier::Low), type.value_or(EmgType::T1));
}

struct MoeOutput {
  Segment denoised;
  ExpertSlot chosen;
  std::uint64_t expert_forwards = 0;
  bool degenerate_rescale = false;
};

inline MoeOutput run_expert(const MoeSystem& s, const ExpertSlot& slot, const Segment& contaminated) {
  const auto it = s.experts.find(slot);
  if (it == s.experts.end()) fail(ErrorKind::InvalidState, "no expert for partition '" + slot.name() + "'");
  const std::uint64_t before = s.counters ? s.counters->total() : 0;
  if (s.counters) s.counters->hit(slot);
  auto out = expert_forward(it->second, contaminated);
  MoeOutput r{std::move(out.denoised), slot, 0, out.degenerate_rescale};
  r.expert_forwards = s.counters ? s.counters->total() - before : 1;
  return r;
}

/// Routes and invokes exactly one expert.
inline MoeOutput moe_denoise(const MoeSystem& s, const Segment& contaminated) {
  return run_expert(s, route_system(s, contaminated), contaminated);
}

/// Oracle mode: ground-truth labels pick the expert.
inline MoeOutput moe_denoise_oracle(const MoeSystem& s, const ContaminatedSample& sample) {
  return run_expert(s, truth_slot(s.variant, sample), sample.contaminated);
}

inline std::uint64_t system_checksum(const MoeSystem& s) {
  std::uint64_t h = fnv1a(to_string(s.variant), router_checksum(s.router));
  for (const auto& [slot, e] : s.experts) {
    h = fnv1a(slot.name(), h);
    h = nn::param_checksum(e.primary, h);
    if (e.rescale) h = nn::param_checksum(*e.rescale, h);
  }
  return h;
}

/// Validation CC pooled over experts (sample-weighted): every validation
/// sample is served by its own partition's expert.
inline double aggregate_validation_cc(const MoeSystem& s) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const auto& [slot, v] : s.validation) {
    acc += v.mean_cc * static_cast<double>(v.count);
    n += v.count;
  }
  return n == 0 ? 0.0 : acc / static_cast<double>(n);
}

// --- persistence --------------------------------------------------------------

inline constexpr const char* kSystemManifest = "system.json";

inline nlohmann::json validation_json(const ExpertValidation& v) {
  return {{"count", v.count},          {"mean_cc", v.mean_cc},         {"mean_trrmse", v.mean_trrmse},
          {"mean_srrmse", v.mean_srrmse}, {"mean_cc_raw", v.mean_cc_raw}, {"mean_trrmse_raw", v.mean_trrmse_raw}};
}

inline void save_system(const std::string& dir, const MoeSystem& s) {
  const auto base = std::filesystem::path(dir);
  save_router((base / "router").string(), s.router, s.config_hash);
  nlohmann::json experts = nlohmann::json::object();
  for (const auto& [slot, e] : s.experts) {
    const std::string rel = "experts/" + slot.name();
    save_expert((base / rel).string(), e, {s.config_hash, expert_seeds(s.seed, slot).train});
    nlohmann::json entry{{"path", rel}, {"kind", to_string(e.kind)}};
    if (const auto it = s.validation.find(slot); it != s.validation.end()) entry["validation"] = validation_json(it->second);
    experts[slot.name()] = entry;
  }
  nlohmann::json router = nlohmann::json::object();
  if (s.router.type_classifier) router["type"] = "router/type.ckpt";
  if (s.router.snr_classifier) router["snr"] = "router/snr.ckpt";
  const nlohmann::json j{{"variant", to_string(s.variant)},
                         {"config_hash", s.config_hash},
                         {"seed", s.seed},
                         {"checksum", hex64(system_checksum(s))},
                         {"router", router},
                         {"experts", experts}};
  write_file((base / kSystemManifest).string(), j.dump(2) + "\n");
}

inline MoeSystem load_system(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file((base / kSystemManifest).string()));
    MoeSystem s;
    s.variant = parse_variant(j.at("variant").get<std::string>());
    s.config_hash = j.at("config_hash").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.router = load_router((base / "router").string());
    for (const auto& [name, entry] : j.at("experts").items()) {
      const auto slot = ExpertSlot::parse(name);
      s.experts.emplace(slot, load_expert((base / entry.at("path").get<std::string>()).string()));
      if (entry.contains("validation")) {
        const auto& v = entry.at("validation");
        s.validation[slot] = {slot,
                              v.at("count").get<std::size_t>(),
                              v.at("mean_cc").get<double>(),
                              v.at("mean_trrmse").get<double>(),
                              v.at("mean_srrmse").get<double>(),
                              v.at("mean_cc_raw").get<double>(),
                              v.at("mean_trrmse_raw").get<double>()};
      }
    }
    attach_counters(s);
    check_system(s);
    if (hex64(system_checksum(s)) != j.at("checksum").get<std::string>()) {
      fail(ErrorKind::Format, "system checksum mismatch in " + dir);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, "system manifest: " + std::string(e.what()));
  }
}

}  // namespace emgmoe
