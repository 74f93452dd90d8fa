#pragma once

// Routing classifiers and the two-stage partition map.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emgmoe/config.hpp"
#include "emgmoe/contamination.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/nn/checkpoint.hpp"
#include "emgmoe/nn/model.hpp"
#include "emgmoe/nn/train.hpp"
#include "emgmoe/partition.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe {

using ClassProbs = std::array<double, 3>;

enum class RouterTarget { EmgType, SnrTier };

inline std::string to_string(RouterTarget t) { return t == RouterTarget::EmgType ? "type" : "snr"; }

inline std::size_t label_of(const ContaminatedSample& s, RouterTarget t) {
  return t == RouterTarget::EmgType ? index_of(s.emg_type) : index_of(s.snr_tier);
}

inline std::size_t argmax3(const ClassProbs& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

struct ClassifierTraining {
  nn::Model model;
  nn::TrainHistory history;
};

inline ClassifierTraining train_classifier(std::span<const ContaminatedSample> data, RouterTarget target,
                                           const NetConfig& net, std::uint64_t train_seed, std::uint64_t init_seed) {
  if (data.size() < 2) fail(ErrorKind::InsufficientData, to_string(target) + " classifier needs at least 2 samples");
  std::array<std::size_t, 3> seen{};
  std::vector<nn::Example> ex;
  ex.reserve(data.size());
  for (const auto& s : data) {
    const std::size_t c = label_of(s, target);
    ++seen[c];
    std::vector<double> onehot(3, 0.0);
    onehot[c] = 1.0;
    ex.push_back({standardize(s.contaminated), std::move(onehot)});
  }
  for (std::size_t c = 0; c < 3; ++c) {
    if (seen[c] == 0) {
      const std::string name = target == RouterTarget::EmgType ? to_string(kEmgTypes[c]) : to_string(kSnrTiers[c]);
      fail(ErrorKind::InvalidInput, to_string(target) + " classifier: no training samples of class '" + name + "'");
    }
  }
  nn::TrainConfig cfg = net.train;
  cfg.loss = nn::LossKind::CrossEntropy;
  cfg.seed = train_seed;
  const nn::Shape in{1, data.front().contaminated.size()};
  auto r = nn::train(nn::Model(in, net.layers, init_seed), ex, cfg);
  if (r.model.output_shape().size() != 3) fail(ErrorKind::Shape, "classifier must output 3 probabilities");
  return {std::move(r.model), std::move(r.history)};
}

inline ClassProbs classify(const nn::Model& m, std::span<const double> contaminated) {
  if (m.input_shape().size() != contaminated.size()) fail(ErrorKind::InvalidState, "classifier input length mismatch");
  const auto out = m.forward(standardize(contaminated));
  if (out.size() != 3) fail(ErrorKind::InvalidState, "classifier does not output 3 probabilities");
  return {out[0], out[1], out[2]};
}

/// Either classifier may be absent for single-axis variants.
struct RouterBundle {
  std::optional<nn::Model> type_classifier;
  std::optional<nn::Model> snr_classifier;
  bool frozen = false;
};

inline std::uint64_t router_checksum(const RouterBundle& b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (b.type_classifier) h = nn::param_checksum(*b.type_classifier, h);
  if (b.snr_classifier) h = nn::param_checksum(*b.snr_classifier, fnv1a("snr", h));
  return h;
}

/// Two-stage map from class probabilities to one of the seven partitions.
inline PartitionId route_from_probs(const ClassProbs& snr, const ClassProbs& type) {
  const auto tier = kSnrTiers[argmax3(snr)];
  if (tier == SnrTier::High) return PartitionId::HighAll;
  return partition_for(tier, kEmgTypes[argmax3(type)]);
}

struct RoutePrediction {
  std::optional<SnrTier> tier;
  std::optional<EmgType> type;
};

/// Runs only the classifiers a bundle holds. The type classifier is not
/// consulted once the SNR classifier predicts High.
inline RoutePrediction predict_labels(const RouterBundle& b, const Segment& contaminated) {
  if (!b.frozen) fail(ErrorKind::InvalidState, "router must be frozen before routing");
  RoutePrediction p;
  if (b.snr_classifier) p.tier = kSnrTiers[argmax3(classify(*b.snr_classifier, contaminated))];
  if (b.type_classifier && !(p.tier && *p.tier == SnrTier::High)) {
    p.type = kEmgTypes[argmax3(classify(*b.type_classifier, contaminated))];
  }
  return p;
}

inline PartitionId route(const RouterBundle& b, const Segment& contaminated) {
  if (!b.snr_classifier || !b.type_classifier) fail(ErrorKind::InvalidState, "two-stage routing needs both classifiers");
  const auto p = predict_labels(b, contaminated);
  if (*p.tier == SnrTier::High) return PartitionId::HighAll;
  return partition_for(*p.tier, *p.type);
}

struct ConfusionMatrix {
  std::array<std::array<std::size_t, 3>, 3> counts{};  // [truth][prediction]

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& r : counts)
      for (std::size_t c : r) n += c;
    return n;
  }
  std::size_t row_total(std::size_t truth) const { return counts[truth][0] + counts[truth][1] + counts[truth][2]; }
  double accuracy() const {
    const std::size_t n = total();
    if (n == 0) return 0.0;
    return static_cast<double>(counts[0][0] + counts[1][1] + counts[2][2]) / static_cast<double>(n);
  }
};

inline ConfusionMatrix confusion(const nn::Model& m, std::span<const ContaminatedSample> test, RouterTarget target) {
  ConfusionMatrix cm;
  for (const auto& s : test) ++cm.counts[label_of(s, target)][argmax3(classify(m, s.contaminated))];
  return cm;
}

inline std::string confusion_csv(const ConfusionMatrix& cm, RouterTarget target) {
  auto label = [&](std::size_t i) {
    return target == RouterTarget::EmgType ? to_string(kEmgTypes[i]) : to_string(kSnrTiers[i]);
  };
  std::string out = "truth\\pred";
  for (std::size_t c = 0; c < 3; ++c) out += "," + label(c);
  out += "\n";
  for (std::size_t r = 0; r < 3; ++r) {
    out += label(r);
    for (std::size_t c = 0; c < 3; ++c) out += "," + std::to_string(cm.counts[r][c]);
    out += "\n";
  }
  return out;
}

// --- persistence --------------------------------------------------------------

inline void save_router(const std::string& dir, const RouterBundle& b, const std::string& config_hash) {
  std::filesystem::create_directories(dir);
  const nn::Metadata meta{{"config_hash", config_hash}};
  const auto base = std::filesystem::path(dir);
  if (b.type_classifier) nn::save_checkpoint((base / "type.ckpt").string(), *b.type_classifier, meta);
  if (b.snr_classifier) nn::save_checkpoint((base / "snr.ckpt").string(), *b.snr_classifier, meta);
}

inline RouterBundle load_router(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  RouterBundle b;
  if (std::filesystem::exists(base / "type.ckpt")) b.type_classifier = nn::load_checkpoint((base / "type.ckpt").string()).model;
  if (std::filesystem::exists(base / "snr.ckpt")) b.snr_classifier = nn::load_checkpoint((base / "snr.ckpt").string()).model;
  if (!b.type_classifier && !b.snr_classifier) fail(ErrorKind::Io, "no classifier checkpoints in " + dir);
  b.frozen = true;
  return b;
}

}  // namespace emgmoe
