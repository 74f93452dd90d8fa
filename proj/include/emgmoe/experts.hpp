#pragma once

// Local experts. Low/Mid partitions pair a correlation-trained CNN with
// an MSE-trained RNN whose prediction supplies the output scale; the High
// partition uses a standalone MSE RNN.
//
// Every network sees the contaminated segment standardized by its own
// mean/std. MSE networks regress the clean segment expressed in those same
// units and their output is mapped back with the input's statistics, so
// MSE outputs are in the caller's original units.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgmoe/config.hpp"
#include "emgmoe/contamination.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/nn/checkpoint.hpp"
#include "emgmoe/nn/model.hpp"
#include "emgmoe/nn/train.hpp"
#include "emgmoe/partition.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe {

using InputNormalization = Normalization;

enum class ExpertKind { CorrPlusRescale, MseOnly };

inline std::string to_string(ExpertKind k) { return k == ExpertKind::CorrPlusRescale ? "corr_plus_rescale" : "mse_only"; }

inline ExpertKind parse_expert_kind(std::string_view s) {
  if (s == "corr_plus_rescale") return ExpertKind::CorrPlusRescale;
  if (s == "mse_only") return ExpertKind::MseOnly;
  fail(ErrorKind::Format, "unknown expert kind '" + std::string(s) + "'");
}

struct RescaleResult {
  std::vector<double> values;
  bool degenerate = false;  // flat input; reference returned unchanged
};

/// Affine map of `corr_out` onto the location/scale of `reference`.
/// MeanStd matches mean and population std; MinMax matches the range.
inline RescaleResult rescale_output(std::span<const double> corr_out, std::span<const double> reference,
                                    RescaleMode mode = RescaleMode::MeanStd) {
  detail::require_same_length(corr_out, reference);
  RescaleResult r;
  if (mode == RescaleMode::MeanStd) {
    const double mc = mean(corr_out);
    const double sc = std::sqrt(variance(corr_out));
    if (sc <= kStdFloor) {
      r.values.assign(reference.begin(), reference.end());
      r.degenerate = true;
      return r;
    }
    const double mr = mean(reference);
    const double sr = std::sqrt(variance(reference));
    r.values.resize(corr_out.size());
    for (std::size_t i = 0; i < corr_out.size(); ++i) r.values[i] = (corr_out[i] - mc) / sc * sr + mr;
    return r;
  }
  const auto [cl, ch] = std::minmax_element(corr_out.begin(), corr_out.end());
  if (*ch - *cl <= kStdFloor) {
    r.values.assign(reference.begin(), reference.end());
    r.degenerate = true;
    return r;
  }
  const auto [rl, rh] = std::minmax_element(reference.begin(), reference.end());
  const double lo = *cl, span_c = *ch - *cl, rlo = *rl, span_r = *rh - *rl;
  r.values.resize(corr_out.size());
  for (std::size_t i = 0; i < corr_out.size(); ++i) r.values[i] = (corr_out[i] - lo) / span_c * span_r + rlo;
  return r;
}

struct DenoisingExpert {
  ExpertSlot partition;
  ExpertKind kind = ExpertKind::MseOnly;
  nn::Model primary;                 // correlation CNN, or the MSE RNN
  std::optional<nn::Model> rescale;  // CorrPlusRescale only
  RescaleMode rescale_mode = RescaleMode::MeanStd;
};

struct ExpertOutput {
  Segment denoised;
  std::vector<double> raw_corr;  // empty for MseOnly
  bool degenerate_rescale = false;
};

namespace detail {

inline nn::Example corr_example(const ContaminatedSample& s) {
  return {standardize(s.contaminated), s.clean.samples()};
}

inline nn::Example mse_example(const ContaminatedSample& s) {
  const auto norm = normalization_of(s.contaminated);
  return {apply_normalization(s.contaminated, norm), apply_normalization(s.clean, norm)};
}

inline std::vector<double> mse_predict(const nn::Model& m, std::span<const double> contaminated) {
  const auto norm = normalization_of(contaminated);
  auto out = m.forward(apply_normalization(contaminated, norm));
  for (double& v : out) v = v * norm.std + norm.mean;
  return out;
}

inline void require_shape(const nn::Model& m, std::size_t length, const char* what) {
  if (m.input_shape().size() != length || m.output_shape().size() != length) {
    fail(ErrorKind::InvalidState, std::string(what) + " does not map " + std::to_string(length) +
                                      " samples to " + std::to_string(length));
  }
}

}  // namespace detail

/// Seeds for one expert; both networks of a CorrPlusRescale expert use the
/// same training seed so they share a validation split.
struct ExpertSeeds {
  std::uint64_t train = 0;
  std::uint64_t init_primary = 1;
  std::uint64_t init_rescale = 2;
};

inline ExpertSeeds expert_seeds(std::uint64_t base, const ExpertSlot& slot) {
  const std::string tag = "expert/" + slot.name();
  return {derive_seed(base, tag + "/train"), derive_seed(base, tag + "/primary"), derive_seed(base, tag + "/rescale")};
}

struct CorrExpertTraining {
  nn::Model corr_model;
  nn::Model rescale_model;
  nn::TrainHistory corr_history;
  nn::TrainHistory rescale_history;
  nn::SplitIndices split;
};

struct MseExpertTraining {
  nn::Model model;
  nn::TrainHistory history;
  nn::SplitIndices split;
};

inline nn::Shape segment_shape(std::span<const ContaminatedSample> data) {
  return {1, data.front().contaminated.size()};
}

inline CorrExpertTraining train_corr_expert(std::span<const ContaminatedSample> data, const NetConfig& corr_net,
                                            const NetConfig& rescale_net, const ExpertSeeds& seeds) {
  if (data.size() < 2) fail(ErrorKind::InsufficientData, "correlation expert needs at least 2 samples");
  std::vector<nn::Example> corr_ex, mse_ex;
  corr_ex.reserve(data.size());
  mse_ex.reserve(data.size());
  for (const auto& s : data) {
    corr_ex.push_back(detail::corr_example(s));
    mse_ex.push_back(detail::mse_example(s));
  }
  nn::TrainConfig ct = corr_net.train;
  ct.loss = nn::LossKind::Correlation;
  ct.seed = seeds.train;
  nn::TrainConfig rt = rescale_net.train;
  rt.loss = nn::LossKind::MSE;
  rt.seed = seeds.train;
  rt.val_fraction = ct.val_fraction;
  const nn::Shape shape = segment_shape(data);
  auto corr = nn::train(nn::Model(shape, corr_net.layers, seeds.init_primary), corr_ex, ct);
  auto resc = nn::train(nn::Model(shape, rescale_net.layers, seeds.init_rescale), mse_ex, rt);
  return {std::move(corr.model), std::move(resc.model), std::move(corr.history), std::move(resc.history),
          nn::split_indices(data.size(), ct.val_fraction, ct.seed)};
}

inline MseExpertTraining train_mse_expert(std::span<const ContaminatedSample> data, const NetConfig& net,
                                          const ExpertSeeds& seeds) {
  if (data.size() < 2) fail(ErrorKind::InsufficientData, "MSE expert needs at least 2 samples");
  std::vector<nn::Example> ex;
  ex.reserve(data.size());
  for (const auto& s : data) ex.push_back(detail::mse_example(s));
  nn::TrainConfig t = net.train;
  t.loss = nn::LossKind::MSE;
  t.seed = seeds.train;
  auto r = nn::train(nn::Model(segment_shape(data), net.layers, seeds.init_primary), ex, t);
  return {std::move(r.model), std::move(r.history), nn::split_indices(data.size(), t.val_fraction, t.seed)};
}

inline ExpertOutput expert_forward(const DenoisingExpert& e, const Segment& contaminated) {
  const std::size_t L = contaminated.size();
  detail::require_shape(e.primary, L, "expert network");
  ExpertOutput out;
  if (e.kind == ExpertKind::MseOnly) {
    out.denoised = Segment(detail::mse_predict(e.primary, contaminated), contaminated.sample_rate_hz());
    return out;
  }
  if (!e.rescale) fail(ErrorKind::InvalidState, "correlation expert without a rescaling network");
  detail::require_shape(*e.rescale, L, "rescaling network");
  out.raw_corr = e.primary.forward(standardize(contaminated));
  const auto reference = detail::mse_predict(*e.rescale, contaminated);
  auto r = rescale_output(out.raw_corr, reference, e.rescale_mode);
  out.degenerate_rescale = r.degenerate;
  out.denoised = Segment(std::move(r.values), contaminated.sample_rate_hz());
  return out;
}

inline Segment expert_denoise(const DenoisingExpert& e, const Segment& contaminated) {
  return expert_forward(e, contaminated).denoised;
}

/// Held-out scores of one expert on its own partition's validation split.
struct ExpertValidation {
  ExpertSlot partition;
  std::size_t count = 0;
  double mean_cc = 0.0;
  double mean_trrmse = 0.0;
  double mean_srrmse = 0.0;
  double mean_cc_raw = 0.0;      // CorrPlusRescale only
  double mean_trrmse_raw = 0.0;  // CorrPlusRescale only
};

inline ExpertValidation validate_expert(const DenoisingExpert& e, std::span<const ContaminatedSample> data,
                                        std::span<const std::size_t> indices) {
  ExpertValidation v;
  v.partition = e.partition;
  v.count = indices.size();
  for (std::size_t i : indices) {
    const auto& s = data[i];
    const auto out = expert_forward(e, s.contaminated);
    const auto m = score(out.denoised, s.clean, s.snr_db);
    v.mean_cc += m.cc;
    v.mean_trrmse += m.trrmse;
    v.mean_srrmse += m.srrmse;
    if (!out.raw_corr.empty()) {
      v.mean_cc_raw += emgmoe::detail::is_constant(out.raw_corr) ? 0.0 : pearson_cc(out.raw_corr, s.clean);
      v.mean_trrmse_raw += trrmse(out.raw_corr, s.clean);
    }
  }
  if (v.count > 0) {
    const double n = static_cast<double>(v.count);
    v.mean_cc /= n;
    v.mean_trrmse /= n;
    v.mean_srrmse /= n;
    v.mean_cc_raw /= n;
    v.mean_trrmse_raw /= n;
  }
  return v;
}

// --- persistence: one directory per expert ----------------------------------

struct ExpertMeta {
  std::string config_hash;
  std::uint64_t train_seed = 0;
};

inline void save_expert(const std::string& dir, const DenoisingExpert& e, const ExpertMeta& meta) {
  std::filesystem::create_directories(dir);
  const nn::Metadata ck{{"partition", e.partition.name()}, {"config_hash", meta.config_hash}};
  const auto base = std::filesystem::path(dir);
  if (e.kind == ExpertKind::CorrPlusRescale) {
    nn::save_checkpoint((base / "corr.ckpt").string(), e.primary, ck);
    nn::save_checkpoint((base / "rescale.ckpt").string(), *e.rescale, ck);
  } else {
    nn::save_checkpoint((base / "mse.ckpt").string(), e.primary, ck);
  }
  nlohmann::json j{{"partition", e.partition.name()},
                   {"kind", to_string(e.kind)},
                   {"rescale_mode", to_string(e.rescale_mode)},
                   {"config_hash", meta.config_hash},
                   {"train_seed", meta.train_seed}};
  write_file((base / "meta.json").string(), j.dump(2) + "\n");
}

inline DenoisingExpert load_expert(const std::string& dir) {
  const auto base = std::filesystem::path(dir);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file((base / "meta.json").string()));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::Format, "expert meta: " + std::string(e.what()));
  }
  DenoisingExpert e;
  e.partition = ExpertSlot::parse(j.at("partition").get<std::string>());
  e.kind = parse_expert_kind(j.at("kind").get<std::string>());
  e.rescale_mode = parse_rescale_mode(j.value("rescale_mode", std::string("mean_std")));
  if (e.kind == ExpertKind::CorrPlusRescale) {
    e.primary = nn::load_checkpoint((base / "corr.ckpt").string()).model;
    e.rescale = nn::load_checkpoint((base / "rescale.ckpt").string()).model;
  } else {
    e.primary = nn::load_checkpoint((base / "mse.ckpt").string()).model;
  }
  return e;
}

}  // namespace emgmoe
