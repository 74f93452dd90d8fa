#pragma once

// Evaluation harness: data splits, binned metric reports, the experiment
// drivers, latency measurement and the standard desk-scale run.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgmoe/config.hpp"
#include "emgmoe/contamination.hpp"
#include "emgmoe/data_io.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"
#include "emgmoe/moe.hpp"
#include "emgmoe/nn/train.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe {

// --- splits ---------------------------------------------------------------------

struct DataSplit {
  std::vector<ContaminatedSample> train;
  std::vector<ContaminatedSample> test;
};

/// Seeded shuffle, then the first round(n * ratio) samples train.
inline DataSplit split_dataset(std::span<const ContaminatedSample> samples, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::InvalidInput, "split ratio must be in (0, 1)");
  if (samples.size() < 2) fail(ErrorKind::InvalidInput, "need at least 2 samples to split");
  const std::size_t n = samples.size();
  const auto ntrain = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  if (ntrain == 0 || ntrain == n) {
    fail(ErrorKind::InvalidInput, "split of " + std::to_string(n) + " samples at ratio " + format_double(ratio) +
                                      " leaves one side empty");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  DataSplit s;
  s.train.reserve(ntrain);
  s.test.reserve(n - ntrain);
  for (std::size_t i = 0; i < n; ++i) (i < ntrain ? s.train : s.test).push_back(samples[idx[i]]);
  return s;
}

// --- statistics -------------------------------------------------------------------

struct Stats {
  std::size_t count = 0;
  double mean = 0.0;
  double median = 0.0;
  double std = 0.0;  // sample (n-1) standard deviation; 0 when count < 2
};

inline Stats summarize(std::span<const double> v) {
  Stats s;
  s.count = v.size();
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t m = sorted.size() / 2;
  s.median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct MetricStats {
  Stats cc, trrmse, srrmse;
};

inline MetricStats summarize(std::span<const MetricsRecord> records) {
  std::vector<double> c, t, p;
  for (const auto& r : records) {
    c.push_back(r.cc);
    t.push_back(r.trrmse);
    p.push_back(r.srrmse);
  }
  return {summarize(c), summarize(t), summarize(p)};
}

// --- binned report ----------------------------------------------------------------

inline constexpr int kFirstBinDb = -7;
inline constexpr std::size_t kBinCount = 10;

/// Nearest integer, halves toward +inf, clamped to the -7..2 dB bins.
inline std::size_t snr_bin(double snr_db) {
  const int b = std::clamp(static_cast<int>(std::floor(snr_db + 0.5)), kFirstBinDb, kFirstBinDb + static_cast<int>(kBinCount) - 1);
  return static_cast<std::size_t>(b - kFirstBinDb);
}

inline int bin_db(std::size_t bin) { return kFirstBinDb + static_cast<int>(bin); }

struct BinnedReport {
  std::array<MetricStats, kBinCount> bins{};
  MetricStats overall;
  std::vector<MetricsRecord> records;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& b : bins) n += b.cc.count;
    return n;
  }
};

inline BinnedReport make_binned_report(std::vector<MetricsRecord> records) {
  BinnedReport r;
  std::array<std::vector<MetricsRecord>, kBinCount> per_bin;
  for (const auto& m : records) per_bin[snr_bin(m.snr_db)].push_back(m);
  for (std::size_t b = 0; b < kBinCount; ++b) r.bins[b] = summarize(per_bin[b]);
  r.overall = summarize(records);
  r.records = std::move(records);
  return r;
}

using Denoiser = std::function<Segment(const ContaminatedSample&)>;

inline BinnedReport evaluate(const Denoiser& denoise, std::span<const ContaminatedSample> test) {
  if (test.empty()) fail(ErrorKind::InvalidInput, "empty test set");
  std::vector<MetricsRecord> recs;
  recs.reserve(test.size());
  for (const auto& s : test) recs.push_back(score(denoise(s), s.clean, s.snr_db));
  return make_binned_report(std::move(recs));
}

struct RouteAudit {
  ExpertSlot truth;
  ExpertSlot chosen;
};

struct SystemEvaluation {
  BinnedReport report;
  std::vector<RouteAudit> audit;
  std::uint64_t expert_forwards = 0;
  std::size_t degenerate_rescales = 0;

  double routing_accuracy() const {
    if (audit.empty()) return 0.0;
    std::size_t hit = 0;
    for (const auto& a : audit) hit += a.truth == a.chosen ? 1 : 0;
    return static_cast<double>(hit) / static_cast<double>(audit.size());
  }
};

/// Learned routing, or ground-truth routing when `oracle` is set.
inline SystemEvaluation evaluate_system(const MoeSystem& sys, std::span<const ContaminatedSample> test,
                                        bool oracle = false) {
  SystemEvaluation ev;
  ev.audit.reserve(test.size());
  const Denoiser d = [&](const ContaminatedSample& s) {
    auto out = oracle ? moe_denoise_oracle(sys, s) : moe_denoise(sys, s.contaminated);
    ev.audit.push_back({truth_slot(sys.variant, s), out.chosen});
    ev.expert_forwards += out.expert_forwards;
    ev.degenerate_rescales += out.degenerate_rescale ? 1 : 0;
    return std::move(out.denoised);
  };
  ev.report = evaluate(d, test);
  return ev;
}

// --- published reference constants (display only) -------------------------------

struct CtsTriple {
  double cc, trrmse, srrmse;
};

struct ReferenceRow {
  const char* model;
  CtsTriple high_noise;
  CtsTriple overall;
};

inline constexpr std::array<ReferenceRow, 5> kAblationReference{{
    {"EEGdenoiseNet baseline (RNN)", {0.55, 1.03, 1.00}, {0.81, 0.57, 0.53}},
    {"emg3", {0.64, 0.74, 0.74}, {0.80, 0.54, 0.56}},
    {"snr3", {0.72, 0.67, 0.70}, {0.85, 0.49, 0.51}},
    {"full9", {0.69, 0.72, 0.65}, {0.81, 0.53, 0.55}},
    {"full7", {0.75, 0.68, 0.63}, {0.83, 0.51, 0.54}},
}};

inline constexpr std::array<ReferenceRow, 5> kComparisonReference{{
    {"RNN (2021)", {0.55, 1.03, 1.00}, {0.81, 0.57, 0.53}},
    {"Novel CNN (2021)", {0.69, 0.72, 0.65}, {0.86, 0.45, 0.44}},
    {"EEGDnet (2022)", {0.53, 0.92, 0.85}, {0.73, 0.68, 0.63}},
    {"EEGDiR (2024)", {0.46, 1.00, 0.90}, {0.81, 0.53, 0.50}},
    {"Mixture of Experts (2025)", {0.75, 0.68, 0.63}, {0.83, 0.51, 0.54}},
}};

struct OverallReference {
  double mean, median, std;
};

inline constexpr OverallReference kReferenceCc{0.830, 0.916, 0.187};
inline constexpr OverallReference kReferenceTrrmse{0.507, 0.466, 0.236};
inline constexpr OverallReference kReferenceSrrmse{0.535, 0.528, 0.241};
inline constexpr std::array<double, 3> kReferenceLearnabilityCc{0.648, 0.672, 0.699};
inline constexpr double kReferenceTypeAccuracy = 0.7235;
inline constexpr double kReferenceSnrAccuracy = 0.8761;
inline constexpr double kReferenceLatencyMeanS = 0.215;
inline constexpr double kReferenceLatencyStdS = 0.075;
inline constexpr double kReferenceSpeedup = 10.0;

// --- rendering ----------------------------------------------------------------------

inline std::string fx(double v) { return format_fixed(v, 4); }

inline std::string binned_csv(const BinnedReport& r) {
  std::string out = "bin_db,count,cc_mean,cc_median,cc_std,trrmse_mean,trrmse_median,trrmse_std,srrmse_mean,srrmse_median,srrmse_std\n";
  auto row = [&](const std::string& label, const MetricStats& m) {
    out += label + "," + std::to_string(m.cc.count);
    for (const Stats* s : {&m.cc, &m.trrmse, &m.srrmse}) out += "," + fx(s->mean) + "," + fx(s->median) + "," + fx(s->std);
    out += "\n";
  };
  for (std::size_t b = 0; b < kBinCount; ++b) row(std::to_string(bin_db(b)), r.bins[b]);
  row("overall", r.overall);
  return out;
}

inline std::string records_csv(const BinnedReport& r, std::span<const RouteAudit> audit = {}) {
  std::string out = audit.empty() ? "index,snr_db,cc,trrmse,srrmse\n" : "index,snr_db,cc,trrmse,srrmse,truth,chosen\n";
  for (std::size_t i = 0; i < r.records.size(); ++i) {
    const auto& m = r.records[i];
    out += std::to_string(i) + "," + format_double(m.snr_db) + "," + format_double(m.cc) + "," + format_double(m.trrmse) +
           "," + format_double(m.srrmse);
    if (!audit.empty()) out += "," + audit[i].truth.name() + "," + audit[i].chosen.name();
    out += "\n";
  }
  return out;
}

inline std::string routing_csv(MoeVariant v, std::span<const RouteAudit> audit) {
  const auto slots = variant_slots(v);
  std::map<std::pair<ExpertSlot, ExpertSlot>, std::size_t> counts;
  for (const auto& a : audit) ++counts[{a.truth, a.chosen}];
  std::string out = "truth\\chosen";
  for (const auto& s : slots) out += "," + s.name();
  out += "\n";
  for (const auto& t : slots) {
    out += t.name();
    for (const auto& c : slots) {
      const auto it = counts.find({t, c});
      out += "," + std::to_string(it == counts.end() ? 0 : it->second);
    }
    out += "\n";
  }
  return out;
}

inline std::string summary_text(const std::string& title, const BinnedReport& r) {
  std::string out = title + "\n";
  out += "  metric   computed(mean/median/std)     published reference(mean/median/std)\n";
  auto line = [&](const char* name, const Stats& s, const OverallReference& ref) {
    std::string l = std::string("  ") + name;
    l.resize(11, ' ');
    l += fx(s.mean) + " / " + fx(s.median) + " / " + fx(s.std);
    l.resize(41, ' ');
    l += format_fixed(ref.mean, 3) + " / " + format_fixed(ref.median, 3) + " / " + format_fixed(ref.std, 3) + "\n";
    out += l;
  };
  line("CC", r.overall.cc, kReferenceCc);
  line("TRRMSE", r.overall.trrmse, kReferenceTrrmse);
  line("SRRMSE", r.overall.srrmse, kReferenceSrrmse);
  out += "  samples  " + std::to_string(r.total()) + "\n";
  return out;
}

// --- learnability -------------------------------------------------------------------

struct LearnabilityRow {
  EmgType type = EmgType::T1;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  double mean_cc = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double reference_cc = 0.0;
};

struct LearnabilityResult {
  std::array<LearnabilityRow, 3> rows;
  std::array<nn::TrainHistory, 3> histories;
};

/// Mean +- 1.96 standard errors.
inline std::pair<double, double> confidence_interval_95(const Stats& s) {
  const double sem = s.count > 0 ? s.std / std::sqrt(static_cast<double>(s.count)) : 0.0;
  return {s.mean - 1.96 * sem, s.mean + 1.96 * sem};
}

/// One identical correlation-loss CNN per EMG type, each trained and
/// validated on its type-pure subset over the full SNR range.
inline LearnabilityResult learnability_experiment(std::span<const ContaminatedSample> data, const RunConfig& cfg) {
  LearnabilityResult res;
  NetConfig net = cfg.denoiser_cnn;
  net.train.epochs = cfg.experiments.learnability_epochs;
  net.train.loss = nn::LossKind::Correlation;
  net.train.seed = derive_seed(cfg.seed, "learnability/train");
  const std::uint64_t init = derive_seed(cfg.seed, "learnability/init");
  for (EmgType t : kEmgTypes) {
    std::vector<nn::Example> ex;
    for (const auto& s : data) {
      if (s.emg_type == t) ex.push_back({standardize(s.contaminated), s.clean.samples()});
    }
    if (ex.size() < 2) {
      fail(ErrorKind::InsufficientData, "learnability: type " + to_string(t) + " has " + std::to_string(ex.size()) + " samples");
    }
    const nn::Shape shape{1, ex.front().input.size()};
    auto r = nn::train(nn::Model(shape, net.layers, init), ex, net.train);
    const auto split = nn::split_indices(ex.size(), net.train.val_fraction, net.train.seed);
    std::vector<double> ccs;
    for (std::size_t i : split.val) ccs.push_back(nn::detail::cc_or_zero(r.model.forward(ex[i].input), ex[i].target));
    const auto st = summarize(ccs);
    const auto [lo, hi] = confidence_interval_95(st);
    res.rows[index_of(t)] = {t, split.train.size(), split.val.size(), st.mean, lo, hi, kReferenceLearnabilityCc[index_of(t)]};
    res.histories[index_of(t)] = std::move(r.history);
  }
  return res;
}

inline std::string learnability_csv(const LearnabilityResult& r) {
  std::string out = "type,n_train,n_val,mean_cc,ci_lo,ci_hi,reference_cc\n";
  for (const auto& row : r.rows) {
    out += to_string(row.type) + "," + std::to_string(row.n_train) + "," + std::to_string(row.n_val) + "," + fx(row.mean_cc) +
           "," + fx(row.ci_lo) + "," + fx(row.ci_hi) + "," + format_fixed(row.reference_cc, 3) + "\n";
  }
  return out;
}

// --- convergence --------------------------------------------------------------------

struct ConvergenceResult {
  nn::TrainHistory corr_history;
  nn::TrainHistory mse_history;
  std::size_t corr_epochs = 0;  // 0: threshold not reached
  std::size_t mse_epochs = 0;
  std::size_t epoch_cap = 0;
  double threshold = 0.0;
  double amplitude_decades = 0.0;

  bool corr_capped() const { return corr_epochs == 0; }
  bool mse_capped() const { return mse_epochs == 0; }
  /// mse/corr epochs; +inf when only MSE never reaches the threshold.
  double speedup() const {
    if (corr_capped()) return mse_capped() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    if (mse_capped()) return std::numeric_limits<double>::infinity();
    return static_cast<double>(mse_epochs) / static_cast<double>(corr_epochs);
  }
  /// Smallest ratio consistent with the histories.
  double speedup_lower_bound() const {
    if (corr_capped()) return 0.0;
    const double m = mse_capped() ? static_cast<double>(epoch_cap + 1) : static_cast<double>(mse_epochs);
    return m / static_cast<double>(corr_epochs);
  }
  /// Correlation loss needs at most half the MSE epochs.
  bool direction_holds() const {
    if (corr_capped()) return false;
    if (mse_capped()) return true;
    return 2 * corr_epochs <= mse_epochs;
  }
};

/// Toy denoising task: contaminated surrogate segments as input
/// (standardized), clean segments times a per-segment amplitude drawn
/// log-uniformly over `amplitude_decades` as targets.
inline std::vector<nn::Example> convergence_task(const RunConfig& cfg, double amplitude_decades) {
  const auto& d = cfg.data;
  const auto eeg = synth_surrogate_eeg(d.n_clean, d.length, derive_seed(cfg.seed, "convergence/eeg"), d.rate_hz);
  const auto emg = synth_surrogate_emg(d.n_emg, d.length, derive_seed(cfg.seed, "convergence/emg"), d.rate_hz);
  const auto samples = build_dataset(eeg.segments, emg.segments, d.snr_range, cfg.convergence.n_samples,
                                     derive_seed(cfg.seed, "convergence/mix"));
  std::mt19937_64 rng(derive_seed(cfg.seed, "convergence/amplitude"));
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<nn::Example> ex;
  ex.reserve(samples.size());
  for (const auto& s : samples) {
    const double a = std::pow(10.0, amplitude_decades * u(rng));
    auto target = s.clean.samples();
    for (double& v : target) v *= a;
    ex.push_back({standardize(s.contaminated), std::move(target)});
  }
  return ex;
}

/// Identical architecture, initialization, split and optimizer; only the
/// loss differs.
inline ConvergenceResult convergence_experiment(const RunConfig& cfg, std::optional<double> amplitude_decades = {}) {
  ConvergenceResult r;
  r.threshold = cfg.convergence.cc_threshold;
  r.epoch_cap = cfg.convergence.epochs;
  r.amplitude_decades = amplitude_decades.value_or(cfg.convergence.amplitude_decades);
  const auto ex = convergence_task(cfg, r.amplitude_decades);
  nn::TrainConfig tc = cfg.denoiser_cnn.train;
  tc.epochs = cfg.convergence.epochs;
  tc.seed = derive_seed(cfg.seed, "convergence/train");
  const nn::Model init({1, cfg.data.length}, cfg.denoiser_cnn.layers, derive_seed(cfg.seed, "convergence/init"));
  tc.loss = nn::LossKind::Correlation;
  r.corr_history = nn::train(init, ex, tc).history;
  tc.loss = nn::LossKind::MSE;
  r.mse_history = nn::train(init, ex, tc).history;
  r.corr_epochs = r.corr_history.epochs_to_cc(r.threshold);
  r.mse_epochs = r.mse_history.epochs_to_cc(r.threshold);
  return r;
}

inline std::string epochs_label(std::size_t e, std::size_t cap) {
  return e == 0 ? ">" + std::to_string(cap) + " (capped)" : std::to_string(e);
}

inline std::string convergence_csv(const ConvergenceResult& r) {
  std::string out = "epoch,corr_val_cc,mse_val_cc\n";
  for (std::size_t i = 0; i < r.corr_history.epochs.size(); ++i) {
    out += std::to_string(i + 1) + "," + fx(r.corr_history.epochs[i].val_cc) + "," + fx(r.mse_history.epochs[i].val_cc) + "\n";
  }
  return out;
}

inline std::string convergence_text(const ConvergenceResult& r) {
  std::string out = "convergence (amplitude spread " + format_fixed(r.amplitude_decades, 2) + " decades, threshold CC >= " +
                    format_fixed(r.threshold, 2) + ")\n";
  out += "  correlation loss epochs: " + epochs_label(r.corr_epochs, r.epoch_cap) + "\n";
  out += "  MSE loss epochs:         " + epochs_label(r.mse_epochs, r.epoch_cap) + "\n";
  const double sp = r.speedup();
  out += "  speedup: " + (std::isfinite(sp) ? fx(sp) : std::string(std::isnan(sp) ? "undefined" : "inf")) +
         " (lower bound " + fx(r.speedup_lower_bound()) + "; published reference >" + format_fixed(kReferenceSpeedup, 0) + "x)\n";
  return out;
}

// --- ablation -----------------------------------------------------------------------

struct AblationRow {
  MoeVariant variant = MoeVariant::Full7;
  std::size_t experts = 0;
  CtsTriple high_noise{0, 0, 0};
  std::size_t high_noise_count = 0;
  CtsTriple overall{0, 0, 0};
  double routing_accuracy = 0.0;
};

inline CtsTriple cts_of(const MetricStats& m) { return {m.cc.mean, m.trrmse.mean, m.srrmse.mean}; }

/// Builds all four variants over one split with a shared router and a
/// shared expert cache.
inline std::vector<AblationRow> ablation_run(std::span<const ContaminatedSample> train,
                                             std::span<const ContaminatedSample> test, const RunConfig& cfg) {
  const auto router = train_router(MoeVariant::Full7, train, cfg).bundle;
  ExpertCache cache;
  std::vector<AblationRow> rows;
  for (MoeVariant v : kMoeVariants) {
    const auto sys = build_moe(v, train, cfg, &router, nullptr, &cache);
    const auto ev = evaluate_system(sys, test);
    AblationRow row;
    row.variant = v;
    row.experts = sys.experts.size();
    row.high_noise = cts_of(ev.report.bins[0]);
    row.high_noise_count = ev.report.bins[0].cc.count;
    row.overall = cts_of(ev.report.overall);
    row.routing_accuracy = ev.routing_accuracy();
    rows.push_back(row);
  }
  return rows;
}

inline std::string cts(const CtsTriple& t) { return format_fixed(t.cc, 2) + "-" + format_fixed(t.trrmse, 2) + "-" + format_fixed(t.srrmse, 2); }

inline std::string ablation_csv(std::span<const AblationRow> rows) {
  std::string out = "variant,experts,high_noise_n,high_cc,high_trrmse,high_srrmse,overall_cc,overall_trrmse,overall_srrmse,routing_accuracy,reference_high_cts,reference_overall_cts\n";
  out += "baseline_reference,,,,,,,,,," + cts(kAblationReference[0].high_noise) + "," + cts(kAblationReference[0].overall) + "\n";
  for (const auto& r : rows) {
    const auto& ref = kAblationReference[1 + static_cast<std::size_t>(r.variant)];
    out += to_string(r.variant) + "," + std::to_string(r.experts) + "," + std::to_string(r.high_noise_count) + "," +
           fx(r.high_noise.cc) + "," + fx(r.high_noise.trrmse) + "," + fx(r.high_noise.srrmse) + "," + fx(r.overall.cc) + "," +
           fx(r.overall.trrmse) + "," + fx(r.overall.srrmse) + "," + fx(r.routing_accuracy) + "," + cts(ref.high_noise) + "," +
           cts(ref.overall) + "\n";
  }
  return out;
}

// --- latency ------------------------------------------------------------------------

struct LatencyReport {
  std::size_t trials = 0;
  double mean_s = 0.0;
  double std_s = 0.0;  // sample standard deviation
  std::vector<double> samples_s;
};

inline LatencyReport latency_from_samples(std::vector<double> samples) {
  const auto st = summarize(samples);
  return {samples.size(), st.mean, st.std, std::move(samples)};
}

inline bool latency_consistent(const LatencyReport& r, double tol = 1e-12) {
  if (r.trials != r.samples_s.size() || r.trials == 0) return false;
  const auto st = summarize(r.samples_s);
  for (double s : r.samples_s) {
    if (!(s >= 0.0) || !std::isfinite(s)) return false;
  }
  return std::abs(st.mean - r.mean_s) <= tol && std::abs(st.std - r.std_s) <= tol;
}

/// Wall-clock of end-to-end denoise calls on seeded random segments.
inline LatencyReport latency_bench(const MoeSystem& sys, std::size_t trials, std::uint64_t seed) {
  if (trials == 0) fail(ErrorKind::InvalidInput, "latency benchmark needs at least one trial");
  const auto& in = sys.experts.begin()->second.primary.input_shape();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> samples;
  samples.reserve(trials);
  std::vector<double> buf(in.length);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& v : buf) v = g(rng);
    const Segment seg(buf, kDefaultSampleRateHz);
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = moe_denoise(sys, seg);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.denoised.size() != seg.size()) fail(ErrorKind::InvalidState, "denoised length mismatch");
    samples.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return latency_from_samples(std::move(samples));
}

inline std::string latency_csv(const LatencyReport& r) {
  std::string out = "trial,seconds\n";
  for (std::size_t i = 0; i < r.samples_s.size(); ++i) out += std::to_string(i) + "," + format_double(r.samples_s[i]) + "\n";
  return out;
}

inline nlohmann::json latency_json(const LatencyReport& r) {
  return {{"trials", r.trials},
          {"mean_s", r.mean_s},
          {"std_s", r.std_s},
          {"reference_mean_s", kReferenceLatencyMeanS},
          {"reference_std_s", kReferenceLatencyStdS}};
}

// --- standard run ---------------------------------------------------------------------

struct StandardData {
  SegmentPool eeg;
  SegmentPool emg;
  TercileThresholds thresholds;
  DataSplit split;
};

inline StandardData make_standard_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  StandardData sd;
  sd.eeg = synth_surrogate_eeg(d.n_clean, d.length, derive_seed(cfg.seed, "data/eeg"), d.rate_hz);
  sd.emg = synth_surrogate_emg(d.n_emg, d.length, derive_seed(cfg.seed, "data/emg"), d.rate_hz);
  sd.thresholds = compute_terciles(segment_variances(sd.emg.segments));
  const auto all = build_dataset(sd.eeg.segments, sd.emg.segments, d.snr_range, d.n_samples, derive_seed(cfg.seed, "data/mix"),
                                 &sd.thresholds);
  sd.split = split_dataset(all, d.train_ratio, derive_seed(cfg.seed, "data/split"));
  return sd;
}

struct StandardRun {
  StandardData data;
  MoeSystem system;
  BuildLog log;
  SystemEvaluation learned;  // test split, learned routing
  SystemEvaluation oracle;   // test split, ground-truth routing
  ConfusionMatrix type_confusion;
  ConfusionMatrix snr_confusion;
  double validation_cc = 0.0;  // expert validation sets, ground-truth routing
};

inline StandardRun run_standard(const RunConfig& cfg, MoeVariant variant = MoeVariant::Full7) {
  StandardRun r;
  r.data = make_standard_data(cfg);
  r.system = build_moe(variant, r.data.split.train, cfg, nullptr, &r.log);
  r.learned = evaluate_system(r.system, r.data.split.test);
  r.oracle = evaluate_system(r.system, r.data.split.test, true);
  if (r.system.router.type_classifier) r.type_confusion = confusion(*r.system.router.type_classifier, r.data.split.test, RouterTarget::EmgType);
  if (r.system.router.snr_classifier) r.snr_confusion = confusion(*r.system.router.snr_classifier, r.data.split.test, RouterTarget::SnrTier);
  r.validation_cc = aggregate_validation_cc(r.system);
  return r;
}

/// Mean TRRMSE of composed vs raw correlation outputs over CorrPlusRescale
/// validation sets (sample-weighted).
struct RescaleUtility {
  double composed = 0.0;
  double raw = 0.0;
  std::size_t count = 0;
};

inline RescaleUtility rescale_utility(const MoeSystem& s) {
  RescaleUtility u;
  for (const auto& [slot, v] : s.validation) {
    if (kind_for(slot) != ExpertKind::CorrPlusRescale) continue;
    u.composed += v.mean_trrmse * static_cast<double>(v.count);
    u.raw += v.mean_trrmse_raw * static_cast<double>(v.count);
    u.count += v.count;
  }
  if (u.count) {
    u.composed /= static_cast<double>(u.count);
    u.raw /= static_cast<double>(u.count);
  }
  return u;
}

inline nlohmann::json standard_summary(const StandardRun& r, const RunConfig& cfg) {
  nlohmann::json experts = nlohmann::json::object();
  for (const auto& [slot, v] : r.system.validation) experts[slot.name()] = validation_json(v);
  const auto u = rescale_utility(r.system);
  return {{"config_hash", cfg.hash},
          {"variant", to_string(r.system.variant)},
          {"system_checksum", hex64(system_checksum(r.system))},
          {"n_train", r.data.split.train.size()},
          {"n_test", r.data.split.test.size()},
          {"type_accuracy", r.type_confusion.accuracy()},
          {"snr_accuracy", r.snr_confusion.accuracy()},
          {"routing_accuracy", r.learned.routing_accuracy()},
          {"test_cc_learned", r.learned.report.overall.cc.mean},
          {"test_cc_oracle", r.oracle.report.overall.cc.mean},
          {"validation_cc_oracle", r.validation_cc},
          {"oracle_gap", r.validation_cc - r.learned.report.overall.cc.mean},
          {"rescale_trrmse_composed", u.composed},
          {"rescale_trrmse_raw", u.raw},
          {"experts", experts},
          {"reference",
           {{"type_accuracy", kReferenceTypeAccuracy},
            {"snr_accuracy", kReferenceSnrAccuracy},
            {"cc_mean", kReferenceCc.mean},
            {"cc_median", kReferenceCc.median}}}};
}

/// Writes every deterministic artifact of a standard run. Timing columns
/// are omitted so reruns are byte-identical.
inline void write_standard_run(const std::string& dir, const StandardRun& r, const RunConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  fs::create_directories(base / "reports");
  DatasetManifest m;
  m.seed = cfg.seed;
  m.snr_range = cfg.data.snr_range;
  m.thresholds = r.data.thresholds;
  m.config_hash = cfg.hash;
  write_dataset((base / "data").string(), m, {{"train", r.data.split.train}, {"test", r.data.split.test}});
  save_system((base / "system").string(), r.system);
  const auto rep = base / "reports";
  write_file((rep / "test_binned.csv").string(), binned_csv(r.learned.report));
  write_file((rep / "test_records.csv").string(), records_csv(r.learned.report, r.learned.audit));
  write_file((rep / "oracle_binned.csv").string(), binned_csv(r.oracle.report));
  write_file((rep / "routing.csv").string(), routing_csv(r.system.variant, r.learned.audit));
  if (r.system.router.type_classifier) write_file((rep / "confusion_type.csv").string(), confusion_csv(r.type_confusion, RouterTarget::EmgType));
  if (r.system.router.snr_classifier) write_file((rep / "confusion_snr.csv").string(), confusion_csv(r.snr_confusion, RouterTarget::SnrTier));
  if (r.log.type_history) write_file((rep / "history_router_type.csv").string(), nn::history_csv(*r.log.type_history, false));
  if (r.log.snr_history) write_file((rep / "history_router_snr.csv").string(), nn::history_csv(*r.log.snr_history, false));
  for (const auto& [slot, h] : r.log.expert_history) write_file((rep / ("history_expert_" + slot.name() + ".csv")).string(), nn::history_csv(h, false));
  for (const auto& [slot, h] : r.log.rescale_history) write_file((rep / ("history_rescale_" + slot.name() + ".csv")).string(), nn::history_csv(h, false));
  write_file((rep / "summary.json").string(), standard_summary(r, cfg).dump(2) + "\n");
  write_file((rep / "summary.txt").string(), summary_text("test set, learned routing", r.learned.report) +
                                                 summary_text("test set, ground-truth routing", r.oracle.report));
}

}  // namespace emgmoe
