#pragma once

// Run configuration: one JSON document holding the data recipe, every
// network's architecture and training settings, and experiment knobs.
// Its hash (FNV-1a of the canonical dump) is stamped into artifacts.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emgmoe/contamination.hpp"
#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"
#include "emgmoe/nn/loss.hpp"
#include "emgmoe/nn/model.hpp"
#include "emgmoe/nn/train.hpp"

namespace emgmoe {

enum class RescaleMode { MeanStd, MinMax };

inline std::string to_string(RescaleMode m) { return m == RescaleMode::MeanStd ? "mean_std" : "min_max"; }

inline RescaleMode parse_rescale_mode(std::string_view s) {
  if (s == "mean_std") return RescaleMode::MeanStd;
  if (s == "min_max") return RescaleMode::MinMax;
  fail(ErrorKind::Format, "unknown rescale mode '" + std::string(s) + "'");
}

struct NetConfig {
  std::vector<nn::LayerSpec> layers;
  nn::TrainConfig train;
};

struct DataConfig {
  std::size_t n_clean = 400;
  std::size_t n_emg = 400;
  std::size_t length = kDefaultSegmentLength;
  double rate_hz = kDefaultSampleRateHz;
  std::size_t n_samples = 2000;
  SnrRange snr_range;
  double train_ratio = 0.9;
};

struct ConvergenceConfig {
  std::size_t n_samples = 400;
  std::size_t epochs = 40;
  double cc_threshold = 0.80;
  // Clean amplitudes drawn log-uniformly over this many decades, centred
  // on 1; 0 gives unit-variance targets.
  double amplitude_decades = 1.0;
};

struct ExperimentConfig {
  std::size_t learnability_epochs = 10;
  std::size_t latency_trials = 1000;
};

struct RunConfig {
  std::uint64_t seed = 7;
  DataConfig data;
  NetConfig denoiser_cnn;
  NetConfig rescale_rnn;
  NetConfig mse_rnn;
  NetConfig classifier;
  RescaleMode rescale_mode = RescaleMode::MeanStd;
  ConvergenceConfig convergence;
  ExperimentConfig experiments;
  std::string hash;
};

/// Deterministic sub-seed from a base seed and a role tag.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
  return fnv1a(tag, 0xcbf29ce484222325ULL ^ (base * 0x9e3779b97f4a7c15ULL));
}

namespace detail {

inline NetConfig parse_net(const nlohmann::json& j, const std::string& name) {
  NetConfig n;
  for (const auto& l : j.at("layers")) n.layers.push_back(nn::parse_layer(l.get<std::string>()));
  if (n.layers.empty()) fail(ErrorKind::InvalidInput, name + ": no layers");
  const auto& t = j.at("train");
  n.train.epochs = t.value("epochs", n.train.epochs);
  n.train.batch_size = t.value("batch_size", n.train.batch_size);
  n.train.val_fraction = t.value("val_fraction", n.train.val_fraction);
  n.train.loss = nn::parse_loss(t.value("loss", std::string("mse")));
  n.train.optimizer.kind = nn::parse_optimizer(t.value("optimizer", std::string("adam")));
  n.train.optimizer.learning_rate = t.value("learning_rate", n.train.optimizer.learning_rate);
  n.train.optimizer.beta1 = t.value("beta1", n.train.optimizer.beta1);
  n.train.optimizer.beta2 = t.value("beta2", n.train.optimizer.beta2);
  n.train.optimizer.eps = t.value("eps", n.train.optimizer.eps);
  nn::validate(n.train);
  return n;
}

}  // namespace detail

inline std::string config_hash(const nlohmann::json& j) { return hex64(fnv1a(j.dump())); }

inline RunConfig parse_config(const nlohmann::json& j) {
  try {
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    if (j.contains("data")) {
      const auto& d = j.at("data");
      c.data.n_clean = d.value("n_clean", c.data.n_clean);
      c.data.n_emg = d.value("n_emg", c.data.n_emg);
      c.data.length = d.value("length", c.data.length);
      c.data.rate_hz = d.value("rate_hz", c.data.rate_hz);
      c.data.n_samples = d.value("n_samples", c.data.n_samples);
      c.data.train_ratio = d.value("train_ratio", c.data.train_ratio);
      if (d.contains("snr_range")) c.data.snr_range = {d.at("snr_range").at(0).get<double>(), d.at("snr_range").at(1).get<double>()};
    }
    c.denoiser_cnn = detail::parse_net(j.at("denoiser_cnn"), "denoiser_cnn");
    c.rescale_rnn = detail::parse_net(j.at("rescale_rnn"), "rescale_rnn");
    c.mse_rnn = detail::parse_net(j.at("mse_rnn"), "mse_rnn");
    c.classifier = detail::parse_net(j.at("classifier"), "classifier");
    // Loss per species is fixed; the config cannot override it.
    c.denoiser_cnn.train.loss = nn::LossKind::Correlation;
    c.rescale_rnn.train.loss = nn::LossKind::MSE;
    c.mse_rnn.train.loss = nn::LossKind::MSE;
    c.classifier.train.loss = nn::LossKind::CrossEntropy;
    c.rescale_mode = parse_rescale_mode(j.value("rescale_mode", std::string("mean_std")));
    if (j.contains("convergence")) {
      const auto& v = j.at("convergence");
      c.convergence.n_samples = v.value("n_samples", c.convergence.n_samples);
      c.convergence.epochs = v.value("epochs", c.convergence.epochs);
      c.convergence.cc_threshold = v.value("cc_threshold", c.convergence.cc_threshold);
      c.convergence.amplitude_decades = v.value("amplitude_decades", c.convergence.amplitude_decades);
    }
    if (j.contains("experiments")) {
      const auto& e = j.at("experiments");
      c.experiments.learnability_epochs = e.value("learnability_epochs", c.experiments.learnability_epochs);
      c.experiments.latency_trials = e.value("latency_trials", c.experiments.latency_trials);
    }
    if (c.data.train_ratio <= 0.0 || c.data.train_ratio >= 1.0) fail(ErrorKind::InvalidInput, "train_ratio must be in (0,1)");
    c.hash = config_hash(j);
    return c;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::InvalidInput, std::string("config: ") + e.what());
  }
}

inline RunConfig load_config(const std::string& path) {
  try {
    return parse_config(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::InvalidInput, "config '" + path + "': " + e.what());
  }
}

}  // namespace emgmoe
