#pragma once

// Deterministic mini-batch training loop.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "emgmoe/error.hpp"
#include "emgmoe/format.hpp"
#include "emgmoe/nn/loss.hpp"
#include "emgmoe/nn/model.hpp"
#include "emgmoe/nn/optim.hpp"
#include "emgmoe/signal.hpp"

namespace emgmoe::nn {

struct Example {
  std::vector<double> input;
  std::vector<double> target;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  OptimizerConfig optimizer;
  LossKind loss = LossKind::MSE;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_cc = 0.0;        // NaN for cross-entropy training
  double val_accuracy = 0.0;  // cross-entropy only, NaN otherwise
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;

  /// First epoch whose validation CC reaches `threshold`, or 0 if none.
  std::size_t epochs_to_cc(double threshold) const {
    for (const auto& e : epochs) {
      if (e.val_cc >= threshold) return e.epoch;
    }
    return 0;
  }
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle of 0..n-1; the first round(n * val_fraction) indices
/// (at least one) form the validation set.
inline SplitIndices split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  if (n < 2) fail(ErrorKind::InvalidInput, "need at least 2 examples for a train/validation split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t nv = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  nv = std::clamp<std::size_t>(nv, 1, n - 1);
  SplitIndices s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(nv));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(nv), idx.end());
  return s;
}

inline void validate(const TrainConfig& c) {
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) fail(ErrorKind::InvalidInput, "val_fraction must be in (0, 1)");
  if (c.batch_size == 0) fail(ErrorKind::InvalidInput, "batch_size must be >= 1");
  if (!(c.optimizer.learning_rate > 0.0)) fail(ErrorKind::InvalidInput, "learning_rate must be positive");
}

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

namespace detail {

inline double cc_or_zero(std::span<const double> a, std::span<const double> b) {
  if (emgmoe::detail::is_constant(a) || emgmoe::detail::is_constant(b)) return 0.0;
  return pearson_cc(a, b);
}

}  // namespace detail

/// Validation loss, mean CC (or accuracy for cross-entropy) on `indices`.
inline EpochRecord evaluate_examples(const Model& model, std::span<const Example> data,
                                     std::span<const std::size_t> indices, LossKind loss) {
  EpochRecord r;
  double acc_loss = 0.0, acc_cc = 0.0, hits = 0.0;
  for (std::size_t i : indices) {
    const auto pred = model.forward(data[i].input);
    acc_loss += compute_loss(loss, pred, data[i].target).loss;
    if (loss == LossKind::CrossEntropy) {
      hits += argmax(pred) == argmax(data[i].target) ? 1.0 : 0.0;
    } else {
      acc_cc += detail::cc_or_zero(pred, data[i].target);
    }
  }
  const double n = static_cast<double>(indices.size());
  r.val_loss = acc_loss / n;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.val_cc = loss == LossKind::CrossEntropy ? nan : acc_cc / n;
  r.val_accuracy = loss == LossKind::CrossEntropy ? hits / n : nan;
  return r;
}

/// Trains on a seeded train/validation split of `data`. The split depends
/// only on (data.size(), val_fraction, seed), so models trained with the
/// same config on the same data share validation sets.
inline TrainResult train(Model model, std::span<const Example> data, const TrainConfig& config) {
  validate(config);
  TrainResult result{std::move(model), {}};
  if (config.epochs == 0) return result;
  if (data.empty()) fail(ErrorKind::InvalidInput, "empty training set");
  Model& m = result.model;
  for (const auto& ex : data) {
    if (ex.input.size() != m.input_shape().size() || ex.target.size() != m.output_shape().size()) {
      fail(ErrorKind::Shape, "example shape does not match model");
    }
  }
  const SplitIndices split = split_indices(data.size(), config.val_fraction, config.seed);
  std::vector<std::size_t> order = split.train;
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  Optimizer opt(config.optimizer, m.num_params());
  std::vector<double> grad(m.num_params());
  Trace tr;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const Example& ex = data[order[k]];
        m.forward_trace(ex.input, tr);
        LossResult lr = compute_loss(config.loss, tr.acts.back(), ex.target);
        if (!std::isfinite(lr.loss)) {
          fail(ErrorKind::Diverged, "non-finite loss in epoch " + std::to_string(epoch));
        }
        loss_sum += lr.loss;
        for (double& g : lr.grad) g *= scale;
        m.backward(tr, lr.grad, grad);
      }
      opt.step(m.params(), grad);
    }
    EpochRecord rec = evaluate_examples(m, data, split.val, config.loss);
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      fail(ErrorKind::Diverged, "non-finite loss in epoch " + std::to_string(epoch));
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
  }
  return result;
}

/// CSV: epoch,train_loss,val_loss,val_cc,seconds
inline std::string history_csv(const TrainHistory& h, bool with_timing = true) {
  std::string out = with_timing ? "epoch,train_loss,val_loss,val_cc,seconds\n" : "epoch,train_loss,val_loss,val_cc\n";
  for (const auto& e : h.epochs) {
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," + format_double(e.val_loss) + "," +
           format_double(std::isnan(e.val_cc) ? e.val_accuracy : e.val_cc);
    if (with_timing) out += "," + format_double(e.seconds);
    out += "\n";
  }
  return out;
}

/// Central finite differences against backprop on up to `coordinates`
/// randomly chosen parameters; returns the max relative error.
inline double gradient_check(const Model& model, LossKind loss, std::span<const double> input,
                             std::span<const double> target, std::size_t coordinates = 200, std::uint64_t seed = 1,
                             double h = 1e-5) {
  Model m = model;
  Trace tr;
  m.forward_trace(input, tr);
  const LossResult lr = compute_loss(loss, tr.acts.back(), target);
  std::vector<double> grad(m.num_params(), 0.0);
  m.backward(tr, lr.grad, grad);

  std::vector<std::size_t> coords(m.num_params());
  std::iota(coords.begin(), coords.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(coords.begin(), coords.end(), rng);
  if (coords.size() > coordinates) coords.resize(coordinates);

  double worst = 0.0;
  for (std::size_t c : coords) {
    const double orig = m.params()[c];
    m.params()[c] = orig + h;
    const double lp = compute_loss(loss, m.forward(input), target).loss;
    m.params()[c] = orig - h;
    const double lm = compute_loss(loss, m.forward(input), target).loss;
    m.params()[c] = orig;
    const double numeric = (lp - lm) / (2.0 * h);
    // Floor sized above the central-difference roundoff (~eps * loss / h),
    // so coordinates with a true gradient of zero do not dominate.
    const double denom = std::max({std::abs(numeric), std::abs(grad[c]), 1e-6});
    worst = std::max(worst, std::abs(numeric - grad[c]) / denom);
  }
  return worst;
}

}  // namespace emgmoe::nn
