#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "emgmoe/error.hpp"

namespace emgmoe::nn {

enum class LossKind { Correlation, MSE, CrossEntropy };

inline std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::Correlation: return "correlation";
    case LossKind::MSE: return "mse";
    case LossKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "correlation") return LossKind::Correlation;
  if (s == "mse") return LossKind::MSE;
  if (s == "cross_entropy") return LossKind::CrossEntropy;
  fail(ErrorKind::Format, "unknown loss '" + std::string(s) + "'");
}

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d pred
};

inline constexpr double kCorrelationEps = 1e-8;

/// 1 - cov(p, t) / (std(p) * std(t) + eps), population statistics.
/// Total: a constant prediction gets a finite loss and gradient.
inline LossResult correlation_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.size() < 2) {
    fail(ErrorKind::InvalidInput, "correlation loss needs equal lengths >= 2");
  }
  const std::size_t n = pred.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    mt += target[i];
  }
  mp *= inv_n;
  mt *= inv_n;
  double cov = 0.0, vp = 0.0, vt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = pred[i] - mp;
    const double dt = target[i] - mt;
    cov += dp * dt;
    vp += dp * dp;
    vt += dt * dt;
  }
  cov *= inv_n;
  const double sp = std::sqrt(vp * inv_n);
  const double st = std::sqrt(vt * inv_n);
  const double denom = sp * st + kCorrelationEps;
  const double c = cov / denom;

  LossResult r;
  r.loss = 1.0 - c;
  r.grad.resize(n);
  // dc/dp_i = (dt_i/n) / denom - cov * st * (dp_i / (n sp)) / denom^2
  const double a = inv_n / denom;
  const double b = sp > 0.0 ? cov * st * inv_n / (sp * denom * denom) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r.grad[i] = -(a * (target[i] - mt) - b * (pred[i] - mp));
  }
  return r;
}

inline LossResult mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorKind::InvalidInput, "mse needs equal nonzero lengths");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  LossResult r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d * inv_n;
  }
  r.loss *= inv_n;
  return r;
}

/// -sum t_i log p_i over probabilities `pred` (softmax output).
inline LossResult cross_entropy_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size() || pred.empty()) fail(ErrorKind::InvalidInput, "cross entropy length mismatch");
  constexpr double kFloor = 1e-12;
  LossResult r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::max(pred[i], kFloor);
    r.loss -= target[i] * std::log(p);
    r.grad[i] = pred[i] > kFloor ? -target[i] / pred[i] : 0.0;
  }
  return r;
}

inline LossResult compute_loss(LossKind kind, std::span<const double> pred, std::span<const double> target) {
  switch (kind) {
    case LossKind::Correlation: return correlation_loss(pred, target);
    case LossKind::MSE: return mse_loss(pred, target);
    case LossKind::CrossEntropy: return cross_entropy_loss(pred, target);
  }
  fail(ErrorKind::InvalidInput, "unknown loss");
}

}  // namespace emgmoe::nn
