#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>

#include "photon_scale/errors.hpp"

namespace photon_scale {

/// Fraction of predictions equal to their label.
template <typename Label>
double top1_accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
  if (predictions.empty()) throw DomainError("top1_accuracy: empty input");
  if (predictions.size() != labels.size()) throw InvalidInput("top1_accuracy: length mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(predictions.size());
}

struct DepthMetrics {
  double rel = 0.0;
  double rms = 0.0;
  double log10 = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
};

/// Standard monocular-depth errors. rel uses |y - y_hat| / y per pixel; the
/// delta thresholds 1.25^i are strict.
inline DepthMetrics depth_metrics(std::span<const double> truth, std::span<const double> prediction) {
  if (truth.size() != prediction.size()) throw InvalidInput("depth_metrics: size mismatch");
  if (truth.empty()) throw InvalidInput("depth_metrics: empty depth maps");
  DepthMetrics m;
  double sq = 0.0;
  std::size_t d1 = 0, d2 = 0, d3 = 0;
  constexpr double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t p = 0; p < truth.size(); ++p) {
    const double y = truth[p];
    const double yh = prediction[p];
    if (!(y > 0.0) || !(yh > 0.0) || !std::isfinite(y) || !std::isfinite(yh))
      throw DomainError("depth_metrics: depths must be positive and finite");
    m.rel += std::fabs(y - yh) / y;
    sq += (y - yh) * (y - yh);
    m.log10 += std::fabs(std::log10(y) - std::log10(yh));
    const double ratio = std::max(y / yh, yh / y);
    d1 += ratio < t1;
    d2 += ratio < t2;
    d3 += ratio < t3;
  }
  const auto n = static_cast<double>(truth.size());
  m.rel /= n;
  m.rms = std::sqrt(sq / n);
  m.log10 /= n;
  m.delta1 = static_cast<double>(d1) / n;
  m.delta2 = static_cast<double>(d2) / n;
  m.delta3 = static_cast<double>(d3) / n;
  return m;
}

}  // namespace photon_scale
