#pragma once

// Shared-weight classifier used for guided training on photon scale spaces.
//
//   input (C x H x W)
//   -> conv 3x3 stride 2 pad 1, conv1 channels, softplus
//   -> conv 3x3 stride 2 pad 1, conv2 channels, softplus
//   -> global average pool            => feature vector (conv2 entries)
//   -> affine                          => class logits
//
// All parameters live in one flat vector; every "branch" of a scale space
// is just another evaluation of the same vector. Gradients are written out
// by hand and checked against finite differences in the tests.

#include <cmath>
#include <numbers>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "photon_scale/errors.hpp"
#include "photon_scale/parallel.hpp"

namespace photon_scale {

enum class Activation : std::uint32_t { softplus = 0, identity = 1 };

struct NetShape {
  std::size_t in_width = 32;
  std::size_t in_height = 32;
  std::size_t in_channels = 1;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;  ///< feature dimension
  std::size_t classes = 4;
  Activation activation = Activation::softplus;

  static constexpr std::size_t conv_out(std::size_t in) noexcept { return (in + 1) / 2; }

  [[nodiscard]] std::size_t h1() const noexcept { return conv_out(in_height); }
  [[nodiscard]] std::size_t w1() const noexcept { return conv_out(in_width); }
  [[nodiscard]] std::size_t h2() const noexcept { return conv_out(h1()); }
  [[nodiscard]] std::size_t w2() const noexcept { return conv_out(w1()); }
  [[nodiscard]] std::size_t input_size() const noexcept { return in_channels * in_height * in_width; }
  [[nodiscard]] std::size_t feature_dim() const noexcept { return conv2; }

  // Flat parameter layout: w1 b1 w2 b2 wf bf.
  [[nodiscard]] std::size_t w1_offset() const noexcept { return 0; }
  [[nodiscard]] std::size_t b1_offset() const noexcept { return conv1 * in_channels * 9; }
  [[nodiscard]] std::size_t w2_offset() const noexcept { return b1_offset() + conv1; }
  [[nodiscard]] std::size_t b2_offset() const noexcept { return w2_offset() + conv2 * conv1 * 9; }
  [[nodiscard]] std::size_t wf_offset() const noexcept { return b2_offset() + conv2; }
  [[nodiscard]] std::size_t bf_offset() const noexcept { return wf_offset() + classes * conv2; }
  [[nodiscard]] std::size_t param_count() const noexcept { return bf_offset() + classes; }

  void validate() const {
    if (in_width == 0 || in_height == 0 || in_channels == 0 || conv1 == 0 || conv2 == 0 || classes == 0)
      throw InvalidInput("network shape has a zero dimension");
  }

  bool operator==(const NetShape&) const = default;
};

struct ToyNetwork {
  NetShape shape;
  std::vector<double> params;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static ToyNetwork initialize(const NetShape& shape, std::uint64_t seed) {
    shape.validate();
    ToyNetwork net{shape, std::vector<double>(shape.param_count(), 0.0)};
    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t offset, std::size_t count, std::size_t fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (std::size_t i = 0; i < count; ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        net.params[offset + i] = (2.0 * u - 1.0) * bound;
      }
    };
    fill(shape.w1_offset(), shape.b1_offset(), shape.in_channels * 9);
    fill(shape.w2_offset(), shape.b2_offset() - shape.w2_offset(), shape.conv1 * 9);
    fill(shape.wf_offset(), shape.bf_offset() - shape.wf_offset(), shape.conv2);
    return net;
  }

  bool operator==(const ToyNetwork&) const = default;
};

namespace detail {

inline double activate(double x, Activation a) noexcept {
  if (a == Activation::identity) return x;
  // Softplus shifted by ln 2 so that activate(0) = 0.
  return (x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x))) - std::numbers::ln2;
}

inline double activate_grad(double x, Activation a) noexcept {
  if (a == Activation::identity) return 1.0;
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// 3x3 stride-2 zero-padded convolution, CHW layout.
inline void conv_forward(std::span<const double> in, std::size_t cin, std::size_t hin, std::size_t win,
                         std::span<const double> weights, std::span<const double> bias, std::size_t cout,
                         std::span<double> out) {
  const std::size_t hout = NetShape::conv_out(hin), wout = NetShape::conv_out(win);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t oy = 0; oy < hout; ++oy) {
      for (std::size_t ox = 0; ox < wout; ++ox) {
        double acc = bias[o];
        for (std::size_t c = 0; c < cin; ++c) {
          const double* w = &weights[(o * cin + c) * 9];
          const double* plane = &in[c * hin * win];
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(2 * oy + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hin)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(2 * ox + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(win)) continue;
              acc += w[ky * 3 + kx] * plane[iy * static_cast<std::ptrdiff_t>(win) + ix];
            }
          }
        }
        out[(o * hout + oy) * wout + ox] = acc;
      }
    }
  }
}

/// Accumulates weight/bias gradients and, when d_in is non-empty, the input gradient.
inline void conv_backward(std::span<const double> in, std::size_t cin, std::size_t hin, std::size_t win,
                          std::span<const double> weights, std::size_t cout, std::span<const double> d_out,
                          std::span<double> d_weights, std::span<double> d_bias, std::span<double> d_in) {
  const std::size_t hout = NetShape::conv_out(hin), wout = NetShape::conv_out(win);
  for (std::size_t o = 0; o < cout; ++o) {
    for (std::size_t oy = 0; oy < hout; ++oy) {
      for (std::size_t ox = 0; ox < wout; ++ox) {
        const double g = d_out[(o * hout + oy) * wout + ox];
        d_bias[o] += g;
        for (std::size_t c = 0; c < cin; ++c) {
          const std::size_t wbase = (o * cin + c) * 9;
          const std::size_t pbase = c * hin * win;
          for (std::size_t ky = 0; ky < 3; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(2 * oy + ky) - 1;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(hin)) continue;
            for (std::size_t kx = 0; kx < 3; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(2 * ox + kx) - 1;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(win)) continue;
              const std::size_t pi = pbase + static_cast<std::size_t>(iy) * win + static_cast<std::size_t>(ix);
              d_weights[wbase + ky * 3 + kx] += g * in[pi];
              if (!d_in.empty()) d_in[pi] += g * weights[wbase + ky * 3 + kx];
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Intermediate activations of one forward pass, kept for backprop.
struct ForwardPass {
  std::vector<double> pre1, act1, pre2, act2;
  std::vector<double> feature;
  std::vector<double> logits;
};

inline ForwardPass forward_pass(const ToyNetwork& net, std::span<const double> image) {
  const NetShape& s = net.shape;
  if (image.size() != s.input_size())
    throw InvalidInput("forward: input has " + std::to_string(image.size()) + " values, network expects " +
                       std::to_string(s.input_size()));
  if (net.params.size() != s.param_count()) throw InvalidInput("forward: parameter count does not match shape");
  const std::span<const double> p = net.params;
  ForwardPass f;
  const std::size_t n1 = s.conv1 * s.h1() * s.w1();
  const std::size_t n2 = s.conv2 * s.h2() * s.w2();
  f.pre1.resize(n1);
  f.act1.resize(n1);
  f.pre2.resize(n2);
  f.act2.resize(n2);

  detail::conv_forward(image, s.in_channels, s.in_height, s.in_width, p.subspan(s.w1_offset(), s.b1_offset()),
                       p.subspan(s.b1_offset(), s.conv1), s.conv1, f.pre1);
  for (std::size_t i = 0; i < n1; ++i) f.act1[i] = detail::activate(f.pre1[i], s.activation);
  detail::conv_forward(f.act1, s.conv1, s.h1(), s.w1(), p.subspan(s.w2_offset(), s.b2_offset() - s.w2_offset()),
                       p.subspan(s.b2_offset(), s.conv2), s.conv2, f.pre2);
  for (std::size_t i = 0; i < n2; ++i) f.act2[i] = detail::activate(f.pre2[i], s.activation);

  const std::size_t spatial = s.h2() * s.w2();
  f.feature.assign(s.conv2, 0.0);
  for (std::size_t c = 0; c < s.conv2; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < spatial; ++i) acc += f.act2[c * spatial + i];
    f.feature[c] = acc / static_cast<double>(spatial);
  }
  f.logits.assign(s.classes, 0.0);
  for (std::size_t k = 0; k < s.classes; ++k) {
    double acc = p[s.bf_offset() + k];
    for (std::size_t j = 0; j < s.conv2; ++j) acc += p[s.wf_offset() + k * s.conv2 + j] * f.feature[j];
    f.logits[k] = acc;
  }
  return f;
}

struct NetOutput {
  std::vector<double> feature;
  std::vector<double> logits;
};

inline NetOutput forward(const ToyNetwork& net, std::span<const double> image) {
  auto f = forward_pass(net, image);
  return {std::move(f.feature), std::move(f.logits)};
}

/// Adds d(loss)/d(params) for one image to `grads`, given the loss gradients
/// with respect to that image's feature vector and logits.
inline void backward(const ToyNetwork& net, std::span<const double> image, const ForwardPass& f,
                     std::span<const double> d_feature, std::span<const double> d_logits, std::span<double> grads) {
  const NetShape& s = net.shape;
  const std::span<const double> p = net.params;
  if (grads.size() != s.param_count()) throw InvalidInput("backward: gradient buffer has the wrong size");

  std::vector<double> d_feat(d_feature.begin(), d_feature.end());
  if (d_feat.empty()) d_feat.assign(s.conv2, 0.0);
  for (std::size_t k = 0; k < s.classes; ++k) {
    const double g = d_logits.empty() ? 0.0 : d_logits[k];
    grads[s.bf_offset() + k] += g;
    for (std::size_t j = 0; j < s.conv2; ++j) {
      grads[s.wf_offset() + k * s.conv2 + j] += g * f.feature[j];
      d_feat[j] += g * p[s.wf_offset() + k * s.conv2 + j];
    }
  }

  const std::size_t spatial = s.h2() * s.w2();
  std::vector<double> d_pre2(f.pre2.size());
  for (std::size_t c = 0; c < s.conv2; ++c) {
    const double g = d_feat[c] / static_cast<double>(spatial);
    for (std::size_t i = 0; i < spatial; ++i)
      d_pre2[c * spatial + i] = g * detail::activate_grad(f.pre2[c * spatial + i], s.activation);
  }

  std::vector<double> d_act1(f.act1.size(), 0.0);
  detail::conv_backward(f.act1, s.conv1, s.h1(), s.w1(), p.subspan(s.w2_offset(), s.b2_offset() - s.w2_offset()),
                        s.conv2, d_pre2, grads.subspan(s.w2_offset(), s.b2_offset() - s.w2_offset()),
                        grads.subspan(s.b2_offset(), s.conv2), d_act1);

  std::vector<double> d_pre1(f.pre1.size());
  for (std::size_t i = 0; i < d_pre1.size(); ++i)
    d_pre1[i] = d_act1[i] * detail::activate_grad(f.pre1[i], s.activation);
  detail::conv_backward(image, s.in_channels, s.in_height, s.in_width, p.subspan(s.w1_offset(), s.b1_offset()),
                        s.conv1, d_pre1, grads.subspan(s.w1_offset(), s.b1_offset()),
                        grads.subspan(s.b1_offset(), s.conv1), {});
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Softmax cross-entropy, stabilised by subtracting the max logit.
inline double cross_entropy_loss(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw DomainError("cross_entropy_loss: label out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return std::log(sum) - (logits[label] - mx);
}

/// d(CE)/d(logits) = softmax - onehot.
inline std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw DomainError("cross_entropy_grad: label out of range");
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> g(logits.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) sum += (g[k] = std::exp(logits[k] - mx));
  for (std::size_t k = 0; k < logits.size(); ++k) g[k] /= sum;
  g[label] -= 1.0;
  return g;
}

using FeatureGroup = std::vector<std::vector<double>>;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidInput("feature vectors differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

/// Number of unordered same-scene pairs.
inline std::size_t same_scene_pairs(std::span<const FeatureGroup> groups) noexcept {
  std::size_t pairs = 0;
  for (const auto& g : groups) pairs += g.size() * (g.size() - (g.empty() ? 0 : 1)) / 2;
  return pairs;
}

/// Mean squared L2 distance over unordered same-scene pairs. A batch with no
/// pairs (all singleton groups) has loss 0.
inline double feature_consistency_loss(std::span<const FeatureGroup> groups) {
  if (groups.empty()) throw InvalidInput("feature_consistency_loss: no groups");
  const std::size_t pairs = same_scene_pairs(groups);
  if (pairs == 0) return 0.0;
  double total = 0.0;
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = i + 1; j < g.size(); ++j) total += squared_distance(g[i], g[j]);
  return total / static_cast<double>(pairs);
}

/// Gradient of feature_consistency_loss with respect to every feature vector,
/// shaped like `groups`.
inline std::vector<FeatureGroup> feature_consistency_grad(std::span<const FeatureGroup> groups) {
  std::vector<FeatureGroup> grads;
  grads.reserve(groups.size());
  const std::size_t pairs = same_scene_pairs(groups);
  for (const auto& g : groups) {
    FeatureGroup gg(g.size(), std::vector<double>(g.empty() ? 0 : g.front().size(), 0.0));
    if (pairs > 0) {
      const double scale = 2.0 / static_cast<double>(pairs);
      for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g.size(); ++j)
          if (i != j)
            for (std::size_t d = 0; d < g[i].size(); ++d) gg[i][d] += scale * (g[i][d] - g[j][d]);
    }
    grads.push_back(std::move(gg));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batches and the combined objective
// ---------------------------------------------------------------------------

struct SceneGroup {
  std::string scene_id;
  std::size_t label = 0;
  std::vector<std::vector<double>> images;  ///< one per level, normalised by N
};

struct ScaleSpaceBatch {
  std::vector<SceneGroup> groups;

  [[nodiscard]] std::size_t image_count() const noexcept {
    std::size_t n = 0;
    for (const auto& g : groups) n += g.images.size();
    return n;
  }
};

struct LossReport {
  double loss = 0.0;
  double ce = 0.0;           ///< mean CE over every image of every level
  double feature_mse = 0.0;  ///< feature_consistency_loss of the batch
  std::size_t pairs = 0;
  std::size_t correct = 0;   ///< argmax(logits) == label
  std::size_t images = 0;
  std::vector<double> grads;
};

/// loss = mean CE over all images + lambda * feature_consistency_loss, and its
/// exact gradient. Per-image backward passes may run in parallel; their
/// contributions are summed in batch order, so the result does not depend
/// on the thread count. When `per_image` is given it receives each image's
/// gradient contribution (group-major order).
inline LossReport combined_loss_and_gradients(const ToyNetwork& net, const ScaleSpaceBatch& batch, double lambda,
                                              std::vector<std::vector<double>>* per_image = nullptr,
                                              unsigned threads = default_thread_count()) {
  if (batch.groups.empty()) throw InvalidInput("combined_loss: empty batch");
  struct Slot {
    std::size_t group, level;
  };
  std::vector<Slot> slots;
  for (std::size_t g = 0; g < batch.groups.size(); ++g) {
    if (batch.groups[g].images.empty()) throw InvalidInput("combined_loss: scene group without images");
    for (std::size_t l = 0; l < batch.groups[g].images.size(); ++l) slots.push_back({g, l});
  }
  const std::size_t m = slots.size();

  std::vector<ForwardPass> passes(m);
  parallel_for(
      m, [&](std::size_t i) { passes[i] = forward_pass(net, batch.groups[slots[i].group].images[slots[i].level]); },
      threads);

  LossReport report;
  report.images = m;
  std::vector<FeatureGroup> features(batch.groups.size());
  for (std::size_t i = 0; i < m; ++i) {
    const auto& sg = batch.groups[slots[i].group];
    report.ce += cross_entropy_loss(passes[i].logits, sg.label);
    std::size_t best = 0;
    for (std::size_t k = 1; k < passes[i].logits.size(); ++k)
      if (passes[i].logits[k] > passes[i].logits[best]) best = k;
    report.correct += best == sg.label;
    features[slots[i].group].push_back(passes[i].feature);
  }
  report.ce /= static_cast<double>(m);
  report.pairs = same_scene_pairs(features);
  report.feature_mse = feature_consistency_loss(features);
  report.loss = lambda == 0.0 ? report.ce : report.ce + lambda * report.feature_mse;
  if (!std::isfinite(report.loss))
    throw TrainingError("non-finite loss (ce=" + std::to_string(report.ce) +
                        ", feature_mse=" + std::to_string(report.feature_mse) + ")");

  const auto feat_grads = lambda == 0.0 ? std::vector<FeatureGroup>{} : feature_consistency_grad(features);
  std::vector<std::vector<double>> contributions(m);
  parallel_for(
      m,
      [&](std::size_t i) {
        const auto& sg = batch.groups[slots[i].group];
        auto d_logits = cross_entropy_grad(passes[i].logits, sg.label);
        for (auto& v : d_logits) v /= static_cast<double>(m);
        std::vector<double> d_feature;
        if (!feat_grads.empty()) {
          d_feature = feat_grads[slots[i].group][slots[i].level];
          for (auto& v : d_feature) v *= lambda;
        }
        contributions[i].assign(net.params.size(), 0.0);
        backward(net, sg.images[slots[i].level], passes[i], d_feature, d_logits, contributions[i]);
      },
      threads);

  report.grads.assign(net.params.size(), 0.0);
  for (const auto& c : contributions)
    for (std::size_t k = 0; k < c.size(); ++k) report.grads[k] += c[k];
  for (double g : report.grads)
    if (!std::isfinite(g)) throw TrainingError("non-finite gradient");
  if (per_image) *per_image = std::move(contributions);
  return report;
}

}  // namespace photon_scale
