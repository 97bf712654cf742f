#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <iostream>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "photon_scale/dataset_pipeline.hpp"
#include "photon_scale/errors.hpp"
#include "photon_scale/formats.hpp"
#include "photon_scale/metrics.hpp"
#include "photon_scale/toy_net.hpp"

namespace photon_scale {

struct TrainConfig {
  double lambda = 25.0;
  double momentum = 0.9;
  double base_lr = 0.1;
  std::size_t batch_groups = 16;  ///< scenes per minibatch; 16 x 5 levels = 80 images
  std::size_t epochs = 10;
  std::uint64_t seed = 0;
  std::size_t conv1 = 8;
  std::size_t conv2 = 16;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidSpec("train: lambda must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidSpec("train: momentum must be in [0, 1)");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw InvalidSpec("train: base_lr must be > 0");
    if (batch_groups == 0) throw InvalidSpec("train: batch_groups must be >= 1");
  }
};

enum class TrainMode { photon_net, vanilla_lowest_level, vanilla_all_levels };

inline std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::photon_net: return "photon-net";
    case TrainMode::vanilla_lowest_level: return "vanilla-low";
    case TrainMode::vanilla_all_levels: return "vanilla-all";
  }
  return "?";
}

/// v' = momentum * v + g; p' = p - lr * v', in place.
inline void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
                              double lr, double momentum) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw InvalidInput("sgd_momentum_step: parameter, gradient and velocity sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

inline double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (step > total_steps) throw DomainError("cosine_lr: step exceeds total_steps");
  if (total_steps == 0) return base_lr;
  return base_lr * 0.5 *
         (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

// ---------------------------------------------------------------------------
// In-memory datasets
// ---------------------------------------------------------------------------

struct Scene {
  std::string scene_id;
  std::size_t label = 0;
  std::vector<std::vector<double>> levels;  ///< CHW, counts / N
};

struct SceneDataset {
  std::vector<std::string> labels;
  std::vector<std::uint32_t> schedule;
  std::size_t width = 0, height = 0, channels = 1;
  std::vector<Scene> scenes;

  [[nodiscard]] NetShape net_shape(std::size_t conv1 = 8, std::size_t conv2 = 16) const {
    return {width, height, channels, conv1, conv2, labels.size(), Activation::softplus};
  }
};

/// Network input for one stored level image: counts / N, channel-planar.
inline std::vector<double> normalized_input(const PnmImage& img, std::uint32_t n) {
  std::vector<double> out(img.samples.size());
  const std::size_t plane = img.width * img.height;
  for (std::size_t i = 0; i < plane; ++i)
    for (std::size_t c = 0; c < img.channels; ++c)
      out[c * plane + i] = static_cast<double>(img.samples[i * img.channels + c]) / n;
  return out;
}

inline Scene load_scene(const DatasetManifest& manifest, const ManifestEntry& entry) {
  Scene scene{entry.scene_id, manifest.label_index(entry.class_label), {}};
  for (const auto& level : entry.levels) {
    const auto path = manifest.root / level.path;
    PnmImage img;
    try {
      img = read_pnm(path);
    } catch (const std::exception& e) {
      throw LoadError("scene " + entry.scene_id + ": cannot load level S" + std::to_string(level.n) + " (" +
                      path.string() + "): " + e.what());
    }
    if (img.channels != manifest.channels)
      throw LoadError("scene " + entry.scene_id + ": level S" + std::to_string(level.n) + " has the wrong channel count");
    scene.levels.push_back(normalized_input(img, level.n));
  }
  return scene;
}

inline SceneDataset load_scene_dataset(const DatasetManifest& manifest) {
  SceneDataset ds;
  ds.labels = manifest.labels;
  ds.schedule = level_schedule(manifest.spec);
  ds.channels = manifest.channels;
  for (const auto& e : manifest.entries) {
    if (ds.scenes.empty()) {
      const auto first = read_pnm(manifest.root / e.levels.front().path);
      ds.width = first.width;
      ds.height = first.height;
    }
    ds.scenes.push_back(load_scene(manifest, e));
    if (ds.scenes.back().levels.front().size() != ds.width * ds.height * ds.channels)
      throw LoadError("scene " + e.scene_id + " differs in size from the rest of the dataset");
  }
  return ds;
}

/// Every selected scene contributes all of its levels as one group.
inline ScaleSpaceBatch build_minibatch(const SceneDataset& ds, std::span<const std::size_t> scene_indices) {
  ScaleSpaceBatch batch;
  for (auto i : scene_indices) {
    if (i >= ds.scenes.size()) throw InvalidInput("build_minibatch: scene index out of range");
    const auto& s = ds.scenes[i];
    batch.groups.push_back({s.scene_id, s.label, s.levels});
  }
  return batch;
}

/// Loads the named scenes straight from the manifest's files.
inline ScaleSpaceBatch build_minibatch(const DatasetManifest& manifest, std::span<const std::string> scene_ids) {
  ScaleSpaceBatch batch;
  for (const auto& id : scene_ids) {
    const auto it = std::find_if(manifest.entries.begin(), manifest.entries.end(),
                                 [&](const ManifestEntry& e) { return e.scene_id == id; });
    if (it == manifest.entries.end()) throw LoadError("scene " + id + " is not in the manifest");
    auto scene = load_scene(manifest, *it);
    batch.groups.push_back({scene.scene_id, scene.label, std::move(scene.levels)});
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double ce = 0.0;
  double feature_mse = 0.0;
  double accuracy = 0.0;  ///< training top-1 over the images seen this epoch
  double lr = 0.0;        ///< learning rate at the last step of the epoch
};

struct TrainResult {
  ToyNetwork net;
  std::vector<EpochLog> log;
};

namespace detail {

/// Unbiased index in [0, bound) by rejecting the biased top of the range.
inline std::size_t bounded(std::mt19937_64& rng, std::size_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return static_cast<std::size_t>(v % bound);
}

inline void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
}

inline ScaleSpaceBatch restrict_to_mode(ScaleSpaceBatch batch, TrainMode mode) {
  if (mode == TrainMode::vanilla_lowest_level)
    for (auto& g : batch.groups) g.images.resize(1);
  return batch;
}

}  // namespace detail

/// Trains from `init` (or a fresh seeded initialisation) with one of the three
/// modes. Deterministic for a fixed seed, regardless of thread count.
inline TrainResult train(const SceneDataset& ds, const TrainConfig& cfg, TrainMode mode,
                         std::optional<ToyNetwork> init = std::nullopt,
                         const std::function<void(const EpochLog&)>& on_epoch = {},
                         unsigned threads = default_thread_count()) {
  cfg.validate();
  if (ds.scenes.empty()) throw InvalidInput("train: empty dataset");
  std::mt19937_64 rng(cfg.seed);
  TrainResult result{init ? *init : ToyNetwork::initialize(ds.net_shape(cfg.conv1, cfg.conv2), rng()), {}};
  if (result.net.shape.input_size() != ds.width * ds.height * ds.channels ||
      result.net.shape.classes != ds.labels.size())
    throw InvalidInput("train: network shape does not match the dataset");

  const double lambda = mode == TrainMode::photon_net ? cfg.lambda : 0.0;
  const std::size_t steps_per_epoch = (ds.scenes.size() + cfg.batch_groups - 1) / cfg.batch_groups;
  const std::size_t total_steps = steps_per_epoch * cfg.epochs;
  std::vector<double> velocity(result.net.params.size(), 0.0);
  std::vector<std::size_t> order(ds.scenes.size());
  bool warned_no_pairs = false;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::shuffle(order, rng);
    EpochLog row{epoch + 1};
    std::size_t correct = 0, images = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      const std::size_t begin = b * cfg.batch_groups;
      const std::size_t end = std::min(order.size(), begin + cfg.batch_groups);
      const auto batch = detail::restrict_to_mode(
          build_minibatch(ds, std::span(order).subspan(begin, end - begin)), mode);
      const auto report = combined_loss_and_gradients(result.net, batch, lambda, nullptr, threads);
      if (lambda > 0.0 && report.pairs == 0 && !warned_no_pairs) {
        std::clog << "warning: minibatch has no same-scene pairs; feature-consistency term is 0\n";
        warned_no_pairs = true;
      }
      const double lr = cosine_lr(step, total_steps, cfg.base_lr);
      sgd_momentum_step(result.net.params, report.grads, velocity, lr, cfg.momentum);
      ++step;
      row.loss += report.loss;
      row.ce += report.ce;
      row.feature_mse += report.feature_mse;
      row.lr = lr;
      correct += report.correct;
      images += report.images;
    }
    row.loss /= static_cast<double>(steps_per_epoch);
    row.ce /= static_cast<double>(steps_per_epoch);
    row.feature_mse /= static_cast<double>(steps_per_epoch);
    row.accuracy = images ? static_cast<double>(correct) / static_cast<double>(images) : 0.0;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

inline std::size_t predict(const ToyNetwork& net, std::span<const double> image) {
  const auto out = forward(net, image);
  return static_cast<std::size_t>(std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
}

/// Top-1 accuracy on the images at one schedule position.
inline double evaluate(const ToyNetwork& net, const SceneDataset& ds, std::size_t level_index,
                       unsigned threads = default_thread_count()) {
  if (ds.scenes.empty()) throw InvalidInput("evaluate: empty dataset");
  std::vector<std::size_t> predictions(ds.scenes.size()), labels(ds.scenes.size());
  parallel_for(
      ds.scenes.size(),
      [&](std::size_t i) {
        if (level_index >= ds.scenes[i].levels.size()) throw InvalidInput("evaluate: level index out of range");
        predictions[i] = predict(net, ds.scenes[i].levels[level_index]);
        labels[i] = ds.scenes[i].label;
      },
      threads);
  return top1_accuracy<std::size_t>(predictions, labels);
}

/// Mean same-scene pairwise feature distance over the whole dataset.
inline double mean_feature_mse(const ToyNetwork& net, const SceneDataset& ds,
                               unsigned threads = default_thread_count()) {
  std::vector<FeatureGroup> groups(ds.scenes.size());
  parallel_for(
      ds.scenes.size(),
      [&](std::size_t i) {
        for (const auto& img : ds.scenes[i].levels) groups[i].push_back(forward(net, img).feature);
      },
      threads);
  return feature_consistency_loss(groups);
}

// ---------------------------------------------------------------------------
// Checkpoints and metric logs
// ---------------------------------------------------------------------------
//
// Checkpoint layout (little-endian):
//   "PSNT" | u32 version | u32 in_width | u32 in_height | u32 in_channels
//   | u32 conv1 | u32 conv2 | u32 classes | u32 activation | u64 param_count
//   | f64 params[param_count]

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::size_t kCheckpointHeaderBytes = 4 + 8 * 4 + 8;

inline std::vector<std::uint8_t> encode_checkpoint(const ToyNetwork& net) {
  std::vector<std::uint8_t> out{'P', 'S', 'N', 'T'};
  const auto& s = net.shape;
  for (std::uint32_t v : {kCheckpointVersion, static_cast<std::uint32_t>(s.in_width),
                          static_cast<std::uint32_t>(s.in_height), static_cast<std::uint32_t>(s.in_channels),
                          static_cast<std::uint32_t>(s.conv1), static_cast<std::uint32_t>(s.conv2),
                          static_cast<std::uint32_t>(s.classes), static_cast<std::uint32_t>(s.activation)})
    detail::put_le<std::uint32_t>(out, v);
  detail::put_le<std::uint64_t>(out, net.params.size());
  for (double p : net.params) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p));
  return out;
}

inline ToyNetwork decode_checkpoint(std::span<const std::uint8_t> in) {
  if (in.size() < kCheckpointHeaderBytes) throw FormatError("truncated checkpoint header", in.size());
  if (std::memcmp(in.data(), "PSNT", 4) != 0) throw FormatError("bad magic, expected PSNT", 0);
  auto u32 = [&](std::size_t i) { return detail::get_le<std::uint32_t>(in, 4 + 4 * i); };
  if (u32(0) != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 4);
  if (u32(7) > 1) throw FormatError("unknown activation", 4 + 4 * 7);
  ToyNetwork net;
  net.shape = {u32(1), u32(2), u32(3), u32(4), u32(5), u32(6), static_cast<Activation>(u32(7))};
  const auto count = detail::get_le<std::uint64_t>(in, 36);
  if (count != net.shape.param_count()) throw FormatError("parameter count does not match the architecture", 36);
  if (in.size() != kCheckpointHeaderBytes + count * 8)
    throw FormatError("checkpoint payload size mismatch", std::min<std::uint64_t>(in.size(), kCheckpointHeaderBytes + count * 8));
  net.params.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    net.params[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(in, kCheckpointHeaderBytes + 8 * i));
  return net;
}

inline void save_checkpoint(const ToyNetwork& net, const fs::path& path) {
  write_file_atomic(path, encode_checkpoint(net));
}

inline ToyNetwork load_checkpoint(const fs::path& path) { return decode_checkpoint(read_file_bytes(path)); }

inline std::string metrics_log_header() { return "epoch,loss,ce,feature_mse,accuracy,lr\n"; }

inline std::string metrics_log_row(const EpochLog& r) {
  std::ostringstream os;
  os.precision(10);
  os << r.epoch << ',' << r.loss << ',' << r.ce << ',' << r.feature_mse << ',' << r.accuracy << ',' << r.lr << '\n';
  return os.str();
}

inline std::string metrics_log(std::span<const EpochLog> rows) {
  std::string out = metrics_log_header();
  for (const auto& r : rows) out += metrics_log_row(r);
  return out;
}

}  // namespace photon_scale
