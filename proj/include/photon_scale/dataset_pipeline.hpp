#pragma once

// Clean-image corpora -> photon-scale-space datasets on disk, plus hot-pixel
// calibration for captured frames.
//
// Dataset layout under the output root:
//   manifest.json
//   scenes/<scene_id>/S<n>.pgm     (16-bit P5; P6 when simulated per channel)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "photon_scale/errors.hpp"
#include "photon_scale/formats.hpp"
#include "photon_scale/parallel.hpp"
#include "photon_scale/philox.hpp"
#include "photon_scale/scale_space.hpp"
#include "photon_scale/sensor_model.hpp"

namespace photon_scale {

/// Normalised clean image; values in [0, 1], interleaved when channels == 3.
struct CleanImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<double> values;

  [[nodiscard]] double at(std::size_t x, std::size_t y, std::size_t c = 0) const noexcept {
    return values[(y * width + x) * channels + c];
  }

  void validate() const {
    if (width == 0 || height == 0) throw InvalidInput("clean image has zero size");
    if (channels != 1 && channels != 3) throw InvalidInput("clean image must have 1 or 3 channels");
    if (values.size() != width * height * channels) throw InvalidInput("clean image size mismatch");
    for (double v : values)
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("clean image value outside [0, 1]");
  }

  static CleanImage from_pnm(const PnmImage& pnm) {
    CleanImage img{pnm.width, pnm.height, pnm.channels, {}};
    img.values.reserve(pnm.samples.size());
    for (auto s : pnm.samples) img.values.push_back(static_cast<double>(s) / pnm.maxval);
    return img;
  }
};

inline CleanImage load_clean_image(const fs::path& path) { return CleanImage::from_pnm(read_pnm(path)); }

/// Rec. 601 luma for colour input; identity for grey.
inline Plane<double> luminance(const CleanImage& img) {
  Plane<double> out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      out(x, y) = img.channels == 1
                      ? img.at(x, y)
                      : 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
    }
  }
  return out;
}

/// Flux at full brightness such that phi*tau*eta = 255/1000 for a white 8-bit
/// pixel, i.e. phi equals the 0-255 pixel value when tau*eta = 1/1000.
inline double default_flux_scale(const SensorConfig& cfg) { return 0.255 / cfg.tau_eta(); }

/// phi = scale * pixel, with colour converted to luminance.
inline FluxMap flux_from_image(const CleanImage& img, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("flux_from_image: scale must be > 0");
  img.validate();
  FluxMap flux = luminance(img);
  for (auto& v : flux.pixels()) v *= scale;
  return flux;
}

/// One flux plane per channel, for per-channel simulation of colour images.
inline std::vector<FluxMap> flux_planes_from_image(const CleanImage& img, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("flux_from_image: scale must be > 0");
  img.validate();
  std::vector<FluxMap> planes(img.channels, FluxMap(img.width, img.height));
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c) planes[c](x, y) = scale * img.at(x, y, c);
  return planes;
}

// ---------------------------------------------------------------------------
// Hot pixels
// ---------------------------------------------------------------------------

inline constexpr double kDefaultHotPixelThreshold = 0.05;

struct HotPixelMask {
  Plane<std::uint8_t> hot;  ///< 1 = hot

  [[nodiscard]] std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(hot.pixels().begin(), hot.pixels().end(), 1));
  }
  bool operator==(const HotPixelMask&) const = default;
};

/// A pixel is hot when its mean detection rate over the dark frames exceeds
/// `threshold`.
inline HotPixelMask hot_pixel_mask(std::span<const BinaryFrame> dark_frames, double threshold) {
  if (dark_frames.empty()) throw InvalidInput("hot_pixel_mask: no dark frames");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw DomainError("hot_pixel_mask: threshold must be in [0, 1]");
  const auto sum = accumulate(dark_frames);
  HotPixelMask mask{Plane<std::uint8_t>(sum.width(), sum.height())};
  const auto frames = static_cast<double>(sum.n);
  for (std::size_t i = 0; i < sum.counts.size(); ++i)
    mask.hot[i] = static_cast<double>(sum.counts[i]) / frames > threshold ? 1 : 0;
  return mask;
}

struct HotPixelCorrection {
  NSumImage image;
  /// Hot pixels left unchanged because every neighbour is hot too.
  std::vector<std::pair<std::size_t, std::size_t>> uncorrected;
};

/// Replaces each hot pixel by the lower median of its non-hot 3x3 neighbours.
inline HotPixelCorrection correct_hot_pixels(const NSumImage& img, const HotPixelMask& mask) {
  if (!mask.hot.same_shape(img.counts)) throw InvalidInput("correct_hot_pixels: mask size differs from image");
  HotPixelCorrection out{img, {}};
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  const auto h = static_cast<std::ptrdiff_t>(img.height());
  std::vector<std::uint32_t> neighbours;
  neighbours.reserve(8);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      if (!mask.hot(x, y)) continue;
      neighbours.clear();
      for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
          const auto nx = x + dx, ny = y + dy;
          if ((dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          if (!mask.hot(nx, ny)) neighbours.push_back(img.counts(nx, ny));
        }
      }
      if (neighbours.empty()) {
        out.uncorrected.emplace_back(x, y);
        continue;
      }
      const auto mid = neighbours.begin() + static_cast<std::ptrdiff_t>((neighbours.size() - 1) / 2);
      std::nth_element(neighbours.begin(), mid, neighbours.end());
      out.image.counts(x, y) = *mid;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct ManifestLevel {
  std::uint32_t n = 0;
  std::string path;  ///< relative to the manifest directory
  double ppp = 0.0;

  bool operator==(const ManifestLevel&) const = default;
};

struct ManifestEntry {
  std::string scene_id;
  std::string class_label;
  std::vector<ManifestLevel> levels;

  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  std::vector<std::string> labels;  ///< declared label set; class index = position
  std::size_t channels = 1;
  double flux_scale = 0.0;
  ScaleSpaceSpec spec;
  SensorConfig sensor;
  std::vector<ManifestEntry> entries;
  fs::path root;  ///< directory the manifest lives in; not serialised

  [[nodiscard]] std::size_t label_index(const std::string& label) const {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) throw InvalidInput("label '" + label + "' is not declared in the manifest");
    return static_cast<std::size_t>(it - labels.begin());
  }

  bool operator==(const DatasetManifest& o) const {
    return labels == o.labels && channels == o.channels && flux_scale == o.flux_scale && spec == o.spec &&
           sensor == o.sensor && entries == o.entries;
  }
};

inline constexpr int kManifestVersion = 1;

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "photon-scale-dataset";
  j["version"] = kManifestVersion;
  j["labels"] = m.labels;
  j["channels"] = m.channels;
  j["spec"] = {{"k", m.spec.k}, {"l", m.spec.l}, {"levels", m.spec.n_levels}};
  j["sensor"] = {{"tau", m.sensor.tau},
                 {"eta", m.sensor.eta},
                 {"dark_rate", m.sensor.dark_rate},
                 {"seed", m.sensor.seed},
                 {"flux_scale", m.flux_scale}};
  auto& entries = j["entries"] = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (const auto& l : e.levels) levels.push_back({{"n", l.n}, {"path", l.path}, {"ppp", l.ppp}});
    entries.push_back({{"scene_id", e.scene_id}, {"class_label", e.class_label}, {"levels", levels}});
  }
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != "photon-scale-dataset") throw LoadError("not a dataset manifest");
    if (j.at("version").get<int>() != kManifestVersion) throw LoadError("unsupported manifest version");
    DatasetManifest m;
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.channels = j.at("channels").get<std::size_t>();
    m.spec = {j.at("spec").at("k").get<std::uint32_t>(), j.at("spec").at("l").get<std::uint32_t>(),
              j.at("spec").at("levels").get<std::uint32_t>()};
    const auto& s = j.at("sensor");
    m.sensor = {s.at("tau").get<double>(), s.at("eta").get<double>(), s.at("dark_rate").get<double>(),
                s.at("seed").get<std::uint64_t>()};
    m.flux_scale = s.at("flux_scale").get<double>();
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry{e.at("scene_id").get<std::string>(), e.at("class_label").get<std::string>(), {}};
      for (const auto& l : e.at("levels"))
        entry.levels.push_back({l.at("n").get<std::uint32_t>(), l.at("path").get<std::string>(),
                                l.at("ppp").get<double>()});
      m.entries.push_back(std::move(entry));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("malformed manifest: ") + e.what());
  }
}

inline void write_manifest(const DatasetManifest& m, const fs::path& path) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

/// Loads and checks a manifest: labels declared, level files present, level
/// counts matching the schedule.
inline DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  auto m = manifest_from_json(j);
  m.root = path.parent_path();
  m.spec.validate();
  const auto schedule = level_schedule(m.spec);
  for (const auto& e : m.entries) {
    (void)m.label_index(e.class_label);
    if (e.levels.size() != schedule.size())
      throw LoadError("scene " + e.scene_id + " has " + std::to_string(e.levels.size()) + " levels, expected " +
                      std::to_string(schedule.size()));
    for (std::size_t i = 0; i < e.levels.size(); ++i) {
      if (e.levels[i].n != schedule[i]) throw LoadError("scene " + e.scene_id + " level counts do not match the spec");
      if (!fs::exists(m.root / e.levels[i].path))
        throw LoadError("scene " + e.scene_id + ": missing level file " + e.levels[i].path);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

enum class ColorMode { per_channel, luminance };

struct CorpusEntry {
  std::string scene_id;
  std::string label;
  fs::path source;                  ///< loaded when `image` is empty
  std::optional<CleanImage> image;  ///< in-memory source
};

struct BuildOptions {
  std::optional<double> flux_scale;  ///< defaults to default_flux_scale(sensor)
  ColorMode color = ColorMode::per_channel;
  unsigned threads = default_thread_count();
};

struct BuildError {
  std::string scene_id;
  std::string message;
};

struct BuildResult {
  DatasetManifest manifest;
  std::vector<BuildError> errors;  ///< entries skipped, in corpus order
};

/// Sensor config for scene `index` (and colour channel), derived from the master seed.
inline SensorConfig scene_sensor(const SensorConfig& master, std::size_t index, std::size_t channel = 0) {
  SensorConfig cfg = master;
  cfg.seed = mix_seed(mix_seed(master.seed, index), channel);
  return cfg;
}

/// Level images for one clean image: one N-sum plane per simulated channel.
inline std::vector<std::vector<NSumImage>> simulate_scene(const CleanImage& img, const ScaleSpaceSpec& spec,
                                                          const SensorConfig& master, std::size_t index,
                                                          double scale, ColorMode color, unsigned threads = 1) {
  std::vector<FluxMap> planes = (img.channels == 3 && color == ColorMode::per_channel)
                                    ? flux_planes_from_image(img, scale)
                                    : std::vector<FluxMap>{flux_from_image(img, scale)};
  std::vector<std::vector<NSumImage>> levels;  // [level][channel]
  for (std::size_t c = 0; c < planes.size(); ++c) {
    auto pss = build_scale_space(planes[c], spec, scene_sensor(master, index, c), {}, threads);
    if (levels.empty()) levels.resize(pss.levels.size());
    for (std::size_t i = 0; i < pss.levels.size(); ++i) levels[i].push_back(std::move(pss.levels[i]));
  }
  return levels;
}

inline PnmImage level_to_pnm(const std::vector<NSumImage>& channels) {
  if (channels.size() == 1) return nsum_to_pnm(channels.front());
  PnmImage out{channels.front().width(), channels.front().height(), channels.size(), 65535, {}};
  out.samples.resize(out.width * out.height * out.channels);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto plane = nsum_to_pnm(channels[c]);
    for (std::size_t i = 0; i < plane.samples.size(); ++i) out.samples[i * channels.size() + c] = plane.samples[i];
  }
  return out;
}

/// Mean detections per pixel per channel.
inline double level_ppp(const std::vector<NSumImage>& channels) {
  double total = 0.0;
  for (const auto& c : channels) total += ppp(c);
  return total / static_cast<double>(channels.size());
}

inline BuildResult build_dataset(const std::vector<CorpusEntry>& corpus, const ScaleSpaceSpec& spec,
                                 const SensorConfig& sensor, const fs::path& output_root,
                                 const BuildOptions& options = {}) {
  if (corpus.empty()) throw InvalidInput("build_dataset: empty corpus");
  spec.validate();
  sensor.validate();
  const double scale = options.flux_scale.value_or(default_flux_scale(sensor));
  if (!(scale > 0.0)) throw DomainError("build_dataset: flux scale must be > 0");
  const auto schedule = level_schedule(spec);

  std::error_code ec;
  fs::create_directories(output_root / "scenes", ec);
  if (ec) throw LoadError("cannot create output root " + output_root.string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.spec = spec;
  manifest.sensor = sensor;
  manifest.flux_scale = scale;
  manifest.root = output_root;
  {
    std::vector<std::string> labels;
    for (const auto& e : corpus) labels.push_back(e.label);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
    manifest.labels = std::move(labels);
  }

  std::vector<std::optional<ManifestEntry>> built(corpus.size());
  std::vector<std::string> failures(corpus.size());
  std::vector<std::size_t> channels(corpus.size(), 0);
  parallel_for(
      corpus.size(),
      [&](std::size_t i) {
        const auto& item = corpus[i];
        try {
          const CleanImage img = item.image ? *item.image : load_clean_image(item.source);
          img.validate();
          const auto levels = simulate_scene(img, spec, sensor, i, scale, options.color);
          const fs::path dir = fs::path("scenes") / item.scene_id;
          fs::create_directories(output_root / dir);
          ManifestEntry entry{item.scene_id, item.label, {}};
          for (std::size_t li = 0; li < levels.size(); ++li) {
            const fs::path rel = dir / ("S" + std::to_string(schedule[li]) + ".pgm");
            write_pnm(level_to_pnm(levels[li]), output_root / rel);
            entry.levels.push_back({schedule[li], rel.generic_string(), level_ppp(levels[li])});
          }
          channels[i] = levels.front().size();
          built[i] = std::move(entry);
        } catch (const std::exception& e) {
          failures[i] = e.what();
        }
      },
      options.threads);

  BuildResult result;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!built[i]) {
      result.errors.push_back({corpus[i].scene_id, failures[i]});
      continue;
    }
    if (manifest.entries.empty()) {
      manifest.channels = channels[i];
    } else if (channels[i] != manifest.channels) {
      result.errors.push_back({corpus[i].scene_id, "channel count differs from the rest of the corpus"});
      continue;
    }
    manifest.entries.push_back(std::move(*built[i]));
  }
  write_manifest(manifest, output_root / "manifest.json");
  result.manifest = std::move(manifest);
  return result;
}

/// Reads a labels file: one "<image path> <label>" pair per line, paths
/// relative to `corpus_dir`. Blank lines and '#' comments are skipped.
/// Scene ids are the file stems, suffixed with the line index on collision.
inline std::vector<CorpusEntry> read_corpus(const fs::path& corpus_dir, const fs::path& labels_file) {
  std::ifstream in(labels_file);
  if (!in) throw LoadError("cannot open labels file " + labels_file.string());
  std::vector<CorpusEntry> corpus;
  std::map<std::string, int> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string file, label;
    if (!(fields >> file)) continue;
    if (!(fields >> label))
      throw LoadError(labels_file.string() + ":" + std::to_string(lineno) + ": missing label");
    std::string id = fs::path(file).stem().string();
    if (seen[id]++ > 0) id += "_" + std::to_string(lineno);
    corpus.push_back({id, label, corpus_dir / file, std::nullopt});
  }
  if (corpus.empty()) throw LoadError("labels file " + labels_file.string() + " lists no images");
  return corpus;
}

}  // namespace photon_scale
