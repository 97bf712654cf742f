#pragma once

// Synthetic clean-image corpora: a 4-class shapes task and smooth textured
// "natural-like" images with a prescribed mean brightness. Generators use
// std::mt19937_64 and hand-rolled distributions so outputs are identical
// across standard libraries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "photon_scale/dataset_pipeline.hpp"
#include "photon_scale/formats.hpp"

namespace photon_scale::synthetic {

inline constexpr std::array<const char*, 4> kShapeLabels{"circle", "square", "triangle", "cross"};

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

/// One 8-bit-quantised image of an axis-aligned filled shape on a darker
/// background. Position, size and both intensities are randomised.
inline CleanImage shape_image(std::size_t shape, std::size_t size, std::mt19937_64& rng) {
  const double s = static_cast<double>(size);
  const double radius = uniform(rng, 0.22, 0.34) * s;
  const double cx = uniform(rng, radius, s - radius);
  const double cy = uniform(rng, radius, s - radius);
  const double fg = uniform(rng, 0.7, 1.0);
  const double bg = uniform(rng, 0.0, 0.15);

  auto inside = [&](double px, double py) {
    const double dx = px - cx, dy = py - cy;
    const double u = dx / radius;
    const double v = dy / radius;
    switch (shape) {
      case 0: return u * u + v * v <= 1.0;
      case 1: return std::fabs(u) <= 0.8 && std::fabs(v) <= 0.8;
      case 2: {
        // Equilateral triangle inscribed in the unit circle.
        const double h = std::sqrt(3.0) / 2.0;
        return v >= -0.5 && v <= 1.0 && std::fabs(u) <= (1.0 - v) / (1.5 / h);
      }
      default: return (std::fabs(u) <= 1.0 && std::fabs(v) <= 0.3) || (std::fabs(v) <= 1.0 && std::fabs(u) <= 0.3);
    }
  };

  CleanImage img{size, size, 1, std::vector<double>(size * size)};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      // 2x2 supersampling for anti-aliased edges.
      double cover = 0.0;
      for (double oy : {0.25, 0.75})
        for (double ox : {0.25, 0.75}) cover += inside(x + ox, y + oy) ? 0.25 : 0.0;
      const double v = bg + (fg - bg) * cover;
      img.values[y * size + x] = std::round(v * 255.0) / 255.0;
    }
  }
  return img;
}

/// Smooth random texture (sum of oriented sinusoids and Gaussian blobs),
/// shifted so its 8-bit mean is `target_mean` (0-255), clipped to [0, 255].
inline CleanImage textured_image(std::size_t width, std::size_t height, double target_mean, std::mt19937_64& rng) {
  std::vector<double> field(width * height, 0.0);
  for (int k = 0; k < 6; ++k) {
    const double fx = uniform(rng, -0.25, 0.25), fy = uniform(rng, -0.25, 0.25);
    const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi), amp = uniform(rng, 10.0, 40.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        field[y * width + x] += amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
  }
  for (int k = 0; k < 4; ++k) {
    const double bx = uniform(rng, 0, static_cast<double>(width)), by = uniform(rng, 0, static_cast<double>(height));
    const double sigma = uniform(rng, 2.0, 8.0), amp = uniform(rng, -60.0, 60.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        field[y * width + x] += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
  }
  // Iterate the shift because clipping moves the mean.
  double shift = target_mean;
  std::vector<double> q(field.size());
  for (int iter = 0; iter < 20; ++iter) {
    double mean = 0.0;
    for (std::size_t i = 0; i < field.size(); ++i) {
      q[i] = std::clamp(std::round(field[i] + shift), 0.0, 255.0);
      mean += q[i];
    }
    mean /= static_cast<double>(q.size());
    if (std::fabs(mean - target_mean) < 0.25) break;
    shift += target_mean - mean;
  }
  CleanImage img{width, height, 1, std::vector<double>(q.size())};
  for (std::size_t i = 0; i < q.size(); ++i) img.values[i] = q[i] / 255.0;
  return img;
}

inline PnmImage to_pnm8(const CleanImage& img) {
  PnmImage out{img.width, img.height, img.channels, 255, {}};
  for (double v : img.values) out.samples.push_back(static_cast<std::uint16_t>(std::lround(v * 255.0)));
  return out;
}

/// `count` shape images with labels cycling through the four classes.
inline std::vector<CorpusEntry> shapes_corpus(std::size_t count, std::size_t size, std::uint64_t seed,
                                              const std::string& id_prefix = "scene") {
  std::mt19937_64 rng(seed);
  std::vector<CorpusEntry> corpus;
  corpus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = i % kShapeLabels.size();
    char id[64];
    std::snprintf(id, sizeof id, "%s_%05zu", id_prefix.c_str(), i);
    corpus.push_back({id, kShapeLabels[cls], {}, shape_image(cls, size, rng)});
  }
  return corpus;
}

/// Writes a corpus as 8-bit PGMs plus a labels file ("<file> <label>" per line).
inline void write_corpus(const std::vector<CorpusEntry>& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  std::string labels;
  for (const auto& e : corpus) {
    if (!e.image) throw InvalidInput("write_corpus: entry " + e.scene_id + " has no in-memory image");
    const std::string file = e.scene_id + (e.image->channels == 1 ? ".pgm" : ".ppm");
    write_pnm(to_pnm8(*e.image), dir / file);
    labels += file + " " + e.label + "\n";
  }
  write_file_atomic(dir / "labels.txt", labels);
}

}  // namespace photon_scale::synthetic
