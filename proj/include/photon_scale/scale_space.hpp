#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "photon_scale/errors.hpp"
#include "photon_scale/parallel.hpp"
#include "photon_scale/philox.hpp"
#include "photon_scale/sensor_model.hpp"

namespace photon_scale {

/// Lowest frame count k, highest l, and the requested number of levels.
struct ScaleSpaceSpec {
  std::uint32_t k = 1;
  std::uint32_t l = 256;
  std::uint32_t n_levels = 5;

  void validate() const {
    if (k < 1) throw InvalidSpec("scale space: k must be >= 1");
    if (k > l) throw InvalidSpec("scale space: k must be <= l (got k=" + std::to_string(k) +
                                 ", l=" + std::to_string(l) + ")");
    if (n_levels < 1) throw InvalidSpec("scale space: levels must be >= 1");
    if (n_levels == 1 && k != l) throw InvalidSpec("scale space: a single level requires k == l");
  }

  bool operator==(const ScaleSpaceSpec&) const = default;
};

/// Geometric frame counts k*(l/k)^(i/(n-1)), rounded half-up, endpoints
/// pinned, duplicates from rounding dropped. The returned size is the
/// effective level count.
inline std::vector<std::uint32_t> level_schedule(const ScaleSpaceSpec& spec) {
  spec.validate();
  std::vector<std::uint32_t> out;
  out.reserve(spec.n_levels);
  const long double ratio = static_cast<long double>(spec.l) / spec.k;
  for (std::uint32_t i = 0; i < spec.n_levels; ++i) {
    std::uint32_t v;
    if (i == 0) {
      v = spec.k;
    } else if (i + 1 == spec.n_levels) {
      v = spec.l;
    } else {
      const long double exact =
          spec.k * std::pow(ratio, static_cast<long double>(i) / (spec.n_levels - 1));
      // Snap values within rounding noise of an integer before the half-up rule.
      const long double nearest = std::round(exact);
      const long double snapped = std::fabs(exact - nearest) < 1e-9L ? nearest : exact;
      v = static_cast<std::uint32_t>(std::floor(snapped + 0.5L));
    }
    if (out.empty() || v != out.back()) out.push_back(v);
  }
  return out;
}

struct PhotonScaleSpace {
  std::string scene_id;
  std::vector<NSumImage> levels;  ///< strictly increasing n
};

/// Nested scale space: l frames drawn from one stream, level N is the sum of
/// the first N frames.
inline PhotonScaleSpace build_scale_space(const FluxMap& flux, const ScaleSpaceSpec& spec,
                                          const SensorConfig& cfg, std::string scene_id,
                                          unsigned threads = default_thread_count()) {
  const auto schedule = level_schedule(spec);
  cfg.validate();
  validate_flux_map(flux);

  PhotonScaleSpace pss{std::move(scene_id), {}};
  pss.levels.reserve(schedule.size());
  for (auto n : schedule) pss.levels.push_back({n, Plane<std::uint32_t>(flux.width(), flux.height())});

  const std::size_t w = flux.width();
  parallel_for(
      flux.height(),
      [&](std::size_t y) {
        for (std::size_t x = 0; x < w; ++x) {
          const auto pix = static_cast<std::uint32_t>(y * w + x);
          const double miss = std::exp(-arrival_rate(flux[pix], cfg));
          std::uint32_t count = 0;
          std::uint32_t frame = 0;
          for (auto& level : pss.levels) {
            for (; frame < level.n; ++frame) count += first_uniform(cfg.seed, frame, pix) >= miss;
            level.counts[pix] = count;
          }
        }
      },
      threads);
  return pss;
}

}  // namespace photon_scale
