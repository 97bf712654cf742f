#pragma once

// Single-photon image formation: Poisson photon arrivals, Bernoulli binary
// frames, N-sum accumulation, expected sums and the maximum-likelihood flux
// inverse.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "photon_scale/errors.hpp"
#include "photon_scale/parallel.hpp"
#include "photon_scale/philox.hpp"
#include "photon_scale/plane.hpp"

namespace photon_scale {

struct SensorConfig {
  double tau = 1e-3;       ///< exposure per binary frame, seconds
  double eta = 1.0;        ///< quantum efficiency
  double dark_rate = 0.0;  ///< dark counts per second (r_q)
  std::uint64_t seed = 0;

  [[nodiscard]] double tau_eta() const noexcept { return tau * eta; }

  void validate() const {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("sensor: tau must be > 0");
    if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("sensor: eta must be in (0, 1]");
    if (!(dark_rate >= 0.0) || !std::isfinite(dark_rate))
      throw DomainError("sensor: dark_rate must be >= 0");
  }

  bool operator==(const SensorConfig&) const = default;
};

/// Per-pixel photon flux in photons/second.
using FluxMap = Plane<double>;

inline void validate_flux_map(const FluxMap& flux) {
  if (flux.width() == 0 || flux.height() == 0) throw InvalidInput("flux map has zero size");
  if (flux.size() > std::numeric_limits<std::uint32_t>::max())
    throw InvalidInput("flux map exceeds 2^32 pixels");
  for (double v : flux.pixels()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("flux map contains a negative or non-finite value");
  }
}

/// One single-photon exposure. Rows are bit-packed MSB-first and padded to a
/// byte boundary, the same layout the frame file uses.
class BinaryFrame {
 public:
  BinaryFrame() = default;
  BinaryFrame(std::size_t width, std::size_t height)
      : width_(width), height_(height), stride_((width + 7) / 8), bits_(stride_ * height, 0) {}

  [[nodiscard]] std::size_t width() const noexcept { return width_; }
  [[nodiscard]] std::size_t height() const noexcept { return height_; }
  [[nodiscard]] std::size_t row_bytes() const noexcept { return stride_; }

  [[nodiscard]] bool get(std::size_t x, std::size_t y) const noexcept {
    return (bits_[y * stride_ + x / 8] >> (7 - x % 8)) & 1u;
  }
  void set(std::size_t x, std::size_t y, bool on) noexcept {
    const auto mask = static_cast<std::uint8_t>(0x80u >> (x % 8));
    auto& byte = bits_[y * stride_ + x / 8];
    byte = on ? static_cast<std::uint8_t>(byte | mask) : static_cast<std::uint8_t>(byte & ~mask);
  }

  [[nodiscard]] std::size_t popcount() const noexcept {
    std::size_t total = 0;
    for (std::size_t y = 0; y < height_; ++y)
      for (std::size_t x = 0; x < width_; ++x) total += get(x, y);
    return total;
  }

  [[nodiscard]] std::span<std::uint8_t> bytes() noexcept { return bits_; }
  [[nodiscard]] std::span<const std::uint8_t> bytes() const noexcept { return bits_; }

  bool operator==(const BinaryFrame&) const = default;

 private:
  std::size_t width_ = 0;
  std::size_t height_ = 0;
  std::size_t stride_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Integer sum of n binary frames; every count lies in [0, n].
struct NSumImage {
  std::uint32_t n = 0;
  Plane<std::uint32_t> counts;

  [[nodiscard]] std::size_t width() const noexcept { return counts.width(); }
  [[nodiscard]] std::size_t height() const noexcept { return counts.height(); }

  bool operator==(const NSumImage&) const = default;
};

inline void validate_nsum(const NSumImage& img) {
  if (img.n < 1) throw InvalidInput("N-sum image must have n >= 1");
  for (auto c : img.counts.pixels())
    if (c > img.n) throw InvalidInput("N-sum count exceeds n");
}

/// Mean number of detection events per frame at one pixel, phi*tau*eta + r_q*tau.
inline double arrival_rate(double flux, const SensorConfig& cfg) noexcept {
  return flux * cfg.tau_eta() + cfg.dark_rate * cfg.tau;
}

inline double detection_probability(double flux, const SensorConfig& cfg) {
  if (!(flux >= 0.0)) throw DomainError("detection_probability: flux must be >= 0");
  return -std::expm1(-arrival_rate(flux, cfg));
}

namespace detail {

inline void check_sampling_inputs(const FluxMap& flux, const SensorConfig& cfg) {
  cfg.validate();
  validate_flux_map(flux);
}

/// Poisson draw whose zero/non-zero outcome is decided by `first` alone:
/// Z == 0 iff first < exp(-lambda). This keeps binary frames identical to
/// (Z >= 1) for the same cell.
inline std::uint32_t poisson_from_cell(double lambda, CellStream& stream) {
  const double p0 = std::exp(-lambda);
  const double first = stream.next();
  if (first < p0) return 0;
  if (lambda < 30.0) {
    // Continue the inversion search with the same uniform.
    std::uint32_t k = 0;
    double pk = p0;
    double cdf = p0;
    while (first >= cdf) {
      ++k;
      pk *= lambda / k;
      const double next_cdf = cdf + pk;
      if (next_cdf == cdf && k > lambda) break;  // tail underflow
      cdf = next_cdf;
    }
    return k;
  }
  // Transformed rejection with squeeze (Hoermann 1993, PTRS); zeros are
  // rejected because they were already accounted for by `first`.
  const double slam = std::sqrt(lambda);
  const double loglam = std::log(lambda);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = stream.next() - 0.5;
    const double v = stream.next();
    const double us = 0.5 - std::fabs(u);
    const double k = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
    if (k < 1.0) continue;
    if (us >= 0.07 && v <= vr) return static_cast<std::uint32_t>(k);
    if (us < 0.013 && v > us) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -lambda + k * loglam - std::lgamma(k + 1.0))
      return static_cast<std::uint32_t>(k);
  }
}

}  // namespace detail

/// Photon counts Z for one exposure. Deterministic in (cfg.seed, frame_index).
inline Plane<std::uint32_t> sample_photon_count_frame(const FluxMap& flux, const SensorConfig& cfg,
                                                      std::uint64_t frame_index,
                                                      unsigned threads = default_thread_count()) {
  detail::check_sampling_inputs(flux, cfg);
  Plane<std::uint32_t> out(flux.width(), flux.height());
  const std::size_t w = flux.width();
  parallel_for(
      flux.height(),
      [&](std::size_t y) {
        for (std::size_t x = 0; x < w; ++x) {
          const auto pix = static_cast<std::uint32_t>(y * w + x);
          CellStream stream(cfg.seed, frame_index, pix);
          out[pix] = detail::poisson_from_cell(arrival_rate(flux[pix], cfg), stream);
        }
      },
      threads);
  return out;
}

/// One binary frame. Bit-identical for any thread count.
inline BinaryFrame sample_binary_frame(const FluxMap& flux, const SensorConfig& cfg,
                                       std::uint64_t frame_index,
                                       unsigned threads = default_thread_count()) {
  detail::check_sampling_inputs(flux, cfg);
  BinaryFrame frame(flux.width(), flux.height());
  const std::size_t w = flux.width();
  parallel_for(
      flux.height(),
      [&](std::size_t y) {
        // Each row owns whole bytes, so rows can be written concurrently.
        for (std::size_t x = 0; x < w; ++x) {
          const auto pix = static_cast<std::uint32_t>(y * w + x);
          const double miss = std::exp(-arrival_rate(flux[pix], cfg));
          frame.set(x, y, first_uniform(cfg.seed, frame_index, pix) >= miss);
        }
      },
      threads);
  return frame;
}

inline NSumImage accumulate(std::span<const BinaryFrame> frames) {
  if (frames.empty()) throw InvalidInput("accumulate: no frames");
  const std::size_t w = frames.front().width();
  const std::size_t h = frames.front().height();
  NSumImage out{static_cast<std::uint32_t>(frames.size()), Plane<std::uint32_t>(w, h)};
  for (const auto& f : frames) {
    if (f.width() != w || f.height() != h) throw InvalidInput("accumulate: frame dimensions differ");
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.counts(x, y) += f.get(x, y);
  }
  return out;
}

/// Sums frames [first_frame, first_frame + n) without materialising them.
/// Equal to accumulate() over the individually sampled frames.
inline NSumImage sample_nsum(const FluxMap& flux, const SensorConfig& cfg, std::uint32_t n,
                             std::uint64_t first_frame = 0,
                             unsigned threads = default_thread_count()) {
  detail::check_sampling_inputs(flux, cfg);
  if (n < 1) throw DomainError("sample_nsum: n must be >= 1");
  NSumImage out{n, Plane<std::uint32_t>(flux.width(), flux.height())};
  const std::size_t w = flux.width();
  parallel_for(
      flux.height(),
      [&](std::size_t y) {
        for (std::size_t x = 0; x < w; ++x) {
          const auto pix = static_cast<std::uint32_t>(y * w + x);
          const double miss = std::exp(-arrival_rate(flux[pix], cfg));
          std::uint32_t c = 0;
          for (std::uint64_t f = first_frame; f < first_frame + n; ++f)
            c += first_uniform(cfg.seed, f, pix) >= miss;
          out.counts[pix] = c;
        }
      },
      threads);
  return out;
}

/// E[S^N] per pixel. `misses` carries N*exp(-rate) computed directly, so the
/// flux inverse stays exact where N - mean would round to zero.
struct ExpectedNSum {
  std::uint32_t n = 0;
  Plane<double> mean;
  Plane<double> misses;
};

inline ExpectedNSum expected_nsum(const FluxMap& flux, const SensorConfig& cfg, std::int64_t n) {
  if (n < 1) throw DomainError("expected_nsum: n must be >= 1");
  cfg.validate();
  validate_flux_map(flux);
  ExpectedNSum out{static_cast<std::uint32_t>(n), Plane<double>(flux.width(), flux.height()),
                   Plane<double>(flux.width(), flux.height())};
  const auto nd = static_cast<double>(n);
  for (std::size_t i = 0; i < flux.size(); ++i) {
    const double rate = arrival_rate(flux[i], cfg);
    out.mean[i] = nd * -std::expm1(-rate);
    out.misses[i] = nd * std::exp(-rate);
  }
  return out;
}

/// Scalar MLE from the fraction of frames without a detection, clamped at 0.
inline double mle_flux_from_miss_fraction(double miss_fraction, const SensorConfig& cfg) {
  const double est = -std::log(miss_fraction) / cfg.tau_eta() - cfg.dark_rate / cfg.eta;
  return est > 0.0 ? est : 0.0;
}

struct FluxEstimate {
  FluxMap flux;
  Plane<std::uint8_t> saturated;  ///< 1 where S == N
  std::size_t saturated_count = 0;
};

/// Per-pixel MLE of the flux. Saturated pixels (S == N) get the estimate for
/// S = N - 1 and are flagged.
inline FluxEstimate mle_flux(const NSumImage& nsum, const SensorConfig& cfg) {
  cfg.validate();
  validate_nsum(nsum);
  FluxEstimate out{FluxMap(nsum.width(), nsum.height()),
                   Plane<std::uint8_t>(nsum.width(), nsum.height()), 0};
  const auto nd = static_cast<double>(nsum.n);
  for (std::size_t i = 0; i < nsum.counts.size(); ++i) {
    std::uint32_t s = nsum.counts[i];
    if (s == nsum.n) {
      out.saturated[i] = 1;
      ++out.saturated_count;
      s = nsum.n - 1;
    }
    out.flux[i] = mle_flux_from_miss_fraction(static_cast<double>(nsum.n - s) / nd, cfg);
  }
  return out;
}

/// Inverse of expected_nsum; uses the directly computed miss counts.
inline FluxMap mle_flux(const ExpectedNSum& expected, const SensorConfig& cfg) {
  cfg.validate();
  FluxMap out(expected.mean.width(), expected.mean.height());
  const auto nd = static_cast<double>(expected.n);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = mle_flux_from_miss_fraction(expected.misses[i] / nd, cfg);
  return out;
}

/// Photons per pixel: spatial mean of the detection counts.
inline double ppp(const NSumImage& nsum) {
  if (nsum.counts.empty()) return 0.0;
  double total = 0.0;
  for (auto c : nsum.counts.pixels()) total += c;
  return total / static_cast<double>(nsum.counts.size());
}

}  // namespace photon_scale
