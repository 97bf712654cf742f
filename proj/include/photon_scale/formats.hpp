#pragma once

// On-disk formats:
//   * PSSB binary frame files (little-endian header, MSB-first packed rows)
//   * Netpbm P5/P6 images, 8- or 16-bit (16-bit samples big-endian)
// All writers go through write_file_atomic (temp file + rename).

#include <array>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "photon_scale/errors.hpp"
#include "photon_scale/plane.hpp"
#include "photon_scale/sensor_model.hpp"

namespace photon_scale {

namespace fs = std::filesystem;

inline void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw LoadError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw LoadError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw LoadError("rename to " + path.string() + " failed: " + ec.message());
  }
}

inline void write_file_atomic(const fs::path& path, std::string_view text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// PSSB frame files
// ---------------------------------------------------------------------------

inline constexpr std::array<char, 4> kFrameMagic{'P', 'S', 'S', 'B'};
inline constexpr std::uint16_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 4 + 2 + 4 + 4 + 4;

namespace detail {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{in[offset + i]} << (8 * i));
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_frames(std::span<const BinaryFrame> frames) {
  if (frames.empty()) throw InvalidInput("frame file needs at least one frame");
  const auto w = frames.front().width();
  const auto h = frames.front().height();
  if (w == 0 || h == 0) throw InvalidInput("frame has zero size");
  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + frames.size() * frames.front().bytes().size());
  out.insert(out.end(), kFrameMagic.begin(), kFrameMagic.end());
  detail::put_le<std::uint16_t>(out, kFrameVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) {
    if (f.width() != w || f.height() != h) throw InvalidInput("frame dimensions differ");
    // Padding bits past the last column are written as zero.
    const auto bytes = f.bytes();
    const std::size_t tail_bits = w % 8;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t b = 0; b < f.row_bytes(); ++b) {
        std::uint8_t v = bytes[y * f.row_bytes() + b];
        if (tail_bits != 0 && b + 1 == f.row_bytes())
          v &= static_cast<std::uint8_t>(0xFFu << (8 - tail_bits));
        out.push_back(v);
      }
    }
  }
  return out;
}

inline std::vector<BinaryFrame> decode_frames(std::span<const std::uint8_t> in) {
  if (in.size() < kFrameHeaderBytes) throw FormatError("truncated frame-file header", in.size());
  if (std::memcmp(in.data(), kFrameMagic.data(), 4) != 0) throw FormatError("bad magic, expected PSSB", 0);
  const auto version = detail::get_le<std::uint16_t>(in, 4);
  if (version != kFrameVersion)
    throw FormatError("unsupported frame-file version " + std::to_string(version), 4);
  const auto w = detail::get_le<std::uint32_t>(in, 6);
  const auto h = detail::get_le<std::uint32_t>(in, 10);
  const auto count = detail::get_le<std::uint32_t>(in, 14);
  if (w == 0) throw FormatError("frame width is zero", 6);
  if (h == 0) throw FormatError("frame height is zero", 10);
  if (count == 0) throw FormatError("frame count is zero", 14);

  const std::uint64_t row_bytes = (std::uint64_t{w} + 7) / 8;
  const std::uint64_t frame_bytes = row_bytes * h;
  const std::uint64_t payload = in.size() - kFrameHeaderBytes;
  if (payload < frame_bytes * count) {
    const std::uint64_t complete = payload / frame_bytes;
    throw FormatError("truncated payload: frame " + std::to_string(complete) + " of " +
                          std::to_string(count) + " is incomplete",
                      kFrameHeaderBytes + complete * frame_bytes);
  }
  if (payload > frame_bytes * count)
    throw FormatError("trailing bytes after last frame", kFrameHeaderBytes + frame_bytes * count);

  std::vector<BinaryFrame> frames;
  frames.reserve(count);
  std::size_t offset = kFrameHeaderBytes;
  for (std::uint32_t i = 0; i < count; ++i) {
    BinaryFrame f(w, h);
    std::memcpy(f.bytes().data(), in.data() + offset, frame_bytes);
    offset += frame_bytes;
    frames.push_back(std::move(f));
  }
  return frames;
}

inline void write_frames(std::span<const BinaryFrame> frames, const fs::path& path) {
  write_file_atomic(path, encode_frames(frames));
}

inline std::vector<BinaryFrame> read_frames(const fs::path& path) {
  return decode_frames(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Netpbm
// ---------------------------------------------------------------------------

/// Decoded P5/P6 image. Samples are interleaved (RGB for P6).
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> samples;

  bool operator==(const PnmImage&) const = default;
};

inline std::vector<std::uint8_t> encode_pnm(const PnmImage& img) {
  if (img.channels != 1 && img.channels != 3) throw InvalidInput("PNM images have 1 or 3 channels");
  if (img.maxval < 1 || img.maxval > 65535) throw InvalidInput("PNM maxval must be in [1, 65535]");
  if (img.samples.size() != img.width * img.height * img.channels)
    throw InvalidInput("PNM sample count does not match dimensions");
  const std::string header = std::string(img.channels == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                             std::to_string(img.maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const bool wide = img.maxval > 255;
  out.reserve(out.size() + img.samples.size() * (wide ? 2 : 1));
  for (auto s : img.samples) {
    if (s > img.maxval) throw InvalidInput("PNM sample exceeds maxval");
    if (wide) out.push_back(static_cast<std::uint8_t>(s >> 8));
    out.push_back(static_cast<std::uint8_t>(s));
  }
  return out;
}

inline PnmImage decode_pnm(std::span<const std::uint8_t> in) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < in.size()) {
      if (in[pos] == '#') {
        while (pos < in.size() && in[pos] != '\n') ++pos;
      } else if (std::isspace(in[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) -> std::uint64_t {
    skip_space();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < in.size() && std::isdigit(in[pos])) {
      v = v * 10 + (in[pos] - '0');
      if (v > 0xFFFFFFFFull) throw FormatError(std::string("PNM ") + what + " too large", start);
      ++pos;
    }
    if (pos == start) throw FormatError(std::string("PNM header: expected ") + what, start);
    return v;
  };

  if (in.size() < 2 || in[0] != 'P' || (in[1] != '5' && in[1] != '6'))
    throw FormatError("not a binary PGM/PPM (expected P5 or P6)", 0);
  PnmImage img;
  img.channels = in[1] == '5' ? 1 : 3;
  pos = 2;
  img.width = read_uint("width");
  img.height = read_uint("height");
  const std::size_t maxval_pos = pos;
  const auto maxval = read_uint("maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("PNM image has zero size", maxval_pos);
  if (maxval < 1 || maxval > 65535) throw FormatError("PNM maxval out of range", maxval_pos);
  img.maxval = static_cast<std::uint32_t>(maxval);
  if (pos >= in.size() || !std::isspace(in[pos])) throw FormatError("PNM header not terminated", pos);
  ++pos;

  const bool wide = img.maxval > 255;
  const std::size_t count = img.width * img.height * img.channels;
  const std::size_t need = count * (wide ? 2 : 1);
  if (in.size() - pos < need) throw FormatError("truncated PNM raster", in.size());
  img.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint16_t s = wide ? static_cast<std::uint16_t>((in[pos] << 8) | in[pos + 1]) : in[pos];
    pos += wide ? 2 : 1;
    if (s > img.maxval) throw FormatError("PNM sample exceeds maxval", pos - (wide ? 2 : 1));
    img.samples[i] = s;
  }
  return img;
}

inline PnmImage read_pnm(const fs::path& path) { return decode_pnm(read_file_bytes(path)); }

inline void write_pnm(const PnmImage& img, const fs::path& path) {
  write_file_atomic(path, encode_pnm(img));
}

// ---------------------------------------------------------------------------
// N-sum images: 16-bit P5, counts stored directly. n is not part of the file.
// ---------------------------------------------------------------------------

inline PnmImage nsum_to_pnm(const NSumImage& img) {
  PnmImage out{img.width(), img.height(), 1, 65535, {}};
  out.samples.reserve(img.counts.size());
  for (auto c : img.counts.pixels()) {
    if (c > 65535) throw InvalidInput("N-sum count does not fit a 16-bit PGM");
    out.samples.push_back(static_cast<std::uint16_t>(c));
  }
  return out;
}

inline void write_nsum(const NSumImage& img, const fs::path& path) {
  write_pnm(nsum_to_pnm(img), path);
}

inline NSumImage read_nsum(const fs::path& path, std::uint32_t n) {
  const auto pnm = read_pnm(path);
  if (pnm.channels != 1) throw LoadError(path.string() + ": N-sum image must be single-channel");
  NSumImage img{n, Plane<std::uint32_t>(pnm.width, pnm.height)};
  for (std::size_t i = 0; i < pnm.samples.size(); ++i) {
    if (pnm.samples[i] > n)
      throw LoadError(path.string() + ": count " + std::to_string(pnm.samples[i]) + " exceeds n=" +
                      std::to_string(n));
    img.counts[i] = pnm.samples[i];
  }
  return img;
}

}  // namespace photon_scale
