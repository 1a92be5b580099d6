#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cleanfield/core.hpp"
#include "cleanfield/field.hpp"

namespace cleanfield {

/// Row-major RGB image, top-left origin, channels clamped to [0,1].
class Image {
 public:
  Image() = default;

  Image(std::uint32_t width, std::uint32_t height, Rgb fill = {})
      : width_(width), height_(height), pixels_(std::size_t{width} * height) {
    for (auto& p : pixels_) p = clamp(fill);
  }

  Image(std::uint32_t width, std::uint32_t height, std::vector<Rgb> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.size() != std::size_t{width} * height) {
      fail(ErrorKind::invalid_input, "pixel count does not match image dimensions");
    }
    for (auto& p : pixels_) p = clamp(p);
  }

  std::uint32_t width() const { return width_; }
  std::uint32_t height() const { return height_; }
  std::size_t size() const { return pixels_.size(); }

  const Rgb& at(std::uint32_t x, std::uint32_t y) const { return pixels_[std::size_t{y} * width_ + x]; }
  void set(std::uint32_t x, std::uint32_t y, const Rgb& c) { pixels_[std::size_t{y} * width_ + x] = clamp(c); }
  const std::vector<Rgb>& pixels() const { return pixels_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static Rgb clamp(const Rgb& c) { return {clamp01(c.r), clamp01(c.g), clamp01(c.b)}; }

  std::uint32_t width_ = 0;
  std::uint32_t height_ = 0;
  std::vector<Rgb> pixels_;
};

inline std::uint8_t to_byte(double c) {
  return static_cast<std::uint8_t>(std::lround(255.0 * clamp01(c)));
}

/// Binary PPM (P6, maxval 255).
inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + img.size() * 3);
  for (const auto& p : img.pixels()) {
    out.push_back(to_byte(p.r));
    out.push_back(to_byte(p.g));
    out.push_back(to_byte(p.b));
  }
  return out;
}

inline Image decode_ppm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto token = [&] {
    skip_space();
    std::string t;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') {
      t.push_back(static_cast<char>(bytes[pos++]));
    }
    if (t.empty()) fail(ErrorKind::format, "truncated PPM header");
    return t;
  };
  auto number = [&] {
    const std::string t = token();
    for (char c : t) {
      if (!std::isdigit(static_cast<unsigned char>(c))) fail(ErrorKind::format, "bad PPM header field '" + t + "'");
    }
    return std::stoul(t);
  };
  if (token() != "P6") fail(ErrorKind::format, "not a binary PPM (expected P6)");
  const auto w = number();
  const auto h = number();
  const auto maxval = number();
  if (maxval != 255) fail(ErrorKind::format, "only maxval 255 is supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) fail(ErrorKind::format, "truncated PPM header");
  ++pos;
  const std::size_t n = w * h;
  if (bytes.size() - pos != 3 * n) fail(ErrorKind::format, "PPM payload size mismatch");
  std::vector<Rgb> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    px[i] = {bytes[pos + 3 * i] / 255.0, bytes[pos + 3 * i + 1] / 255.0, bytes[pos + 3 * i + 2] / 255.0};
  }
  return Image(static_cast<std::uint32_t>(w), static_cast<std::uint32_t>(h), std::move(px));
}

inline void write_ppm(const Image& img, const std::string& path) { write_file_bytes(path, encode_ppm(img)); }

inline Image read_ppm(const std::string& path) {
  try {
    return decode_ppm(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path + ": " + e.what());
  }
}

}  // namespace cleanfield
