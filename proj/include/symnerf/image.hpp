#pragma once

// RGB images in [0, 1] and 8-bit PNG storage.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <png.h>

namespace symnerf {

/// Row-major height x width x channels image.
struct Image {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int h, int w, int c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {
    if (h < 0 || w < 0 || c < 1) throw std::invalid_argument("Image: invalid shape");
  }

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  double& at(int y, int x, int c) { return data[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data[index(y, x, c)]; }
  bool same_shape(const Image& o) const { return height == o.height && width == o.width && channels == o.channels; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

inline Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
  return out;
}

/// Linear [0,1] to 8 bits, round half up.
inline std::uint8_t quantize_channel(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

inline std::vector<std::uint8_t> quantize(const Image& img) {
  std::vector<std::uint8_t> out(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) out[i] = quantize_channel(img.data[i]);
  return out;
}

inline Image dequantize(const std::vector<std::uint8_t>& bytes, int height, int width, int channels = 3) {
  Image img(height, width, channels);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("write_png: expected an RGB image");
  const auto bytes = quantize(img);
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&desc, path.string().c_str(), 0, bytes.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw std::runtime_error("write_png: " + path.string() + ": " + msg);
  }
}

/// Reads a PNG as 8-bit RGB; gray, palette and alpha inputs are converted.
inline Image read_png(const std::filesystem::path& path) {
  png_image desc{};
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str())) {
    throw std::runtime_error("read_png: " + path.string() + ": " + desc.message);
  }
  desc.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(desc));
  if (!png_image_finish_read(&desc, nullptr, bytes.data(), 0, nullptr)) {
    const std::string msg = desc.message;
    png_image_free(&desc);
    throw std::runtime_error("read_png: " + path.string() + ": " + msg);
  }
  return dequantize(bytes, static_cast<int>(desc.height), static_cast<int>(desc.width), 3);
}

}  // namespace symnerf
