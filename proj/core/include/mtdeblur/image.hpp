#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mtdeblur/tensor.hpp"

namespace mtdeblur {

/// Planar channels x height x width raster with values nominally in [0, 1].
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f);
  Image(int channels, int height, int width, std::vector<float> data);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  const std::vector<float>& data() const { return data_; }
  std::vector<float>& data() { return data_; }

  bool same_shape(const Image& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  double mean() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Stacks same-shaped images into an N x C x H x W tensor.
template <typename T>
Tensor<T> to_batch(const std::vector<const Image*>& images);
template <typename T>
Tensor<T> to_batch(const Image& image);
/// Extracts sample `n` of an NCHW tensor.
template <typename T>
Image from_batch(const Tensor<T>& batch, std::int64_t n = 0);

Image clamp01(const Image& image);
/// Rounds to the nearest 16-bit level, as written to a 16-bit PNG.
Image quantize16(const Image& image);

/// Reflect-pads bottom/right so both extents become multiples of `multiple`.
Image pad_reflect_to_multiple(const Image& image, int multiple);
Image crop(const Image& image, int top, int left, int height, int width);

// PNG I/O (RGB or gray, 8 or 16 bit on read; alpha is dropped).
Image read_png(const std::filesystem::path& path);
void write_png16(const std::filesystem::path& path, const Image& image);
void write_png8(const std::filesystem::path& path, const Image& image);

}  // namespace mtdeblur
