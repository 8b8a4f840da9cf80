#include "mtdeblur/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

namespace mtdeblur {

Image::Image(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 0 || height < 0 || width < 0) throw DimensionError("negative image extent");
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image::Image(int channels, int height, int width, std::vector<float> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw DimensionError("image data length does not match extents");
  }
}

double Image::mean() const {
  if (data_.empty()) return 0.0;
  double s = 0;
  for (float v : data_) s += v;
  return s / static_cast<double>(data_.size());
}

template <typename T>
Tensor<T> to_batch(const std::vector<const Image*>& images) {
  if (images.empty()) throw DimensionError("cannot batch zero images");
  const Image& first = *images.front();
  Tensor<T> out(Shape{static_cast<std::int64_t>(images.size()), first.channels(), first.height(),
                      first.width()});
  auto dst = out.data().begin();
  for (const Image* img : images) {
    if (!img->same_shape(first)) throw DimensionError("batched images differ in shape");
    dst = std::transform(img->data().begin(), img->data().end(), dst,
                         [](float v) { return static_cast<T>(v); });
  }
  return out;
}

template <typename T>
Tensor<T> to_batch(const Image& image) {
  return to_batch<T>(std::vector<const Image*>{&image});
}

template <typename T>
Image from_batch(const Tensor<T>& batch, std::int64_t n) {
  const auto& s = batch.shape();
  if (s.rank() != 4 || n < 0 || n >= s.n()) throw DimensionError("from_batch: bad sample index");
  Image img(static_cast<int>(s.c()), static_cast<int>(s.h()), static_cast<int>(s.w()));
  const auto per = static_cast<std::int64_t>(img.size());
  for (std::int64_t i = 0; i < per; ++i) img.data()[static_cast<std::size_t>(i)] = static_cast<float>(batch[n * per + i]);
  return img;
}

Image clamp01(const Image& image) {
  Image out = image;
  for (auto& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

namespace {

std::uint16_t to_level16(float v) {
  return static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 65535.0f));
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, const Image& image, int bit_depth) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw DimensionError("PNG output needs 1 or 3 channels, got " + std::to_string(image.channels()));
  }
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  const int bytes = bit_depth / 8;
  const int c = image.channels();
  std::vector<png_byte> row(static_cast<std::size_t>(image.width()) * c * bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("failed writing PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width(), image.height(), bit_depth,
               c == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      for (int ch = 0; ch < c; ++ch) {
        const std::size_t at = (static_cast<std::size_t>(x) * c + ch) * bytes;
        const float v = image.at(ch, y, x);
        if (bit_depth == 16) {
          const auto level = to_level16(v);  // PNG stores big-endian samples
          row[at] = static_cast<png_byte>(level >> 8);
          row[at + 1] = static_cast<png_byte>(level & 0xff);
        } else {
          row[at] = static_cast<png_byte>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
        }
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image quantize16(const Image& image) {
  Image out = image;
  for (auto& v : out.data()) v = static_cast<float>(to_level16(v)) / 65535.0f;
  return out;
}

Image pad_reflect_to_multiple(const Image& image, int multiple) {
  if (multiple < 1) throw ArgumentError("pad multiple must be positive");
  const int h = (image.height() + multiple - 1) / multiple * multiple;
  const int w = (image.width() + multiple - 1) / multiple * multiple;
  if (h == image.height() && w == image.width()) return image;
  Image out(image.channels(), h, w);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(c, y, x) = image.at(c, reflect(y, image.height()), reflect(x, image.width()));
  return out;
}

Image crop(const Image& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 0 || width < 0 || top + height > image.height() ||
      left + width > image.width()) {
    throw ArgumentError("crop window exceeds image");
  }
  Image out(image.channels(), height, width);
  for (int c = 0; c < image.channels(); ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, top + y, left + x);
  return out;
}

void write_png16(const std::filesystem::path& path, const Image& image) { write_png(path, image, 16); }
void write_png8(const std::filesystem::path& path, const Image& image) { write_png(path, image, 8); }

Image read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw FormatError("not a PNG file: " + path.string());
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = png_get_channels(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image out(channels, height, width);
  for (int y = 0; y < height; ++y) {
    const png_byte* row = rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        out.at(c, y, x) = bit_depth == 16
                              ? static_cast<float>((row[2 * i] << 8) | row[2 * i + 1]) / 65535.0f
                              : static_cast<float>(row[i]) / 255.0f;
      }
    }
  }
  return out;
}

template Tensor<float> to_batch(const std::vector<const Image*>&);
template Tensor<double> to_batch(const std::vector<const Image*>&);
template Tensor<float> to_batch(const Image&);
template Tensor<double> to_batch(const Image&);
template Image from_batch(const Tensor<float>&, std::int64_t);
template Image from_batch(const Tensor<double>&, std::int64_t);

}  // namespace mtdeblur
