#include "mtdeblur/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>

namespace mtdeblur {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_rank4(const Shape& s, const char* what) {
  if (s.rank() != 4) throw DimensionError(std::string(what) + " must be rank 4, got " + s.str());
}

struct Geometry {
  std::int64_t channels, height, width;  // image side
  std::int64_t k;
  int stride, padding;
  std::int64_t out_h, out_w;  // column side
};

// Output columns [lo, hi) whose input column ox*stride - padding + kx lies
// inside the image.
inline void valid_columns(const Geometry& g, std::int64_t kx, std::int64_t& lo,
                          std::int64_t& hi) {
  const std::int64_t offset = kx - g.padding;
  lo = offset >= 0 ? 0 : (-offset + g.stride - 1) / g.stride;
  hi = g.width - offset <= 0 ? 0 : (g.width - offset + g.stride - 1) / g.stride;
  lo = std::min(lo, g.out_w);
  hi = std::clamp(hi, lo, g.out_w);
}

// Unfolds one C x H x W image into (C*k*k) x (out_h*out_w) columns.
template <typename T>
void im2col(const T* image, const Geometry& g, T* col) {
  const std::int64_t hw = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * hw;
        std::int64_t lo, hi;
        valid_columns(g, kx, lo, hi);
        const std::int64_t offset = kx - g.padding;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = image + (c * g.height + iy) * g.width;
          std::fill(dst, dst + lo, T(0));
          if (g.stride == 1) {
            std::copy(src + lo + offset, src + hi + offset, dst + lo);
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox] = src[ox * g.stride + offset];
          }
          std::fill(dst + hi, dst + g.out_w, T(0));
        }
      }
    }
  }
}

// Scatter-adds columns back into a C x H x W image (adjoint of im2col).
template <typename T>
void col2im(const T* col, const Geometry& g, T* image) {
  const std::int64_t hw = g.out_h * g.out_w;
  for (std::int64_t c = 0; c < g.channels; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * hw;
        std::int64_t lo, hi;
        valid_columns(g, kx, lo, hi);
        const std::int64_t offset = kx - g.padding;
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy * g.stride - g.padding + ky;
          if (iy < 0 || iy >= g.height) continue;
          T* dst = image + (c * g.height + iy) * g.width;
          const T* src = row + oy * g.out_w;
          if (g.stride == 1) {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox + offset] += src[ox];
          } else {
            for (std::int64_t ox = lo; ox < hi; ++ox) dst[ox * g.stride + offset] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) { return g.k == 1 && g.stride == 1 && g.padding == 0; }

void check_geometry(std::int64_t k, int stride, int padding) {
  if (k < 1) throw DimensionError("kernel extent must be positive");
  if (stride < 1) throw DimensionError("stride must be positive");
  if (padding < 0) throw DimensionError("padding must be non-negative");
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::int64_t channels) {
  if (bias.empty()) return;
  if (bias.numel() != channels) {
    throw DimensionError("bias has " + std::to_string(bias.numel()) + " entries, expected " +
                         std::to_string(channels));
  }
}

template <typename T>
void add_bias(const Tensor<T>& bias, std::int64_t channels, std::int64_t hw, T* out) {
  if (bias.empty()) return;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + c * hw;
    for (std::int64_t i = 0; i < hw; ++i) p[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(const T* grad_out, std::int64_t channels, std::int64_t hw,
                          Tensor<T>* grad_bias) {
  if (grad_bias == nullptr || grad_bias->empty()) return;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* p = grad_out + c * hw;
    T s = 0;
    for (std::int64_t i = 0; i < hw; ++i) s += p[i];
    (*grad_bias)[c] += s;
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int stride, int padding) {
  require_rank4(input.shape(), "conv2d input");
  require_rank4(weight.shape(), "conv2d weight");
  const auto& ws = weight.shape();
  const auto& is = input.shape();
  check_geometry(ws[2], stride, padding);
  if (ws[2] != ws[3]) throw DimensionError("conv2d kernel must be square, got " + ws.str());
  if (is.c() != ws[1]) {
    throw DimensionError("conv2d input has " + std::to_string(is.c()) + " channels, weight expects " +
                         std::to_string(ws[1]));
  }
  check_bias(bias, ws[0]);
  input.require_finite("conv2d input");

  Geometry g{is.c(), is.h(), is.w(), ws[2], stride, padding,
             conv_out_extent(is.h(), ws[2], stride, padding),
             conv_out_extent(is.w(), ws[2], stride, padding)};
  if (g.out_h < 1 || g.out_w < 1) {
    throw DimensionError("conv2d output would be empty for input " + is.str());
  }
  const std::int64_t out_c = ws[0];
  const std::int64_t hw = g.out_h * g.out_w;
  const std::int64_t ckk = g.channels * g.k * g.k;
  Tensor<T> out(Shape{is.n(), out_c, g.out_h, g.out_w});
  std::vector<T> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(ckk * hw));
  ConstMatMap<T> w(weight.data().data(), out_c, ckk);
  for (std::int64_t n = 0; n < is.n(); ++n) {
    const T* img = input.data().data() + n * g.channels * g.height * g.width;
    const T* cols = img;
    if (!is_pointwise(g)) {
      im2col(img, g, col.data());
      cols = col.data();
    }
    MatMap<T> o(out.data().data() + n * out_c * hw, out_c, hw);
    o.noalias() = w * ConstMatMap<T>(cols, ckk, hw);
    add_bias(bias, out_c, hw, o.data());
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& grad_out,
                     int stride, int padding, Tensor<T>* grad_input, Tensor<T>* grad_weight,
                     Tensor<T>* grad_bias) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  Geometry g{is.c(), is.h(), is.w(), ws[2], stride, padding, grad_out.shape().h(),
             grad_out.shape().w()};
  const std::int64_t out_c = ws[0];
  const std::int64_t hw = g.out_h * g.out_w;
  const std::int64_t ckk = g.channels * g.k * g.k;
  const std::int64_t image_size = g.channels * g.height * g.width;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk * hw));
  ConstMatMap<T> w(weight.data().data(), out_c, ckk);
  for (std::int64_t n = 0; n < is.n(); ++n) {
    ConstMatMap<T> go(grad_out.data().data() + n * out_c * hw, out_c, hw);
    if (grad_weight != nullptr) {
      const T* cols = input.data().data() + n * image_size;
      if (!pointwise) {
        im2col(cols, g, col.data());
        cols = col.data();
      }
      MatMap<T> gw(grad_weight->data().data(), out_c, ckk);
      gw.noalias() += go * ConstMatMap<T>(cols, ckk, hw).transpose();
    }
    accumulate_bias_grad(go.data(), out_c, hw, grad_bias);
    if (grad_input != nullptr) {
      T* gi = grad_input->data().data() + n * image_size;
      if (pointwise) {
        MatMap<T>(gi, ckk, hw).noalias() += w.transpose() * go;
      } else {
        MatMap<T> c(col.data(), ckk, hw);
        c.noalias() = w.transpose() * go;
        col2im(col.data(), g, gi);
      }
    }
  }
}

template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                            const Tensor<T>& bias, int stride, int padding) {
  require_rank4(input.shape(), "transposed_conv2d input");
  require_rank4(weight.shape(), "transposed_conv2d weight");
  const auto& ws = weight.shape();
  const auto& is = input.shape();
  check_geometry(ws[2], stride, padding);
  if (ws[2] != ws[3]) throw DimensionError("transposed_conv2d kernel must be square");
  if (is.c() != ws[0]) {
    throw DimensionError("transposed_conv2d input has " + std::to_string(is.c()) +
                         " channels, weight expects " + std::to_string(ws[0]));
  }
  check_bias(bias, ws[1]);
  input.require_finite("transposed_conv2d input");

  const std::int64_t out_c = ws[1];
  const std::int64_t out_h = transposed_conv_out_extent(is.h(), ws[2], stride, padding);
  const std::int64_t out_w = transposed_conv_out_extent(is.w(), ws[2], stride, padding);
  if (out_h < 1 || out_w < 1) throw DimensionError("transposed_conv2d output would be empty");
  // The output plays the image role of the adjoint convolution.
  Geometry g{out_c, out_h, out_w, ws[2], stride, padding, is.h(), is.w()};
  if (conv_out_extent(out_h, g.k, stride, padding) != is.h() ||
      conv_out_extent(out_w, g.k, stride, padding) != is.w()) {
    throw DimensionError("transposed_conv2d geometry is not invertible for input " + is.str());
  }
  const std::int64_t in_hw = is.h() * is.w();
  const std::int64_t ckk = out_c * g.k * g.k;
  Tensor<T> out(Shape{is.n(), out_c, out_h, out_w});
  std::vector<T> col(static_cast<std::size_t>(ckk * in_hw));
  ConstMatMap<T> w(weight.data().data(), is.c(), ckk);
  for (std::int64_t n = 0; n < is.n(); ++n) {
    ConstMatMap<T> x(input.data().data() + n * is.c() * in_hw, is.c(), in_hw);
    T* o = out.data().data() + n * out_c * out_h * out_w;
    if (is_pointwise(g)) {
      MatMap<T>(o, ckk, in_hw).noalias() = w.transpose() * x;
    } else {
      MatMap<T>(col.data(), ckk, in_hw).noalias() = w.transpose() * x;
      col2im(col.data(), g, o);
    }
    add_bias(bias, out_c, out_h * out_w, o);
  }
  return out;
}

template <typename T>
void transposed_conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                                const Tensor<T>& grad_out, int stride, int padding,
                                Tensor<T>* grad_input, Tensor<T>* grad_weight,
                                Tensor<T>* grad_bias) {
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const auto& os = grad_out.shape();
  const std::int64_t out_c = ws[1];
  Geometry g{out_c, os.h(), os.w(), ws[2], stride, padding, is.h(), is.w()};
  const std::int64_t in_hw = is.h() * is.w();
  const std::int64_t out_size = out_c * os.h() * os.w();
  const std::int64_t ckk = out_c * g.k * g.k;
  const bool pointwise = is_pointwise(g);
  std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(ckk * in_hw));
  ConstMatMap<T> w(weight.data().data(), is.c(), ckk);
  for (std::int64_t n = 0; n < is.n(); ++n) {
    const T* go = grad_out.data().data() + n * out_size;
    accumulate_bias_grad(go, out_c, os.h() * os.w(), grad_bias);
    if (grad_input == nullptr && grad_weight == nullptr) continue;
    const T* cols = go;
    if (!pointwise) {
      im2col(go, g, col.data());
      cols = col.data();
    }
    ConstMatMap<T> c(cols, ckk, in_hw);
    if (grad_input != nullptr) {
      MatMap<T>(grad_input->data().data() + n * is.c() * in_hw, is.c(), in_hw).noalias() += w * c;
    }
    if (grad_weight != nullptr) {
      ConstMatMap<T> x(input.data().data() + n * is.c() * in_hw, is.c(), in_hw);
      MatMap<T>(grad_weight->data().data(), is.c(), ckk).noalias() += x * c.transpose();
    }
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = x[i] + y[i];
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank4(a.shape(), "concat_channels lhs");
  require_rank4(b.shape(), "concat_channels rhs");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.n() != bs.n() || as.h() != bs.h() || as.w() != bs.w()) {
    throw DimensionError("concat_channels extent mismatch " + as.str() + " vs " + bs.str());
  }
  const std::int64_t hw = as.h() * as.w();
  Tensor<T> out(Shape{as.n(), as.c() + bs.c(), as.h(), as.w()});
  T* dst = out.data().data();
  for (std::int64_t n = 0; n < as.n(); ++n) {
    const T* pa = a.data().data() + n * as.c() * hw;
    const T* pb = b.data().data() + n * bs.c() * hw;
    dst = std::copy(pa, pa + as.c() * hw, dst);
    dst = std::copy(pb, pb + bs.c() * hw, dst);
  }
  return out;
}

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("l1_loss shape mismatch " + pred.shape().str() + " vs " +
                         target.shape().str());
  }
  if (pred.shape().rank() != 4) throw DimensionError("l1_loss expects NCHW tensors");
  const std::int64_t n = pred.shape().n();
  const std::int64_t per = pred.numel() / std::max<std::int64_t>(n, 1);
  auto p = pred.data();
  auto t = target.data();
  T total = 0;
  for (std::int64_t b = 0; b < n; ++b) {
    T s = 0;
    for (std::int64_t i = b * per; i < (b + 1) * per; ++i) s += std::abs(p[i] - t[i]);
    total += s / static_cast<T>(per);
  }
  return total / static_cast<T>(n);
}

#define MTDEBLUR_INSTANTIATE(T)                                                                  \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);     \
  template Tensor<T> transposed_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, \
                                       int);                                                      \
  template Tensor<T> relu(const Tensor<T>&);                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
  template T l1_loss(const Tensor<T>&, const Tensor<T>&);                                         \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int,   \
                                Tensor<T>*, Tensor<T>*, Tensor<T>*);                              \
  template void transposed_conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                           int, int, Tensor<T>*, Tensor<T>*, Tensor<T>*);

MTDEBLUR_INSTANTIATE(float)
MTDEBLUR_INSTANTIATE(double)

#undef MTDEBLUR_INSTANTIATE

}  // namespace mtdeblur
