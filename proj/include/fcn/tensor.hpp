#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fcn/error.hpp"

namespace fcn {

// Dense 4-D array, N x C x H x W, row-major: element (b,c,y,x) lives at
// ((b*C + c)*H + y)*W + x. Files are always float32; TensorT<double> exists
// for gradient checking and the --f64 compute mode.
template <typename T>
struct TensorT {
  std::array<int, 4> dims{0, 0, 0, 0};
  std::vector<T> data;

  TensorT() = default;
  TensorT(int n, int c, int h, int w) : dims{n, c, h, w} {
    if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
      throw DataError("tensor dims must be positive, got " + shape_str());
    data.assign(static_cast<size_t>(n) * c * h * w, T(0));
  }

  int n() const { return dims[0]; }
  int c() const { return dims[1]; }
  int h() const { return dims[2]; }
  int w() const { return dims[3]; }
  size_t size() const { return data.size(); }

  T& at(int b, int ch, int y, int x) {
    return data[idx(b, ch, y, x)];
  }
  const T& at(int b, int ch, int y, int x) const {
    return data[idx(b, ch, y, x)];
  }

  size_t idx(int b, int ch, int y, int x) const {
    return ((static_cast<size_t>(b) * dims[1] + ch) * dims[2] + y) * dims[3] + x;
  }

  bool same_shape(const TensorT& o) const { return dims == o.dims; }

  std::string shape_str() const {
    return std::to_string(dims[0]) + "x" + std::to_string(dims[1]) + "x" +
           std::to_string(dims[2]) + "x" + std::to_string(dims[3]);
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(dims[0], dims[1], dims[2], dims[3]);
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// Spatial crop: keeps [off_h, off_h+out_h) x [off_w, off_w+out_w).
// Out-of-bounds windows are an error naming the offending axis.
template <typename T>
TensorT<T> crop(const TensorT<T>& t, int off_h, int off_w, int out_h, int out_w) {
  if (off_h < 0 || out_h <= 0 || off_h + out_h > t.h())
    throw DataError("crop window [" + std::to_string(off_h) + "," +
                    std::to_string(off_h + out_h) + ") exceeds axis h of extent " +
                    std::to_string(t.h()));
  if (off_w < 0 || out_w <= 0 || off_w + out_w > t.w())
    throw DataError("crop window [" + std::to_string(off_w) + "," +
                    std::to_string(off_w + out_w) + ") exceeds axis w of extent " +
                    std::to_string(t.w()));
  TensorT<T> out(t.n(), t.c(), out_h, out_w);
  for (int b = 0; b < t.n(); ++b)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x)
          out.at(b, c, y, x) = t.at(b, c, y + off_h, x + off_w);
  return out;
}

// Integer label image. Values are class ids in [0, n_cl); 255 marks pixels
// excluded from loss and metrics.
constexpr uint8_t kIgnoreLabel = 255;

struct LabelMap {
  int h = 0, w = 0;
  std::vector<uint8_t> data;

  LabelMap() = default;
  LabelMap(int h_, int w_) : h(h_), w(w_) {
    if (h <= 0 || w <= 0)
      throw DataError("label map dims must be positive");
    data.assign(static_cast<size_t>(h) * w, 0);
  }

  uint8_t& at(int y, int x) { return data[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return data[static_cast<size_t>(y) * w + x]; }
};

}  // namespace fcn
