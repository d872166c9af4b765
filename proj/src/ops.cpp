#include "fcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace fcn {

namespace {

// Output-cell range [lo, hi] for which the input coordinate o*s + off stays
// inside [0, extent). Empty range when lo > hi.
inline void valid_out_range(int off, int s, int extent, int out, int& lo, int& hi) {
  lo = off < 0 ? (-off + s - 1) / s : 0;
  hi = std::min(out - 1, (extent - 1 - off) / s);
}

}  // namespace

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                          const TensorT<T>* bias, const LayerGeom& g) {
  if (w.c() != x.c())
    throw DataError("conv weight expects " + std::to_string(w.c()) +
                    " input channels, got " + std::to_string(x.c()));
  if (w.h() != g.k || w.w() != g.k)
    throw DataError("conv weight kernel " + std::to_string(w.h()) +
                    " does not match geometry k=" + std::to_string(g.k));
  if (bias && (bias->c() != w.n() || bias->n() != 1 || bias->h() != 1 || bias->w() != 1))
    throw DataError("conv bias must be 1x" + std::to_string(w.n()) + "x1x1");
  const int out_h = layer_output_extent(g, x.h());
  const int out_w = layer_output_extent(g, x.w());
  const int oc_n = w.n(), ic_n = x.c();
  TensorT<T> y(x.n(), oc_n, out_h, out_w);

  for (int b = 0; b < x.n(); ++b) {
    for (int oc = 0; oc < oc_n; ++oc) {
      T* yplane = &y.at(b, oc, 0, 0);
      if (bias) {
        T bv = bias->at(0, oc, 0, 0);
        std::fill(yplane, yplane + size_t(out_h) * out_w, bv);
      }
      for (int ic = 0; ic < ic_n; ++ic) {
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            const T wv = w.at(oc, ic, ky, kx);
            if (wv == T(0)) continue;  // rarefied kernels are mostly zeros
            int oy_lo, oy_hi, ox_lo, ox_hi;
            valid_out_range(ky * g.dilation - g.p, g.s, x.h(), out_h, oy_lo, oy_hi);
            valid_out_range(kx * g.dilation - g.p, g.s, x.w(), out_w, ox_lo, ox_hi);
            for (int oy = oy_lo; oy <= oy_hi; ++oy) {
              const T* xrow = &x.at(b, ic, oy * g.s + ky * g.dilation - g.p, 0);
              T* yrow = yplane + size_t(oy) * out_w;
              const int base = kx * g.dilation - g.p;
              for (int ox = ox_lo; ox <= ox_hi; ++ox)
                yrow[ox] += wv * xrow[ox * g.s + base];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                     const LayerGeom& g, const TensorT<T>& dy,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db) {
  const int out_h = dy.h(), out_w = dy.w();
  if (db) {
    for (int b = 0; b < dy.n(); ++b)
      for (int oc = 0; oc < dy.c(); ++oc) {
        T acc = 0;
        const T* row = &dy.at(b, oc, 0, 0);
        for (size_t i = 0; i < size_t(out_h) * out_w; ++i) acc += row[i];
        db->at(0, oc, 0, 0) += acc;
      }
  }
  if (!dx && !dw) return;

  for (int b = 0; b < x.n(); ++b) {
    for (int oc = 0; oc < w.n(); ++oc) {
      for (int ic = 0; ic < x.c(); ++ic) {
        for (int ky = 0; ky < g.k; ++ky) {
          for (int kx = 0; kx < g.k; ++kx) {
            int oy_lo, oy_hi, ox_lo, ox_hi;
            valid_out_range(ky * g.dilation - g.p, g.s, x.h(), out_h, oy_lo, oy_hi);
            valid_out_range(kx * g.dilation - g.p, g.s, x.w(), out_w, ox_lo, ox_hi);
            const int base = kx * g.dilation - g.p;
            if (dw) {
              T acc = 0;
              for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                const T* xrow = &x.at(b, ic, oy * g.s + ky * g.dilation - g.p, 0);
                const T* gyrow = &dy.at(b, oc, oy, 0);
                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                  acc += gyrow[ox] * xrow[ox * g.s + base];
              }
              dw->at(oc, ic, ky, kx) += acc;
            }
            if (dx) {
              const T wv = w.at(oc, ic, ky, kx);
              if (wv == T(0)) continue;
              for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                T* dxrow = &dx->at(b, ic, oy * g.s + ky * g.dilation - g.p, 0);
                const T* gyrow = &dy.at(b, oc, oy, 0);
                for (int ox = ox_lo; ox <= ox_hi; ++ox)
                  dxrow[ox * g.s + base] += wv * gyrow[ox];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
TensorT<T> pool2d_max_forward(const TensorT<T>& x, const LayerGeom& g,
                              std::vector<size_t>& argmax) {
  const int out_h = layer_output_extent(g, x.h());
  const int out_w = layer_output_extent(g, x.w());
  TensorT<T> y(x.n(), x.c(), out_h, out_w);
  argmax.assign(y.size(), size_t(-1));

  size_t oi = 0;
  for (int b = 0; b < x.n(); ++b) {
    for (int c = 0; c < x.c(); ++c) {
      for (int oy = 0; oy < out_h; ++oy) {
        for (int ox = 0; ox < out_w; ++ox, ++oi) {
          T best = -std::numeric_limits<T>::infinity();
          size_t best_idx = size_t(-1);
          for (int ky = 0; ky < g.k; ++ky) {
            const int iy = oy * g.s - g.p + ky * g.dilation;
            if (iy < 0 || iy >= x.h()) continue;
            for (int kx = 0; kx < g.k; ++kx) {
              const int ix = ox * g.s - g.p + kx * g.dilation;
              if (ix < 0 || ix >= x.w()) continue;
              const T v = x.at(b, c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = x.idx(b, c, iy, ix);
              }
            }
          }
          if (best_idx == size_t(-1))
            throw NumericError("pool window fully outside the input");
          y.data[oi] = best;
          argmax[oi] = best_idx;
        }
      }
    }
  }
  return y;
}

template <typename T>
void pool2d_max_backward(const TensorT<T>& dy, const std::vector<size_t>& argmax,
                         TensorT<T>& dx) {
  if (argmax.size() != dy.size())
    throw DataError("pool backward: argmax does not match output size");
  for (size_t i = 0; i < dy.size(); ++i) dx.data[argmax[i]] += dy.data[i];
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> y(x.n(), x.c(), x.h(), x.w());
  for (size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
  return y;
}

template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx) {
  for (size_t i = 0; i < x.size(); ++i)
    if (x.data[i] > T(0)) dx.data[i] += dy.data[i];
}

template <typename T>
TensorT<T> deconv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                            const LayerGeom& g) {
  if (w.c() != x.c())
    throw DataError("deconv weight expects " + std::to_string(w.c()) +
                    " input channels, got " + std::to_string(x.c()));
  const int out_h = layer_output_extent(g, x.h());
  const int out_w = layer_output_extent(g, x.w());
  if (out_h < 1 || out_w < 1) throw DataError("deconv output extent below 1");
  TensorT<T> y(x.n(), w.n(), out_h, out_w);

  for (int b = 0; b < x.n(); ++b)
    for (int oc = 0; oc < w.n(); ++oc)
      for (int ic = 0; ic < x.c(); ++ic)
        for (int ky = 0; ky < g.k; ++ky)
          for (int kx = 0; kx < g.k; ++kx) {
            const T wv = w.at(oc, ic, ky, kx);
            if (wv == T(0)) continue;
            for (int iy = 0; iy < x.h(); ++iy) {
              const int oy = iy * g.f + ky - g.p;
              if (oy < 0 || oy >= out_h) continue;
              const T* xrow = &x.at(b, ic, iy, 0);
              T* yrow = &y.at(b, oc, oy, 0);
              for (int ix = 0; ix < x.w(); ++ix) {
                const int ox = ix * g.f + kx - g.p;
                if (ox < 0 || ox >= out_w) continue;
                yrow[ox] += wv * xrow[ix];
              }
            }
          }
  return y;
}

template <typename T>
void deconv2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                       const LayerGeom& g, const TensorT<T>& dy,
                       TensorT<T>* dx, TensorT<T>* dw) {
  for (int b = 0; b < x.n(); ++b)
    for (int oc = 0; oc < w.n(); ++oc)
      for (int ic = 0; ic < x.c(); ++ic)
        for (int ky = 0; ky < g.k; ++ky)
          for (int kx = 0; kx < g.k; ++kx) {
            const T wv = w.at(oc, ic, ky, kx);
            T acc = 0;
            for (int iy = 0; iy < x.h(); ++iy) {
              const int oy = iy * g.f + ky - g.p;
              if (oy < 0 || oy >= dy.h()) continue;
              const T* xrow = &x.at(b, ic, iy, 0);
              const T* gyrow = &dy.at(b, oc, oy, 0);
              T* dxrow = dx ? &dx->at(b, ic, iy, 0) : nullptr;
              for (int ix = 0; ix < x.w(); ++ix) {
                const int ox = ix * g.f + kx - g.p;
                if (ox < 0 || ox >= dy.w()) continue;
                if (dx) dxrow[ix] += wv * gyrow[ox];
                if (dw) acc += xrow[ix] * gyrow[ox];
              }
            }
            if (dw) dw->at(oc, ic, ky, kx) += acc;
          }
}

template <typename T>
TensorT<T> bilinear_kernel(int f, int channels) {
  if (f < 1 || channels < 1) throw DataError("bad bilinear kernel request");
  const int k = 2 * f - (f % 2);
  const double c = double(k - 1) / (2.0 * f);
  std::vector<double> w1(k);
  for (int i = 0; i < k; ++i) w1[i] = 1.0 - std::abs(double(i) / f - c);
  TensorT<T> w(channels, channels, k, k);
  for (int ch = 0; ch < channels; ++ch)
    for (int y = 0; y < k; ++y)
      for (int x = 0; x < k; ++x)
        w.at(ch, ch, y, x) = T(w1[y] * w1[x]);
  return w;
}

template <typename T>
TensorT<T> fuse_sum(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b))
    throw DataError("fuse_sum shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<T> out = a;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
  return out;
}

template <typename T>
TensorT<T> convolutionalize_fc(const TensorT<T>& fc_w, int c, int h, int w) {
  if (fc_w.h() != 1 || fc_w.w() != 1 || fc_w.c() != c * h * w)
    throw DataError("FC matrix " + fc_w.shape_str() + " does not flatten to " +
                    std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w));
  TensorT<T> out(fc_w.n(), c, h, w);
  out.data = fc_w.data;  // identical row-major layout
  return out;
}

#define FCN_INSTANTIATE(T)                                                        \
  template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&,     \
                                        const TensorT<T>*, const LayerGeom&);     \
  template void conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,          \
                                   const LayerGeom&, const TensorT<T>&,           \
                                   TensorT<T>*, TensorT<T>*, TensorT<T>*);        \
  template TensorT<T> pool2d_max_forward<T>(const TensorT<T>&, const LayerGeom&,  \
                                            std::vector<size_t>&);                \
  template void pool2d_max_backward<T>(const TensorT<T>&,                         \
                                       const std::vector<size_t>&, TensorT<T>&);  \
  template TensorT<T> relu_forward<T>(const TensorT<T>&);                         \
  template void relu_backward<T>(const TensorT<T>&, const TensorT<T>&,            \
                                 TensorT<T>&);                                    \
  template TensorT<T> deconv2d_forward<T>(const TensorT<T>&, const TensorT<T>&,   \
                                          const LayerGeom&);                      \
  template void deconv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,        \
                                     const LayerGeom&, const TensorT<T>&,         \
                                     TensorT<T>*, TensorT<T>*);                   \
  template TensorT<T> bilinear_kernel<T>(int, int);                               \
  template TensorT<T> fuse_sum<T>(const TensorT<T>&, const TensorT<T>&);          \
  template TensorT<T> convolutionalize_fc<T>(const TensorT<T>&, int, int, int);

FCN_INSTANTIATE(float)
FCN_INSTANTIATE(double)

#undef FCN_INSTANTIATE

}  // namespace fcn
