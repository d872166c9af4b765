#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fcn/error.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

// Exact rational, always reduced, positive denominator. Strides become
// fractional once deconv layers enter a chain; floats would drift.
struct Rational {
  int64_t num = 0;
  int64_t den = 1;

  Rational() = default;
  Rational(int64_t n) : num(n), den(1) {}
  Rational(int64_t n, int64_t d) : num(n), den(d) { reduce(); }

  void reduce() {
    if (den == 0) throw DataError("rational with zero denominator");
    if (den < 0) { num = -num; den = -den; }
    int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) { num /= g; den /= g; }
    if (num == 0) den = 1;
  }

  bool is_integer() const { return den == 1; }
  int64_t as_int() const {
    if (!is_integer()) throw DataError("rational " + str() + " is not integral");
    return num;
  }
  double as_double() const { return double(num) / double(den); }
  std::string str() const {
    return is_integer() ? std::to_string(num)
                        : std::to_string(num) + "/" + std::to_string(den);
  }

  friend Rational operator*(Rational a, Rational b) {
    return Rational(a.num * b.num, a.den * b.den);
  }
  friend Rational operator+(Rational a, Rational b) {
    return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
  }
  friend Rational operator-(Rational a, Rational b) {
    return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
  }
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num == b.num && a.den == b.den;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
};

enum class GeomKind { kConv, kPool, kElementwise, kDeconv };

// Geometry of one layer. Square kernels. For deconv, f is the upsampling
// factor and k its kernel; for everything else f is unused. dilation > 1
// only appears in destrided pools manufactured by equivalent_dense_net.
struct LayerGeom {
  GeomKind kind = GeomKind::kElementwise;
  int k = 1;
  int s = 1;
  int p = 0;
  int f = 1;
  int dilation = 1;

  int k_eff() const { return (k - 1) * dilation + 1; }
};

LayerGeom conv_geom(int k, int s, int p);
LayerGeom pool_geom(int k, int s, int p);
LayerGeom elementwise_geom();
LayerGeom deconv_geom(int k, int f, int p);

// Composite view of a layer stack. K is the receptive field of one output
// cell in input pixels (exact for padding-free stacks), S the input-to-output
// stride, P the accumulated padding in input pixels. The underlying chain is
// kept so output extents can be folded exactly, floors and all.
struct GeomSummary {
  Rational K{1};
  Rational S{1};
  Rational P{0};
  std::vector<LayerGeom> chain;
};

GeomSummary summarize(const LayerGeom& g);

// outer runs after inner: K = K_in + (K_out - 1) * S_in, S = S_out * S_in.
// Associative.
GeomSummary compose(const GeomSummary& outer, const GeomSummary& inner);

// Extent of one spatial axis after a single layer / a whole chain.
// Throws when a window does not fit (extent would drop below 1).
int layer_output_extent(const LayerGeom& g, int n);
int output_extent(const GeomSummary& s, int n);

// Zero-stuff a kernel so a following stride can be removed: entries move to
// coordinates multiplied by s, everything between is zero. Output kernel is
// (k-1)*s+1 per axis. s = 1 returns the input unchanged.
template <typename T>
TensorT<T> rarefy_filter(const TensorT<T>& w, int s) {
  if (s < 1) throw DataError("rarefaction stride must be >= 1");
  if (s == 1) return w;
  int kh = w.h(), kw = w.w();
  TensorT<T> out(w.n(), w.c(), (kh - 1) * s + 1, (kw - 1) * s + 1);
  for (int oc = 0; oc < w.n(); ++oc)
    for (int ic = 0; ic < w.c(); ++ic)
      for (int y = 0; y < kh; ++y)
        for (int x = 0; x < kw; ++x)
          out.at(oc, ic, y * s, x * s) = w.at(oc, ic, y, x);
  return out;
}

}  // namespace fcn
