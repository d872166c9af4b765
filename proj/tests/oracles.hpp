// Independent reference implementations the tests check against. Everything
// here is written from the definitions, not from the code under test:
// im2col matmul for convolution, explicit scatter for deconvolution, the
// closed-form tent for bilinear interpolation, central differences for
// gradients.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "fcn/tensor.hpp"

namespace oracle {

// Convolution as im2col + matmul (structurally unlike the nested-loop
// implementation). Output extent floor((n + 2p - k_eff)/s) + 1.
inline fcn::TensorD conv_ref(const fcn::TensorD& x, const fcn::TensorD& w,
                             const fcn::TensorD* bias, int s, int p, int d) {
  const int keff = (w.h() - 1) * d + 1;
  const int oh = (x.h() + 2 * p - keff) / s + 1;
  const int ow = (x.w() + 2 * p - keff) / s + 1;
  const int patch = w.c() * w.h() * w.w();
  fcn::TensorD out(x.n(), w.n(), oh, ow);
  std::vector<double> col(static_cast<size_t>(patch) * oh * ow);
  for (int b = 0; b < x.n(); ++b) {
    size_t idx = 0;
    for (int ic = 0; ic < w.c(); ++ic)
      for (int ky = 0; ky < w.h(); ++ky)
        for (int kx = 0; kx < w.w(); ++kx)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const int iy = oy * s - p + ky * d;
              const int ix = ox * s - p + kx * d;
              col[idx++] = (iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w())
                               ? x.at(b, ic, iy, ix)
                               : 0.0;
            }
    for (int oc = 0; oc < w.n(); ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias->at(0, oc, 0, 0) : 0.0;
          for (int q = 0; q < patch; ++q)
            acc += w.data[static_cast<size_t>(oc) * patch + q] *
                   col[static_cast<size_t>(q) * oh * ow +
                       static_cast<size_t>(oy) * ow + ox];
          out.at(b, oc, oy, ox) = acc;
        }
  }
  return out;
}

// Deconvolution by its definition: scatter each input cell through the
// kernel, then trim p from every border.
inline fcn::TensorD deconv_ref(const fcn::TensorD& x, const fcn::TensorD& w,
                               int f, int p) {
  const int fullh = (x.h() - 1) * f + w.h();
  const int fullw = (x.w() - 1) * f + w.w();
  fcn::TensorD full(x.n(), w.n(), fullh, fullw);
  for (int b = 0; b < x.n(); ++b)
    for (int ic = 0; ic < x.c(); ++ic)
      for (int oc = 0; oc < w.n(); ++oc)
        for (int y = 0; y < x.h(); ++y)
          for (int xx = 0; xx < x.w(); ++xx)
            for (int ky = 0; ky < w.h(); ++ky)
              for (int kx = 0; kx < w.w(); ++kx)
                full.at(b, oc, y * f + ky, xx * f + kx) +=
                    x.at(b, ic, y, xx) * w.at(oc, ic, ky, kx);
  fcn::TensorD out(x.n(), w.n(), fullh - 2 * p, fullw - 2 * p);
  for (int b = 0; b < out.n(); ++b)
    for (int c = 0; c < out.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int xx = 0; xx < out.w(); ++xx)
          out.at(b, c, y, xx) = full.at(b, c, y + p, xx + p);
  return out;
}

// 1-D tent weight of dense position j against coarse cell i at factor f,
// kernel size 2f - f%2: the closed form behind bilinear interpolation.
inline double tent(int j, int i, int f) {
  const int k = 2 * f - f % 2;
  const double c = (k - 1) / (2.0 * f);
  const double a = 1.0 - std::abs(double(j) / f - i - c);
  return a > 0 ? a : 0;
}

// Max rel error of analytic gradients against central differences. entries
// pairs a parameter location with its analytic gradient; loss() must
// recompute the scalar from current parameter values.
struct GradEntry {
  double* value;
  double analytic;
};

inline double grad_check(const std::function<double()>& loss,
                         const std::vector<GradEntry>& entries,
                         double step = 1e-5) {
  double worst = 0;
  for (const GradEntry& e : entries) {
    const double keep = *e.value;
    *e.value = keep + step;
    const double up = loss();
    *e.value = keep - step;
    const double down = loss();
    *e.value = keep;
    const double numeric = (up - down) / (2 * step);
    const double scale = std::max({1.0, std::abs(numeric), std::abs(e.analytic)});
    worst = std::max(worst, std::abs(numeric - e.analytic) / scale);
  }
  return worst;
}

}  // namespace oracle
