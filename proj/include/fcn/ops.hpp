#pragma once

#include <vector>

#include "fcn/geometry.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

// Convolution is cross-correlation (no kernel flip). Weights are
// out_ch x in_ch x k x k, bias (optional) 1 x out_ch x 1 x 1.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                          const TensorT<T>* bias, const LayerGeom& g);

// Any of dx/dw/db may be null when that gradient is not needed.
// dx must be preshaped like x, dw like w, db like bias; all are accumulated
// into after being zeroed by the caller.
template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                     const LayerGeom& g, const TensorT<T>& dy,
                     TensorT<T>* dx, TensorT<T>* dw, TensorT<T>* db);

// Max pooling. argmax records the flat input index feeding each output cell;
// ties go to the first window cell in row-major order, and the same indices
// route gradients back. As with conv, g.dilation spaces the window taps.
template <typename T>
TensorT<T> pool2d_max_forward(const TensorT<T>& x, const LayerGeom& g,
                              std::vector<size_t>& argmax);

template <typename T>
void pool2d_max_backward(const TensorT<T>& dy, const std::vector<size_t>& argmax,
                         TensorT<T>& dx);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x);

// Subgradient at 0 is 0.
template <typename T>
void relu_backward(const TensorT<T>& x, const TensorT<T>& dy, TensorT<T>& dx);

// Transposed convolution: upsamples by integer factor f,
// out = (in-1)*f + k - 2p. Weights out_ch x in_ch x k x k where in_ch
// matches x. No bias. Backward w.r.t. the input is an ordinary strided
// convolution with the same kernel.
template <typename T>
TensorT<T> deconv2d_forward(const TensorT<T>& x, const TensorT<T>& w,
                            const LayerGeom& g);

template <typename T>
void deconv2d_backward(const TensorT<T>& x, const TensorT<T>& w,
                       const LayerGeom& g, const TensorT<T>& dy,
                       TensorT<T>* dx, TensorT<T>* dw);

// Channel-diagonal bilinear interpolation kernel for factor f:
// size k = 2f - (f % 2), 1-D profile 1 - |i/f - c| with c = (k-1)/(2f).
// Cross-channel entries are zero.
template <typename T>
TensorT<T> bilinear_kernel(int f, int channels);

// Elementwise sum of two equally shaped tensors. Alignment crops happen
// before this call.
template <typename T>
TensorT<T> fuse_sum(const TensorT<T>& a, const TensorT<T>& b);

// Center crop to a target spatial extent; offsets round toward the top-left.
template <typename T>
TensorT<T> center_crop_to(const TensorT<T>& t, int out_h, int out_w) {
  return crop(t, (t.h() - out_h) / 2, (t.w() - out_w) / 2, out_h, out_w);
}

// Reshape an FC matrix (out x (c*h*w) stored as out x chw x 1 x 1) into conv
// weights out x c x h x w. Pure reinterpretation of row-major layout.
template <typename T>
TensorT<T> convolutionalize_fc(const TensorT<T>& fc_w, int c, int h, int w);

}  // namespace fcn
