#pragma once

#include <cstdint>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

// How the scalar loss relates to the per-pixel map: plain sum, or sum divided
// by the number of contributing pixels. Training uses the mean so the
// learning rate does not depend on image resolution.
enum class LossNorm { kSum, kMean };

// Bernoulli keep-mask over final-layer cells. p = 1 is built without touching
// the generator, so sampled and unsampled runs share the same seed stream.
struct SampleMask {
  double p = 1.0;
  int h = 0, w = 0;
  std::vector<uint8_t> keep;  // h*w entries, 1 = pixel contributes

  bool kept(int y, int x) const { return keep[static_cast<size_t>(y) * w + x] != 0; }
};

SampleMask sample_mask(double p, int h, int w, uint64_t seed);

template <typename T>
struct LossReportT {
  // Sum or mean (per LossNorm) of the pixel map over contributing pixels.
  double value = 0.0;
  // (n, 1, h, w): raw per-pixel loss, zero at IGNORE / masked-out pixels.
  TensorT<T> pixel;
  long long contributing = 0;
};

using LossReport = LossReportT<float>;

// Per-pixel multinomial logistic loss over class scores (n, n_cl, h, w).
// targets holds one label map per batch image. IGNORE pixels and mask-false
// pixels contribute zero loss and zero gradient. class_weights, if given,
// scales both by the target class's weight. dscores, if given, is resized to
// the score shape and overwritten with d(value)/d(scores).
template <typename T>
LossReportT<T> softmax_xent_spatial(const TensorT<T>& scores,
                                    const std::vector<LabelMap>& targets,
                                    LossNorm norm = LossNorm::kMean,
                                    TensorT<T>* dscores = nullptr,
                                    const std::vector<double>* class_weights = nullptr,
                                    const std::vector<SampleMask>* masks = nullptr);

// Single-image convenience wrapper.
template <typename T>
LossReportT<T> softmax_xent_spatial(const TensorT<T>& scores, const LabelMap& target,
                                    const std::vector<double>* class_weights = nullptr,
                                    const SampleMask* mask = nullptr,
                                    LossNorm norm = LossNorm::kMean,
                                    TensorT<T>* dscores = nullptr);

// One prediction head of a multi-headed net.
template <typename T>
struct LossHead {
  const TensorT<T>* scores = nullptr;
  const std::vector<LabelMap>* targets = nullptr;
  double weight = 1.0;
  TensorT<T>* dscores = nullptr;
  const std::vector<double>* class_weights = nullptr;
  const std::vector<SampleMask>* masks = nullptr;
};

// Weighted sum of per-head losses; each head's gradient is scaled by its
// weight and written to its own dscores. The combined pixel map is filled
// only when every head shares one spatial shape (as in the two-head toy
// net); heads of unequal extent leave it empty.
template <typename T>
LossReportT<T> multi_head_loss(const std::vector<LossHead<T>>& heads,
                               LossNorm norm = LossNorm::kMean);

}  // namespace fcn
