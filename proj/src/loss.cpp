#include <cmath>

#include "fcn/loss.hpp"
#include "fcn/rng.hpp"

namespace fcn {

SampleMask sample_mask(double p, int h, int w, uint64_t seed) {
  if (!(p > 0.0) || p > 1.0)
    throw DataError("sample probability must be in (0, 1], got " + std::to_string(p));
  if (h <= 0 || w <= 0) throw DataError("mask dims must be positive");
  SampleMask m;
  m.p = p;
  m.h = h;
  m.w = w;
  m.keep.assign(static_cast<size_t>(h) * w, 1);
  if (p < 1.0) {
    Rng rng(seed, "mask");
    for (uint8_t& cell : m.keep) cell = rng.uniform() < p ? 1 : 0;
  }
  return m;
}

template <typename T>
LossReportT<T> softmax_xent_spatial(const TensorT<T>& scores,
                                    const std::vector<LabelMap>& targets,
                                    LossNorm norm, TensorT<T>* dscores,
                                    const std::vector<double>* class_weights,
                                    const std::vector<SampleMask>* masks) {
  const int n = scores.n(), n_cl = scores.c(), h = scores.h(), w = scores.w();
  if (int(targets.size()) != n)
    throw DataError("got " + std::to_string(targets.size()) + " label maps for " +
                    std::to_string(n) + " score maps");
  for (const LabelMap& t : targets)
    if (t.h != h || t.w != w)
      throw DataError("label map is " + std::to_string(t.h) + "x" +
                      std::to_string(t.w) + ", scores are " + std::to_string(h) +
                      "x" + std::to_string(w));
  if (class_weights && int(class_weights->size()) != n_cl)
    throw DataError("class weight list has " + std::to_string(class_weights->size()) +
                    " entries for " + std::to_string(n_cl) + " classes");
  if (masks && !masks->empty()) {
    if (int(masks->size()) != n)
      throw DataError("got " + std::to_string(masks->size()) + " masks for " +
                      std::to_string(n) + " images");
    for (const SampleMask& m : *masks)
      if (m.h != h || m.w != w) throw DataError("mask dims do not match scores");
  }
  const bool masked = masks && !masks->empty();

  LossReportT<T> rep;
  rep.pixel = TensorT<T>(n, 1, h, w);
  if (dscores) *dscores = TensorT<T>(n, n_cl, h, w);

  double total = 0.0;
  std::vector<double> prob(n_cl);
  for (int b = 0; b < n; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const uint8_t label = targets[b].at(y, x);
        if (label == kIgnoreLabel) continue;
        if (label >= n_cl)
          throw DataError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(n_cl) + " classes");
        if (masked && !(*masks)[b].kept(y, x)) continue;

        double m = scores.at(b, 0, y, x);
        for (int c = 1; c < n_cl; ++c) m = std::max(m, double(scores.at(b, c, y, x)));
        double z = 0.0;
        for (int c = 0; c < n_cl; ++c) {
          prob[c] = std::exp(double(scores.at(b, c, y, x)) - m);
          z += prob[c];
        }
        const double wc = class_weights ? (*class_weights)[label] : 1.0;
        const double pix = wc * (std::log(z) + m - double(scores.at(b, label, y, x)));
        rep.pixel.at(b, 0, y, x) = T(pix);
        total += pix;
        ++rep.contributing;
        if (dscores)
          for (int c = 0; c < n_cl; ++c)
            dscores->at(b, c, y, x) =
                T(wc * (prob[c] / z - (c == label ? 1.0 : 0.0)));
      }
    }
  }

  if (norm == LossNorm::kMean && rep.contributing > 0) {
    total /= double(rep.contributing);
    if (dscores) {
      const T inv = T(1.0 / double(rep.contributing));
      for (T& v : dscores->data) v *= inv;
    }
  }
  rep.value = total;
  return rep;
}

template <typename T>
LossReportT<T> softmax_xent_spatial(const TensorT<T>& scores, const LabelMap& target,
                                    const std::vector<double>* class_weights,
                                    const SampleMask* mask, LossNorm norm,
                                    TensorT<T>* dscores) {
  std::vector<LabelMap> targets{target};
  std::vector<SampleMask> masks;
  if (mask) masks.push_back(*mask);
  return softmax_xent_spatial(scores, targets, norm, dscores, class_weights,
                              mask ? &masks : nullptr);
}

template <typename T>
LossReportT<T> multi_head_loss(const std::vector<LossHead<T>>& heads, LossNorm norm) {
  if (heads.empty()) throw DataError("multi-head loss over an empty head list");

  LossReportT<T> out;
  // Class counts may differ per head (semantic vs geometric); the combined
  // per-pixel map only needs the batch and spatial extents to agree.
  bool uniform_shape = true;
  for (const LossHead<T>& head : heads)
    if (head.scores->n() != heads[0].scores->n() ||
        head.scores->h() != heads[0].scores->h() ||
        head.scores->w() != heads[0].scores->w())
      uniform_shape = false;
  if (uniform_shape)
    out.pixel = TensorT<T>(heads[0].scores->n(), 1, heads[0].scores->h(),
                           heads[0].scores->w());

  for (const LossHead<T>& head : heads) {
    LossReportT<T> rep = softmax_xent_spatial(*head.scores, *head.targets, norm,
                                              head.dscores, head.class_weights,
                                              head.masks);
    out.value += head.weight * rep.value;
    out.contributing += rep.contributing;
    if (head.dscores && head.weight != 1.0)
      for (T& v : head.dscores->data) v *= T(head.weight);
    if (uniform_shape)
      for (size_t i = 0; i < out.pixel.data.size(); ++i)
        out.pixel.data[i] += T(head.weight) * rep.pixel.data[i];
  }
  return out;
}

#define FCN_INSTANTIATE(T)                                                       \
  template LossReportT<T> softmax_xent_spatial<T>(                               \
      const TensorT<T>&, const std::vector<LabelMap>&, LossNorm, TensorT<T>*,    \
      const std::vector<double>*, const std::vector<SampleMask>*);               \
  template LossReportT<T> softmax_xent_spatial<T>(                               \
      const TensorT<T>&, const LabelMap&, const std::vector<double>*,            \
      const SampleMask*, LossNorm, TensorT<T>*);                                 \
  template LossReportT<T> multi_head_loss<T>(const std::vector<LossHead<T>>&,    \
                                             LossNorm);

FCN_INSTANTIATE(float)
FCN_INSTANTIATE(double)

#undef FCN_INSTANTIATE

}  // namespace fcn
