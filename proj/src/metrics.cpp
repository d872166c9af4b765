#include <algorithm>

#include "fcn/metrics.hpp"

namespace fcn {

ConfusionMatrix::ConfusionMatrix(int classes) : n_cl(classes) {
  if (classes < 1) throw DataError("confusion matrix needs at least one class");
  if (classes >= int(kIgnoreLabel))
    throw DataError("class count " + std::to_string(classes) +
                    " collides with the ignore label");
  counts.assign(static_cast<size_t>(classes) * classes, 0);
}

long long ConfusionMatrix::row_total(int truth) const {
  long long t = 0;
  for (int j = 0; j < n_cl; ++j) t += at(truth, j);
  return t;
}

long long ConfusionMatrix::col_total(int pred) const {
  long long t = 0;
  for (int i = 0; i < n_cl; ++i) t += at(i, pred);
  return t;
}

long long ConfusionMatrix::total() const {
  long long t = 0;
  for (long long c : counts) t += c;
  return t;
}

void ConfusionMatrix::add(const ConfusionMatrix& other) {
  if (other.n_cl != n_cl)
    throw DataError("cannot sum confusion matrices of " + std::to_string(n_cl) +
                    " and " + std::to_string(other.n_cl) + " classes");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& truth) {
  if (pred.h != truth.h || pred.w != truth.w)
    throw DataError("prediction is " + std::to_string(pred.h) + "x" +
                    std::to_string(pred.w) + ", truth is " +
                    std::to_string(truth.h) + "x" + std::to_string(truth.w));
  for (int y = 0; y < truth.h; ++y) {
    for (int x = 0; x < truth.w; ++x) {
      const uint8_t t = truth.at(y, x);
      if (t == kIgnoreLabel) continue;
      const uint8_t p = pred.at(y, x);
      if (t >= cm.n_cl)
        throw DataError("truth label " + std::to_string(t) + " out of range for " +
                        std::to_string(cm.n_cl) + " classes");
      if (p >= cm.n_cl)
        throw DataError("predicted label " + std::to_string(p) +
                        " out of range for " + std::to_string(cm.n_cl) + " classes");
      ++cm.at(t, p);
    }
  }
}

MetricSet compute_metrics(const ConfusionMatrix& cm) {
  const long long total = cm.total();
  if (total == 0) throw DataError("empty confusion matrix, nothing was evaluated");

  long long diag = 0;
  double acc_sum = 0, iu_sum = 0, fw_sum = 0;
  int present = 0;
  for (int i = 0; i < cm.n_cl; ++i) {
    const long long t_i = cm.row_total(i);
    const long long n_ii = cm.at(i, i);
    diag += n_ii;
    if (t_i == 0) continue;
    ++present;
    const long long uni = t_i + cm.col_total(i) - n_ii;
    acc_sum += double(n_ii) / double(t_i);
    iu_sum += double(n_ii) / double(uni);
    fw_sum += double(t_i) * double(n_ii) / double(uni);
  }

  MetricSet m;
  m.pixel_acc = double(diag) / double(total);
  m.mean_acc = acc_sum / present;
  m.mean_iu = iu_sum / present;
  m.fw_iu = fw_sum / double(total);
  return m;
}

void accumulate_iu_bound(ConfusionMatrix& cm, const LabelMap& truth, int f,
                         bool majority) {
  if (f < 1) throw DataError("downsampling factor must be >= 1");
  if (f > truth.h && f > truth.w)
    throw DataError("factor " + std::to_string(f) + " exceeds both extents of a " +
                    std::to_string(truth.h) + "x" + std::to_string(truth.w) +
                    " map");

  // The label the f x f block starting at (by, bx) collapses to.
  auto block_label = [&](int by, int bx) -> uint8_t {
    if (!majority) return truth.at(by, bx);
    int votes[256] = {0};
    for (int y = by; y < std::min(by + f, truth.h); ++y)
      for (int x = bx; x < std::min(bx + f, truth.w); ++x)
        if (truth.at(y, x) != kIgnoreLabel) ++votes[truth.at(y, x)];
    int best = kIgnoreLabel, best_votes = 0;
    for (int c = 0; c < int(kIgnoreLabel); ++c)
      if (votes[c] > best_votes) {
        best = c;
        best_votes = votes[c];
      }
    return uint8_t(best);
  };

  for (int y = 0; y < truth.h; ++y) {
    for (int x = 0; x < truth.w; ++x) {
      const uint8_t t = truth.at(y, x);
      if (t == kIgnoreLabel) continue;
      if (t >= cm.n_cl)
        throw DataError("truth label " + std::to_string(t) + " out of range for " +
                        std::to_string(cm.n_cl) + " classes");
      const uint8_t p = block_label((y / f) * f, (x / f) * f);
      if (p == kIgnoreLabel) continue;
      ++cm.at(t, p);
    }
  }
}

double iu_upper_bound(const LabelMap& truth, int f, int n_cl, bool majority) {
  ConfusionMatrix cm(n_cl);
  accumulate_iu_bound(cm, truth, f, majority);
  return compute_metrics(cm).mean_iu;
}

template <typename T>
LabelMap argmax_map(const TensorT<T>& scores, int b) {
  LabelMap out(scores.h(), scores.w());
  for (int y = 0; y < scores.h(); ++y)
    for (int x = 0; x < scores.w(); ++x) {
      int best = 0;
      T best_v = scores.at(b, 0, y, x);
      for (int c = 1; c < scores.c(); ++c)
        if (scores.at(b, c, y, x) > best_v) {
          best = c;
          best_v = scores.at(b, c, y, x);
        }
      out.at(y, x) = uint8_t(best);
    }
  return out;
}

template LabelMap argmax_map<float>(const TensorT<float>&, int);
template LabelMap argmax_map<double>(const TensorT<double>&, int);

}  // namespace fcn
