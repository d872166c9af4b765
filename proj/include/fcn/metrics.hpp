#pragma once

#include <cstdint>
#include <vector>

#include "fcn/tensor.hpp"

namespace fcn {

// Counts n_ij: pixels of true class i predicted as class j. IGNORE pixels
// are never counted.
struct ConfusionMatrix {
  int n_cl = 0;
  std::vector<long long> counts;  // n_cl * n_cl, row-major by true class

  explicit ConfusionMatrix(int classes);

  long long& at(int truth, int pred) {
    return counts[static_cast<size_t>(truth) * n_cl + pred];
  }
  long long at(int truth, int pred) const {
    return counts[static_cast<size_t>(truth) * n_cl + pred];
  }
  long long row_total(int truth) const;  // t_i
  long long col_total(int pred) const;
  long long total() const;

  // Per-image matrices may be built in parallel and summed.
  void add(const ConfusionMatrix& other);
};

void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& truth);

struct MetricSet {
  double pixel_acc = 0;
  double mean_acc = 0;
  double mean_iu = 0;
  double fw_iu = 0;
};

// The four summary metrics. Classes with t_i = 0 are excluded from the
// mean-accuracy and mean-IU averages (divisor = classes present).
MetricSet compute_metrics(const ConfusionMatrix& cm);

// Best achievable prediction at output stride f: downsample the ground truth
// by nearest neighbor (top-left anchor per f x f block, or per-block majority
// vote when majority is set), upsample back, and score against the original.
// Pixels whose truth or derived prediction is IGNORE are skipped.
void accumulate_iu_bound(ConfusionMatrix& cm, const LabelMap& truth, int f,
                         bool majority = false);

double iu_upper_bound(const LabelMap& truth, int f, int n_cl,
                      bool majority = false);

// Argmax over the channel axis for batch image b; ties go to the lower class.
template <typename T>
LabelMap argmax_map(const TensorT<T>& scores, int b);

}  // namespace fcn
