#include <cmath>

#include "doctest.h"
#include "fcn/metrics.hpp"

using namespace fcn;

namespace {

// truth\pred counts {{3,1},{2,4}}: 10 pixels, 7 right
ConfusionMatrix hand_cm() {
  ConfusionMatrix cm(2);
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 2;
  cm.at(1, 1) = 4;
  return cm;
}

LabelMap checkerboard(int n) {
  LabelMap t(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) t.at(y, x) = uint8_t((y + x) % 2);
  return t;
}

}  // namespace

TEST_CASE("the four summary metrics on a hand-counted matrix") {
  ConfusionMatrix cm = hand_cm();
  CHECK(cm.row_total(0) == 4);
  CHECK(cm.col_total(0) == 5);
  CHECK(cm.total() == 10);
  MetricSet m = compute_metrics(cm);
  CHECK(m.pixel_acc == doctest::Approx(7.0 / 10));
  CHECK(m.mean_acc == doctest::Approx((3.0 / 4 + 4.0 / 6) / 2));
  // iu_0 = 3/(4+5-3) = 1/2, iu_1 = 4/(6+5-4) = 4/7
  CHECK(m.mean_iu == doctest::Approx((0.5 + 4.0 / 7) / 2));
  CHECK(m.fw_iu == doctest::Approx((4 * 0.5 + 6 * 4.0 / 7) / 10));
}

TEST_CASE("classes that never occur in truth drop out of the means") {
  // the hand case widened to three classes; class 2 never occurs
  ConfusionMatrix cm(3);
  cm.at(0, 0) = 3;
  cm.at(0, 1) = 1;
  cm.at(1, 0) = 2;
  cm.at(1, 1) = 4;
  MetricSet with = compute_metrics(cm);
  MetricSet base = compute_metrics(hand_cm());
  CHECK(with.mean_acc == doctest::Approx(base.mean_acc));
  CHECK(with.mean_iu == doctest::Approx(base.mean_iu));

  // false positives into an absent class still dilute pixel accuracy
  cm.at(1, 2) = 2;
  MetricSet diluted = compute_metrics(cm);
  CHECK(diluted.pixel_acc == doctest::Approx(7.0 / 12));
  // and shrink class 1's union: iu_1 = 4/(8+5-4)
  CHECK(diluted.mean_iu == doctest::Approx((0.5 + 4.0 / 9) / 2));

  CHECK_THROWS_AS(compute_metrics(ConfusionMatrix(2)), DataError);
}

TEST_CASE("accumulation skips ignore pixels and checks bounds") {
  LabelMap pred(2, 2), truth(2, 2);
  pred.at(0, 0) = 1;
  truth.at(0, 0) = 1;
  truth.at(0, 1) = kIgnoreLabel;
  pred.at(0, 1) = 1;  // prediction at an ignored pixel must not count
  ConfusionMatrix cm(2);
  accumulate(cm, pred, truth);
  CHECK(cm.total() == 3);
  CHECK(cm.at(1, 1) == 1);
  CHECK(cm.at(0, 0) == 2);

  LabelMap bad(2, 2);
  bad.at(1, 1) = 7;
  CHECK_THROWS_AS(accumulate(cm, bad, truth), DataError);
  CHECK_THROWS_AS(accumulate(cm, pred, bad), DataError);
  LabelMap small(1, 2);
  CHECK_THROWS_AS(accumulate(cm, small, truth), DataError);

  ConfusionMatrix a(2), b(2);
  accumulate(a, pred, truth);
  accumulate(b, pred, truth);
  a.add(b);
  CHECK(a.total() == 6);
}

TEST_CASE("argmax maps break ties toward the lower class") {
  TensorT<float> s(2, 3, 1, 2);
  s.at(0, 0, 0, 0) = 1;
  s.at(0, 1, 0, 0) = 5;
  s.at(0, 2, 0, 0) = 5;  // tie between 1 and 2
  s.at(1, 2, 0, 1) = 2;
  LabelMap m0 = argmax_map(s, 0);
  CHECK(m0.at(0, 0) == 1);
  LabelMap m1 = argmax_map(s, 1);
  CHECK(m1.at(0, 1) == 2);
  CHECK(m1.at(0, 0) == 0);  // all-equal scores fall to class 0
}

TEST_CASE("an exact prediction scores one on every metric") {
  LabelMap t = checkerboard(8);
  ConfusionMatrix cm(2);
  accumulate(cm, t, t);
  MetricSet m = compute_metrics(cm);
  CHECK(m.pixel_acc == 1.0);
  CHECK(m.mean_acc == 1.0);
  CHECK(m.mean_iu == 1.0);
  CHECK(m.fw_iu == 1.0);
}

TEST_CASE("subsampling bound is exact at factor one and decays on fine detail") {
  LabelMap t = checkerboard(8);
  CHECK(iu_upper_bound(t, 1, 2) == doctest::Approx(1.0));

  // factor 2 on a checkerboard: every block collapses to its top-left label,
  // so class 0 is predicted everywhere; iu_0 = 1/2, iu_1 = 0
  CHECK(iu_upper_bound(t, 2, 2) == doctest::Approx(0.25));

  // monotone: coarser grids can only do worse on this pattern
  double prev = 1.0;
  for (int f : {2, 4, 8}) {
    double b = iu_upper_bound(t, f, 2);
    CHECK(b <= prev + 1e-12);
    prev = b;
  }

  // blocks larger than both axes are an error; matching one axis is fine
  CHECK_THROWS_AS(iu_upper_bound(t, 16, 2), DataError);
  CHECK_THROWS_AS(iu_upper_bound(t, 0, 2), DataError);
}

TEST_CASE("majority vote beats the top-left anchor on skewed blocks") {
  // 4x4 blocks of class 1 except a single class-0 pixel at each block corner
  LabelMap t(8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) t.at(y, x) = 1;
  t.at(0, 0) = 0;
  t.at(0, 4) = 0;
  t.at(4, 0) = 0;
  t.at(4, 4) = 0;
  double anchor = iu_upper_bound(t, 4, 2);
  double majority = iu_upper_bound(t, 4, 2, true);
  CHECK(anchor < majority);
  CHECK(majority == doctest::Approx(0.5 * (0.0 + 60.0 / 64)));

  // ignore squares drop out of the bound entirely
  LabelMap ig(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) ig.at(y, x) = kIgnoreLabel;
  ig.at(0, 0) = 1;
  ConfusionMatrix cm(2);
  accumulate_iu_bound(cm, ig, 2);
  CHECK(cm.total() == 1);
  CHECK(cm.at(1, 1) == 1);
}
