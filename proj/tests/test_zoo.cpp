#include <cmath>
#include <set>

#include "doctest.h"
#include "fcn/loss.hpp"
#include "fcn/rng.hpp"
#include "fcn/zoo.hpp"

using namespace fcn;

TEST_CASE("the shipped net descriptions match their builders") {
  NetSpec toy = build_toy_classifier(5);
  CHECK(serialize_net(load_net("zoo/toy-classifier.net")) == serialize_net(toy));
  NetSpec coarse = convert_to_fcn(toy, 5);
  CHECK(serialize_net(load_net("zoo/fcn-coarse.net")) == serialize_net(coarse));
  NetSpec skip1 = attach_skip(coarse, "pool2", 2);
  CHECK(serialize_net(load_net("zoo/fcn-skip1.net")) == serialize_net(skip1));
  NetSpec skip2 = attach_skip(skip1, "pool1", 2);
  CHECK(serialize_net(load_net("zoo/fcn-skip2.net")) == serialize_net(skip2));

  // the reference stacks parse and carry the advertised geometry
  NetSpec alex = load_net("zoo/stack-alexnet.net");
  GeomSummary as = node_summaries(alex).back();
  CHECK(as.K == Rational(355));
  CHECK(as.S == Rational(32));
  NetSpec vgg = load_net("zoo/stack-vgg16.net");
  GeomSummary vs = node_summaries(vgg).back();
  CHECK(vs.K == Rational(404));
  CHECK(vs.S == Rational(32));
}

TEST_CASE("the dense conversion covers the input at any extent") {
  NetSpec coarse = convert_to_fcn(build_toy_classifier(4), 4);
  Net<float> net(coarse);
  net.init_params(2);
  Tensor x(1, 3, 64, 64);
  Tensor y = net.forward(x);
  CHECK(y.c() == 4);
  CHECK(y.h() == 64);
  CHECK(y.w() == 64);
  Tensor odd(2, 3, 37, 41);
  Tensor yo = net.forward(odd);
  CHECK(yo.n() == 2);
  CHECK(yo.h() == 37);
  CHECK(yo.w() == 41);
}

TEST_CASE("a freshly converted net predicts the uniform distribution") {
  const int k = 5;
  Net<float> net(convert_to_fcn(build_toy_classifier(k), k));
  net.init_params(77);
  Rng rng(78, "img");
  Tensor x(1, 3, 40, 40);
  for (float& v : x.data) v = float(rng.uniform());
  Tensor scores = net.forward(x);
  // the score conv starts at zero, so every logit is exactly zero
  for (float v : scores.data) CHECK(v == 0.0f);
  LabelMap t(40, 40);
  for (int y = 0; y < 40; ++y)
    for (int xx = 0; xx < 40; ++xx) t.at(y, xx) = uint8_t((y + xx) % k);
  LossReport rep = softmax_xent_spatial(scores, t);
  CHECK(rep.value == doctest::Approx(std::log(double(k))).epsilon(1e-6));
}

TEST_CASE("conversion rejects chains it cannot upsample") {
  CHECK_THROWS_AS(convert_to_fcn(build_toy_classifier(3), 1), DataError);
  // stride 3 is not a power of two
  NetSpec s3 = parse_net(
      "input input 0 0 0 0 3 none 0\n"
      "c conv 3 1 0 3 4 gauss:0.1 1 input\n"
      "p pool 3 3 0 4 4 none 0 c\n"
      "h fc 2 1 0 4 2 gauss:0.1 1 p\n");
  CHECK_THROWS_AS(convert_to_fcn(s3, 2), DataError);
  // no conv consuming the input
  NetSpec pool_first = parse_net(
      "input input 0 0 0 0 3 none 0\n"
      "p pool 2 2 0 3 3 none 0 input\n"
      "h fc 2 1 0 3 2 gauss:0.1 1 p\n");
  CHECK_THROWS_AS(convert_to_fcn(pool_first, 2), DataError);
}

TEST_CASE("skips attach without changing the function at initialization") {
  const int k = 3;
  NetSpec coarse = convert_to_fcn(build_toy_classifier(k), k);
  NetSpec skip1 = attach_skip(coarse, "pool2", 2);
  NetSpec skip2 = attach_skip(skip1, "pool1", 2);

  // the spliced stages: x2 deconvs feeding the fusions become learnable
  auto node = [](const NetSpec& s, const char* name) -> const NodeSpec& {
    return s.nodes[size_t(s.find(name))];
  };
  CHECK(node(skip2, "up1").learnable);
  CHECK(node(skip2, "up2").learnable);
  CHECK(!node(skip2, "up3").learnable);
  CHECK(node(skip2, "score_pool2").init == "zero");

  Net<float> a(coarse), b(skip2);
  a.init_params(13);
  b.init_params(13);
  GeomSummary fuse2 = b.summary_to("fuse_pool2");
  CHECK(fuse2.S == Rational(4));
  CHECK(b.summary_to("fuse_pool1").S == Rational(2));

  Rng rng(14, "img");
  Tensor x(1, 3, 43, 39);
  for (float& v : x.data) v = float(rng.uniform());
  Tensor ya = a.forward(x);
  Tensor yb = b.forward(x);
  REQUIRE(ya.same_shape(yb));
  CHECK(ya.data == yb.data);
}

TEST_CASE("gradient reaches a newly attached score conv") {
  const int k = 3;
  NetSpec skip1 = attach_skip(convert_to_fcn(build_toy_classifier(k), k),
                              "pool2", 2);
  Net<float> net(skip1);
  net.init_params(5);
  Rng rng(6, "img");
  Tensor x(1, 3, 40, 40);
  for (float& v : x.data) v = float(rng.uniform());
  Tensor y = net.forward(x);
  Tensor dy(y.n(), y.c(), y.h(), y.w());
  for (float& v : dy.data) v = 1.0f;
  net.backward(dy);
  for (auto& p : net.params())
    if (p.name == "score_pool2.w") {
      double mag = 0;
      for (float g : p.grad->data) mag += std::abs(double(g));
      CHECK(mag > 0);
    }
}

TEST_CASE("skip attachment rejects hosts it cannot refine") {
  const int k = 3;
  NetSpec coarse = convert_to_fcn(build_toy_classifier(k), k);
  CHECK_THROWS_AS(attach_skip(coarse, "conv1", 2), DataError);
  CHECK_THROWS_AS(attach_skip(coarse, "missing", 2), DataError);
  CHECK_THROWS_AS(attach_skip(coarse, "pool2", 1), DataError);
  // pool3 feeds the score conv directly; no x2 stage sits at stride 16
  CHECK_THROWS_AS(attach_skip(coarse, "pool3", 2), DataError);
  // refining the same pool twice collides on the score conv's name
  NetSpec skip1 = attach_skip(coarse, "pool2", 2);
  CHECK_THROWS_AS(attach_skip(skip1, "pool2", 2), DataError);
}

TEST_CASE("synthetic samples are deterministic and well formed") {
  std::vector<SynthSample> ds = gen_synth_dataset(6, 40, 48, 5, 42);
  REQUIRE(ds.size() == 6);
  for (int i = 0; i < 6; ++i) {
    const SynthSample& s = ds[size_t(i)];
    CHECK(s.image.c() == 3);
    CHECK(s.image.h() == 40);
    CHECK(s.image.w() == 48);
    CHECK(s.labels.h == 40);
    CHECK(s.labels.w == 48);
    for (float v : s.image.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    for (uint8_t l : s.labels.data) CHECK(l < 5);

    SynthSample again = gen_synth_sample(i, 40, 48, 5, 42);
    CHECK(again.image.data == s.image.data);
    CHECK(again.labels.data == s.labels.data);
  }
  // each sample draws from its own stream
  CHECK(ds[0].image.data != ds[1].image.data);
  CHECK(gen_synth_dataset(0, 40, 40, 5, 1).empty());

  // every sample has some background and at least one shape
  for (const SynthSample& s : ds) {
    std::set<uint8_t> present(s.labels.data.begin(), s.labels.data.end());
    CHECK(present.count(0) == 1);
    CHECK(present.size() >= 2);
  }
}

TEST_CASE("background dominates the synthetic scenes") {
  std::vector<SynthSample> ds = gen_synth_dataset(50, 40, 40, 5, 1);
  long long bg = 0, all = 0;
  for (const SynthSample& s : ds)
    for (uint8_t l : s.labels.data) {
      all += 1;
      bg += l == 0;
    }
  const double frac = double(bg) / double(all);
  CHECK(frac > 0.65);
  CHECK(frac < 0.9);
}

TEST_CASE("synthetic generation rejects unusable requests") {
  CHECK_THROWS_AS(gen_synth_sample(0, 40, 40, 1, 1), DataError);
  CHECK_THROWS_AS(gen_synth_sample(0, 40, 40, 17, 1), DataError);
  CHECK_THROWS_AS(gen_synth_sample(0, 16, 40, 5, 1), DataError);
  CHECK_THROWS_AS(gen_synth_dataset(-1, 40, 40, 5, 1), DataError);
}
