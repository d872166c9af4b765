#include <algorithm>
#include <numeric>

#include "fcn/rng.hpp"
#include "fcn/zoo.hpp"

namespace fcn {

namespace {

NodeSpec node(const std::string& name, NodeKind kind, int k, int s, int p,
              int in_ch, int out_ch, const std::string& init, bool learnable,
              std::vector<std::string> inputs) {
  NodeSpec n;
  n.name = name;
  n.kind = kind;
  n.k = k;
  n.s = s;
  n.p = p;
  n.in_ch = in_ch;
  n.out_ch = out_ch;
  n.init = init;
  n.learnable = learnable;
  n.inputs = std::move(inputs);
  return n;
}

}  // namespace

NetSpec build_toy_classifier(int k) {
  if (k < 2) throw DataError("a classifier needs at least two classes");
  NetSpec s;
  auto add = [&s](NodeSpec n) { s.nodes.push_back(std::move(n)); };
  add(node("input", NodeKind::kInput, 0, 0, 0, 0, 3, "none", false, {}));
  add(node("conv1", NodeKind::kConv, 3, 1, 0, 3, 8, "gauss:0.1", true, {"input"}));
  add(node("relu1", NodeKind::kRelu, 1, 1, 0, 8, 8, "none", false, {"conv1"}));
  add(node("pool1", NodeKind::kPool, 2, 2, 0, 8, 8, "none", false, {"relu1"}));
  add(node("conv2", NodeKind::kConv, 3, 1, 0, 8, 16, "gauss:0.1", true, {"pool1"}));
  add(node("relu2", NodeKind::kRelu, 1, 1, 0, 16, 16, "none", false, {"conv2"}));
  add(node("pool2", NodeKind::kPool, 2, 2, 0, 16, 16, "none", false, {"relu2"}));
  add(node("conv3", NodeKind::kConv, 3, 1, 0, 16, 32, "gauss:0.1", true, {"pool2"}));
  add(node("relu3", NodeKind::kRelu, 1, 1, 0, 32, 32, "none", false, {"conv3"}));
  add(node("pool3", NodeKind::kPool, 2, 2, 0, 32, 32, "none", false, {"relu3"}));
  add(node("fc1", NodeKind::kFc, 2, 1, 0, 32, 64, "gauss:0.05", true, {"pool3"}));
  add(node("relufc", NodeKind::kRelu, 1, 1, 0, 64, 64, "none", false, {"fc1"}));
  add(node("fc2", NodeKind::kFc, 1, 1, 0, 64, k, "gauss:0.05", true, {"relufc"}));
  s.validate();
  return s;
}

NetSpec convolutionalize(const NetSpec& spec) {
  NetSpec out = spec;
  for (NodeSpec& n : out.nodes)
    if (n.kind == NodeKind::kFc) n.kind = NodeKind::kConv;
  out.validate();
  return out;
}

Checkpoint convolutionalize_checkpoint(const NetSpec& spec, const Checkpoint& ckpt) {
  Checkpoint out;
  for (const auto& [name, tensor] : ckpt) {
    int i = name.size() > 2 ? spec.find(name.substr(0, name.size() - 2)) : -1;
    const bool fc_weight = i >= 0 && spec.nodes[i].kind == NodeKind::kFc &&
                           name.substr(name.size() - 2) == ".w";
    if (fc_weight) {
      const NodeSpec& n = spec.nodes[i];
      out.emplace(name, convolutionalize_fc(tensor, n.in_ch, n.k, n.k));
    } else {
      out.emplace(name, tensor);
    }
  }
  return out;
}

NetSpec convert_to_fcn(const NetSpec& classifier, int k) {
  if (k < 2) throw DataError("a dense predictor needs at least two classes");
  NetSpec s = convolutionalize(classifier);

  const std::string input_name = s.nodes[s.input_index()].name;
  NodeSpec* first_conv = nullptr;
  for (NodeSpec& n : s.nodes)
    if (n.kind == NodeKind::kConv && n.inputs.size() == 1 &&
        n.inputs[0] == input_name) {
      first_conv = &n;
      break;
    }
  if (!first_conv)
    throw DataError("not a recognized classifier chain: no conv on the input");

  std::vector<int> outs = s.output_indices();
  if (outs.size() != 1)
    throw DataError("not a recognized classifier chain: several outputs");
  const NodeSpec& feat = s.nodes[outs[0]];
  const Rational stride = node_summaries(s)[outs[0]].S;
  if (!stride.is_integer() || stride.as_int() < 2 ||
      (stride.as_int() & (stride.as_int() - 1)) != 0)
    throw DataError("not a recognized classifier chain: stride " + stride.str() +
                    " is not a power of two >= 2");

  // Pad roughly half the receptive field so every input pixel ends up under
  // some output cell after upsampling and the crop below always fits.
  first_conv->p = 16;

  auto add = [&s](NodeSpec n) { s.nodes.push_back(std::move(n)); };
  add(node("score", NodeKind::kConv, 1, 1, 0, feat.out_ch, k, "zero", true,
           {feat.name}));
  std::string prev = "score";
  int up_count = 0;
  for (int64_t f = stride.as_int(); f > 1; f /= 2) {
    const std::string name = "up" + std::to_string(++up_count);
    add(node(name, NodeKind::kDeconv, 4, 2, 0, k, k, "bilinear", false, {prev}));
    prev = name;
  }
  add(node("out", NodeKind::kCrop, 0, 0, 0, k, k, "none", false,
           {prev, input_name}));
  s.validate();
  return s;
}

NetSpec attach_skip(const NetSpec& net, const std::string& from_pool, int factor) {
  if (factor < 2) throw DataError("skip factor must be >= 2");
  NetSpec s = net;
  const int pi = s.find(from_pool);
  if (pi < 0) throw DataError("no node named '" + from_pool + "'");
  if (s.nodes[pi].kind != NodeKind::kPool)
    throw DataError("'" + from_pool + "' is not a pool node");

  std::vector<GeomSummary> sums = node_summaries(s);
  const Rational sp = sums[pi].S;
  if (!sp.is_integer())
    throw DataError("'" + from_pool + "' sits at fractional stride " + sp.str());
  const int64_t target = sp.as_int() * factor;

  // The x2 stage whose input is 'factor' times coarser than the pool.
  int di = -1;
  for (size_t i = 0; i < s.nodes.size(); ++i) {
    const NodeSpec& n = s.nodes[i];
    if (n.kind != NodeKind::kDeconv || n.s != factor) continue;
    const Rational us = sums[s.find(n.inputs[0])].S;
    if (us.is_integer() && us.as_int() == target) {
      di = int(i);
      break;
    }
  }
  if (di < 0)
    throw DataError("no x" + std::to_string(factor) + " upsampling stage at stride " +
                    std::to_string(target) + " to refine with '" + from_pool +
                    "' (stride " + sp.str() + ")");

  NodeSpec& up = s.nodes[di];
  up.learnable = true;  // was fixed bilinear; now fine-tuned
  const int kc = up.out_ch;
  const std::string up_name = up.name;

  NodeSpec sc = node("score_" + from_pool, NodeKind::kConv, 1, 1, 0,
                     s.nodes[pi].out_ch, kc, "zero", true, {from_pool});
  NodeSpec fu = node("fuse_" + from_pool, NodeKind::kFuse, 1, 1, 0, kc, kc,
                     "none", false, {up_name, sc.name});
  const std::string fuse_name = fu.name;
  s.nodes.insert(s.nodes.begin() + di + 1, {std::move(sc), std::move(fu)});
  for (size_t i = di + 3; i < s.nodes.size(); ++i)
    for (std::string& in : s.nodes[i].inputs)
      if (in == up_name) in = fuse_name;
  s.validate();
  return s;
}

namespace {

constexpr float kPalette[16][3] = {
    {0.50f, 0.50f, 0.50f},  // class 0: gray background
    {0.90f, 0.10f, 0.10f}, {0.10f, 0.35f, 0.90f}, {0.10f, 0.80f, 0.20f},
    {0.95f, 0.85f, 0.10f}, {0.80f, 0.15f, 0.85f}, {0.10f, 0.85f, 0.85f},
    {0.95f, 0.55f, 0.10f}, {0.55f, 0.10f, 0.90f}, {0.45f, 0.30f, 0.10f},
    {0.90f, 0.45f, 0.65f}, {0.55f, 0.75f, 0.15f}, {0.15f, 0.55f, 0.45f},
    {0.85f, 0.65f, 0.45f}, {0.25f, 0.25f, 0.75f}, {0.65f, 0.20f, 0.30f},
};

}  // namespace

std::vector<SynthSample> gen_synth_dataset(int n, int h, int w, int k,
                                           uint64_t seed) {
  if (n < 0) throw DataError("sample count must be nonnegative");
  std::vector<SynthSample> out;
  out.reserve(size_t(n));
  for (int i = 0; i < n; ++i) out.push_back(gen_synth_sample(i, h, w, k, seed));
  return out;
}

SynthSample gen_synth_sample(int i, int h, int w, int k, uint64_t seed) {
  if (k < 2) throw DataError("need at least two classes");
  if (k > 16)
    throw DataError("palette holds 16 colors, cannot draw " + std::to_string(k) +
                    " classes");
  if (h < 32 || w < 32) throw DataError("synthetic images must be at least 32x32");

  const int side = std::min(h, w);
  Rng rng(seed, "data." + std::to_string(i));
  LabelMap labels(h, w);

  std::vector<int> cls(size_t(k) - 1);
  std::iota(cls.begin(), cls.end(), 1);
  rng.shuffle(cls);
  const int m = rng.uniform_int(1, std::min(4, k - 1));

  for (int si = 0; si < m; ++si) {
    const uint8_t c = uint8_t(cls[si]);
    const int kind = rng.uniform_int(0, 2);
    if (kind == 0) {  // rectangle
      const int sh = rng.uniform_int(h / 3, h / 2);
      const int sw = rng.uniform_int(w / 3, w / 2);
      const int y0 = rng.uniform_int(0, h - sh);
      const int x0 = rng.uniform_int(0, w - sw);
      for (int y = y0; y < y0 + sh; ++y)
        for (int x = x0; x < x0 + sw; ++x) labels.at(y, x) = c;
    } else if (kind == 1) {  // disc
      const int r = rng.uniform_int(side / 6, side / 4);
      const int cy = rng.uniform_int(r, h - 1 - r);
      const int cx = rng.uniform_int(r, w - 1 - r);
      for (int y = cy - r; y <= cy + r; ++y)
        for (int x = cx - r; x <= cx + r; ++x)
          if ((y - cy) * (y - cy) + (x - cx) * (x - cx) <= r * r)
            labels.at(y, x) = c;
    } else {  // 2-pixel bar: fine structure that coarse strides smear away
      const bool horiz = rng.uniform_int(0, 1) == 1;
      if (horiz) {
        const int len = rng.uniform_int(w / 3, (3 * w) / 4);
        const int y0 = rng.uniform_int(0, h - 2);
        const int x0 = rng.uniform_int(0, w - len);
        for (int y = y0; y < y0 + 2; ++y)
          for (int x = x0; x < x0 + len; ++x) labels.at(y, x) = c;
      } else {
        const int len = rng.uniform_int(h / 3, (3 * h) / 4);
        const int y0 = rng.uniform_int(0, h - len);
        const int x0 = rng.uniform_int(0, w - 2);
        for (int y = y0; y < y0 + len; ++y)
          for (int x = x0; x < x0 + 2; ++x) labels.at(y, x) = c;
      }
    }
  }

  Tensor img(1, 3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float* base = kPalette[labels.at(y, x)];
      for (int ch = 0; ch < 3; ++ch) {
        const double v = double(base[ch]) + 0.1 * rng.normal();
        img.at(0, ch, y, x) = float(std::clamp(v, 0.0, 1.0));
      }
    }
  return SynthSample{std::move(img), std::move(labels), seed};
}

}  // namespace fcn
