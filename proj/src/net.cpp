#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "fcn/net.hpp"
#include "fcn/rng.hpp"

namespace fcn {

template <typename T>
Net<T>::Net(NetSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  summaries_ = node_summaries(spec_);
  nodes_.resize(spec_.nodes.size());
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    const NodeSpec& n = spec_.nodes[i];
    NodeState& st = nodes_[i];
    switch (n.kind) {
      case NodeKind::kConv:
        st.w = TensorT<T>(n.out_ch, n.in_ch, n.k, n.k);
        st.b = TensorT<T>(1, n.out_ch, 1, 1);
        st.has_w = st.has_b = true;
        break;
      case NodeKind::kFc:
        st.w = TensorT<T>(n.out_ch, n.in_ch * n.k * n.k, 1, 1);
        st.b = TensorT<T>(1, n.out_ch, 1, 1);
        st.has_w = st.has_b = true;
        break;
      case NodeKind::kDeconv:
        st.w = TensorT<T>(n.out_ch, n.in_ch, n.k, n.k);
        st.has_w = true;
        break;
      default:
        break;
    }
  }
}

template <typename T>
void Net<T>::init_params(uint64_t seed) {
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    const NodeSpec& n = spec_.nodes[i];
    NodeState& st = nodes_[i];
    if (!st.has_w) continue;
    if (n.init == "zero" || n.init == "none") {
      std::fill(st.w.data.begin(), st.w.data.end(), T(0));
    } else if (n.init == "bilinear") {
      st.w = bilinear_kernel<T>(n.s, n.out_ch);
    } else if (n.init == "identity") {
      std::fill(st.w.data.begin(), st.w.data.end(), T(0));
      for (int c = 0; c < n.out_ch; ++c)
        st.w.at(c, c, st.w.h() / 2, st.w.w() / 2) = T(1);
    } else {  // gauss:<sd>, format vetted by validate()
      Rng rng(seed, "init." + n.name + ".w");
      const double sd = std::stod(n.init.substr(6));
      for (T& v : st.w.data) v = T(sd * rng.normal());
    }
    if (st.has_b) std::fill(st.b.data.begin(), st.b.data.end(), T(0));
  }
  tape_valid_ = false;
}

template <typename T>
Checkpoint Net<T>::save() const {
  Checkpoint out;
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    const NodeState& st = nodes_[i];
    if (st.has_w) out.emplace(spec_.nodes[i].name + ".w", st.w.template cast<float>());
    if (st.has_b) out.emplace(spec_.nodes[i].name + ".b", st.b.template cast<float>());
  }
  return out;
}

template <typename T>
void Net<T>::load(const Checkpoint& ckpt, bool allow_missing_params) {
  std::set<std::string> mine;
  auto take = [&](const std::string& key, TensorT<T>& dst) {
    mine.insert(key);
    auto it = ckpt.find(key);
    if (it == ckpt.end()) {
      if (!allow_missing_params)
        throw DataError("checkpoint is missing tensor '" + key + "'");
      return;
    }
    if (it->second.dims != dst.dims)
      throw DataError("checkpoint tensor '" + key + "' has shape " +
                      it->second.shape_str() + ", net expects " + dst.shape_str());
    dst = it->second.template cast<T>();
  };
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    if (nodes_[i].has_w) take(spec_.nodes[i].name + ".w", nodes_[i].w);
    if (nodes_[i].has_b) take(spec_.nodes[i].name + ".b", nodes_[i].b);
  }
  for (const auto& entry : ckpt)
    if (!mine.count(entry.first))
      throw DataError("checkpoint tensor '" + entry.first + "' matches no parameter");
  tape_valid_ = false;
}

template <typename T>
TensorT<T> Net<T>::eval_node(int i, const TensorT<T>& x) {
  const NodeSpec& n = spec_.nodes[i];
  NodeState& st = nodes_[i];
  const TensorT<T>& in0 =
      n.kind == NodeKind::kInput ? x : nodes_[spec_.find(n.inputs[0])].act;
  switch (n.kind) {
    case NodeKind::kInput:
      if (x.c() != n.out_ch)
        throw DataError("expects " + std::to_string(n.out_ch) + " channels, got " +
                        std::to_string(x.c()));
      return x;
    case NodeKind::kConv:
      return conv2d_forward(in0, st.w, &st.b, n.geom());
    case NodeKind::kRelu:
      return relu_forward(in0);
    case NodeKind::kPool:
      return pool2d_max_forward(in0, n.geom(), st.argmax);
    case NodeKind::kFc: {
      if (in0.h() != n.k || in0.w() != n.k)
        throw DataError("fc head fixed at " + std::to_string(n.k) + "x" +
                        std::to_string(n.k) + ", got " + std::to_string(in0.h()) +
                        "x" + std::to_string(in0.w()));
      TensorT<T> y(in0.n(), n.out_ch, 1, 1);
      const size_t flat = size_t(st.w.c());
      for (int b = 0; b < in0.n(); ++b) {
        const T* xv = &in0.at(b, 0, 0, 0);
        for (int o = 0; o < n.out_ch; ++o) {
          T acc = st.b.at(0, o, 0, 0);
          const T* wrow = &st.w.at(o, 0, 0, 0);
          for (size_t j = 0; j < flat; ++j) acc += wrow[j] * xv[j];
          y.at(b, o, 0, 0) = acc;
        }
      }
      return y;
    }
    case NodeKind::kDeconv:
      return deconv2d_forward(in0, st.w, n.geom());
    case NodeKind::kFuse: {
      const TensorT<T>& a = in0;
      const TensorT<T>& b = nodes_[spec_.find(n.inputs[1])].act;
      const int th = std::min(a.h(), b.h()), tw = std::min(a.w(), b.w());
      st.fuse_off[0][0] = (a.h() - th) / 2;
      st.fuse_off[0][1] = (a.w() - tw) / 2;
      st.fuse_off[1][0] = (b.h() - th) / 2;
      st.fuse_off[1][1] = (b.w() - tw) / 2;
      return fuse_sum(crop(a, st.fuse_off[0][0], st.fuse_off[0][1], th, tw),
                      crop(b, st.fuse_off[1][0], st.fuse_off[1][1], th, tw));
    }
    case NodeKind::kCrop: {
      const TensorT<T>& ref = nodes_[spec_.find(n.inputs[1])].act;
      st.crop_off_h = (in0.h() - ref.h()) / 2;
      st.crop_off_w = (in0.w() - ref.w()) / 2;
      return crop(in0, st.crop_off_h, st.crop_off_w, ref.h(), ref.w());
    }
    case NodeKind::kPadDense: {
      int eh = in0.h(), ew = in0.w();
      for (const LayerGeom& g : n.aux_chain) {
        eh = layer_output_extent(g, eh);
        ew = layer_output_extent(g, ew);
      }
      const int th = n.s * eh + n.k - 1, tw = n.s * ew + n.k - 1;
      if (th < in0.h() || tw < in0.w())
        throw DataError("dense extension target " + std::to_string(th) + "x" +
                        std::to_string(tw) + " is smaller than the input");
      TensorT<T> y(in0.n(), in0.c(), th, tw);
      for (int b = 0; b < in0.n(); ++b)
        for (int c = 0; c < in0.c(); ++c)
          for (int yy = 0; yy < in0.h(); ++yy)
            std::memcpy(&y.at(b, c, yy, 0), &in0.at(b, c, yy, 0),
                        sizeof(T) * in0.w());
      return y;
    }
  }
  throw DataError("unreachable node kind");
}

template <typename T>
std::vector<TensorT<T>> Net<T>::forward_all(const TensorT<T>& x) {
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    try {
      nodes_[i].act = eval_node(int(i), x);
    } catch (const NumericError&) {
      throw;
    } catch (const Error& e) {
      throw DataError("node '" + spec_.nodes[i].name + "': " + e.what());
    }
  }
  tape_valid_ = true;
  std::vector<TensorT<T>> outs;
  for (int i : spec_.output_indices()) outs.push_back(nodes_[i].act);
  return outs;
}

template <typename T>
TensorT<T> Net<T>::forward(const TensorT<T>& x) {
  std::vector<TensorT<T>> outs = forward_all(x);
  if (outs.size() != 1)
    throw DataError("net has " + std::to_string(outs.size()) +
                    " outputs, use forward_all");
  return outs.front();
}

template <typename T>
const TensorT<T>& Net<T>::activation(const std::string& node) const {
  int i = spec_.find(node);
  if (i < 0) throw DataError("no node named '" + node + "'");
  if (nodes_[i].act.size() == 0)
    throw DataError("no cached activation for '" + node + "', run forward first");
  return nodes_[i].act;
}

template <typename T>
void Net<T>::backprop_node(int i, std::vector<TensorT<T>>& grads) {
  const NodeSpec& n = spec_.nodes[i];
  NodeState& st = nodes_[i];
  const TensorT<T>& dy = grads[i];
  if (n.kind == NodeKind::kInput) return;
  const int i0 = spec_.find(n.inputs[0]);
  const TensorT<T>& x0 = nodes_[i0].act;
  TensorT<T>& dx0 = grads[i0];
  switch (n.kind) {
    case NodeKind::kConv:
      conv2d_backward(x0, st.w, n.geom(), dy, &dx0, &st.gw, &st.gb);
      break;
    case NodeKind::kRelu:
      relu_backward(x0, dy, dx0);
      break;
    case NodeKind::kPool:
      pool2d_max_backward(dy, st.argmax, dx0);
      break;
    case NodeKind::kFc: {
      const size_t flat = size_t(st.w.c());
      for (int b = 0; b < x0.n(); ++b) {
        const T* xv = &x0.at(b, 0, 0, 0);
        T* dxv = &dx0.at(b, 0, 0, 0);
        for (int o = 0; o < n.out_ch; ++o) {
          const T g = dy.at(b, o, 0, 0);
          st.gb.at(0, o, 0, 0) += g;
          T* gwrow = &st.gw.at(o, 0, 0, 0);
          const T* wrow = &st.w.at(o, 0, 0, 0);
          for (size_t j = 0; j < flat; ++j) {
            gwrow[j] += g * xv[j];
            dxv[j] += g * wrow[j];
          }
        }
      }
      break;
    }
    case NodeKind::kDeconv:
      deconv2d_backward(x0, st.w, n.geom(), dy, &dx0, &st.gw);
      break;
    case NodeKind::kFuse: {
      TensorT<T>& dx1 = grads[spec_.find(n.inputs[1])];
      for (int b = 0; b < dy.n(); ++b)
        for (int c = 0; c < dy.c(); ++c)
          for (int y = 0; y < dy.h(); ++y)
            for (int x = 0; x < dy.w(); ++x) {
              const T g = dy.at(b, c, y, x);
              dx0.at(b, c, y + st.fuse_off[0][0], x + st.fuse_off[0][1]) += g;
              dx1.at(b, c, y + st.fuse_off[1][0], x + st.fuse_off[1][1]) += g;
            }
      break;
    }
    case NodeKind::kCrop:
      for (int b = 0; b < dy.n(); ++b)
        for (int c = 0; c < dy.c(); ++c)
          for (int y = 0; y < dy.h(); ++y)
            for (int x = 0; x < dy.w(); ++x)
              dx0.at(b, c, y + st.crop_off_h, x + st.crop_off_w) +=
                  dy.at(b, c, y, x);
      break;
    case NodeKind::kPadDense:
      // Gradient of zero extension: drop the extended region.
      for (int b = 0; b < x0.n(); ++b)
        for (int c = 0; c < x0.c(); ++c)
          for (int y = 0; y < x0.h(); ++y)
            for (int x = 0; x < x0.w(); ++x)
              dx0.at(b, c, y, x) += dy.at(b, c, y, x);
      break;
    case NodeKind::kInput:
      break;
  }
}

template <typename T>
TensorT<T> Net<T>::backward_all(const std::vector<TensorT<T>>& douts) {
  if (!tape_valid_)
    throw DataError("backward without a fresh forward (the tape was consumed)");
  tape_valid_ = false;

  std::vector<int> outs = spec_.output_indices();
  if (douts.size() != outs.size())
    throw DataError("backward expects " + std::to_string(outs.size()) +
                    " output gradients, got " + std::to_string(douts.size()));

  std::vector<TensorT<T>> grads(nodes_.size());
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const TensorT<T>& a = nodes_[i].act;
    grads[i] = TensorT<T>(a.n(), a.c(), a.h(), a.w());
    NodeState& st = nodes_[i];
    if (st.has_w) st.gw = TensorT<T>(st.w.n(), st.w.c(), st.w.h(), st.w.w());
    if (st.has_b) st.gb = TensorT<T>(st.b.n(), st.b.c(), st.b.h(), st.b.w());
  }
  for (size_t k = 0; k < outs.size(); ++k) {
    if (douts[k].dims != grads[outs[k]].dims)
      throw DataError("output gradient " + std::to_string(k) + " has shape " +
                      douts[k].shape_str() + ", expected " +
                      grads[outs[k]].shape_str());
    grads[outs[k]] = douts[k];
  }
  for (int i = int(nodes_.size()) - 1; i >= 0; --i) backprop_node(i, grads);
  return grads[spec_.input_index()];
}

template <typename T>
TensorT<T> Net<T>::backward(const TensorT<T>& dout) {
  return backward_all({dout});
}

template <typename T>
std::vector<typename Net<T>::Param> Net<T>::params() {
  std::vector<Param> out;
  for (size_t i = 0; i < spec_.nodes.size(); ++i) {
    const NodeSpec& n = spec_.nodes[i];
    NodeState& st = nodes_[i];
    if (st.has_w)
      out.push_back(Param{n.name + ".w", &st.w, &st.gw, n.learnable, false});
    if (st.has_b)
      out.push_back(Param{n.name + ".b", &st.b, &st.gb, n.learnable, true});
  }
  return out;
}

template <typename T>
GeomSummary Net<T>::summary_to(const std::string& node) const {
  int i = spec_.find(node);
  if (i < 0) throw DataError("no node named '" + node + "'");
  return summaries_[i];
}

// ---------------------------------------------------------------------------
// Dense-prediction constructions.

namespace {

// Node indices of a plain conv/pool/relu chain from the input to the single
// output, padding-free. Anything else is out of scope for stitching.
std::vector<int> stitchable_chain(const NetSpec& spec) {
  std::vector<int> consumers(spec.nodes.size(), 0);
  for (const NodeSpec& n : spec.nodes)
    for (const std::string& in : n.inputs) ++consumers[spec.find(in)];

  std::vector<int> chain{spec.input_index()};
  while (consumers[chain.back()] > 0) {
    const int cur = chain.back();
    if (consumers[cur] > 1)
      throw DataError("unsupported topology for stitching: node '" +
                      spec.nodes[cur].name + "' feeds several consumers");
    int next = -1;
    for (size_t i = 0; i < spec.nodes.size(); ++i)
      for (const std::string& in : spec.nodes[i].inputs)
        if (spec.find(in) == cur) next = int(i);
    const NodeSpec& n = spec.nodes[next];
    if (n.kind != NodeKind::kConv && n.kind != NodeKind::kPool &&
        n.kind != NodeKind::kRelu)
      throw DataError("unsupported topology for stitching: node '" + n.name +
                      "' is " + kind_name(n.kind) +
                      ", only conv/pool/relu chains stitch");
    if (n.p != 0)
      throw DataError("unsupported topology for stitching: node '" + n.name +
                      "' uses padding");
    chain.push_back(next);
  }
  return chain;
}

// Smallest input extent for which the chain yields >= m output cells.
int extent_for_outputs(const std::vector<LayerGeom>& geoms, int m) {
  for (auto it = geoms.rbegin(); it != geoms.rend(); ++it)
    m = (m - 1) * it->s + it->k_eff();
  return m;
}

}  // namespace

template <typename T>
TensorT<T> shift_and_stitch_reference(Net<T>& net, const TensorT<T>& x, int f) {
  if (f < 1) throw DataError("stitch factor must be >= 1");
  std::vector<int> chain = stitchable_chain(net.spec());
  const NodeSpec& last = net.spec().nodes[chain.back()];
  GeomSummary total = net.summary_to(last.name);
  if (!total.S.is_integer() || total.S.as_int() != f)
    throw DataError("net stride " + total.S.str() +
                    " does not match the stitch factor " + std::to_string(f));

  std::vector<LayerGeom> geoms;
  for (int i : chain) geoms.push_back(net.spec().nodes[i].geom());
  const int eh = output_extent(total, x.h());
  const int ew = output_extent(total, x.w());
  // One spare window per axis covers the furthest interlace position of any
  // shift; anything beyond that is computed and discarded.
  const int need_h = extent_for_outputs(geoms, eh + 1);
  const int need_w = extent_for_outputs(geoms, ew + 1);

  TensorT<T> out(x.n(), last.out_ch, f * eh, f * ew);
  for (int dy = 0; dy < f; ++dy) {
    for (int dx = 0; dx < f; ++dx) {
      TensorT<T> shifted(x.n(), x.c(), std::max(x.h() + dy, need_h),
                         std::max(x.w() + dx, need_w));
      for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
          for (int y = 0; y < x.h(); ++y)
            std::memcpy(&shifted.at(b, c, y + dy, dx), &x.at(b, c, y, 0),
                        sizeof(T) * x.w());
      TensorT<T> coarse = net.forward(shifted);
      // This pass owns dense positions congruent to -shift mod f.
      for (int Dy = (f - dy) % f; Dy < f * eh; Dy += f)
        for (int Dx = (f - dx) % f; Dx < f * ew; Dx += f)
          for (int b = 0; b < out.n(); ++b)
            for (int c = 0; c < out.c(); ++c)
              out.at(b, c, Dy, Dx) =
                  coarse.at(b, c, (Dy + dy) / f, (Dx + dx) / f);
    }
  }
  return out;
}

template <typename T>
Net<T> equivalent_dense_net(Net<T>& net) {
  std::vector<int> chain = stitchable_chain(net.spec());
  std::vector<LayerGeom> geoms;
  for (int i : chain) geoms.push_back(net.spec().nodes[i].geom());
  GeomSummary total;
  for (const LayerGeom& g : geoms) total = compose(summarize(g), total);

  NetSpec dense;
  dense.nodes.push_back(net.spec().nodes[chain[0]]);
  NodeSpec pad;
  pad.name = "dense_extend";
  pad.kind = NodeKind::kPadDense;
  pad.k = int(total.K.as_int());
  pad.s = int(total.S.as_int());
  pad.in_ch = pad.out_ch = dense.nodes[0].out_ch;
  pad.aux_chain = geoms;
  pad.inputs = {dense.nodes[0].name};
  dense.nodes.push_back(pad);

  std::map<std::string, int> rarefaction;  // conv node -> accumulated stride
  int f_in = 1;
  std::string prev = pad.name;
  for (size_t ci = 1; ci < chain.size(); ++ci) {
    NodeSpec n = net.spec().nodes[chain[ci]];
    n.inputs = {prev};
    if (n.kind == NodeKind::kConv) {
      rarefaction[n.name] = f_in;
      n.k = (n.k - 1) * f_in + 1;
      n.init = "zero";
      n.learnable = false;
    } else if (n.kind == NodeKind::kPool) {
      n.dilation = f_in;
    }
    f_in *= n.s;
    n.s = 1;
    prev = n.name;
    dense.nodes.push_back(n);
  }

  Net<T> out(std::move(dense));
  std::map<std::string, TensorT<T>*> src;
  for (const auto& p : net.params()) src[p.name] = p.value;
  for (const auto& p : out.params()) {
    const TensorT<T>& v = *src.at(p.name);
    const std::string node = p.name.substr(0, p.name.size() - 2);
    auto it = rarefaction.find(node);
    if (!p.is_bias && it != rarefaction.end())
      *p.value = rarefy_filter(v, it->second);
    else
      *p.value = v;
  }
  return out;
}

#define FCN_INSTANTIATE(T)                                                    \
  template class Net<T>;                                                      \
  template TensorT<T> shift_and_stitch_reference<T>(Net<T>&,                  \
                                                    const TensorT<T>&, int);  \
  template Net<T> equivalent_dense_net<T>(Net<T>&);

FCN_INSTANTIATE(float)
FCN_INSTANTIATE(double)

#undef FCN_INSTANTIATE

}  // namespace fcn
