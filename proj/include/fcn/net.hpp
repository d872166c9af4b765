#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fcn/geometry.hpp"
#include "fcn/io.hpp"
#include "fcn/ops.hpp"
#include "fcn/tensor.hpp"

namespace fcn {

enum class NodeKind {
  kInput,
  kConv,
  kRelu,
  kPool,
  kFc,      // fixed-extent head: input spatial must equal k exactly
  kDeconv,
  kFuse,    // two inputs, center-crops the larger, then sums
  kCrop,    // two inputs: crop first to the spatial extent of the second
  kPadDense // internal: right/bottom zero-extension used by dense equivalents
};

std::string kind_name(NodeKind k);

// One line of a net description:
//   name kind k s p in_ch out_ch init learnable inputs...
// The s column holds the upsampling factor f for deconv rows. fc rows use k
// as their fixed input extent. init is none|zero|bilinear|identity|gauss:<sd>.
struct NodeSpec {
  std::string name;
  NodeKind kind = NodeKind::kInput;
  int k = 0, s = 0, p = 0;
  int in_ch = 0, out_ch = 0;
  std::string init = "none";
  bool learnable = false;
  std::vector<std::string> inputs;
  // Not representable in the text format, only on nets built in memory:
  int dilation = 1;                 // destrided pools
  std::vector<LayerGeom> aux_chain; // kPadDense: geometry of the source chain

  LayerGeom geom() const;
};

struct NetSpec {
  std::vector<NodeSpec> nodes;

  int find(const std::string& name) const;       // -1 when absent
  int input_index() const;
  std::vector<int> output_indices() const;       // nodes nobody consumes
  int class_count() const;                       // out_ch of the first output
  void validate() const;
};

NetSpec parse_net(const std::string& text);
NetSpec load_net(const std::string& path);
std::string serialize_net(const NetSpec& spec);

// Composed geometry from the input node up to each node. At fuse points the
// branch strides must agree (validated); the summary keeps the larger-K
// branch's chain.
std::vector<GeomSummary> node_summaries(const NetSpec& spec);

// Executable network. Parameters are named <node>.w / <node>.b in
// checkpoints. Forward caches every activation (the tape); backward consumes
// the tape exactly once and errors if run twice or before any forward.
template <typename T>
class Net {
 public:
  explicit Net(NetSpec spec);

  const NetSpec& spec() const { return spec_; }

  // Deterministic: parameter streams are keyed by node name, so two nets
  // built from the same description and seed hold identical values.
  void init_params(uint64_t seed);

  Checkpoint save() const;  // float32 on disk regardless of T
  // Entries load by name. allow_missing_params keeps freshly initialized
  // values for params absent from the checkpoint (staged fine-tuning);
  // checkpoint entries that match no parameter are always an error.
  void load(const Checkpoint& ckpt, bool allow_missing_params = false);

  TensorT<T> forward(const TensorT<T>& x);
  std::vector<TensorT<T>> forward_all(const TensorT<T>& x);

  // dout pairs with the single output / every output in order. Returns the
  // gradient w.r.t. the net input; parameter gradients land in params().
  TensorT<T> backward(const TensorT<T>& dout);
  TensorT<T> backward_all(const std::vector<TensorT<T>>& douts);

  const TensorT<T>& activation(const std::string& node) const;

  struct Param {
    std::string name;
    TensorT<T>* value;
    TensorT<T>* grad;
    bool learnable;
    bool is_bias;
  };
  std::vector<Param> params();

  GeomSummary summary_to(const std::string& node) const;

 private:
  struct NodeState {
    TensorT<T> w, b, gw, gb;
    bool has_w = false, has_b = false;
    // tape
    TensorT<T> act;
    std::vector<size_t> argmax;
    int crop_off_h = 0, crop_off_w = 0;     // kCrop / kPadDense bookkeeping
    int fuse_off[2][2] = {{0, 0}, {0, 0}};  // kFuse per-branch (h, w) offsets
  };

  TensorT<T> eval_node(int i, const TensorT<T>& x);
  void backprop_node(int i, std::vector<TensorT<T>>& grads);

  NetSpec spec_;
  std::vector<NodeState> nodes_;
  std::vector<GeomSummary> summaries_;
  bool tape_valid_ = false;
};

// The two dense-prediction constructions over a padding-free chain of
// conv/pool/relu nodes with total stride f. Both yield extent
// f * (coarse output extent) per axis; borders behave as if the input were
// zero-extended on the right/bottom.
//
// Reference: f^2 forward passes over inputs shifted right/down by zero
// padding, outputs interlaced so position d comes from shift (-d) mod f.
template <typename T>
TensorT<T> shift_and_stitch_reference(Net<T>& net, const TensorT<T>& x, int f);

// Transform: strides removed, conv filters rarefied by the accumulated input
// stride, pool windows dilated likewise, plus a leading extension node so
// extents match the reference exactly. Weights are copied out of net, which
// is left untouched (non-const only because parameter access goes through
// params()).
template <typename T>
Net<T> equivalent_dense_net(Net<T>& net);

}  // namespace fcn
