#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pidnet/ops.hpp"

namespace pidnet {

// One row of the analytic model summary.
struct LayerRecord {
  std::string name;
  std::string kind;  // conv, bn, relu, sigmoid, pool, resize, eltwise
  Shape in;
  Shape out;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t flops = 0;
};

// Shape-only replay of a forward pass. Blocks mirror their forward()
// arithmetic here so that parameters and FLOPs can be counted at any input
// size without touching tensor data.
class LayerTrace {
 public:
  void add(LayerRecord r) { layers_.push_back(std::move(r)); }
  // Linear-cost layers (BN, activations, pooling, resize, elementwise).
  void linear(const std::string& name, const std::string& kind, const Shape& in,
              const Shape& out, std::int64_t flops_per_output);

  const std::vector<LayerRecord>& layers() const { return layers_; }
  std::int64_t total_params() const;
  std::int64_t total_macs() const;
  std::int64_t total_flops() const;

 private:
  std::vector<LayerRecord> layers_;
};

// Conv followed by an optional batch norm. After fuse() the BN is folded into
// the conv weights and bias and the unit holds a single conv.
template <typename T>
struct ConvBn {
  ConvParams<T> conv;
  BnParams<T> bn;
  bool has_bn = false;

  ConvBn() = default;
  ConvBn(int in, int out, int kernel, int stride = 1, bool with_bn = true,
         bool bias = false, int groups = 1, PadMode pad = PadMode::kZeros);

  Var<T> forward(const Var<T>& x);
  Shape trace(const std::string& name, const Shape& in, LayerTrace& t) const;
  void fuse();
  std::int64_t param_count() const;
};

template <typename T>
using UnitVisitor = std::function<void(const std::string& name, ConvBn<T>& unit)>;

// Intermediate maps captured for inspection, keyed by "<block>/<role>".
template <typename T>
using ProbeMap = std::map<std::string, Tensor<T>>;

enum class BlockKind { kBasic, kBottleneck };

template <typename T>
class ResidualBlock {
 public:
  static constexpr int kExpansion = 4;

  // `out` is the block's output width; a bottleneck runs at out / 4 inside.
  ResidualBlock(BlockKind kind, int in, int out, int stride, PadMode pad);

  Var<T> forward(const Var<T>& x);
  Shape trace(const std::string& name, const Shape& in, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  BlockKind kind() const { return kind_; }
  bool has_projection() const { return has_down_; }

 private:
  BlockKind kind_;
  ConvBn<T> c1_, c2_, c3_, down_;
  bool has_down_ = false;
};

// `blocks` residual blocks; only the first changes width or stride.
template <typename T>
class Stage {
 public:
  Stage() = default;
  Stage(BlockKind kind, int in, int out, int blocks, int stride, PadMode pad);

  Var<T> forward(const Var<T>& x);
  Shape trace(const std::string& name, const Shape& in, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);
  std::size_t size() const { return blocks_.size(); }

 private:
  std::vector<ResidualBlock<T>> blocks_;
};

// sigma * i + (1 - sigma) * p with sigma broadcast over channels when it has
// a single channel.
template <typename T>
Var<T> gated_mix(const Var<T>& p, const Var<T>& i, const Var<T>& sigma);

// Pixel-attention-guided fusion of the detail map p with a context map i.
// i is projected to p's width by a 1x1 conv + BN at its own resolution and
// then bilinearly resized; sigma = sigmoid(sum_c f_p(p) * f_i(i)) is one
// scalar per site.
template <typename T>
class Pag {
 public:
  Pag() = default;
  Pag(int p_channels, int i_channels, int embed_channels);

  Var<T> forward(const Var<T>& p, const Var<T>& i, ProbeMap<T>* probes = nullptr,
                 const std::string& name = "pag");
  Shape trace(const std::string& name, const Shape& p, const Shape& i,
              LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  ConvBn<T>& projection() { return proj_; }
  ConvBn<T>& embed_p() { return f_p_; }
  ConvBn<T>& embed_i() { return f_i_; }

 private:
  ConvBn<T> proj_, f_p_, f_i_;
};

// Plain lateral: p + resize(proj(i)), the Add variant of Pag.
template <typename T>
class AddLateral {
 public:
  AddLateral() = default;
  AddLateral(int p_channels, int i_channels);

  Var<T> forward(const Var<T>& p, const Var<T>& i);
  Shape trace(const std::string& name, const Shape& p, const Shape& i,
              LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

 private:
  ConvBn<T> proj_;
};

enum class ContextKind { kPappm, kDappm };

// Pyramid pooling over five scales: identity, avg(5,2), avg(9,4), avg(17,8)
// and global. Pooled branches are resized back and refined by 3x3 convs,
// in parallel (PAPPM, one grouped conv) or in sequence (DAPPM).
template <typename T>
class PyramidPooling {
 public:
  static constexpr int kScales = 5;

  PyramidPooling() = default;
  PyramidPooling(ContextKind kind, int in, int branch, int out, PadMode pad);

  Var<T> forward(const Var<T>& x);
  Shape trace(const std::string& name, const Shape& in, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  ContextKind kind() const { return kind_; }
  int branch_channels() const { return branch_; }

 private:
  ContextKind kind_ = ContextKind::kPappm;
  int branch_ = 0;
  std::vector<ConvBn<T>> scales_;   // kScales entries
  std::vector<ConvBn<T>> refine_;   // 1 grouped (PAPPM) or 4 (DAPPM)
  ConvBn<T> compress_, shortcut_;
};

// Pooling geometry of scale k (1..3); 0 kernel means global pooling.
struct PoolSpec {
  int kernel;
  int stride;
};
PoolSpec pool_spec(int scale, int h, int w);

// Boundary-attention-guided fusion: f_out(sigma p + (1 - sigma) i), with
// sigma = sigmoid(d) elementwise and f_out a 3x3 conv-BN-ReLU.
template <typename T>
class Bag {
 public:
  Bag() = default;
  Bag(int in, int out, PadMode pad);

  Var<T> forward(const Var<T>& p, const Var<T>& i, const Var<T>& d,
                 ProbeMap<T>* probes = nullptr, const std::string& name = "bag");
  Shape trace(const std::string& name, const Shape& p, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  ConvBn<T>& f_out() { return f_out_; }

 private:
  ConvBn<T> f_out_;
};

// f_p((1 - sigma) i + p) + f_i(sigma p + i) with 1x1 conv + BN for f_p, f_i.
template <typename T>
class LightBag {
 public:
  LightBag() = default;
  LightBag(int in, int out);

  Var<T> forward(const Var<T>& p, const Var<T>& i, const Var<T>& d,
                 ProbeMap<T>* probes = nullptr, const std::string& name = "light_bag");
  Shape trace(const std::string& name, const Shape& p, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  ConvBn<T>& f_p() { return f_p_; }
  ConvBn<T>& f_i() { return f_i_; }

 private:
  ConvBn<T> f_p_, f_i_;
};

// 3x3 conv-BN-ReLU then a 1x1 conv with bias; no upsampling.
template <typename T>
class SegHead {
 public:
  SegHead() = default;
  SegHead(int in, int mid, int classes, PadMode pad);
  static SegHead boundary(int in, int mid, PadMode pad);

  Var<T> forward(const Var<T>& x);
  Shape trace(const std::string& name, const Shape& in, LayerTrace& t) const;
  void visit(const std::string& name, const UnitVisitor<T>& v);

  ConvBn<T>& classifier() { return cls_; }

 private:
  ConvBn<T> mid_, cls_;
};

// Kaiming fan-out normal weights seeded per unit name, zero biases, BN
// gamma = 1 and beta = 0.
template <typename T>
void init_unit(const std::string& name, ConvBn<T>& unit, std::uint64_t seed);

}  // namespace pidnet
