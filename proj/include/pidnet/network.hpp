#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pidnet/blocks.hpp"

namespace pidnet {

enum class Fusion { kPagBag, kAdd };
enum class RunMode { kTrain, kEval };

struct ModelConfig {
  std::string name = "custom";
  int base_width = 32;       // C
  int pd_depth = 2;          // basic blocks per P stage (m)
  int i_depth = 3;           // basic blocks per I stage (n)
  bool deep = false;         // L layout: D branch at 2C and Bag instead of Light-Bag
  Fusion fusion = Fusion::kPagBag;
  ContextKind context = ContextKind::kPappm;
  int ppm_channels = 96;
  int head_channels = 128;
  int num_classes = 19;
  int boundary_radius = 2;
  int input_multiple = 64;
  PadMode pad = PadMode::kReplicate;
  std::uint64_t seed = 0;

  // tiny, s, m or l.
  static ModelConfig preset(const std::string& name);
  void validate() const;
  int embed_channels() const;
};

std::string to_string(Fusion f);
std::string to_string(ContextKind k);
Fusion parse_fusion(const std::string& s);
ContextKind parse_context(const std::string& s);

// All three maps are at 1/8 of the input resolution. aux is undefined in
// eval mode.
template <typename T>
struct ForwardOutputs {
  Var<T> aux;
  Var<T> main;
  Var<T> boundary;
};

template <typename T>
class PidNet {
 public:
  explicit PidNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Train mode normalizes with batch statistics (unless BN is frozen) and
  // runs the aux head; eval mode uses running statistics, skips the aux head
  // and never records onto a tape.
  ForwardOutputs<T> forward(const Var<T>& x, RunMode mode);

  // Keeps BN on running statistics even in train mode.
  void freeze_bn(bool frozen) { bn_frozen_ = frozen; }

  void visit(const UnitVisitor<T>& v);
  std::vector<std::pair<std::string, Var<T>>> named_parameters();
  // Parameters and BN running statistics, in a fixed order.
  std::vector<std::pair<std::string, Tensor<T>*>> state();
  void zero_grad();

  // Analytic summary of the eval path at input size h x w (batch 1).
  LayerTrace trace(int h, int w) const;
  std::int64_t count_params() const;
  std::int64_t count_flops(int h, int w) const;  // 2 x MACs + linear layers
  std::int64_t count_macs(int h, int w) const;   // conv multiply-accumulates

  // Folds every BN into its conv. The model is switched to eval for good.
  void fuse_bn();
  bool fused() const { return fused_; }
  int bn_layer_count() const;
  int pag_count() const { return cfg_.fusion == Fusion::kPagBag ? 2 : 0; }
  int bag_count() const { return cfg_.fusion == Fusion::kPagBag ? 1 : 0; }

  // Names accepted by set_probe (blocks whose inputs, gate and output can be
  // captured).
  std::vector<std::string> probe_blocks() const;
  // Captures intermediate maps of `block` on the next forward passes.
  void set_probe(const std::string& block, ProbeMap<T>* sink);

 private:
  void check_input(const Shape& s) const;

  ModelConfig cfg_;
  bool bn_frozen_ = false;
  bool fused_ = false;
  std::string probe_block_;
  ProbeMap<T>* probe_sink_ = nullptr;

  ConvBn<T> stem1_, stem2_;
  Stage<T> layer1_, layer2_;
  Stage<T> layer3p_, layer4p_, layer5p_;
  Stage<T> layer3d_, layer4d_, layer5d_;
  Stage<T> layer3_, layer4_, layer5_;
  Pag<T> pag1_, pag2_;
  AddLateral<T> lat1_, lat2_;
  ConvBn<T> diff3_, diff4_;
  PyramidPooling<T> ppm_;
  Bag<T> bag_;
  LightBag<T> light_bag_;
  SegHead<T> aux_head_, boundary_head_, final_head_;
};

extern template class PidNet<float>;
extern template class PidNet<double>;

}  // namespace pidnet
