#include "pidnet/network.hpp"

#include <algorithm>

namespace pidnet {

ModelConfig ModelConfig::preset(const std::string& name) {
  ModelConfig c;
  c.name = name;
  if (name == "tiny") {
    c.base_width = 16;
    c.pd_depth = 2;
    c.i_depth = 2;
    c.ppm_channels = 32;
    c.head_channels = 32;
    c.num_classes = 3;
    c.input_multiple = 8;
  } else if (name == "s") {
    c.base_width = 32;
  } else if (name == "m") {
    c.base_width = 64;
  } else if (name == "l") {
    c.base_width = 64;
    c.pd_depth = 3;
    c.i_depth = 4;
    c.deep = true;
    c.context = ContextKind::kDappm;
    c.ppm_channels = 112;
    c.head_channels = 256;
  } else {
    throw ValueError("unknown model preset '" + name + "' (expected tiny, s, m or l)");
  }
  return c;
}

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw ValueError(std::string("model config: ") + what + " must be >= 1");
  };
  positive(base_width, "base_width");
  positive(pd_depth, "pd_depth");
  positive(i_depth, "i_depth");
  positive(ppm_channels, "ppm_channels");
  positive(head_channels, "head_channels");
  positive(input_multiple, "input_multiple");
  if (num_classes < 2) throw ValueError("model config: num_classes must be >= 2");
  if (base_width % 2 != 0) {
    throw ValueError("model config: base_width must be even (bottleneck widths are 4C/4)");
  }
  if (boundary_radius < 0) throw ValueError("model config: boundary_radius must be >= 0");
}

int ModelConfig::embed_channels() const { return std::max(8, base_width); }

std::string to_string(Fusion f) { return f == Fusion::kAdd ? "add" : "pag_bag"; }
std::string to_string(ContextKind k) { return k == ContextKind::kDappm ? "dappm" : "pappm"; }

Fusion parse_fusion(const std::string& s) {
  if (s == "pag_bag") return Fusion::kPagBag;
  if (s == "add") return Fusion::kAdd;
  throw ValueError("unknown fusion '" + s + "' (expected pag_bag or add)");
}

ContextKind parse_context(const std::string& s) {
  if (s == "pappm") return ContextKind::kPappm;
  if (s == "dappm") return ContextKind::kDappm;
  throw ValueError("unknown context module '" + s + "' (expected pappm or dappm)");
}

template <typename T>
PidNet<T>::PidNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.base_width;
  const PadMode pad = cfg_.pad;
  const auto basic = BlockKind::kBasic;
  const auto bottleneck = BlockKind::kBottleneck;

  stem1_ = ConvBn<T>(3, c, 3, 2, true, false, 1, pad);
  stem2_ = ConvBn<T>(c, c, 3, 2, true, false, 1, pad);
  layer1_ = Stage<T>(basic, c, c, cfg_.pd_depth, 1, pad);
  layer2_ = Stage<T>(basic, c, 2 * c, cfg_.pd_depth, 2, pad);

  layer3p_ = Stage<T>(basic, 2 * c, 2 * c, cfg_.pd_depth, 1, pad);
  layer4p_ = Stage<T>(basic, 2 * c, 2 * c, cfg_.pd_depth, 1, pad);
  layer5p_ = Stage<T>(bottleneck, 2 * c, 4 * c, 1, 1, pad);

  if (cfg_.deep) {
    layer3d_ = Stage<T>(basic, 2 * c, 2 * c, 1, 1, pad);
    layer4d_ = Stage<T>(basic, 2 * c, 2 * c, 1, 1, pad);
    diff3_ = ConvBn<T>(4 * c, 2 * c, 3, 1, true, false, 1, pad);
  } else {
    layer3d_ = Stage<T>(basic, 2 * c, c, 1, 1, pad);
    layer4d_ = Stage<T>(bottleneck, c, 2 * c, 1, 1, pad);
    diff3_ = ConvBn<T>(4 * c, c, 3, 1, true, false, 1, pad);
  }
  diff4_ = ConvBn<T>(8 * c, 2 * c, 3, 1, true, false, 1, pad);
  layer5d_ = Stage<T>(bottleneck, 2 * c, 4 * c, 1, 1, pad);

  layer3_ = Stage<T>(basic, 2 * c, 4 * c, cfg_.i_depth, 2, pad);
  layer4_ = Stage<T>(basic, 4 * c, 8 * c, cfg_.i_depth, 2, pad);
  layer5_ = Stage<T>(bottleneck, 8 * c, 24 * c, 2, 2, pad);

  if (cfg_.fusion == Fusion::kPagBag) {
    pag1_ = Pag<T>(2 * c, 4 * c, cfg_.embed_channels());
    pag2_ = Pag<T>(2 * c, 8 * c, cfg_.embed_channels());
    if (cfg_.deep) {
      bag_ = Bag<T>(4 * c, 4 * c, pad);
    } else {
      light_bag_ = LightBag<T>(4 * c, 4 * c);
    }
  } else {
    lat1_ = AddLateral<T>(2 * c, 4 * c);
    lat2_ = AddLateral<T>(2 * c, 8 * c);
  }
  ppm_ = PyramidPooling<T>(cfg_.context, 24 * c, cfg_.ppm_channels, 4 * c, pad);

  aux_head_ = SegHead<T>(2 * c, cfg_.head_channels, cfg_.num_classes, pad);
  boundary_head_ = SegHead<T>::boundary(2 * c, c, pad);
  final_head_ = SegHead<T>(4 * c, cfg_.head_channels, cfg_.num_classes, pad);

  visit([this](const std::string& name, ConvBn<T>& u) { init_unit(name, u, cfg_.seed); });
}

template <typename T>
void PidNet<T>::visit(const UnitVisitor<T>& v) {
  v("stem.0", stem1_);
  v("stem.1", stem2_);
  layer1_.visit("layer1", v);
  layer2_.visit("layer2", v);
  layer3p_.visit("layer3p", v);
  layer3d_.visit("layer3d", v);
  layer3_.visit("layer3", v);
  if (cfg_.fusion == Fusion::kPagBag) {
    pag1_.visit("pag1", v);
  } else {
    lat1_.visit("lat1", v);
  }
  v("diff3", diff3_);
  layer4_.visit("layer4", v);
  layer4p_.visit("layer4p", v);
  layer4d_.visit("layer4d", v);
  if (cfg_.fusion == Fusion::kPagBag) {
    pag2_.visit("pag2", v);
  } else {
    lat2_.visit("lat2", v);
  }
  v("diff4", diff4_);
  layer5p_.visit("layer5p", v);
  layer5d_.visit("layer5d", v);
  layer5_.visit("layer5", v);
  ppm_.visit("ppm", v);
  if (cfg_.fusion == Fusion::kPagBag) {
    if (cfg_.deep) {
      bag_.visit("bag", v);
    } else {
      light_bag_.visit("light_bag", v);
    }
  }
  aux_head_.visit("aux_head", v);
  boundary_head_.visit("boundary_head", v);
  final_head_.visit("final_head", v);
}

template <typename T>
void PidNet<T>::check_input(const Shape& s) const {
  if (s.c != 3) {
    throw ShapeError("forward: input must have 3 channels, got " + std::to_string(s.c));
  }
  const int m = cfg_.input_multiple;
  if (s.h % m != 0 || s.w % m != 0 || s.h < m || s.w < m) {
    throw ShapeError("forward: input extent " + std::to_string(s.h) + "x" +
                     std::to_string(s.w) + " is not divisible by " + std::to_string(m));
  }
}

template <typename T>
ForwardOutputs<T> PidNet<T>::forward(const Var<T>& input, RunMode mode) {
  check_input(input.shape());
  const bool train = mode == RunMode::kTrain;
  if (train && fused_) throw Error("forward: a BN-fused model can only run in eval mode");
  const BnMode bn_mode = (train && !bn_frozen_) ? BnMode::kTrain : BnMode::kEval;
  visit([bn_mode](const std::string&, ConvBn<T>& u) {
    if (u.has_bn) u.bn.mode = bn_mode;
  });

  // Eval never records: suspend any active tape for the whole pass.
  Tape<T>* tape = train ? Tape<T>::active() : nullptr;
  TapeScope<T> scope(tape);

  ProbeMap<T>* probes = probe_sink_;
  auto probe_for = [&](const std::string& block) {
    return block == probe_block_ ? probes : nullptr;
  };

  const int h8 = input.shape().h / 8;
  const int w8 = input.shape().w / 8;

  Var<T> x = relu(stem1_.forward(input));
  x = relu(stem2_.forward(x));
  x = layer1_.forward(x);
  x = layer2_.forward(x);

  Var<T> xp = layer3p_.forward(x);
  Var<T> xd = layer3d_.forward(x);
  Var<T> xi = layer3_.forward(x);

  xp = cfg_.fusion == Fusion::kPagBag ? pag1_.forward(xp, xi, probe_for("pag1"), "pag1")
                                      : lat1_.forward(xp, xi);
  ForwardOutputs<T> out;
  if (train) out.aux = aux_head_.forward(xp);
  xd = add(xd, bilinear_resize(diff3_.forward(xi), h8, w8));

  xi = layer4_.forward(xi);
  xp = layer4p_.forward(xp);
  xd = layer4d_.forward(xd);

  xp = cfg_.fusion == Fusion::kPagBag ? pag2_.forward(xp, xi, probe_for("pag2"), "pag2")
                                      : lat2_.forward(xp, xi);
  xd = add(xd, bilinear_resize(diff4_.forward(xi), h8, w8));
  out.boundary = boundary_head_.forward(xd);

  xp = layer5p_.forward(xp);
  xd = layer5d_.forward(xd);
  xi = layer5_.forward(xi);
  Var<T> ctx = bilinear_resize(ppm_.forward(xi), h8, w8);

  Var<T> fused;
  if (cfg_.fusion == Fusion::kAdd) {
    fused = add(add(xp, ctx), xd);
  } else if (cfg_.deep) {
    fused = bag_.forward(xp, ctx, xd, probe_for("bag"), "bag");
  } else {
    fused = light_bag_.forward(xp, ctx, xd, probe_for("light_bag"), "light_bag");
  }
  out.main = final_head_.forward(fused);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> PidNet<T>::named_parameters() {
  std::vector<std::pair<std::string, Var<T>>> out;
  visit([&](const std::string& name, ConvBn<T>& u) {
    out.emplace_back(name + ".conv.weight", u.conv.weight);
    if (u.conv.has_bias()) out.emplace_back(name + ".conv.bias", u.conv.bias);
    if (u.has_bn) {
      out.emplace_back(name + ".bn.gamma", u.bn.gamma);
      out.emplace_back(name + ".bn.beta", u.bn.beta);
    }
  });
  return out;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> PidNet<T>::state() {
  std::vector<std::pair<std::string, Tensor<T>*>> out;
  visit([&](const std::string& name, ConvBn<T>& u) {
    out.emplace_back(name + ".conv.weight", &u.conv.weight.value());
    if (u.conv.has_bias()) out.emplace_back(name + ".conv.bias", &u.conv.bias.value());
    if (u.has_bn) {
      out.emplace_back(name + ".bn.gamma", &u.bn.gamma.value());
      out.emplace_back(name + ".bn.beta", &u.bn.beta.value());
      out.emplace_back(name + ".bn.running_mean", &u.bn.running_mean);
      out.emplace_back(name + ".bn.running_var", &u.bn.running_var);
    }
  });
  return out;
}

template <typename T>
void PidNet<T>::zero_grad() {
  for (auto& [name, v] : named_parameters()) v.zero_grad();
}

template <typename T>
LayerTrace PidNet<T>::trace(int h, int w) const {
  check_input(Shape{1, 3, h, w});
  LayerTrace t;
  auto relu_t = [&](const std::string& name, const Shape& s) {
    t.linear(name, "relu", s, s, 1);
  };
  auto resize_t = [&](const std::string& name, const Shape& s, int oh, int ow) {
    Shape o = s;
    o.h = oh;
    o.w = ow;
    t.linear(name, "resize", s, o, 7);
    return o;
  };
  const int h8 = h / 8, w8 = w / 8;

  Shape x = stem1_.trace("stem.0", Shape{1, 3, h, w}, t);
  relu_t("stem.0.relu", x);
  x = stem2_.trace("stem.1", x, t);
  relu_t("stem.1.relu", x);
  x = layer1_.trace("layer1", x, t);
  x = layer2_.trace("layer2", x, t);

  Shape xp = layer3p_.trace("layer3p", x, t);
  Shape xd = layer3d_.trace("layer3d", x, t);
  Shape xi = layer3_.trace("layer3", x, t);
  xp = cfg_.fusion == Fusion::kPagBag ? pag1_.trace("pag1", xp, xi, t)
                                      : lat1_.trace("lat1", xp, xi, t);
  resize_t("diff3.resize", diff3_.trace("diff3", xi, t), h8, w8);
  t.linear("diff3.add", "eltwise", xd, xd, 1);

  xi = layer4_.trace("layer4", xi, t);
  xp = layer4p_.trace("layer4p", xp, t);
  xd = layer4d_.trace("layer4d", xd, t);
  xp = cfg_.fusion == Fusion::kPagBag ? pag2_.trace("pag2", xp, xi, t)
                                      : lat2_.trace("lat2", xp, xi, t);
  resize_t("diff4.resize", diff4_.trace("diff4", xi, t), h8, w8);
  t.linear("diff4.add", "eltwise", xd, xd, 1);
  boundary_head_.trace("boundary_head", xd, t);

  xp = layer5p_.trace("layer5p", xp, t);
  xd = layer5d_.trace("layer5d", xd, t);
  xi = layer5_.trace("layer5", xi, t);
  const Shape ctx = resize_t("ppm.resize", ppm_.trace("ppm", xi, t), h8, w8);

  Shape fused = xp;
  if (cfg_.fusion == Fusion::kAdd) {
    t.linear("fuse.add", "eltwise", xp, xp, 2);
  } else if (cfg_.deep) {
    fused = bag_.trace("bag", xp, t);
  } else {
    fused = light_bag_.trace("light_bag", xp, t);
  }
  (void)ctx;
  final_head_.trace("final_head", fused, t);
  return t;
}

template <typename T>
std::int64_t PidNet<T>::count_params() const {
  std::int64_t total = 0;
  const_cast<PidNet*>(this)->visit(
      [&](const std::string&, ConvBn<T>& u) { total += u.param_count(); });
  return total;
}

template <typename T>
std::int64_t PidNet<T>::count_flops(int h, int w) const {
  return trace(h, w).total_flops();
}

template <typename T>
std::int64_t PidNet<T>::count_macs(int h, int w) const {
  return trace(h, w).total_macs();
}

template <typename T>
void PidNet<T>::fuse_bn() {
  visit([](const std::string&, ConvBn<T>& u) {
    if (u.has_bn) {
      u.bn.mode = BnMode::kEval;
      u.fuse();
    }
  });
  fused_ = true;
}

template <typename T>
int PidNet<T>::bn_layer_count() const {
  int n = 0;
  const_cast<PidNet*>(this)->visit([&](const std::string&, ConvBn<T>& u) {
    if (u.has_bn) ++n;
  });
  return n;
}

template <typename T>
std::vector<std::string> PidNet<T>::probe_blocks() const {
  if (cfg_.fusion == Fusion::kAdd) return {};
  return {"pag1", "pag2", cfg_.deep ? "bag" : "light_bag"};
}

template <typename T>
void PidNet<T>::set_probe(const std::string& block, ProbeMap<T>* sink) {
  if (sink != nullptr) {
    const auto names = probe_blocks();
    if (std::find(names.begin(), names.end(), block) == names.end()) {
      std::string list;
      for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
      throw ValueError("unknown block '" + block + "'; valid blocks: " +
                       (list.empty() ? "(none)" : list));
    }
  }
  probe_block_ = block;
  probe_sink_ = sink;
}

template class PidNet<float>;
template class PidNet<double>;

}  // namespace pidnet
