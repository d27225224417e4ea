#include "pidnet/blocks.hpp"

#include <cmath>

namespace pidnet {

void LayerTrace::linear(const std::string& name, const std::string& kind, const Shape& in,
                        const Shape& out, std::int64_t flops_per_output) {
  LayerRecord r;
  r.name = name;
  r.kind = kind;
  r.in = in;
  r.out = out;
  r.flops = flops_per_output * static_cast<std::int64_t>(out.numel());
  layers_.push_back(std::move(r));
}

std::int64_t LayerTrace::total_params() const {
  std::int64_t s = 0;
  for (const auto& l : layers_) s += l.params;
  return s;
}

std::int64_t LayerTrace::total_macs() const {
  std::int64_t s = 0;
  for (const auto& l : layers_) s += l.macs;
  return s;
}

std::int64_t LayerTrace::total_flops() const {
  std::int64_t s = 0;
  for (const auto& l : layers_) s += l.flops;
  return s;
}

// ---------------------------------------------------------------------------
// ConvBn

template <typename T>
ConvBn<T>::ConvBn(int in, int out, int kernel, int stride, bool with_bn, bool bias,
                  int groups, PadMode pad)
    : conv(ConvParams<T>::make(in, out, kernel, stride, (kernel - 1) / 2, bias, groups)),
      has_bn(with_bn) {
  conv.pad_mode = pad;
  if (with_bn) bn = BnParams<T>::make(out);
}

template <typename T>
Var<T> ConvBn<T>::forward(const Var<T>& x) {
  Var<T> y = conv2d(x, conv);
  return has_bn ? batchnorm2d(y, bn) : y;
}

template <typename T>
Shape ConvBn<T>::trace(const std::string& name, const Shape& in, LayerTrace& t) const {
  if (in.c != conv.in_channels) {
    throw ShapeError(name + ": expects " + std::to_string(conv.in_channels) +
                     " input channels, got " + std::to_string(in.c));
  }
  const Shape out{in.n, conv.out_channels,
                  conv_out_extent(in.h, conv.kernel_h, conv.stride, conv.padding),
                  conv_out_extent(in.w, conv.kernel_w, conv.stride, conv.padding)};
  LayerRecord r;
  r.name = name + ".conv";
  r.kind = "conv";
  r.in = in;
  r.out = out;
  r.params = static_cast<std::int64_t>(conv.weight.value().size()) +
             (conv.has_bias() ? conv.out_channels : 0);
  r.macs = static_cast<std::int64_t>(out.numel()) * (conv.in_channels / conv.groups) *
           conv.kernel_h * conv.kernel_w;
  r.flops = 2 * r.macs;
  t.add(r);
  if (has_bn) {
    LayerRecord b;
    b.name = name + ".bn";
    b.kind = "bn";
    b.in = out;
    b.out = out;
    b.params = 2 * static_cast<std::int64_t>(bn.channels);
    b.flops = 2 * static_cast<std::int64_t>(out.numel());
    t.add(b);
  }
  return out;
}

template <typename T>
void ConvBn<T>::fuse() {
  if (!has_bn) return;
  conv = fuse_bn_into_conv(conv, bn);
  bn = BnParams<T>();
  has_bn = false;
}

template <typename T>
std::int64_t ConvBn<T>::param_count() const {
  std::int64_t n = static_cast<std::int64_t>(conv.weight.value().size());
  if (conv.has_bias()) n += conv.out_channels;
  if (has_bn) n += 2 * static_cast<std::int64_t>(bn.channels);
  return n;
}

template <typename T>
void init_unit(const std::string& name, ConvBn<T>& unit, std::uint64_t seed) {
  Rng rng(hash_name(name + ".conv.weight", seed));
  const ConvParams<T>& c = unit.conv;
  const double fan_out = static_cast<double>(c.out_channels) * c.kernel_h * c.kernel_w;
  const double stddev = std::sqrt(2.0 / fan_out);
  for (T& v : unit.conv.weight.value().data()) v = static_cast<T>(rng.normal() * stddev);
  if (unit.conv.has_bias()) unit.conv.bias.value().fill(T(0));
  if (unit.has_bn) {
    unit.bn.gamma.value().fill(T(1));
    unit.bn.beta.value().fill(T(0));
    unit.bn.running_mean.fill(T(0));
    unit.bn.running_var.fill(T(1));
  }
}

namespace {

template <typename T>
void trace_relu(const std::string& name, const Shape& s, LayerTrace& t) {
  t.linear(name, "relu", s, s, 1);
}

Shape with_channels(Shape s, int c) {
  s.c = c;
  return s;
}

Shape with_extent(Shape s, int h, int w) {
  s.h = h;
  s.w = w;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Residual blocks

template <typename T>
ResidualBlock<T>::ResidualBlock(BlockKind kind, int in, int out, int stride, PadMode pad)
    : kind_(kind) {
  if (stride != 1 && stride != 2) {
    throw ValueError("residual_block: stride must be 1 or 2, got " + std::to_string(stride));
  }
  if (kind == BlockKind::kBasic) {
    c1_ = ConvBn<T>(in, out, 3, stride, true, false, 1, pad);
    c2_ = ConvBn<T>(out, out, 3, 1, true, false, 1, pad);
  } else {
    if (out % kExpansion != 0) {
      throw ShapeError("residual_block: bottleneck width " + std::to_string(out) +
                       " is not a multiple of 4");
    }
    const int planes = out / kExpansion;
    c1_ = ConvBn<T>(in, planes, 1, 1, true, false, 1, pad);
    c2_ = ConvBn<T>(planes, planes, 3, stride, true, false, 1, pad);
    c3_ = ConvBn<T>(planes, out, 1, 1, true, false, 1, pad);
  }
  has_down_ = stride != 1 || in != out;
  if (has_down_) down_ = ConvBn<T>(in, out, 1, stride, true, false, 1, pad);
}

template <typename T>
Var<T> ResidualBlock<T>::forward(const Var<T>& x) {
  Var<T> y = relu(c1_.forward(x));
  if (kind_ == BlockKind::kBasic) {
    y = c2_.forward(y);
  } else {
    y = relu(c2_.forward(y));
    y = c3_.forward(y);
  }
  return relu(add(y, has_down_ ? down_.forward(x) : x));
}

template <typename T>
Shape ResidualBlock<T>::trace(const std::string& name, const Shape& in,
                              LayerTrace& t) const {
  Shape s = c1_.trace(name + ".c1", in, t);
  trace_relu<T>(name + ".c1.relu", s, t);
  s = c2_.trace(name + ".c2", s, t);
  if (kind_ == BlockKind::kBottleneck) {
    trace_relu<T>(name + ".c2.relu", s, t);
    s = c3_.trace(name + ".c3", s, t);
  }
  if (has_down_) down_.trace(name + ".down", in, t);
  t.linear(name + ".add", "eltwise", s, s, 1);
  trace_relu<T>(name + ".relu", s, t);
  return s;
}

template <typename T>
void ResidualBlock<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".c1", c1_);
  v(name + ".c2", c2_);
  if (kind_ == BlockKind::kBottleneck) v(name + ".c3", c3_);
  if (has_down_) v(name + ".down", down_);
}

template <typename T>
Stage<T>::Stage(BlockKind kind, int in, int out, int blocks, int stride, PadMode pad) {
  if (blocks < 1) throw ValueError("stage: needs at least one block");
  blocks_.emplace_back(kind, in, out, stride, pad);
  for (int b = 1; b < blocks; ++b) blocks_.emplace_back(kind, out, out, 1, pad);
}

template <typename T>
Var<T> Stage<T>::forward(const Var<T>& x) {
  Var<T> y = x;
  for (auto& b : blocks_) y = b.forward(y);
  return y;
}

template <typename T>
Shape Stage<T>::trace(const std::string& name, const Shape& in, LayerTrace& t) const {
  Shape s = in;
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    s = blocks_[b].trace(name + "." + std::to_string(b), s, t);
  return s;
}

template <typename T>
void Stage<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    blocks_[b].visit(name + "." + std::to_string(b), v);
}

// ---------------------------------------------------------------------------
// Fusion units

template <typename T>
Var<T> gated_mix(const Var<T>& p, const Var<T>& i, const Var<T>& sigma) {
  // p + sigma (i - p) == sigma i + (1 - sigma) p
  return add(p, mul(sigma, sub(i, p)));
}

template <typename T>
Pag<T>::Pag(int p_channels, int i_channels, int embed_channels)
    : proj_(i_channels, p_channels, 1),
      f_p_(p_channels, embed_channels, 1),
      f_i_(p_channels, embed_channels, 1) {}

template <typename T>
Var<T> Pag<T>::forward(const Var<T>& p, const Var<T>& i, ProbeMap<T>* probes,
                       const std::string& name) {
  const Shape ps = p.shape();
  Var<T> ip = proj_.forward(i);
  Var<T> q = bilinear_resize(f_i_.forward(ip), ps.h, ps.w);
  Var<T> sigma = sigmoid(channel_sum(mul(f_p_.forward(p), q)));
  Var<T> i_up = bilinear_resize(ip, ps.h, ps.w);
  Var<T> out = gated_mix(p, i_up, sigma);
  if (probes) {
    (*probes)[name + "/p-in"] = p.value();
    (*probes)[name + "/i-in"] = i_up.value();
    (*probes)[name + "/sigma"] = sigma.value();
    (*probes)[name + "/out"] = out.value();
  }
  return out;
}

template <typename T>
Shape Pag<T>::trace(const std::string& name, const Shape& p, const Shape& i,
                    LayerTrace& t) const {
  const Shape ip = proj_.trace(name + ".proj", i, t);
  const Shape qi = f_i_.trace(name + ".f_i", ip, t);
  const Shape q = with_extent(qi, p.h, p.w);
  t.linear(name + ".f_i.resize", "resize", qi, q, 7);
  const Shape kp = f_p_.trace(name + ".f_p", p, t);
  const Shape sig = with_channels(kp, 1);
  t.linear(name + ".dot", "eltwise", kp, sig, 2 * kp.c);
  t.linear(name + ".sigmoid", "sigmoid", sig, sig, 1);
  const Shape iu = with_extent(ip, p.h, p.w);
  t.linear(name + ".resize", "resize", ip, iu, 7);
  t.linear(name + ".mix", "eltwise", p, p, 3);
  return p;
}

template <typename T>
void Pag<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".proj", proj_);
  v(name + ".f_p", f_p_);
  v(name + ".f_i", f_i_);
}

template <typename T>
AddLateral<T>::AddLateral(int p_channels, int i_channels) : proj_(i_channels, p_channels, 1) {}

template <typename T>
Var<T> AddLateral<T>::forward(const Var<T>& p, const Var<T>& i) {
  const Shape ps = p.shape();
  return add(p, bilinear_resize(proj_.forward(i), ps.h, ps.w));
}

template <typename T>
Shape AddLateral<T>::trace(const std::string& name, const Shape& p, const Shape& i,
                           LayerTrace& t) const {
  const Shape ip = proj_.trace(name + ".proj", i, t);
  t.linear(name + ".resize", "resize", ip, with_extent(ip, p.h, p.w), 7);
  t.linear(name + ".add", "eltwise", p, p, 1);
  return p;
}

template <typename T>
void AddLateral<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".proj", proj_);
}

// ---------------------------------------------------------------------------
// Pyramid pooling

PoolSpec pool_spec(int scale, int h, int w) {
  static constexpr PoolSpec kSpecs[] = {{5, 2}, {9, 4}, {17, 8}};
  if (scale < 1 || scale > 3) return {0, 0};
  const PoolSpec s = kSpecs[scale - 1];
  const int pad = (s.kernel - 1) / 2;
  // Degrade to global pooling when the window no longer fits.
  if (h + 2 * pad < s.kernel || w + 2 * pad < s.kernel) return {0, 0};
  return s;
}

template <typename T>
PyramidPooling<T>::PyramidPooling(ContextKind kind, int in, int branch, int out, PadMode pad)
    : kind_(kind), branch_(branch) {
  for (int k = 0; k < kScales; ++k) scales_.emplace_back(in, branch, 1);
  if (kind == ContextKind::kPappm) {
    refine_.emplace_back(4 * branch, 4 * branch, 3, 1, true, false, 4, pad);
  } else {
    for (int k = 0; k < 4; ++k) refine_.emplace_back(branch, branch, 3, 1, true, false, 1, pad);
  }
  compress_ = ConvBn<T>(kScales * branch, out, 1);
  shortcut_ = ConvBn<T>(in, out, 1);
}

template <typename T>
Var<T> PyramidPooling<T>::forward(const Var<T>& x) {
  const Shape s = x.shape();
  auto pooled = [&](int k) {
    const PoolSpec ps = pool_spec(k, s.h, s.w);
    Var<T> v = ps.kernel == 0 ? global_avgpool(x) : avgpool2d(x, ps.kernel, ps.stride);
    return bilinear_resize(relu(scales_[k].forward(v)), s.h, s.w);
  };
  Var<T> x0 = relu(scales_[0].forward(x));
  std::vector<Var<T>> parts{x0};
  if (kind_ == ContextKind::kPappm) {
    std::vector<Var<T>> branches;
    for (int k = 1; k < kScales; ++k) branches.push_back(pooled(k));
    Var<T> refined = relu(refine_[0].forward(concat_add(branches, x0)));
    parts.push_back(refined);
  } else {
    for (int k = 1; k < kScales; ++k) {
      parts.push_back(relu(refine_[k - 1].forward(add(pooled(k), parts.back()))));
    }
  }
  return add(compress_.forward(concat_channels(parts)), shortcut_.forward(x));
}

template <typename T>
Shape PyramidPooling<T>::trace(const std::string& name, const Shape& in,
                               LayerTrace& t) const {
  const Shape b = scales_[0].trace(name + ".s0", in, t);
  trace_relu<T>(name + ".s0.relu", b, t);
  for (int k = 1; k < kScales; ++k) {
    const std::string sn = name + ".s" + std::to_string(k);
    const PoolSpec ps = pool_spec(k, in.h, in.w);
    Shape pooled = in;
    if (ps.kernel == 0) {
      pooled = with_extent(in, 1, 1);
      t.linear(sn + ".pool", "pool", in, pooled, static_cast<std::int64_t>(in.plane()));
    } else {
      const int pad = (ps.kernel - 1) / 2;
      pooled = with_extent(in, conv_out_extent(in.h, ps.kernel, ps.stride, pad),
                           conv_out_extent(in.w, ps.kernel, ps.stride, pad));
      t.linear(sn + ".pool", "pool", in, pooled,
               static_cast<std::int64_t>(ps.kernel) * ps.kernel);
    }
    const Shape sb = scales_[k].trace(sn, pooled, t);
    trace_relu<T>(sn + ".relu", sb, t);
    t.linear(sn + ".resize", "resize", sb, b, 7);
    t.linear(sn + ".add", "eltwise", b, b, 1);
    if (kind_ == ContextKind::kDappm) {
      const std::string rn = name + ".refine" + std::to_string(k - 1);
      trace_relu<T>(rn + ".relu", refine_[k - 1].trace(rn, b, t), t);
    }
  }
  if (kind_ == ContextKind::kPappm) {
    const Shape cat = with_channels(b, 4 * branch_);
    trace_relu<T>(name + ".refine.relu", refine_[0].trace(name + ".refine", cat, t), t);
  }
  const Shape out = compress_.trace(name + ".compress", with_channels(b, kScales * branch_), t);
  shortcut_.trace(name + ".shortcut", in, t);
  t.linear(name + ".add", "eltwise", out, out, 1);
  return out;
}

template <typename T>
void PyramidPooling<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  for (int k = 0; k < kScales; ++k) v(name + ".s" + std::to_string(k), scales_[k]);
  if (kind_ == ContextKind::kPappm) {
    v(name + ".refine", refine_[0]);
  } else {
    for (int k = 0; k < 4; ++k) v(name + ".refine" + std::to_string(k), refine_[k]);
  }
  v(name + ".compress", compress_);
  v(name + ".shortcut", shortcut_);
}

// ---------------------------------------------------------------------------
// Boundary-guided fusion

namespace {

void check_aligned(const char* op, const Shape& p, const Shape& i, const Shape& d) {
  if (p != i || p != d) {
    throw ShapeError(std::string(op) + ": misaligned inputs p=" + p.str() + " i=" + i.str() +
                     " d=" + d.str());
  }
}

}  // namespace

template <typename T>
Bag<T>::Bag(int in, int out, PadMode pad) : f_out_(in, out, 3, 1, true, false, 1, pad) {}

template <typename T>
Var<T> Bag<T>::forward(const Var<T>& p, const Var<T>& i, const Var<T>& d,
                       ProbeMap<T>* probes, const std::string& name) {
  check_aligned("bag", p.shape(), i.shape(), d.shape());
  Var<T> sigma = sigmoid(d);
  Var<T> mix = gated_mix(i, p, sigma);  // sigma p + (1 - sigma) i
  Var<T> out = relu(f_out_.forward(mix));
  if (probes) {
    (*probes)[name + "/p-in"] = p.value();
    (*probes)[name + "/i-in"] = i.value();
    (*probes)[name + "/d-in"] = d.value();
    (*probes)[name + "/sigma"] = sigma.value();
    (*probes)[name + "/out"] = out.value();
  }
  return out;
}

template <typename T>
Shape Bag<T>::trace(const std::string& name, const Shape& p, LayerTrace& t) const {
  t.linear(name + ".sigmoid", "sigmoid", p, p, 1);
  t.linear(name + ".mix", "eltwise", p, p, 3);
  const Shape out = f_out_.trace(name + ".f_out", p, t);
  trace_relu<T>(name + ".relu", out, t);
  return out;
}

template <typename T>
void Bag<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".f_out", f_out_);
}

template <typename T>
LightBag<T>::LightBag(int in, int out) : f_p_(in, out, 1), f_i_(in, out, 1) {}

template <typename T>
Var<T> LightBag<T>::forward(const Var<T>& p, const Var<T>& i, const Var<T>& d,
                            ProbeMap<T>* probes, const std::string& name) {
  check_aligned("light_bag", p.shape(), i.shape(), d.shape());
  Var<T> sigma = sigmoid(d);
  Var<T> one_minus = add_scalar(scale(sigma, T(-1)), T(1));
  Var<T> to_p = add(mul(one_minus, i), p);
  Var<T> to_i = add(mul(sigma, p), i);
  Var<T> out = add(f_p_.forward(to_p), f_i_.forward(to_i));
  if (probes) {
    (*probes)[name + "/p-in"] = p.value();
    (*probes)[name + "/i-in"] = i.value();
    (*probes)[name + "/d-in"] = d.value();
    (*probes)[name + "/sigma"] = sigma.value();
    (*probes)[name + "/out"] = out.value();
  }
  return out;
}

template <typename T>
Shape LightBag<T>::trace(const std::string& name, const Shape& p, LayerTrace& t) const {
  t.linear(name + ".sigmoid", "sigmoid", p, p, 1);
  t.linear(name + ".mix", "eltwise", p, p, 5);
  const Shape a = f_p_.trace(name + ".f_p", p, t);
  f_i_.trace(name + ".f_i", p, t);
  t.linear(name + ".add", "eltwise", a, a, 1);
  return a;
}

template <typename T>
void LightBag<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".f_p", f_p_);
  v(name + ".f_i", f_i_);
}

// ---------------------------------------------------------------------------
// Heads

template <typename T>
SegHead<T>::SegHead(int in, int mid, int classes, PadMode pad) {
  if (classes < 2) {
    throw ValueError("segmentation_head: num_classes must be >= 2, got " +
                     std::to_string(classes));
  }
  mid_ = ConvBn<T>(in, mid, 3, 1, true, false, 1, pad);
  cls_ = ConvBn<T>(mid, classes, 1, 1, false, true);
}

template <typename T>
SegHead<T> SegHead<T>::boundary(int in, int mid, PadMode pad) {
  SegHead h;
  h.mid_ = ConvBn<T>(in, mid, 3, 1, true, false, 1, pad);
  h.cls_ = ConvBn<T>(mid, 1, 1, 1, false, true);
  return h;
}

template <typename T>
Var<T> SegHead<T>::forward(const Var<T>& x) {
  return cls_.forward(relu(mid_.forward(x)));
}

template <typename T>
Shape SegHead<T>::trace(const std::string& name, const Shape& in, LayerTrace& t) const {
  const Shape m = mid_.trace(name + ".mid", in, t);
  trace_relu<T>(name + ".mid.relu", m, t);
  return cls_.trace(name + ".cls", m, t);
}

template <typename T>
void SegHead<T>::visit(const std::string& name, const UnitVisitor<T>& v) {
  v(name + ".mid", mid_);
  v(name + ".cls", cls_);
}

#define PIDNET_INSTANTIATE(T)                                                        \
  template struct ConvBn<T>;                                                         \
  template class ResidualBlock<T>;                                                   \
  template class Stage<T>;                                                           \
  template class Pag<T>;                                                             \
  template class AddLateral<T>;                                                      \
  template class PyramidPooling<T>;                                                  \
  template class Bag<T>;                                                             \
  template class LightBag<T>;                                                        \
  template class SegHead<T>;                                                         \
  template Var<T> gated_mix(const Var<T>&, const Var<T>&, const Var<T>&);            \
  template void init_unit(const std::string&, ConvBn<T>&, std::uint64_t);

PIDNET_INSTANTIATE(float)
PIDNET_INSTANTIATE(double)

#undef PIDNET_INSTANTIATE

}  // namespace pidnet
