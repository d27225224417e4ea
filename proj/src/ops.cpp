#include "pidnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pidnet/parallel.hpp"

namespace pidnet {
namespace {

constexpr std::size_t kElemChunk = 1 << 14;

// Applies fn(begin, end) over [0, size) in fixed-size chunks.
template <typename Fn>
void for_chunks(std::size_t size, Fn&& fn) {
  const std::size_t tasks = (size + kElemChunk - 1) / kElemChunk;
  parallel_for(tasks, [&](std::size_t t) {
    fn(t * kElemChunk, std::min(size, (t + 1) * kElemChunk));
  });
}

template <typename T>
void accumulate(Node<T>& node, const Tensor<T>& g) {
  if (!node.requires_grad) return;
  Tensor<T>& buf = grad_buffer(node);
  T* dst = buf.ptr();
  const T* src = g.ptr();
  for_chunks(buf.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) dst[i] += src[i];
  });
}

// Shapes equal except that one side may have C == 1.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (a.n == b.n && a.h == b.h && a.w == b.w && (a.c == 1 || b.c == 1)) {
    return Shape{a.n, std::max(a.c, b.c), a.h, a.w};
  }
  throw ShapeError(std::string(op) + ": dim mismatch " + a.str() + " vs " + b.str());
}

// Flat index into an operand of shape `s` for output element i of shape `o`.
inline std::size_t bcast_index(const Shape& s, const Shape& o, std::size_t i) {
  if (s.c == o.c) return i;
  const std::size_t plane = o.plane();
  const std::size_t n = i / (plane * o.c);
  return n * plane + i % plane;
}

// Reduces a full-shape gradient onto an operand shape (sum over broadcast C).
template <typename T>
void accumulate_reduced(Node<T>& node, const Shape& o,
                        const std::function<T(std::size_t)>& grad_at) {
  if (!node.requires_grad) return;
  const Shape s = node.value.shape();
  T* dst = grad_buffer(node).ptr();
  if (s.c == o.c) {
    for_chunks(o.numel(), [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) dst[i] += grad_at(i);
    });
    return;
  }
  const std::size_t plane = o.plane();
  parallel_for(static_cast<std::size_t>(o.n), [&](std::size_t n) {
    for (std::size_t p = 0; p < plane; ++p) {
      T acc = 0;
      for (int c = 0; c < o.c; ++c) acc += grad_at((n * o.c + c) * plane + p);
      dst[n * plane + p] += acc;
    }
  });
}

template <typename T, typename Fn>
Tensor<T> map_unary(const Tensor<T>& x, Fn&& fn) {
  Tensor<T> out(x.shape());
  const T* src = x.ptr();
  T* dst = out.ptr();
  for_chunks(x.size(), [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) dst[i] = fn(src[i]);
  });
  return out;
}

struct LerpTap {
  int i0, i1;
  double frac;  // weight of i1
};

// Half-pixel source coordinates: s = (d + 0.5) * in / out - 0.5, clamped.
std::vector<LerpTap> lerp_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in - 1);
    taps[d] = LerpTap{i0, i1, src - i0};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = map_unary(x.value(), [](T v) { return v > 0 ? v : T(0); });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn](const Node<T>& o) {
      const Shape s = o.value.shape();
      accumulate_reduced<T>(*xn, s, [&](std::size_t i) {
        return o.value[i] > 0 ? o.grad[i] : T(0);
      });
    };
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  Tensor<T> out = map_unary(x.value(), [](T v) {
    // Split by sign so exp never overflows.
    if (v >= 0) return static_cast<T>(1 / (1 + std::exp(-v)));
    const T e = std::exp(v);
    return static_cast<T>(e / (1 + e));
  });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn](const Node<T>& o) {
      accumulate_reduced<T>(*xn, o.value.shape(), [&](std::size_t i) {
        const T s = o.value[i];
        return o.grad[i] * s * (1 - s);
      });
    };
  });
}

namespace {

// Writes log-softmax over channels into `out`.
template <typename T>
void log_softmax_into(const Tensor<T>& x, Tensor<T>& out) {
  const Shape s = x.shape();
  const std::size_t plane = s.plane();
  parallel_for(static_cast<std::size_t>(s.n), [&](std::size_t n) {
    const T* src = x.ptr() + n * s.c * plane;
    T* dst = out.ptr() + n * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T m = src[p];
      for (int c = 1; c < s.c; ++c) m = std::max(m, src[c * plane + p]);
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) sum += std::exp(static_cast<double>(src[c * plane + p] - m));
      const T lse = static_cast<T>(m + std::log(sum));
      for (int c = 0; c < s.c; ++c) dst[c * plane + p] = src[c * plane + p] - lse;
    }
  });
}

}  // namespace

template <typename T>
Var<T> softmax_channels(const Var<T>& x) {
  Tensor<T> out(x.shape());
  log_softmax_into(x.value(), out);
  for (auto& v : out.data()) v = std::exp(v);
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn](const Node<T>& o) {
      const Shape s = o.value.shape();
      const std::size_t plane = s.plane();
      Tensor<T> g(s);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          T dot = 0;
          for (int c = 0; c < s.c; ++c) {
            const std::size_t i = base + c * plane + p;
            dot += o.grad[i] * o.value[i];
          }
          for (int c = 0; c < s.c; ++c) {
            const std::size_t i = base + c * plane + p;
            g[i] = o.value[i] * (o.grad[i] - dot);
          }
        }
      }
      accumulate(*xn, g);
    };
  });
}

template <typename T>
Var<T> log_softmax_channels(const Var<T>& x) {
  Tensor<T> out(x.shape());
  log_softmax_into(x.value(), out);
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn](const Node<T>& o) {
      const Shape s = o.value.shape();
      const std::size_t plane = s.plane();
      Tensor<T> g(s);
      for (int n = 0; n < s.n; ++n) {
        const std::size_t base = static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          T total = 0;
          for (int c = 0; c < s.c; ++c) total += o.grad[base + c * plane + p];
          for (int c = 0; c < s.c; ++c) {
            const std::size_t i = base + c * plane + p;
            g[i] = o.grad[i] - std::exp(o.value[i]) * total;
          }
        }
      }
      accumulate(*xn, g);
    };
  });
}

template <typename T>
Var<T> avgpool2d(const Var<T>& x, int kernel, int stride) {
  if (kernel < 1 || stride < 1) throw ValueError("avgpool2d: kernel and stride must be >= 1");
  const Shape s = x.shape();
  const int pad = (kernel - 1) / 2;
  if (s.h + 2 * pad < kernel || s.w + 2 * pad < kernel) {
    throw ShapeError("avgpool2d: kernel " + std::to_string(kernel) +
                     " exceeds padded extent of " + s.str());
  }
  const int oh = conv_out_extent(s.h, kernel, stride, pad);
  const int ow = conv_out_extent(s.w, kernel, stride, pad);
  const Shape os{s.n, s.c, oh, ow};
  Tensor<T> out(os);
  auto window = [=](int o, int extent) {
    const int lo = std::max(0, o * stride - pad);
    const int hi = std::min(extent, o * stride - pad + kernel);
    return std::pair{lo, hi};
  };
  parallel_for(static_cast<std::size_t>(s.n) * s.c, [&](std::size_t nc) {
    const T* src = x.value().ptr() + nc * s.plane();
    T* dst = out.ptr() + nc * os.plane();
    for (int y = 0; y < oh; ++y) {
      const auto [y0, y1] = window(y, s.h);
      for (int xo = 0; xo < ow; ++xo) {
        const auto [x0, x1] = window(xo, s.w);
        T acc = 0;
        for (int iy = y0; iy < y1; ++iy)
          for (int ix = x0; ix < x1; ++ix) acc += src[iy * s.w + ix];
        dst[y * ow + xo] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn, s, os, window](const Node<T>& o) {
      T* gx = grad_buffer(*xn).ptr();
      parallel_for(static_cast<std::size_t>(s.n) * s.c, [&](std::size_t nc) {
        const T* gy = o.grad.ptr() + nc * os.plane();
        T* dst = gx + nc * s.plane();
        for (int y = 0; y < os.h; ++y) {
          const auto [y0, y1] = window(y, s.h);
          for (int xo = 0; xo < os.w; ++xo) {
            const auto [x0, x1] = window(xo, s.w);
            const T g = gy[y * os.w + xo] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (int iy = y0; iy < y1; ++iy)
              for (int ix = x0; ix < x1; ++ix) dst[iy * s.w + ix] += g;
          }
        }
      });
    };
  });
}

template <typename T>
Var<T> global_avgpool(const Var<T>& x) {
  const Shape s = x.shape();
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  parallel_for(static_cast<std::size_t>(s.n) * s.c, [&](std::size_t nc) {
    const T* src = x.value().ptr() + nc * plane;
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out[nc] = static_cast<T>(acc / static_cast<double>(plane));
  });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn, s, plane](const Node<T>& o) {
      T* gx = grad_buffer(*xn).ptr();
      for (std::size_t nc = 0; nc < static_cast<std::size_t>(s.n) * s.c; ++nc) {
        const T g = o.grad[nc] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) gx[nc * plane + i] += g;
      }
    };
  });
}

template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ValueError("bilinear_resize: target size must be positive, got " +
                     std::to_string(out_h) + "x" + std::to_string(out_w));
  }
  const Shape s = x.shape();
  if (s.h == out_h && s.w == out_w) {
    return make_result<T>(Tensor<T>(x.value()), {&x}, [&] {
      auto xn = x.node();
      return [xn](const Node<T>& o) { accumulate(*xn, o.grad); };
    });
  }
  const Shape os{s.n, s.c, out_h, out_w};
  auto ty = lerp_taps(s.h, out_h);
  auto tx = lerp_taps(s.w, out_w);
  Tensor<T> out(os);
  parallel_for(static_cast<std::size_t>(s.n) * s.c, [&](std::size_t nc) {
    const T* src = x.value().ptr() + nc * s.plane();
    T* dst = out.ptr() + nc * os.plane();
    for (int y = 0; y < out_h; ++y) {
      const LerpTap& a = ty[y];
      const T* r0 = src + a.i0 * s.w;
      const T* r1 = src + a.i1 * s.w;
      const T fy = static_cast<T>(a.frac);
      for (int xo = 0; xo < out_w; ++xo) {
        const LerpTap& b = tx[xo];
        const T fx = static_cast<T>(b.frac);
        const T top = r0[b.i0] + fx * (r0[b.i1] - r0[b.i0]);
        const T bot = r1[b.i0] + fx * (r1[b.i1] - r1[b.i0]);
        dst[y * out_w + xo] = top + fy * (bot - top);
      }
    }
  });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn, s, os, ty = std::move(ty), tx = std::move(tx)](const Node<T>& o) {
      T* gx = grad_buffer(*xn).ptr();
      parallel_for(static_cast<std::size_t>(s.n) * s.c, [&](std::size_t nc) {
        const T* gy = o.grad.ptr() + nc * os.plane();
        T* dst = gx + nc * s.plane();
        for (int y = 0; y < os.h; ++y) {
          const LerpTap& a = ty[y];
          const T fy = static_cast<T>(a.frac);
          for (int xo = 0; xo < os.w; ++xo) {
            const LerpTap& b = tx[xo];
            const T fx = static_cast<T>(b.frac);
            const T g = gy[y * os.w + xo];
            dst[a.i0 * s.w + b.i0] += g * (1 - fy) * (1 - fx);
            dst[a.i0 * s.w + b.i1] += g * (1 - fy) * fx;
            dst[a.i1 * s.w + b.i0] += g * fy * (1 - fx);
            dst[a.i1 * s.w + b.i1] += g * fy * fx;
          }
        }
      });
    };
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  const Shape os = broadcast_shape(sa, sb, "add");
  Tensor<T> out(os);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  for_chunks(os.numel(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out[i] = pa[bcast_index(sa, os, i)] + pb[bcast_index(sb, os, i)];
  });
  return make_result<T>(std::move(out), {&a, &b}, [&] {
    auto an = a.node();
    auto bn = b.node();
    return [an, bn, os](const Node<T>& o) {
      auto g = [&](std::size_t i) { return o.grad[i]; };
      accumulate_reduced<T>(*an, os, g);
      accumulate_reduced<T>(*bn, os, g);
    };
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  const Shape os = broadcast_shape(sa, sb, "sub");
  Tensor<T> out(os);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  for_chunks(os.numel(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out[i] = pa[bcast_index(sa, os, i)] - pb[bcast_index(sb, os, i)];
  });
  return make_result<T>(std::move(out), {&a, &b}, [&] {
    auto an = a.node();
    auto bn = b.node();
    return [an, bn, os](const Node<T>& o) {
      accumulate_reduced<T>(*an, os, [&](std::size_t i) { return o.grad[i]; });
      accumulate_reduced<T>(*bn, os, [&](std::size_t i) { return -o.grad[i]; });
    };
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Shape sa = a.shape(), sb = b.shape();
  const Shape os = broadcast_shape(sa, sb, "mul");
  Tensor<T> out(os);
  const T* pa = a.value().ptr();
  const T* pb = b.value().ptr();
  for_chunks(os.numel(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i)
      out[i] = pa[bcast_index(sa, os, i)] * pb[bcast_index(sb, os, i)];
  });
  return make_result<T>(std::move(out), {&a, &b}, [&] {
    auto an = a.node();
    auto bn = b.node();
    return [an, bn, sa, sb, os](const Node<T>& o) {
      const T* va = an->value.ptr();
      const T* vb = bn->value.ptr();
      accumulate_reduced<T>(*an, os, [&](std::size_t i) {
        return o.grad[i] * vb[bcast_index(sb, os, i)];
      });
      accumulate_reduced<T>(*bn, os, [&](std::size_t i) {
        return o.grad[i] * va[bcast_index(sa, os, i)];
      });
    };
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T c) {
  Tensor<T> out = map_unary(a.value(), [c](T v) { return v * c; });
  return make_result<T>(std::move(out), {&a}, [&] {
    auto an = a.node();
    return [an, c](const Node<T>& o) {
      accumulate_reduced<T>(*an, o.value.shape(),
                            [&](std::size_t i) { return o.grad[i] * c; });
    };
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T c) {
  Tensor<T> out = map_unary(a.value(), [c](T v) { return v + c; });
  return make_result<T>(std::move(out), {&a}, [&] {
    auto an = a.node();
    return [an](const Node<T>& o) { accumulate(*an, o.grad); };
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape first = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape s = p.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: dim mismatch " + first.str() + " vs " + s.str());
    }
    channels += s.c;
  }
  const Shape os{first.n, channels, first.h, first.w};
  const std::size_t plane = os.plane();
  Tensor<T> out(os);
  for (int n = 0; n < os.n; ++n) {
    int c0 = 0;
    for (const auto& p : parts) {
      const int pc = p.shape().c;
      std::copy_n(p.value().ptr() + static_cast<std::size_t>(n) * pc * plane, pc * plane,
                  out.ptr() + (static_cast<std::size_t>(n) * channels + c0) * plane);
      c0 += pc;
    }
  }
  std::vector<const Var<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return make_result<T>(std::move(out), inputs, [&] {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return [nodes, os, plane](const Node<T>& o) {
      int c0 = 0;
      for (const auto& node : nodes) {
        const int pc = node->value.c();
        if (node->requires_grad) {
          T* g = grad_buffer(*node).ptr();
          for (int n = 0; n < os.n; ++n) {
            const T* src = o.grad.ptr() + (static_cast<std::size_t>(n) * os.c + c0) * plane;
            T* dst = g + static_cast<std::size_t>(n) * pc * plane;
            for (std::size_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
          }
        }
        c0 += pc;
      }
    };
  });
}

template <typename T>
Var<T> concat_add(const std::vector<Var<T>>& parts, const Var<T>& shared) {
  if (parts.empty()) throw ShapeError("concat_add: no inputs");
  const Shape s = shared.shape();
  for (const auto& p : parts) {
    if (p.shape() != s) {
      throw ShapeError("concat_add: part " + p.shape().str() + " vs shared " + s.str());
    }
  }
  const int k = static_cast<int>(parts.size());
  const Shape os{s.n, s.c * k, s.h, s.w};
  const std::size_t block = static_cast<std::size_t>(s.c) * s.plane();
  Tensor<T> out(os);
  const T* sh = shared.value().ptr();
  for (int n = 0; n < s.n; ++n) {
    for (int i = 0; i < k; ++i) {
      const T* src = parts[i].value().ptr() + n * block;
      const T* add = sh + n * block;
      T* dst = out.ptr() + (static_cast<std::size_t>(n) * k + i) * block;
      for (std::size_t j = 0; j < block; ++j) dst[j] = src[j] + add[j];
    }
  }
  std::vector<const Var<T>*> inputs{&shared};
  for (const auto& p : parts) inputs.push_back(&p);
  return make_result<T>(std::move(out), inputs, [&] {
    std::vector<std::shared_ptr<Node<T>>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    auto sn = shared.node();
    return [nodes, sn, k, block, n_img = s.n](const Node<T>& o) {
      for (int i = 0; i < k; ++i) {
        for (Node<T>* node : {nodes[i].get(), sn.get()}) {
          if (!node->requires_grad) continue;
          T* g = grad_buffer(*node).ptr();
          for (int n = 0; n < n_img; ++n) {
            const T* src = o.grad.ptr() + (static_cast<std::size_t>(n) * k + i) * block;
            T* dst = g + n * block;
            for (std::size_t j = 0; j < block; ++j) dst[j] += src[j];
          }
        }
      }
    };
  });
}

template <typename T>
Var<T> channel_sum(const Var<T>& x) {
  const Shape s = x.shape();
  const Shape os{s.n, 1, s.h, s.w};
  const std::size_t plane = s.plane();
  Tensor<T> out(os);
  parallel_for(static_cast<std::size_t>(s.n), [&](std::size_t n) {
    const T* src = x.value().ptr() + n * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T acc = 0;
      for (int c = 0; c < s.c; ++c) acc += src[c * plane + p];
      out[n * plane + p] = acc;
    }
  });
  return make_result<T>(std::move(out), {&x}, [&] {
    auto xn = x.node();
    return [xn, s, os](const Node<T>& o) {
      accumulate_reduced<T>(*xn, s, [&](std::size_t i) {
        return o.grad[bcast_index(os, s, i)];
      });
    };
  });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  double acc = 0.0;
  for (const T v : x.value().data()) acc += v;
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(acc)), {&x}, [&] {
    auto xn = x.node();
    return [xn](const Node<T>& o) {
      const T g = o.grad[0];
      accumulate_reduced<T>(*xn, xn->value.shape(), [g](std::size_t) { return g; });
    };
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  const auto count = static_cast<T>(x.value().size());
  return scale(sum_all(x), T(1) / count);
}

template <typename T>
void sgd_update(Tensor<T>& weight, const Tensor<T>& grad, Tensor<T>* velocity,
                const SgdOptions& opt) {
  if (opt.lr < 0) throw ValueError("sgd: learning rate must be >= 0");
  if (grad.shape() != weight.shape()) {
    throw ShapeError("sgd: grad " + grad.shape().str() + " does not match param " +
                     weight.shape().str());
  }
  const bool use_momentum = opt.momentum > 0;
  if (use_momentum && (velocity == nullptr || velocity->shape() != weight.shape())) {
    throw ShapeError("sgd: momentum requires a velocity buffer shaped like the param");
  }
  const T lr = static_cast<T>(opt.lr);
  const T m = static_cast<T>(opt.momentum);
  const T wd = static_cast<T>(opt.weight_decay);
  for (std::size_t i = 0; i < weight.size(); ++i) {
    T d = grad[i] + wd * weight[i];
    if (use_momentum) {
      (*velocity)[i] = m * (*velocity)[i] + d;
      d = (*velocity)[i];
    }
    weight[i] -= lr * d;
  }
}

#define PIDNET_INSTANTIATE(T)                                                  \
  template Var<T> relu(const Var<T>&);                                         \
  template Var<T> sigmoid(const Var<T>&);                                      \
  template Var<T> softmax_channels(const Var<T>&);                             \
  template Var<T> log_softmax_channels(const Var<T>&);                         \
  template Var<T> avgpool2d(const Var<T>&, int, int);                          \
  template Var<T> global_avgpool(const Var<T>&);                               \
  template Var<T> bilinear_resize(const Var<T>&, int, int);                    \
  template Var<T> add(const Var<T>&, const Var<T>&);                           \
  template Var<T> sub(const Var<T>&, const Var<T>&);                           \
  template Var<T> mul(const Var<T>&, const Var<T>&);                           \
  template Var<T> scale(const Var<T>&, T);                                     \
  template Var<T> add_scalar(const Var<T>&, T);                                \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                 \
  template Var<T> concat_add(const std::vector<Var<T>>&, const Var<T>&);      \
  template Var<T> channel_sum(const Var<T>&);                                  \
  template Var<T> sum_all(const Var<T>&);                                      \
  template Var<T> mean_all(const Var<T>&);                                     \
  template void sgd_update(Tensor<T>&, const Tensor<T>&, Tensor<T>*,           \
                           const SgdOptions&);

PIDNET_INSTANTIATE(float)
PIDNET_INSTANTIATE(double)

#undef PIDNET_INSTANTIATE

}  // namespace pidnet
