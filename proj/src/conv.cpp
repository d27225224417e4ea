#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "pidnet/ops.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Output-channel rows per GEMM task. Fixed so the task list (and therefore
// every floating-point reduction) is independent of the worker count.
constexpr int kRowChunk = 64;

struct Geometry {
  int channels;  // input channels of one group
  int in_h, in_w;
  int kernel_h, kernel_w;
  int stride, padding;
  int out_h, out_w;
  PadMode mode;
};

int source_index(int coord, int extent, PadMode mode) {
  if (coord >= 0 && coord < extent) return coord;
  if (mode == PadMode::kZeros) return -1;
  return std::clamp(coord, 0, extent - 1);
}

// Rows are (channel, ky, kx); columns are output positions.
template <typename T>
void im2col(const T* src, const Geometry& g, T* col) {
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    const T* plane = src + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) *
                           out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = source_index(oy * g.stride - g.padding + ky, g.in_h, g.mode);
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = source_index(ox * g.stride - g.padding + kx, g.in_w, g.mode);
            row[oy * g.out_w + ox] =
                (iy < 0 || ix < 0) ? T(0) : plane[iy * g.in_w + ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const Geometry& g, T* dst) {
  const int out_plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    T* plane = dst + static_cast<std::size_t>(c) * g.in_h * g.in_w;
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        const T* row =
            col + static_cast<std::size_t>((c * g.kernel_h + ky) * g.kernel_w + kx) *
                      out_plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = source_index(oy * g.stride - g.padding + ky, g.in_h, g.mode);
          if (iy < 0) continue;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = source_index(ox * g.stride - g.padding + kx, g.in_w, g.mode);
            if (ix < 0) continue;
            plane[iy * g.in_w + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

std::string dim_error(const char* what, int got, int expected) {
  return std::string("conv2d: ") + what + " is " + std::to_string(got) +
         ", expected " + std::to_string(expected);
}

}  // namespace

template <typename T>
void ConvParams<T>::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ShapeError("conv2d: channel counts must be positive");
  }
  if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv2d: groups " + std::to_string(groups) +
                     " must divide in_channels and out_channels");
  }
  if (stride < 1) throw ValueError("conv2d: stride must be >= 1");
  if (padding < 0) throw ValueError("conv2d: padding must be >= 0");
  const Shape expected{out_channels, in_channels / groups, kernel_h, kernel_w};
  if (!weight.defined() || weight.shape() != expected) {
    throw ShapeError("conv2d: weight dims " +
                     (weight.defined() ? weight.shape().str() : "undefined") +
                     " != " + expected.str());
  }
  if (has_bias() && bias.shape() != Shape{1, out_channels, 1, 1}) {
    throw ShapeError("conv2d: bias dims " + bias.shape().str() +
                     " != 1x" + std::to_string(out_channels) + "x1x1");
  }
}

template <typename T>
ConvParams<T> ConvParams<T>::make(int in_channels, int out_channels, int kernel,
                                  int stride, int padding, bool bias,
                                  int groups) {
  ConvParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.kernel_h = kernel;
  p.kernel_w = kernel;
  p.stride = stride;
  p.padding = padding;
  p.groups = groups;
  if (groups < 1 || in_channels % groups != 0) {
    throw ShapeError("conv2d: groups must divide in_channels");
  }
  p.weight = Var<T>::parameter(
      Tensor<T>(Shape{out_channels, in_channels / groups, kernel, kernel}));
  if (bias) p.bias = Var<T>::parameter(Tensor<T>(Shape{1, out_channels, 1, 1}));
  p.validate();
  return p;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p) {
  p.validate();
  const Shape in = x.shape();
  if (in.c != p.in_channels) {
    throw ShapeError(dim_error("input channel dimension (C)", in.c, p.in_channels));
  }
  const int out_h = conv_out_extent(in.h, p.kernel_h, p.stride, p.padding);
  const int out_w = conv_out_extent(in.w, p.kernel_w, p.stride, p.padding);
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("conv2d: input " + in.str() + " too small for kernel " +
                     std::to_string(p.kernel_h) + "x" + std::to_string(p.kernel_w));
  }

  const int groups = p.groups;
  const Geometry geo{p.in_channels / groups, in.h,      in.w,      p.kernel_h,
                     p.kernel_w,             p.stride,  p.padding, out_h,
                     out_w,                  p.pad_mode};
  const int cout_g = p.out_channels / groups;
  const int k = geo.channels * p.kernel_h * p.kernel_w;
  const int plane = out_h * out_w;
  const bool direct =
      p.kernel_h == 1 && p.kernel_w == 1 && p.stride == 1 && p.padding == 0;
  const std::size_t in_group_stride = static_cast<std::size_t>(geo.channels) * in.h * in.w;
  const std::size_t col_size = static_cast<std::size_t>(k) * plane;

  Tensor<T> out(Shape{in.n, p.out_channels, out_h, out_w});
  const int chunks = (cout_g + kRowChunk - 1) / kRowChunk;
  const T* w = p.weight.value().ptr();
  const T* b = p.has_bias() ? p.bias.value().ptr() : nullptr;
  auto gemm_chunk = [&](const T* col, int n, int g, int chunk) {
    const int r0 = chunk * kRowChunk;
    const int rows = std::min(kRowChunk, cout_g - r0);
    const int oc0 = g * cout_g + r0;
    ConstMatMap<T> wm(w + static_cast<std::size_t>(oc0) * k, rows, k);
    ConstMatMap<T> cm(col, k, plane);
    MatMap<T> om(out.ptr() + (static_cast<std::size_t>(n) * p.out_channels + oc0) * plane,
                 rows, plane);
    om.noalias() = wm * cm;
    if (b != nullptr) {
      for (int r = 0; r < rows; ++r) om.row(r).array() += b[oc0 + r];
    }
  };

  const bool record = Tape<T>::active() != nullptr &&
                      (x.requires_grad() || p.weight.requires_grad() || p.bias.requires_grad());
  if (!record && !direct) {
    // Nothing keeps the columns, so build them one (image, group) at a time
    // in a reused buffer.
    parallel_for(static_cast<std::size_t>(in.n) * groups, [&](std::size_t t) {
      thread_local std::vector<T> col;
      col.resize(col_size);
      im2col(x.value().ptr() + t * in_group_stride, geo, col.data());
      for (int chunk = 0; chunk < chunks; ++chunk) {
        gemm_chunk(col.data(), static_cast<int>(t / groups), static_cast<int>(t % groups), chunk);
      }
    });
    return Var<T>(std::move(out));
  }

  // Column buffers per (image, group); shared with the backward pass.
  auto cols = std::make_shared<std::vector<T>>();
  if (!direct) {
    cols->resize(static_cast<std::size_t>(in.n) * groups * col_size);
    parallel_for(static_cast<std::size_t>(in.n) * groups, [&](std::size_t t) {
      im2col(x.value().ptr() + t * in_group_stride, geo, cols->data() + t * col_size);
    });
  }
  auto col_ptr = [&x, cols, direct, in_group_stride, col_size](std::size_t t) -> const T* {
    return direct ? x.value().ptr() + t * in_group_stride : cols->data() + t * col_size;
  };

  parallel_for(static_cast<std::size_t>(in.n) * groups * chunks, [&](std::size_t t) {
    const std::size_t ng = t / chunks;
    gemm_chunk(col_ptr(ng), static_cast<int>(ng / groups), static_cast<int>(ng % groups),
               static_cast<int>(t % chunks));
  });

  return make_result<T>(std::move(out), {&x, &p.weight, &p.bias}, [&] {
    auto xn = x.node();
    auto wn = p.weight.node();
    auto bn = p.bias.node();
    return [=](const Node<T>& o) {
      const Tensor<T>& gy = o.grad;
      const std::size_t out_img = static_cast<std::size_t>(p.out_channels) * plane;
      auto gy_block = [&](int n, int oc0, int rows) {
        return ConstMatMap<T>(gy.ptr() + n * out_img + static_cast<std::size_t>(oc0) * plane,
                              rows, plane);
      };
      auto col_of = [&](std::size_t ng) -> const T* {
        return direct ? xn->value.ptr() + ng * in_group_stride
                      : cols->data() + ng * col_size;
      };
      const T* wv = wn->value.ptr();
      if (xn->requires_grad) {
        T* gx = grad_buffer(*xn).ptr();
        parallel_for(static_cast<std::size_t>(in.n) * groups, [&](std::size_t ng) {
          const int g = static_cast<int>(ng % groups);
          const int n = static_cast<int>(ng / groups);
          ConstMatMap<T> wm(wv + static_cast<std::size_t>(g) * cout_g * k, cout_g, k);
          if (direct) {
            MatMap<T> gxm(gx + ng * in_group_stride, k, plane);
            gxm.noalias() += wm.transpose() * gy_block(n, g * cout_g, cout_g);
          } else {
            RowMat<T> dcol = wm.transpose() * gy_block(n, g * cout_g, cout_g);
            col2im_add(dcol.data(), geo, gx + ng * in_group_stride);
          }
        });
      }
      if (wn->requires_grad) {
        T* gw = grad_buffer(*wn).ptr();
        parallel_for(static_cast<std::size_t>(groups) * chunks, [&](std::size_t t) {
          const int chunk = static_cast<int>(t % chunks);
          const int g = static_cast<int>(t / chunks);
          const int r0 = chunk * kRowChunk;
          const int rows = std::min(kRowChunk, cout_g - r0);
          const int oc0 = g * cout_g + r0;
          MatMap<T> gwm(gw + static_cast<std::size_t>(oc0) * k, rows, k);
          for (int n = 0; n < in.n; ++n) {
            ConstMatMap<T> cm(col_of(static_cast<std::size_t>(n) * groups + g), k, plane);
            gwm.noalias() += gy_block(n, oc0, rows) * cm.transpose();
          }
        });
      }
      if (bn && bn->requires_grad) {
        T* gb = grad_buffer(*bn).ptr();
        parallel_for(static_cast<std::size_t>(p.out_channels), [&](std::size_t oc) {
          T acc = 0;
          for (int n = 0; n < in.n; ++n) {
            const T* row = gy.ptr() + n * out_img + oc * plane;
            for (int i = 0; i < plane; ++i) acc += row[i];
          }
          gb[oc] += acc;
        });
      }
    };
  });
}

template <typename T>
ConvParams<T> fuse_bn_into_conv(const ConvParams<T>& conv, const BnParams<T>& bn) {
  conv.validate();
  bn.validate();
  if (bn.mode != BnMode::kEval) {
    throw ValueError("fuse_bn_into_conv: batch norm must be in eval mode");
  }
  if (bn.channels != conv.out_channels) {
    throw ShapeError("fuse_bn_into_conv: bn has " + std::to_string(bn.channels) +
                     " channels, conv produces " + std::to_string(conv.out_channels));
  }
  ConvParams<T> fused = conv;
  Tensor<T> w = conv.weight.value();
  Tensor<T> b(Shape{1, conv.out_channels, 1, 1});
  const std::size_t per_out = w.size() / conv.out_channels;
  for (int oc = 0; oc < conv.out_channels; ++oc) {
    const double s = static_cast<double>(bn.gamma.value()[oc]) /
                     std::sqrt(static_cast<double>(bn.running_var[oc]) + bn.eps);
    for (std::size_t i = 0; i < per_out; ++i) {
      T& v = w[oc * per_out + i];
      v = static_cast<T>(v * s);
    }
    const double bias = conv.has_bias() ? conv.bias.value()[oc] : 0.0;
    b[oc] = static_cast<T>((bias - bn.running_mean[oc]) * s + bn.beta.value()[oc]);
  }
  fused.weight = Var<T>::parameter(std::move(w));
  fused.bias = Var<T>::parameter(std::move(b));
  return fused;
}

template struct ConvParams<float>;
template struct ConvParams<double>;
template Var<float> conv2d(const Var<float>&, const ConvParams<float>&);
template Var<double> conv2d(const Var<double>&, const ConvParams<double>&);
template ConvParams<float> fuse_bn_into_conv(const ConvParams<float>&,
                                             const BnParams<float>&);
template ConvParams<double> fuse_bn_into_conv(const ConvParams<double>&,
                                              const BnParams<double>&);

}  // namespace pidnet
