#include <cmath>
#include <string>

#include "pidnet/ops.hpp"
#include "pidnet/parallel.hpp"

namespace pidnet {

template <typename T>
void BnParams<T>::validate() const {
  if (channels <= 0) throw ShapeError("batchnorm2d: channel count must be positive");
  const Shape expected{1, channels, 1, 1};
  if (!gamma.defined() || gamma.shape() != expected || !beta.defined() ||
      beta.shape() != expected || running_mean.shape() != expected ||
      running_var.shape() != expected) {
    throw ShapeError("batchnorm2d: parameter vectors must have length " +
                     std::to_string(channels));
  }
  if (!(eps > 0.0)) throw ValueError("batchnorm2d: epsilon must be > 0");
  for (std::size_t c = 0; c < running_var.size(); ++c) {
    if (running_var[c] < 0) throw ValueError("batchnorm2d: running_var < 0");
  }
}

template <typename T>
BnParams<T> BnParams<T>::make(int channels) {
  BnParams p;
  p.channels = channels;
  const Shape s{1, channels, 1, 1};
  p.gamma = Var<T>::parameter(Tensor<T>(s, T(1)));
  p.beta = Var<T>::parameter(Tensor<T>(s, T(0)));
  p.running_mean = Tensor<T>(s, T(0));
  p.running_var = Tensor<T>(s, T(1));
  return p;
}

template <typename T>
BatchStats batch_statistics(const Tensor<T>& x) {
  const Shape s = x.shape();
  BatchStats st{std::vector<double>(s.c), std::vector<double>(s.c)};
  const std::size_t plane = s.plane();
  const double count = static_cast<double>(s.n) * plane;
  parallel_for(static_cast<std::size_t>(s.c), [&](std::size_t c) {
    double sum = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.ptr() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) sum += p[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const T* p = x.ptr() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - mean;
        sq += d * d;
      }
    }
    st.mean[c] = mean;
    st.var[c] = sq / count;
  });
  return st;
}

template <typename T>
Var<T> batchnorm2d(const Var<T>& x, BnParams<T>& p) {
  p.validate();
  const Shape s = x.shape();
  if (s.c != p.channels) {
    throw ShapeError("batchnorm2d: input has " + std::to_string(s.c) +
                     " channels, parameters have " + std::to_string(p.channels));
  }
  const std::size_t plane = s.plane();
  const bool train = p.mode == BnMode::kTrain;

  std::vector<double> mean(s.c), inv_std(s.c);
  if (train) {
    const BatchStats st = batch_statistics(x.value());
    const double count = static_cast<double>(s.n) * plane;
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    for (int c = 0; c < s.c; ++c) {
      mean[c] = st.mean[c];
      inv_std[c] = 1.0 / std::sqrt(st.var[c] + p.eps);
      p.running_mean[c] = static_cast<T>((1 - p.momentum) * p.running_mean[c] +
                                         p.momentum * st.mean[c]);
      p.running_var[c] = static_cast<T>((1 - p.momentum) * p.running_var[c] +
                                        p.momentum * st.var[c] * unbias);
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = p.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(p.running_var[c]) + p.eps);
    }
  }

  Tensor<T> out(s);
  const T* gamma = p.gamma.value().ptr();
  const T* beta = p.beta.value().ptr();
  parallel_for(static_cast<std::size_t>(s.c), [&](std::size_t c) {
    const T a = static_cast<T>(gamma[c] * inv_std[c]);
    const T m = static_cast<T>(mean[c]);
    for (int n = 0; n < s.n; ++n) {
      const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
      const T* src = x.value().ptr() + off;
      T* dst = out.ptr() + off;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = a * (src[i] - m) + beta[c];
    }
  });

  return make_result<T>(std::move(out), {&x, &p.gamma, &p.beta}, [&] {
    auto xn = x.node();
    auto gn = p.gamma.node();
    auto bn = p.beta.node();
    return [xn, gn, bn, mean = std::move(mean), inv_std = std::move(inv_std), train,
            s, plane](const Node<T>& o) {
      const Tensor<T>& gy = o.grad;
      const double count = static_cast<double>(s.n) * plane;
      T* gx = xn->requires_grad ? grad_buffer(*xn).ptr() : nullptr;
      T* gg = gn->requires_grad ? grad_buffer(*gn).ptr() : nullptr;
      T* gb = bn->requires_grad ? grad_buffer(*bn).ptr() : nullptr;
      const T* gamma = gn->value.ptr();
      parallel_for(static_cast<std::size_t>(s.c), [&](std::size_t c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          const T* xv = xn->value.ptr() + off;
          const T* dy = gy.ptr() + off;
          for (std::size_t i = 0; i < plane; ++i) {
            const double xhat = (xv[i] - mean[c]) * inv_std[c];
            sum_dy += dy[i];
            sum_dy_xhat += dy[i] * xhat;
          }
        }
        if (gg) gg[c] += static_cast<T>(sum_dy_xhat);
        if (gb) gb[c] += static_cast<T>(sum_dy);
        if (!gx) return;
        const double g = gamma[c];
        for (int n = 0; n < s.n; ++n) {
          const std::size_t off = (static_cast<std::size_t>(n) * s.c + c) * plane;
          const T* xv = xn->value.ptr() + off;
          const T* dy = gy.ptr() + off;
          T* dx = gx + off;
          for (std::size_t i = 0; i < plane; ++i) {
            if (train) {
              const double xhat = (xv[i] - mean[c]) * inv_std[c];
              dx[i] += static_cast<T>(g * inv_std[c] *
                                      (dy[i] - sum_dy / count - xhat * sum_dy_xhat / count));
            } else {
              dx[i] += static_cast<T>(g * inv_std[c] * dy[i]);
            }
          }
        }
      });
    };
  });
}

template struct BnParams<float>;
template struct BnParams<double>;
template BatchStats batch_statistics(const Tensor<float>&);
template BatchStats batch_statistics(const Tensor<double>&);
template Var<float> batchnorm2d(const Var<float>&, BnParams<float>&);
template Var<double> batchnorm2d(const Var<double>&, BnParams<double>&);

}  // namespace pidnet
