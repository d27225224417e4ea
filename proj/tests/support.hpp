#pragma once

// Independent reference implementations used as test oracles. Nothing here
// calls into the library's kernels.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "pidnet/autograd.hpp"
#include "pidnet/ops.hpp"

namespace testing {

using pidnet::PadMode;
using pidnet::Rng;
using pidnet::Shape;
using pidnet::Tensor;
using pidnet::Var;

// Direct 7-loop convolution in double precision.
inline Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                                 const Tensor<double>* bias, int stride, int pad, int groups,
                                 PadMode mode = PadMode::kZeros) {
  const Shape xs = x.shape(), ws = w.shape();
  const int oh = (xs.h + 2 * pad - ws.h) / stride + 1;
  const int ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  const int cin_g = xs.c / groups, cout_g = ws.n / groups;
  Tensor<double> y(Shape{xs.n, ws.n, oh, ow});
  for (int n = 0; n < xs.n; ++n)
    for (int oc = 0; oc < ws.n; ++oc)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double acc = bias ? (*bias)[oc] : 0.0;
          const int g = oc / cout_g;
          for (int ic = 0; ic < cin_g; ++ic)
            for (int ki = 0; ki < ws.h; ++ki)
              for (int kj = 0; kj < ws.w; ++kj) {
                int yy = i * stride - pad + ki, xx = j * stride - pad + kj;
                if (mode == PadMode::kZeros) {
                  if (yy < 0 || yy >= xs.h || xx < 0 || xx >= xs.w) continue;
                } else {
                  yy = std::clamp(yy, 0, xs.h - 1);
                  xx = std::clamp(xx, 0, xs.w - 1);
                }
                acc += w.at(oc, ic, ki, kj) * x.at(n, g * cin_g + ic, yy, xx);
              }
          y.at(n, oc, i, j) = acc;
        }
  return y;
}

inline double max_abs(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

template <typename T>
Tensor<T> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return Tensor<T>::uniform(s, rng, lo, hi);
}

struct GradCheck {
  double max_rel_error = 0.0;
  int coordinates = 0;
};

// Central differences in double precision against the tape's gradients.
// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline GradCheck gradcheck(const std::vector<Var<double>>& leaves,
                           const std::function<Var<double>()>& loss_fn, std::uint64_t seed,
                           int coords_per_leaf = 20, double h = 1e-5, double floor = 1e-4) {
  for (const auto& v : leaves) const_cast<Var<double>&>(v).zero_grad();
  pidnet::Tape<double> tape;
  Var<double> loss;
  {
    pidnet::TapeScope<double> scope(&tape);
    loss = loss_fn();
  }
  tape.backward(loss);

  auto eval = [&] {
    pidnet::TapeScope<double> off(nullptr);
    return loss_fn().value().item();
  };
  GradCheck r;
  Rng rng(seed);
  for (const auto& leaf : leaves) {
    Var<double> v = leaf;
    const int n = static_cast<int>(v.value().size());
    for (int k = 0; k < coords_per_leaf; ++k) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      const double analytic = v.has_grad() ? v.grad()[i] : 0.0;
      const double saved = v.value()[i];
      v.value()[i] = saved + h;
      const double up = eval();
      v.value()[i] = saved - h;
      const double down = eval();
      v.value()[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
      r.max_rel_error = std::max(r.max_rel_error, std::fabs(analytic - numeric) / denom);
      ++r.coordinates;
    }
  }
  return r;
}

// Weighted sum with a fixed random projection, so every output element
// contributes to the checked scalar.
inline Var<double> project(const Var<double>& y, std::uint64_t seed) {
  const Var<double> r(random_tensor<double>(y.shape(), seed));
  return pidnet::sum_all(pidnet::mul(y, r));
}

}  // namespace testing
