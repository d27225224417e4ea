#pragma once

#include <vector>

#include "pidnet/autograd.hpp"
#include "pidnet/tensor.hpp"

namespace pidnet {

enum class PadMode { kZeros, kReplicate };

// Weights of a 2-D convolution. `weight` has dims
// (out_channels, in_channels / groups, kernel_h, kernel_w); `bias`, when
// present, is (1, out_channels, 1, 1).
template <typename T>
struct ConvParams {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int padding = 0;
  int groups = 1;
  PadMode pad_mode = PadMode::kZeros;
  Var<T> weight;
  Var<T> bias;

  bool has_bias() const { return bias.defined(); }
  void validate() const;

  // Zero-initialized trainable parameters with the given geometry.
  static ConvParams make(int in_channels, int out_channels, int kernel,
                         int stride = 1, int padding = 0, bool bias = false,
                         int groups = 1);
};

enum class BnMode { kTrain, kEval };

template <typename T>
struct BnParams {
  int channels = 0;
  Var<T> gamma;  // (1, C, 1, 1)
  Var<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double eps = 1e-5;
  double momentum = 0.1;
  BnMode mode = BnMode::kTrain;

  void validate() const;

  // gamma = 1, beta = 0, running mean 0 / var 1.
  static BnParams make(int channels);
};

// Output extent of a strided, padded window along one axis.
inline int conv_out_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const ConvParams<T>& p);

// Train mode normalizes with batch statistics and updates the running
// estimates (unbiased variance); eval mode uses the running estimates.
template <typename T>
Var<T> batchnorm2d(const Var<T>& x, BnParams<T>& p);

// Per-channel mean and biased variance over (N, H, W).
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;
};
template <typename T>
BatchStats batch_statistics(const Tensor<T>& x);

template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> sigmoid(const Var<T>& x);
// Normalize across channels independently at every (n, h, w) site.
template <typename T>
Var<T> softmax_channels(const Var<T>& x);
template <typename T>
Var<T> log_softmax_channels(const Var<T>& x);

// Average pooling with symmetric padding (kernel - 1) / 2; padded cells are
// excluded from the divisor.
template <typename T>
Var<T> avgpool2d(const Var<T>& x, int kernel, int stride);
template <typename T>
Var<T> global_avgpool(const Var<T>& x);
// Half-pixel bilinear interpolation (align_corners = false).
template <typename T>
Var<T> bilinear_resize(const Var<T>& x, int out_h, int out_w);

// Elementwise ops. add/sub/mul accept operands whose shapes match except for
// a channel extent of 1 on one side, which is broadcast across channels.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T c);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T c);
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);
// concat(parts[0] + shared, parts[1] + shared, ...); every part has the
// shape of `shared`.
template <typename T>
Var<T> concat_add(const std::vector<Var<T>>& parts, const Var<T>& shared);
// Sum over channels: (N, C, H, W) -> (N, 1, H, W).
template <typename T>
Var<T> channel_sum(const Var<T>& x);
template <typename T>
Var<T> sum_all(const Var<T>& x);
template <typename T>
Var<T> mean_all(const Var<T>& x);

// Returns conv' with conv'(x) == bn(conv(x)) for an eval-mode bn.
template <typename T>
ConvParams<T> fuse_bn_into_conv(const ConvParams<T>& conv,
                                const BnParams<T>& bn);

struct SgdOptions {
  double lr = 0.01;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// d = g + wd * w; with momentum v <- m * v + d and the step uses v.
// w <- w - lr * step. `velocity` may be null when momentum == 0.
template <typename T>
void sgd_update(Tensor<T>& weight, const Tensor<T>& grad, Tensor<T>* velocity,
                const SgdOptions& opt);

}  // namespace pidnet
