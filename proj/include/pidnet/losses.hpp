#pragma once

#include "pidnet/labels.hpp"
#include "pidnet/ops.hpp"

namespace pidnet {

struct LossWeights {
  double lambda0 = 0.4;  // aux CE
  double lambda1 = 20.0;  // weighted BCE on the boundary head
  double lambda2 = 1.0;  // main CE (or OHEM)
  double lambda3 = 1.0;  // boundary-aware CE
  double boundary_threshold = 0.8;

  void validate() const;
};

template <typename T>
struct LossBreakdown {
  Var<T> l0, l1, l2, l3, total;
};

// Scalar result; `all_ignored` is set when no pixel contributed and the loss
// was defined as 0.
template <typename T>
struct LossValue {
  Var<T> loss;
  bool all_ignored = false;
};

// Mean over non-ignored pixels of -log softmax(logits)[label].
template <typename T>
LossValue<T> cross_entropy(const Var<T>& logits, const LabelMap& labels,
                           std::uint8_t ignore = kIgnoreLabel);

struct OhemOptions {
  double threshold = 0.9;           // true-class probability below this is "hard"
  double min_kept_fraction = 1.0 / 16.0;
};

// CE averaged over the hard pixels, or over the min_kept highest-loss pixels
// when fewer are hard (ties broken by pixel index).
template <typename T>
LossValue<T> ohem_cross_entropy(const Var<T>& logits, const LabelMap& labels,
                                const OhemOptions& opt = {},
                                std::uint8_t ignore = kIgnoreLabel);

// Positive weight clamp(N_neg / N_pos, 1, 50) computed over the batch; mean
// reduction over all pixels.
template <typename T>
Var<T> weighted_bce(const Var<T>& logits, const BoundaryMap& gt);
double positive_weight(const BoundaryMap& gt);

// CE restricted to pixels whose sigmoid(boundary logit) exceeds t, divided by
// max(1, selected count). The boundary logits only select pixels; no
// gradient flows into them.
template <typename T>
Var<T> bas_loss(const Var<T>& seg_logits, const LabelMap& labels,
                const Var<T>& boundary_logits, double t,
                std::uint8_t ignore = kIgnoreLabel);

template <typename T>
LossBreakdown<T> composite_loss(const Var<T>& l0, const Var<T>& l1, const Var<T>& l2,
                                const Var<T>& l3, const LossWeights& w);

// Per-pixel masked CE sum divided by `denom`; the primitive behind the CE
// variants above. mask[i] != 0 selects pixel i.
template <typename T>
Var<T> masked_cross_entropy(const Var<T>& logits, const LabelMap& labels,
                            const std::vector<std::uint8_t>& mask, double denom);

// Pixel marked iff one of its 4-neighbours carries a different non-ignore
// label (ignore pixels are never marked), then dilated with Chebyshev radius r.
BoundaryMap extract_boundary_gt(const LabelMap& labels, int radius,
                                std::uint8_t ignore = kIgnoreLabel);
BoundaryMap dilate(const BoundaryMap& mask, int radius);
// Max-pool downsampling by an integer factor.
BoundaryMap downsample_max(const BoundaryMap& mask, int factor);

}  // namespace pidnet
