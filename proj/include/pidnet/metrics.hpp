#pragma once

#include <cstdint>
#include <vector>

#include "pidnet/labels.hpp"

namespace pidnet {

// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  void accumulate(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore = kIgnoreLabel);
  void merge(const ConfusionMatrix& other);

  int classes() const { return k_; }
  std::int64_t at(int gt, int pred) const { return counts_[gt * k_ + pred]; }
  std::int64_t total() const;

  // TP / (TP + FP + FN) per class; NaN for classes absent from both maps.
  std::vector<double> iou() const;
  // Mean IoU over classes present in gt or prediction. Throws ValueError if
  // no pixel was counted.
  double miou() const;
  double pixel_accuracy() const;

 private:
  int k_;
  std::vector<std::int64_t> counts_;
};

// Boundary F1 between the class-transition maps of pred and gt, matching a
// boundary pixel when the other map has one within Chebyshev distance
// `radius`. Returns 1 when neither map has a boundary, 0 when only one does.
double boundary_f_score(const LabelMap& pred, const LabelMap& gt, int radius,
                        std::uint8_t ignore = kIgnoreLabel);

// Per-pixel argmax over channels of an N x K x H x W tensor.
template <typename T>
LabelMap argmax_channels(const Tensor<T>& logits);

}  // namespace pidnet
