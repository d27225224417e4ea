#include "pidnet/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pidnet/losses.hpp"

namespace pidnet {

ConfusionMatrix::ConfusionMatrix(int classes)
    : k_(classes), counts_(static_cast<std::size_t>(classes) * classes, 0) {
  if (classes < 1) throw ValueError("confusion matrix: need at least one class");
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt, std::uint8_t ignore) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("confusion matrix: prediction and ground truth differ in size");
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const std::uint8_t g = gt.data[i];
    if (g == ignore) continue;
    const std::uint8_t p = pred.data[i];
    if (g >= k_ || p >= k_) {
      throw ValueError("confusion matrix: label " + std::to_string(g >= k_ ? g : p) +
                       " out of range for " + std::to_string(k_) + " classes");
    }
    ++counts_[g * k_ + p];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.k_ != k_) throw ShapeError("confusion matrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::vector<double> ConfusionMatrix::iou() const {
  std::vector<double> out(k_, std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < k_; ++c) {
    std::int64_t tp = at(c, c), fp = 0, fn = 0;
    for (int o = 0; o < k_; ++o) {
      if (o == c) continue;
      fn += at(c, o);
      fp += at(o, c);
    }
    const std::int64_t denom = tp + fp + fn;
    if (denom > 0) out[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return out;
}

double ConfusionMatrix::miou() const {
  if (total() == 0) throw ValueError("mIoU undefined: no valid pixels were counted");
  double sum = 0.0;
  int present = 0;
  for (double v : iou()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++present;
  }
  return sum / present;
}

double ConfusionMatrix::pixel_accuracy() const {
  const std::int64_t t = total();
  if (t == 0) throw ValueError("pixel accuracy undefined: no valid pixels were counted");
  std::int64_t diag = 0;
  for (int c = 0; c < k_; ++c) diag += at(c, c);
  return static_cast<double>(diag) / static_cast<double>(t);
}

double boundary_f_score(const LabelMap& pred, const LabelMap& gt, int radius,
                        std::uint8_t ignore) {
  if (pred.n != gt.n || pred.h != gt.h || pred.w != gt.w) {
    throw ShapeError("boundary_f_score: prediction and ground truth differ in size");
  }
  // Ignore regions in gt are masked out of the prediction as well.
  LabelMap masked = pred;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt.data[i] == ignore) masked.data[i] = ignore;
  const BoundaryMap bp = extract_boundary_gt(masked, 0, ignore);
  const BoundaryMap bg = extract_boundary_gt(gt, 0, ignore);
  const BoundaryMap near_p = dilate(bp, radius);
  const BoundaryMap near_g = dilate(bg, radius);

  std::int64_t np = 0, ng = 0, matched_p = 0, matched_g = 0;
  for (std::size_t i = 0; i < bp.size(); ++i) {
    if (bp.data[i]) {
      ++np;
      matched_p += near_g.data[i];
    }
    if (bg.data[i]) {
      ++ng;
      matched_g += near_p.data[i];
    }
  }
  if (ng == 0) return np == 0 ? 1.0 : 0.0;
  if (np == 0) return 0.0;
  const double precision = static_cast<double>(matched_p) / static_cast<double>(np);
  const double recall = static_cast<double>(matched_g) / static_cast<double>(ng);
  if (precision + recall == 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

template <typename T>
LabelMap argmax_channels(const Tensor<T>& logits) {
  const Shape s = logits.shape();
  if (s.c > 255) throw ShapeError("argmax_channels: at most 255 classes");
  LabelMap out(s.n, s.h, s.w);
  const std::size_t plane = s.plane();
  for (int n = 0; n < s.n; ++n) {
    const T* base = logits.ptr() + static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (base[c * plane + p] > base[best * plane + p]) best = c;
      out.data[n * plane + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

template LabelMap argmax_channels(const Tensor<float>&);
template LabelMap argmax_channels(const Tensor<double>&);

}  // namespace pidnet
