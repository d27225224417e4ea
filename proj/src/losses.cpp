#include "pidnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pidnet {
namespace {

void check_aligned(const char* op, const Shape& s, const LabelMap& labels) {
  if (s.n != labels.n || s.h != labels.h || s.w != labels.w) {
    throw ShapeError(std::string(op) + ": logits " + s.str() + " do not match labels " +
                     std::to_string(labels.n) + "x" + std::to_string(labels.h) + "x" +
                     std::to_string(labels.w));
  }
}

void check_labels(const char* op, const LabelMap& labels, int classes, std::uint8_t ignore) {
  for (std::uint8_t v : labels.data) {
    if (v != ignore && v >= classes) {
      throw ValueError(std::string(op) + ": label " + std::to_string(v) + " out of range for " +
                       std::to_string(classes) + " classes");
    }
  }
}

// Per-pixel log-probability of the labelled class (0 for ignored pixels).
template <typename T>
std::vector<double> true_class_logprob(const Tensor<T>& logits, const LabelMap& labels,
                                       std::uint8_t ignore) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  std::vector<double> out(labels.size(), 0.0);
  for (int n = 0; n < s.n; ++n) {
    const T* base = logits.ptr() + static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t li = n * plane + p;
      if (labels.data[li] == ignore) continue;
      double m = base[p];
      for (int c = 1; c < s.c; ++c) m = std::max(m, static_cast<double>(base[c * plane + p]));
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) sum += std::exp(base[c * plane + p] - m);
      out[li] = base[labels.data[li] * plane + p] - m - std::log(sum);
    }
  }
  return out;
}

double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double sigmoid_d(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

void LossWeights::validate() const {
  for (double l : {lambda0, lambda1, lambda2, lambda3}) {
    if (!(l >= 0)) throw ValueError("loss weights: every lambda must be >= 0");
  }
  if (!(boundary_threshold > 0 && boundary_threshold < 1)) {
    throw ValueError("loss weights: boundary threshold must lie in (0, 1)");
  }
}

template <typename T>
Var<T> masked_cross_entropy(const Var<T>& logits, const LabelMap& labels,
                            const std::vector<std::uint8_t>& mask, double denom) {
  const Shape s = logits.shape();
  check_aligned("cross_entropy", s, labels);
  if (mask.size() != labels.size()) throw ShapeError("cross_entropy: mask size mismatch");
  if (!(denom > 0)) throw ValueError("cross_entropy: normalizer must be > 0");
  const auto logp = true_class_logprob(logits.value(), labels, kIgnoreLabel);
  double sum = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) sum -= logp[i];
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(sum / denom)), {&logits}, [&] {
    auto xn = logits.node();
    return [xn, labels, mask, denom, s](const Node<T>& o) {
      const double g = o.grad[0] / denom;
      T* gx = grad_buffer(*xn).ptr();
      const T* x = xn->value.ptr();
      const std::size_t plane = s.plane();
      for (int n = 0; n < s.n; ++n) {
        const std::size_t off = static_cast<std::size_t>(n) * s.c * plane;
        for (std::size_t p = 0; p < plane; ++p) {
          const std::size_t li = n * plane + p;
          if (!mask[li]) continue;
          double m = x[off + p];
          for (int c = 1; c < s.c; ++c) m = std::max(m, static_cast<double>(x[off + c * plane + p]));
          double z = 0.0;
          for (int c = 0; c < s.c; ++c) z += std::exp(x[off + c * plane + p] - m);
          for (int c = 0; c < s.c; ++c) {
            const double prob = std::exp(x[off + c * plane + p] - m) / z;
            gx[off + c * plane + p] +=
                static_cast<T>(g * (prob - (c == labels.data[li] ? 1.0 : 0.0)));
          }
        }
      }
    };
  });
}

template <typename T>
LossValue<T> cross_entropy(const Var<T>& logits, const LabelMap& labels, std::uint8_t ignore) {
  check_aligned("cross_entropy", logits.shape(), labels);
  check_labels("cross_entropy", labels, logits.shape().c, ignore);
  std::vector<std::uint8_t> mask(labels.size());
  std::size_t valid = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = labels.data[i] != ignore;
    valid += mask[i];
  }
  LabelMap clean = labels;
  for (auto& v : clean.data)
    if (v == ignore) v = kIgnoreLabel;
  if (valid == 0) {
    return {scale(masked_cross_entropy(logits, clean, mask, 1.0), T(0)), true};
  }
  return {masked_cross_entropy(logits, clean, mask, static_cast<double>(valid)), false};
}

template <typename T>
LossValue<T> ohem_cross_entropy(const Var<T>& logits, const LabelMap& labels,
                                const OhemOptions& opt, std::uint8_t ignore) {
  check_aligned("ohem_cross_entropy", logits.shape(), labels);
  check_labels("ohem_cross_entropy", labels, logits.shape().c, ignore);
  if (!(opt.min_kept_fraction >= 0 && opt.min_kept_fraction <= 1)) {
    throw ValueError("ohem_cross_entropy: min_kept_fraction must lie in [0, 1]");
  }
  LabelMap clean = labels;
  for (auto& v : clean.data)
    if (v == ignore) v = kIgnoreLabel;
  const auto logp = true_class_logprob(logits.value(), clean, kIgnoreLabel);

  std::vector<std::size_t> valid;
  std::size_t hard = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (clean.data[i] == kIgnoreLabel) continue;
    valid.push_back(i);
    if (std::exp(logp[i]) < opt.threshold) ++hard;
  }
  std::vector<std::uint8_t> mask(clean.size(), 0);
  if (valid.empty()) {
    return {scale(masked_cross_entropy(logits, clean, mask, 1.0), T(0)), true};
  }
  const auto min_kept = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(opt.min_kept_fraction * valid.size())));
  std::size_t kept = 0;
  if (hard >= min_kept) {
    for (std::size_t i : valid) {
      if (std::exp(logp[i]) < opt.threshold) {
        mask[i] = 1;
        ++kept;
      }
    }
  } else {
    // Highest loss first; stable on pixel index for ties.
    std::stable_sort(valid.begin(), valid.end(),
                     [&](std::size_t a, std::size_t b) { return logp[a] < logp[b]; });
    kept = std::min(min_kept, valid.size());
    for (std::size_t k = 0; k < kept; ++k) mask[valid[k]] = 1;
  }
  return {masked_cross_entropy(logits, clean, mask, static_cast<double>(kept)), false};
}

double positive_weight(const BoundaryMap& gt) {
  std::size_t pos = 0;
  for (auto v : gt.data) pos += v != 0;
  if (pos == 0) return 1.0;
  const double ratio = static_cast<double>(gt.size() - pos) / static_cast<double>(pos);
  return std::clamp(ratio, 1.0, 50.0);
}

template <typename T>
Var<T> weighted_bce(const Var<T>& logits, const BoundaryMap& gt) {
  const Shape s = logits.shape();
  if (s.c != 1) throw ShapeError("weighted_bce: boundary logits must have one channel");
  check_aligned("weighted_bce", s, gt);
  const double wpos = positive_weight(gt);
  const double count = static_cast<double>(gt.size());
  const T* x = logits.value().ptr();
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    sum -= gt.data[i] ? wpos * log_sigmoid(x[i]) : log_sigmoid(-static_cast<double>(x[i]));
  }
  return make_result<T>(Tensor<T>::scalar(static_cast<T>(sum / count)), {&logits}, [&] {
    auto xn = logits.node();
    return [xn, gt, wpos, count](const Node<T>& o) {
      const double g = o.grad[0] / count;
      T* gx = grad_buffer(*xn).ptr();
      const T* xv = xn->value.ptr();
      for (std::size_t i = 0; i < gt.size(); ++i) {
        const double sg = sigmoid_d(xv[i]);
        gx[i] += static_cast<T>(g * (gt.data[i] ? wpos * (sg - 1.0) : sg));
      }
    };
  });
}

template <typename T>
Var<T> bas_loss(const Var<T>& seg_logits, const LabelMap& labels, const Var<T>& boundary_logits,
                double t, std::uint8_t ignore) {
  const Shape s = seg_logits.shape();
  check_aligned("bas_loss", s, labels);
  const Shape b = boundary_logits.shape();
  if (b.c != 1 || b.n != s.n || b.h != s.h || b.w != s.w) {
    throw ShapeError("bas_loss: boundary logits " + b.str() + " not aligned with " + s.str());
  }
  check_labels("bas_loss", labels, s.c, ignore);
  LabelMap clean = labels;
  std::vector<std::uint8_t> mask(labels.size(), 0);
  std::size_t selected = 0;
  const T* bl = boundary_logits.value().ptr();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (clean.data[i] == ignore) {
      clean.data[i] = kIgnoreLabel;
      continue;
    }
    if (sigmoid_d(bl[i]) > t) {
      mask[i] = 1;
      ++selected;
    }
  }
  return masked_cross_entropy(seg_logits, clean, mask,
                              std::max<double>(1.0, static_cast<double>(selected)));
}

template <typename T>
LossBreakdown<T> composite_loss(const Var<T>& l0, const Var<T>& l1, const Var<T>& l2,
                                const Var<T>& l3, const LossWeights& w) {
  w.validate();
  LossBreakdown<T> b{l0, l1, l2, l3, {}};
  // Zero-weight terms stay out of the graph so their heads receive no
  // gradient at all.
  Var<T> total(Tensor<T>::scalar(T(0)));
  const std::pair<const Var<T>*, double> terms[] = {
      {&l0, w.lambda0}, {&l1, w.lambda1}, {&l2, w.lambda2}, {&l3, w.lambda3}};
  for (const auto& [term, lambda] : terms) {
    if (lambda == 0) continue;
    if (!term->defined()) throw ValueError("composite_loss: a weighted term is missing");
    total = add(total, scale(*term, static_cast<T>(lambda)));
  }
  b.total = total;
  return b;
}

BoundaryMap dilate(const BoundaryMap& mask, int radius) {
  if (radius < 0) throw ValueError("dilate: radius must be >= 0");
  if (radius == 0) return mask;
  // Separable max filter: rows then columns.
  BoundaryMap rows(mask.n, mask.h, mask.w, 0);
  for (int b = 0; b < mask.n; ++b)
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x) {
        if (!mask.at(b, y, x)) continue;
        for (int dx = std::max(0, x - radius); dx <= std::min(mask.w - 1, x + radius); ++dx)
          rows.at(b, y, dx) = 1;
      }
  BoundaryMap out(mask.n, mask.h, mask.w, 0);
  for (int b = 0; b < mask.n; ++b)
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x) {
        if (!rows.at(b, y, x)) continue;
        for (int dy = std::max(0, y - radius); dy <= std::min(mask.h - 1, y + radius); ++dy)
          out.at(b, dy, x) = 1;
      }
  return out;
}

BoundaryMap extract_boundary_gt(const LabelMap& labels, int radius, std::uint8_t ignore) {
  if (radius < 0) throw ValueError("extract_boundary_gt: radius must be >= 0");
  BoundaryMap edge(labels.n, labels.h, labels.w, 0);
  const int dy[] = {-1, 1, 0, 0};
  const int dx[] = {0, 0, -1, 1};
  for (int b = 0; b < labels.n; ++b)
    for (int y = 0; y < labels.h; ++y)
      for (int x = 0; x < labels.w; ++x) {
        const std::uint8_t v = labels.at(b, y, x);
        if (v == ignore) continue;
        for (int k = 0; k < 4; ++k) {
          const int ny = y + dy[k], nx = x + dx[k];
          if (ny < 0 || ny >= labels.h || nx < 0 || nx >= labels.w) continue;
          const std::uint8_t u = labels.at(b, ny, nx);
          if (u != ignore && u != v) {
            edge.at(b, y, x) = 1;
            break;
          }
        }
      }
  return dilate(edge, radius);
}

BoundaryMap downsample_max(const BoundaryMap& mask, int factor) {
  if (factor < 1) throw ValueError("downsample_max: factor must be >= 1");
  const int oh = (mask.h + factor - 1) / factor;
  const int ow = (mask.w + factor - 1) / factor;
  BoundaryMap out(mask.n, oh, ow, 0);
  for (int b = 0; b < mask.n; ++b)
    for (int y = 0; y < mask.h; ++y)
      for (int x = 0; x < mask.w; ++x)
        if (mask.at(b, y, x)) out.at(b, y / factor, x / factor) = 1;
  return out;
}

#define PIDNET_INSTANTIATE(T)                                                             \
  template Var<T> masked_cross_entropy(const Var<T>&, const LabelMap&,                    \
                                       const std::vector<std::uint8_t>&, double);         \
  template LossValue<T> cross_entropy(const Var<T>&, const LabelMap&, std::uint8_t);      \
  template LossValue<T> ohem_cross_entropy(const Var<T>&, const LabelMap&,                \
                                           const OhemOptions&, std::uint8_t);             \
  template Var<T> weighted_bce(const Var<T>&, const BoundaryMap&);                        \
  template Var<T> bas_loss(const Var<T>&, const LabelMap&, const Var<T>&, double,         \
                           std::uint8_t);                                                 \
  template LossBreakdown<T> composite_loss(const Var<T>&, const Var<T>&, const Var<T>&,   \
                                           const Var<T>&, const LossWeights&);

PIDNET_INSTANTIATE(float)
PIDNET_INSTANTIATE(double)

#undef PIDNET_INSTANTIATE

}  // namespace pidnet
