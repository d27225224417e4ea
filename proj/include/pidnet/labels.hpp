#pragma once

#include <cstdint>
#include <vector>

#include "pidnet/tensor.hpp"

namespace pidnet {

inline constexpr std::uint8_t kIgnoreLabel = 255;

// Integer class ids per pixel, N x H x W row-major.
struct LabelMap {
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(int n_, int h_, int w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t index(int b, int y, int x) const {
    return (static_cast<std::size_t>(b) * h + y) * w + x;
  }
  std::uint8_t& at(int b, int y, int x) { return data[index(b, y, x)]; }
  std::uint8_t at(int b, int y, int x) const { return data[index(b, y, x)]; }
  bool operator==(const LabelMap&) const = default;
};

// Binary mask with the same layout; values are 0 or 1.
using BoundaryMap = LabelMap;

}  // namespace pidnet
