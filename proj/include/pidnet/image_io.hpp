#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidnet/labels.hpp"
#include "pidnet/tensor.hpp"

namespace pidnet {

// Binary PPM (P6, maxval 255). Images are 1 x 3 x H x W tensors in [0, 1];
// values are clamped and rounded on write.
void write_ppm(const std::string& path, const Tensor<float>& image);
Tensor<float> read_ppm(const std::string& path);

// Binary PGM (P5, maxval 255) holding one label map (n == 1).
void write_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_pgm(const std::string& path);
void write_pgm(const std::string& path, int h, int w, const std::vector<std::uint8_t>& pixels);

// Min-max normalizes one plane to 0..255 (a constant plane maps to 0).
std::vector<std::uint8_t> normalize_plane(const float* values, std::size_t count);

}  // namespace pidnet
