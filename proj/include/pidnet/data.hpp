#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pidnet/labels.hpp"
#include "pidnet/tensor.hpp"

namespace pidnet {

// Synthetic scenes: layered rectangles, disks and triangles over a noisy
// background. Class 0 is background, shapes carry classes 1..K-1.
struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int num_classes = 3;
  int min_shapes = 2;
  int max_shapes = 5;
  int min_size = 3;   // px, smallest shape extent
  int max_size = 0;   // px; 0 means half the shorter image side
  double noise = 0.06;
  double texture_jitter = 0.08;

  void validate() const;
};

struct Sample {
  Tensor<float> image;  // 1 x 3 x H x W in [0, 1]
  LabelMap labels;      // 1 x H x W
};

// Pure function of (spec, index).
Sample gen_scene(const SceneSpec& spec, std::uint64_t index);

struct AugmentConfig {
  double scale_min = 0.5;
  double scale_max = 2.0;
  double flip_prob = 0.5;
  int crop_h = 64;
  int crop_w = 64;
};

// Joint random scale (bilinear image, nearest labels), horizontal flip and
// crop. Regions outside the scaled image are zero in the image and ignore in
// the labels.
Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng);
Sample flip_horizontal(const Sample& s);

// N samples of equal size stacked into one batch.
struct SampleBatch {
  Tensor<float> images;
  LabelMap labels;
};
SampleBatch stack(const std::vector<Sample>& samples);

// base_lr * (1 - iter / max_iter)^power
double poly_lr(double base_lr, int iter, int max_iter, double power = 0.9);

// Fixed list of scenes [first, first + count) of one spec.
class SceneDataset {
 public:
  SceneDataset(SceneSpec spec, std::uint64_t first, int count);

  int size() const { return static_cast<int>(samples_.size()); }
  const Sample& operator[](int i) const { return samples_.at(static_cast<std::size_t>(i)); }
  const SceneSpec& spec() const { return spec_; }

 private:
  SceneSpec spec_;
  std::vector<Sample> samples_;
};

struct ManifestEntry {
  int index = 0;
  std::string image;
  std::string labels;
};

// One "index,image-path,label-path" line per sample; relative paths are
// resolved against the manifest's directory on read.
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);
// Loads every sample listed in a manifest.
std::vector<Sample> load_manifest_samples(const std::string& path);

}  // namespace pidnet
