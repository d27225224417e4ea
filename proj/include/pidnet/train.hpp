#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pidnet/data.hpp"
#include "pidnet/losses.hpp"
#include "pidnet/network.hpp"

namespace pidnet {

struct TrainConfig {
  int iters = 2000;
  double base_lr = 0.01;
  double power = 0.9;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int batch_size = 8;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  LossWeights weights;
  bool ohem = false;
  OhemOptions ohem_options;
  int log_every = 10;
  int eval_every = 0;                   // 0: evaluate only at the end
  std::optional<double> stop_below_lr;  // optional early stop once lr < value
};

struct MetricsRow {
  int iter = 0;
  double lr = 0.0;
  double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0, total = 0.0;
  std::optional<double> miou;
  std::optional<double> boundary_f;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& r);

struct EvalResult {
  double miou = 0.0;
  std::vector<double> class_iou;
  double boundary_f = 0.0;  // mean over images
  double pixel_accuracy = 0.0;
  int images = 0;
};

struct EvalOptions {
  int boundary_radius = 1;
};

// Batch size 1, eval-mode model. Main logits are upsampled to label
// resolution and arg-maxed.
EvalResult eval_loop(PidNet<float>& model, const std::vector<Sample>& samples,
                     const EvalOptions& opt = {});
EvalResult eval_loop(PidNet<float>& model, const SceneDataset& data,
                     const EvalOptions& opt = {});

struct TrainResult {
  std::vector<MetricsRow> rows;
  EvalResult final_eval;
  int iterations_run = 0;
};

// Called after every logged row; returning false stops training.
using TrainCallback = std::function<bool(const MetricsRow&)>;

// One SGD step per iteration on a seeded per-epoch permutation of `train`.
// Throws DivergenceError naming the first non-finite tensor.
TrainResult train_loop(PidNet<float>& model, const TrainConfig& cfg, const SceneDataset& train,
                       const SceneDataset* eval = nullptr, const TrainCallback& on_row = {});

struct StepLosses {
  LossBreakdown<float> losses;
  ForwardOutputs<float> outputs;
};

// Forward + losses of one batch. The outputs are the raw head maps at 1/8
// resolution; the losses upsample them internally.
// Must run inside an active tape for the result to be differentiable.
StepLosses compute_losses(PidNet<float>& model, const SampleBatch& batch, const TrainConfig& cfg);

// The desk-scale setup: a model config, a training recipe and disjoint
// synthetic train / validation scene ranges of one spec.
struct DeskSetup {
  ModelConfig model;
  TrainConfig train;
  SceneSpec scenes;
  int train_count = 400;
  int val_count = 50;
  std::uint64_t val_first = 1000000;
};

// Tiny preset, 3 classes, 64 x 64 scenes. Crop equals the scene extent.
DeskSetup desk_setup(std::uint64_t seed);

}  // namespace pidnet
