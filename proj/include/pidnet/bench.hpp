#pragma once

#include <optional>
#include <vector>

#include "pidnet/network.hpp"

namespace pidnet {

struct LatencyStats {
  double median_ms = 0.0;
  double p5_ms = 0.0;
  double p95_ms = 0.0;
  double fps = 0.0;  // 1 / median
  int runs = 0;
};

// Nearest-rank percentiles of a list of wall-clock samples (milliseconds).
LatencyStats summarize_latency(std::vector<double> samples_ms);

struct BenchOptions {
  int height = 64;
  int width = 64;
  int warmup = 3;
  int runs = 20;
  bool fuse_bn = false;
  std::uint64_t seed = 0;  // benchmark input
};

struct BenchResult {
  LatencyStats stats;
  std::optional<double> fused_max_abs_diff;  // set when fuse_bn was requested
  double fused_tolerance = 0.0;
};

// Single-image eval forwards. With fuse_bn the model is fused first and its
// output on the benchmark input is checked against the unfused output:
// DivergenceError when the max abs difference exceeds 1e-5 * max(1, max|out|).
BenchResult bench(PidNet<float>& model, const BenchOptions& opt);

struct PpmLatency {
  Shape pappm_out, dappm_out;
  LatencyStats pappm, dappm;
};

// Eval-mode PAPPM and DAPPM with the same channel settings, timed on the
// same random input with interleaved runs.
PpmLatency compare_ppm_latency(int in_channels, int branch, int out, int h, int w, int warmup,
                               int runs, std::uint64_t seed = 0);

}  // namespace pidnet
