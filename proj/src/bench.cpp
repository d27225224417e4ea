#include "pidnet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace pidnet {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

double nearest_rank(const std::vector<double>& sorted, double q) {
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(q * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

}  // namespace

LatencyStats summarize_latency(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ValueError("summarize_latency: no samples");
  std::sort(samples_ms.begin(), samples_ms.end());
  LatencyStats s;
  s.runs = static_cast<int>(samples_ms.size());
  const std::size_t n = samples_ms.size();
  s.median_ms = n % 2 ? samples_ms[n / 2] : 0.5 * (samples_ms[n / 2 - 1] + samples_ms[n / 2]);
  s.p5_ms = nearest_rank(samples_ms, 0.05);
  s.p95_ms = nearest_rank(samples_ms, 0.95);
  s.fps = s.median_ms > 0 ? 1000.0 / s.median_ms : 0.0;
  return s;
}

BenchResult bench(PidNet<float>& model, const BenchOptions& opt) {
  if (opt.runs < 1 || opt.warmup < 0) throw ValueError("bench: runs must be >= 1, warmup >= 0");
  Rng rng(opt.seed);
  const Var<float> x(Tensor<float>::uniform(Shape{1, 3, opt.height, opt.width}, rng, 0.0, 1.0));

  BenchResult r;
  if (opt.fuse_bn && !model.fused()) {
    const Tensor<float> ref = model.forward(x, RunMode::kEval).main.value();
    model.fuse_bn();
    const Tensor<float> got = model.forward(x, RunMode::kEval).main.value();
    double scale = 1.0;
    for (float v : ref.data()) scale = std::max(scale, static_cast<double>(std::fabs(v)));
    r.fused_tolerance = 1e-5 * scale;
    r.fused_max_abs_diff = static_cast<double>(max_abs_diff(ref, got));
    if (!(*r.fused_max_abs_diff <= r.fused_tolerance)) {
      throw DivergenceError("bench: fused output differs from unfused by " +
                            std::to_string(*r.fused_max_abs_diff) + " (tolerance " +
                            std::to_string(r.fused_tolerance) + ")");
    }
  }

  for (int i = 0; i < opt.warmup; ++i) model.forward(x, RunMode::kEval);
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(opt.runs));
  for (int i = 0; i < opt.runs; ++i) {
    const auto t0 = Clock::now();
    model.forward(x, RunMode::kEval);
    samples.push_back(elapsed_ms(t0));
  }
  r.stats = summarize_latency(std::move(samples));
  return r;
}

PpmLatency compare_ppm_latency(int in_channels, int branch, int out, int h, int w, int warmup,
                               int runs, std::uint64_t seed) {
  if (runs < 1) throw ValueError("compare_ppm_latency: runs must be >= 1");
  PyramidPooling<float> pa(ContextKind::kPappm, in_channels, branch, out, PadMode::kReplicate);
  PyramidPooling<float> da(ContextKind::kDappm, in_channels, branch, out, PadMode::kReplicate);
  auto prepare = [seed](PyramidPooling<float>& m, const std::string& name) {
    m.visit(name, [seed](const std::string& n, ConvBn<float>& u) {
      init_unit(n, u, seed);
      u.bn.mode = BnMode::kEval;
    });
  };
  prepare(pa, "pappm");
  prepare(da, "dappm");

  Rng rng(seed);
  const Var<float> x(Tensor<float>::randn(Shape{1, in_channels, h, w}, rng));
  TapeScope<float> no_tape(nullptr);
  PpmLatency r;
  r.pappm_out = pa.forward(x).shape();
  r.dappm_out = da.forward(x).shape();
  for (int i = 0; i < warmup; ++i) {
    pa.forward(x);
    da.forward(x);
  }
  std::vector<double> ta, td;
  for (int i = 0; i < runs; ++i) {
    // Alternate the order so drift in machine load hits both equally.
    for (int k = 0; k < 2; ++k) {
      const bool p_first = (i + k) % 2 == 0;
      auto& m = p_first ? pa : da;
      const auto t0 = Clock::now();
      m.forward(x);
      (p_first ? ta : td).push_back(elapsed_ms(t0));
    }
  }
  r.pappm = summarize_latency(std::move(ta));
  r.dappm = summarize_latency(std::move(td));
  return r;
}

}  // namespace pidnet
