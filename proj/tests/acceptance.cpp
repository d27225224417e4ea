// Acceptance checks, one line per criterion:
//   acceptance [--only N]
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "block_fixtures.hpp"
#include "pidnet/bench.hpp"
#include "pidnet/checkpoint.hpp"
#include "pidnet/commands.hpp"
#include "pidnet/pid_analysis.hpp"
#include "pidnet/train.hpp"
#include "support.hpp"

using namespace pidnet;
using testing::random_tensor;

namespace {

// Tolerances and budgets.
constexpr double kFreqTol = 1e-12;
constexpr double kOvershootReduction = 0.20;
constexpr double kFusionTol = 1e-5;
constexpr int kPagInstances = 100;
constexpr double kGradTol = 1e-4;
constexpr int kGradCoords = 20;
constexpr double kBnFoldTol = 1e-5;
constexpr double kParamsTarget = 7.6e6, kParamsRel = 0.10;
constexpr double kFlopsTarget = 47.6e9, kFlopsRel = 0.15;
constexpr int kPpmRuns = 100;
constexpr int kDeskIters = 2000;
constexpr double kDeskMiou = 0.80;
constexpr double kLossTol = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 6) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", digits, v);
  return b;
}

// ------------------------------------------------------------------ 1..3

Outcome locality() {
  std::ostringstream near, far, err;
  const int a = run_cli({"analyze", "locality", "--kernels", "3,3,3", "--strides", "1,1,1",
                         "--window", "1"},
                        near, err);
  const int b = run_cli({"analyze", "locality", "--kernels", "3,3,3", "--strides", "2,2,2",
                         "--window", "1"},
                        far, err);
  const pid::Rational rn = pid::locality_ratio(pid::receptive_field_expansion({3, 3, 3}, {1, 1, 1}), 1);
  const pid::Rational rf = pid::locality_ratio(pid::receptive_field_expansion({3, 3, 3}, {2, 2, 2}), 1);
  const bool ok = a == 0 && b == 0 && near.str() == "19/27 0.703704\n" &&
                  far.str() == "7/27 0.259259\n" && rn == pid::Rational{19, 27} &&
                  rf == pid::Rational{7, 27} && rn.value() > 0.70 && rf.value() < 0.26;
  std::string n = near.str(), f = far.str();
  n.pop_back();
  f.pop_back();
  return {ok, "stride 1: " + n + ", stride 2: " + f};
}

Outcome filter_character() {
  const pid::ControllerGains g{1.0, 0.8, 0.4};
  const auto grid = pid::omega_grid(0.01, M_PI, 512);
  const auto fr = pid::frequency_response(g, grid);
  bool mono = grid.size() == 512 && grid.front() > 0.01 && grid.back() == M_PI;
  for (std::size_t k = 1; k < grid.size(); ++k) {
    mono = mono && fr.i_mag[k] < fr.i_mag[k - 1] && fr.d_mag[k] > fr.d_mag[k - 1] &&
           fr.p_mag[k] == fr.p_mag[0];
  }
  const double ei = std::fabs(fr.i_mag.back() - 0.5 * g.ki);
  const double ed = std::fabs(fr.d_mag.back() - 2.0 * g.kd);
  return {mono && ei <= kFreqTol && ed <= kFreqTol,
          std::string("monotone ") + (mono ? "yes" : "no") + ", |I(pi)|-0.5ki " + fmt(ei, 3) +
              ", |D(pi)|-2kd " + fmt(ed, 3)};
}

Outcome overshoot() {
  const pid::PlantParams plant{1.0, 0.5, 1.0};
  const double pi = pid::simulate_step({1.0, 0.8, 0.0}, plant, 0.01, 30.0).overshoot;
  const double pid = pid::simulate_step({1.0, 0.8, 0.4}, plant, 0.01, 30.0).overshoot;
  const double reduction = pi > 0 ? (pi - pid) / pi : 0.0;
  return {pid < pi && reduction >= kOvershootReduction,
          "PI " + fmt(pi, 4) + ", PID " + fmt(pid, 4) + ", reduction " + fmt(100 * reduction, 3) +
              "%"};
}

// ------------------------------------------------------------------ 4

Outcome fusion_algebra() {
  using testing::make_constant;
  using testing::make_identity;
  using testing::randomize;
  double worst = 0.0;
  auto track = [&](const Tensor<float>& a, const Tensor<float>& b) {
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, double(std::fabs(a[k] - b[k])));
  };
  const Shape s{2, 8, 12, 12}, gs{2, 1, 12, 12};
  for (int trial = 0; trial < 10; ++trial) {
    const Var<float> p(random_tensor<float>(s, 10 * trial + 1)), i(random_tensor<float>(s, 10 * trial + 2));
    // gated_mix at sigma 0, 0.5, 1.
    const auto mid = scale(add(p, i), 0.5f).value();
    track(gated_mix(p, i, Var<float>(Tensor<float>(gs, 0.0f))).value(), p.value());
    track(gated_mix(p, i, Var<float>(Tensor<float>(gs, 0.5f))).value(), mid);
    track(gated_mix(p, i, Var<float>(Tensor<float>(gs, 1.0f))).value(), i.value());

    // Pag: orthogonal embeddings give sigma = 0.5.
    Pag<float> pag(8, 8, 8);
    randomize<float>(pag, 100 + trial, BnMode::kEval);
    make_identity(pag.projection());
    make_constant(pag.embed_p(), 0.0f);
    track(pag.forward(p, i).value(), mid);

    // Bag: sigma -> 1 keeps p, sigma -> 0 keeps i, sigma = 0.5 averages.
    Bag<float> bag(8, 6, PadMode::kReplicate);
    randomize<float>(bag, 200 + trial, BnMode::kEval);
    auto f = [&](const Var<float>& v) { return relu(bag.f_out().forward(v)).value(); };
    track(bag.forward(p, i, Var<float>(Tensor<float>(s, 100.0f))).value(), f(p));
    track(bag.forward(p, i, Var<float>(Tensor<float>(s, -100.0f))).value(), f(i));
    track(bag.forward(p, i, Var<float>(Tensor<float>(s, 0.0f))).value(), f(scale(add(p, i), 0.5f)));

    // Light-Bag: sigma = 0 and sigma = 1.
    LightBag<float> lb(8, 6);
    randomize<float>(lb, 300 + trial, BnMode::kEval);
    track(lb.forward(p, i, Var<float>(Tensor<float>(s, -100.0f))).value(),
          add(lb.f_p().forward(add(i, p)), lb.f_i().forward(i)).value());
    track(lb.forward(p, i, Var<float>(Tensor<float>(s, 100.0f))).value(),
          add(lb.f_p().forward(p), lb.f_i().forward(add(p, i))).value());
  }

  // Convex bounds of Pag on random instances.
  int violations = 0;
  for (int trial = 0; trial < kPagInstances; ++trial) {
    Pag<float> pag(6, 10, 8);
    randomize<float>(pag, 1000 + trial, BnMode::kEval);
    const Var<float> p(random_tensor<float>(Shape{1, 6, 8, 8}, 2000 + trial, -3, 3));
    const Var<float> i(random_tensor<float>(Shape{1, 10, 4, 4}, 3000 + trial, -3, 3));
    ProbeMap<float> probes;
    const auto out = pag.forward(p, i, &probes).value();
    const auto& iu = probes.at("pag/i-in");
    for (std::size_t k = 0; k < out.size(); ++k) {
      const float lo = std::min(p.value()[k], iu[k]), hi = std::max(p.value()[k], iu[k]);
      const float slack = 1e-6f * std::max(1.0f, std::fabs(hi));
      if (out[k] < lo - slack || out[k] > hi + slack) ++violations;
    }
  }
  return {worst <= kFusionTol && violations == 0,
          "max identity error " + fmt(worst, 3) + ", convex-bound violations " +
              std::to_string(violations) + "/" + std::to_string(kPagInstances) + " instances"};
}

// ------------------------------------------------------------------ 5

Outcome gradients() {
  using testing::gradcheck;
  using testing::leaves_of;
  using testing::project;
  using testing::randomize;
  auto d = [](Shape s, std::uint64_t seed) {
    return Var<double>::parameter(random_tensor<double>(s, seed));
  };
  const Shape s{2, 4, 6, 6};
  struct Row {
    std::string name;
    testing::GradCheck r;
  };
  std::vector<Row> rows;
  auto add_row = [&](const std::string& n, testing::GradCheck r) { rows.push_back({n, r}); };

  for (BnMode mode : {BnMode::kTrain, BnMode::kEval}) {
    const std::string m = mode == BnMode::kTrain ? "/train" : "/eval";
    for (BlockKind kind : {BlockKind::kBasic, BlockKind::kBottleneck}) {
      ResidualBlock<double> blk(kind, 4, 8, 2, PadMode::kReplicate);
      randomize<double>(blk, 1, mode);
      auto x = d(s, 2);
      auto leaves = leaves_of<double>(blk);
      leaves.push_back(x);
      add_row(std::string(kind == BlockKind::kBasic ? "basic" : "bottleneck") + m,
              gradcheck(leaves, [&] { return project(blk.forward(x), 3); }, 4, kGradCoords));
    }
    {
      Pag<double> pag(4, 6, 8);
      randomize<double>(pag, 5, mode);
      auto p = d(s, 6), i = d(Shape{2, 6, 3, 3}, 7);
      auto leaves = leaves_of<double>(pag);
      leaves.push_back(p);
      leaves.push_back(i);
      add_row("pag" + m, gradcheck(leaves, [&] { return project(pag.forward(p, i), 8); }, 9, kGradCoords));
    }
    {
      AddLateral<double> lat(4, 6);
      randomize<double>(lat, 10, mode);
      auto p = d(s, 11), i = d(Shape{2, 6, 3, 3}, 12);
      auto leaves = leaves_of<double>(lat);
      leaves.push_back(p);
      leaves.push_back(i);
      add_row("add" + m, gradcheck(leaves, [&] { return project(lat.forward(p, i), 13); }, 14, kGradCoords));
    }
    {
      Bag<double> bag(4, 5, PadMode::kReplicate);
      randomize<double>(bag, 15, mode);
      auto p = d(s, 16), i = d(s, 17), g = d(s, 18);
      auto leaves = leaves_of<double>(bag);
      for (auto& v : {p, i, g}) leaves.push_back(v);
      add_row("bag" + m, gradcheck(leaves, [&] { return project(bag.forward(p, i, g), 19); }, 20, kGradCoords));
    }
    {
      LightBag<double> lb(4, 5);
      randomize<double>(lb, 21, mode);
      auto p = d(s, 22), i = d(s, 23), g = d(s, 24);
      auto leaves = leaves_of<double>(lb);
      for (auto& v : {p, i, g}) leaves.push_back(v);
      add_row("light_bag" + m, gradcheck(leaves, [&] { return project(lb.forward(p, i, g), 25); }, 26, kGradCoords));
    }
    for (ContextKind kind : {ContextKind::kPappm, ContextKind::kDappm}) {
      PyramidPooling<double> ppm(kind, 4, 4, 5, PadMode::kReplicate);
      randomize<double>(ppm, 27, mode);
      auto x = d(Shape{2, 4, 8, 8}, 28);
      auto leaves = leaves_of<double>(ppm);
      leaves.push_back(x);
      add_row(to_string(kind) + m, gradcheck(leaves, [&] { return project(ppm.forward(x), 29); }, 30, kGradCoords));
    }
    {
      SegHead<double> head(4, 6, 3, PadMode::kReplicate);
      SegHead<double> bnd = SegHead<double>::boundary(4, 6, PadMode::kReplicate);
      randomize<double>(head, 31, mode);
      randomize<double>(bnd, 32, mode);
      auto x = d(s, 33);
      auto lh = leaves_of<double>(head), lbd = leaves_of<double>(bnd);
      lh.push_back(x);
      lbd.push_back(x);
      add_row("seg_head" + m, gradcheck(lh, [&] { return project(head.forward(x), 34); }, 35, kGradCoords));
      add_row("boundary_head" + m, gradcheck(lbd, [&] { return project(bnd.forward(x), 36); }, 37, kGradCoords));
    }
  }

  // Losses.
  Rng rng(40);
  LabelMap y(2, 5, 5);
  for (auto& v : y.data) v = rng.uniform() < 0.1 ? kIgnoreLabel : std::uint8_t(rng.uniform_int(0, 2));
  const auto gt = extract_boundary_gt(y, 1);
  auto z = Var<double>::parameter(random_tensor<double>(Shape{2, 3, 5, 5}, 41, -2, 2));
  auto b = Var<double>::parameter(random_tensor<double>(Shape{2, 1, 5, 5}, 42, -2, 3));
  OhemOptions ohem;
  ohem.threshold = 0.5;
  add_row("ce", gradcheck({z}, [&] { return cross_entropy(z, y).loss; }, 43, kGradCoords));
  add_row("ohem", gradcheck({z}, [&] { return ohem_cross_entropy(z, y, ohem).loss; }, 44, kGradCoords));
  add_row("weighted_bce", gradcheck({b}, [&] { return weighted_bce(b, gt); }, 45, kGradCoords));
  add_row("bas", gradcheck({z}, [&] { return bas_loss(z, y, b, 0.8); }, 46, kGradCoords));
  add_row("composite", gradcheck({z, b}, [&] {
            return composite_loss(cross_entropy(z, y).loss, weighted_bce(b, gt),
                                  ohem_cross_entropy(z, y).loss, bas_loss(z, y, b, 0.8),
                                  LossWeights{})
                .total;
          }, 47, kGradCoords));

  double worst = 0;
  std::string worst_name;
  bool ok = true;
  for (const auto& r : rows) {
    ok = ok && r.r.max_rel_error <= kGradTol && r.r.coordinates >= kGradCoords;
    if (r.r.max_rel_error >= worst) {
      worst = r.r.max_rel_error;
      worst_name = r.name;
    }
  }
  return {ok, std::to_string(rows.size()) + " checks, worst rel error " + fmt(worst, 3) + " (" +
                  worst_name + ")"};
}

// ------------------------------------------------------------------ 6

Outcome bn_folding() {
  PidNet<float> model(ModelConfig::preset("tiny"));
  for (int k = 0; k < 3; ++k) {
    model.forward(Var<float>(random_tensor<float>(Shape{2, 3, 64, 64}, 50 + k, 0, 1)), RunMode::kTrain);
  }
  int pairs = 0;
  double worst = 0;
  std::uint64_t seed = 60;
  model.visit([&](const std::string&, ConvBn<float>& unit) {
    if (!unit.has_bn) return;
    ConvBn<float> ref = unit;
    ref.bn.mode = BnMode::kEval;
    ConvBn<float> fused = ref;
    fused.fuse();
    const Var<float> x(random_tensor<float>(Shape{1, unit.conv.in_channels, 16, 16}, seed++));
    const auto a = ref.forward(x).value(), b = fused.forward(x).value();
    for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, double(std::fabs(a[k] - b[k])));
    ++pairs;
  });

  // Whole network in double precision as a cross-check of the wiring.
  ModelConfig c = ModelConfig::preset("tiny");
  PidNet<double> net(c);
  for (int k = 0; k < 3; ++k) {
    net.forward(Var<double>(random_tensor<double>(Shape{2, 3, 64, 64}, 70 + k, 0, 1)), RunMode::kTrain);
  }
  const Var<double> x(random_tensor<double>(Shape{1, 3, 64, 64}, 80, 0, 1));
  const auto before = net.forward(x, RunMode::kEval).main.value();
  net.fuse_bn();
  const double whole = testing::max_abs(before, net.forward(x, RunMode::kEval).main.value());
  return {pairs > 0 && worst <= kBnFoldTol && whole <= kBnFoldTol,
          std::to_string(pairs) + " conv+BN pairs, worst float diff " + fmt(worst, 3) +
              ", whole network (double) " + fmt(whole, 3)};
}

// ------------------------------------------------------------------ 7

Outcome accounting() {
  PidNet<float> s(ModelConfig::preset("s")), m(ModelConfig::preset("m")), l(ModelConfig::preset("l"));
  const double ps = s.count_params(), pm = m.count_params(), pl = l.count_params();
  const double fs = s.count_flops(1024, 2048), fm = m.count_flops(1024, 2048),
               fl = l.count_flops(1024, 2048);
  const double macs = s.count_macs(1024, 2048);
  const bool params_ok = std::fabs(ps - kParamsTarget) <= kParamsRel * kParamsTarget;
  const bool flops_ok = std::fabs(fs - kFlopsTarget) <= kFlopsRel * kFlopsTarget;
  const bool order_ok = pl > pm && pm > ps && fl > fm && fm > fs;
  return {params_ok && flops_ok && order_ok,
          "params S/M/L " + fmt(ps / 1e6, 4) + "M/" + fmt(pm / 1e6, 4) + "M/" + fmt(pl / 1e6, 4) +
              "M (S " + (params_ok ? "in" : "out of") + " 7.6M+-10%), FLOPs S/M/L " +
              fmt(fs / 1e9, 4) + "G/" + fmt(fm / 1e9, 4) + "G/" + fmt(fl / 1e9, 4) + "G (S " +
              (flops_ok ? "in" : "out of") + " 47.6G+-15%; S MACs " + fmt(macs / 1e9, 4) +
              "G), ordering " + (order_ok ? "ok" : "broken")};
}

// ------------------------------------------------------------------ 8

Outcome ppm_latency() {
  const auto r = compare_ppm_latency(128, 96, 128, 16, 32, 10, kPpmRuns, 0);
  const bool shapes = r.pappm_out == r.dappm_out;
  return {shapes && r.pappm.median_ms <= r.dappm.median_ms,
          "shapes " + r.pappm_out.str() + (shapes ? " == " : " != ") + r.dappm_out.str() +
              ", median PAPPM " + fmt(r.pappm.median_ms, 4) + " ms vs DAPPM " +
              fmt(r.dappm.median_ms, 4) + " ms over " + std::to_string(r.pappm.runs) + " runs"};
}

// ------------------------------------------------------------------ 9, 10

struct DeskRun {
  TrainResult result;
  std::string csv;
};

DeskRun desk_run(std::uint64_t seed, double lambda1, double lambda3) {
  DeskSetup d = desk_setup(seed);
  d.train.iters = kDeskIters;
  d.train.weights.lambda1 = lambda1;
  d.train.weights.lambda3 = lambda3;
  const SceneDataset train(d.scenes, 0, d.train_count);
  const SceneDataset val(d.scenes, d.val_first, d.val_count);
  PidNet<float> model(d.model);
  DeskRun r;
  std::ostringstream csv;
  csv << metrics_csv_header() << "\n";
  r.result = train_loop(model, d.train, train, &val, [&](const MetricsRow& row) {
    csv << metrics_csv_row(row) << "\n";
    return true;
  });
  r.csv = csv.str();
  return r;
}

Outcome desk_learning() {
  const DeskRun a = desk_run(0, 20.0, 1.0);
  const DeskRun b = desk_run(0, 20.0, 1.0);
  const double miou = a.result.final_eval.miou;
  const bool same = a.csv == b.csv;
  return {miou >= kDeskMiou && same && a.result.iterations_run == kDeskIters,
          "held-out mIoU " + fmt(miou, 4) + " after " + std::to_string(a.result.iterations_run) +
              " iterations, rerun metrics " + (same ? "bitwise identical" : "DIFFER")};
}

Outcome loss_ablation() {
  std::vector<double> with, without;
  for (std::uint64_t seed : {0, 1, 2}) {
    with.push_back(desk_run(seed, 20.0, 1.0).result.final_eval.boundary_f);
    without.push_back(desk_run(seed, 0.0, 0.0).result.final_eval.boundary_f);
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[1];
  };
  const double mw = median(with), mo = median(without);
  std::string detail = "boundary-F with l1,l3 [";
  for (double v : with) detail += fmt(v, 4) + " ";
  detail.back() = ']';
  detail += " median " + fmt(mw, 4) + ", without [";
  for (double v : without) detail += fmt(v, 4) + " ";
  detail.back() = ']';
  detail += " median " + fmt(mo, 4);
  return {mw >= mo, detail};
}

// ------------------------------------------------------------------ 11

Outcome loss_arithmetic() {
  const Var<double> one(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  const double total = composite_loss(one, one, one, one, LossWeights{}).total.value().item();

  Rng rng(90);
  LabelMap y(2, 6, 6);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(rng.uniform_int(0, 3));
  const Var<double> z(random_tensor<double>(Shape{2, 4, 6, 6}, 91, -3, 3));
  const double t = 0.8;
  const double logit_t = std::log(t / (1 - t));
  const double below = bas_loss(z, y, Var<double>(Tensor<double>(Shape{2, 1, 6, 6}, logit_t - 1e-4)), t)
                           .value().item();
  const double above = bas_loss(z, y, Var<double>(Tensor<double>(Shape{2, 1, 6, 6}, logit_t + 1e-4)), t)
                           .value().item();
  const double plain = cross_entropy(z, y).loss.value().item();
  const bool ok = total == 22.4 && std::fabs(below) <= kLossTol && std::fabs(above - plain) <= kLossTol;
  return {ok, "unit terms total " + fmt(total) + (total == 22.4 ? " (exact)" : "") + ", all below t " + fmt(below, 3) +
                  ", all above t minus plain CE " + fmt(above - plain, 3)};
}

// ------------------------------------------------------------------ 12

Outcome checkpoint_integrity() {
  ModelConfig c = ModelConfig::preset("tiny");
  c.seed = 12;
  PidNet<float> model(c);
  model.forward(Var<float>(random_tensor<float>(Shape{2, 3, 32, 32}, 93, 0, 1)), RunMode::kTrain);
  const std::string path = "acceptance_checkpoint.ckpt";
  save_checkpoint(model, path);
  const auto first = read_file(path);
  PidNet<float> back = load_checkpoint(path);
  save_checkpoint(back, path);
  const auto second = read_file(path);
  std::remove(path.c_str());
  const bool identical = first == second;

  // Flip one byte at a time: every header byte, every trailer byte and a
  // random sample of the payload.
  std::vector<std::size_t> positions;
  for (std::size_t k = 0; k < 256 && k < first.size(); ++k) positions.push_back(k);
  for (std::size_t k = first.size() > 64 ? first.size() - 64 : 0; k < first.size(); ++k)
    positions.push_back(k);
  Rng rng(94);
  for (int k = 0; k < 200; ++k)
    positions.push_back(static_cast<std::size_t>(rng.uniform_int(0, int(first.size()) - 1)));
  int undetected = 0;
  auto bad = first;
  for (std::size_t pos : positions) {
    const auto flip = static_cast<std::uint8_t>(1u << (pos % 8));
    bad[pos] ^= flip;
    try {
      deserialize_checkpoint(bad);
      ++undetected;
    } catch (const Error&) {
    }
    bad[pos] ^= flip;
  }
  return {identical && undetected == 0,
          std::string("save-load-save ") + (identical ? "byte-identical" : "DIFFERS") + " (" +
              std::to_string(first.size()) + " bytes), corruptions undetected " +
              std::to_string(undetected) + "/" + std::to_string(positions.size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion (1-12)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "locality", 1, locality},
      {2, "filter character", 1, filter_character},
      {3, "overshoot", 1, overshoot},
      {4, "fusion algebra", 10, fusion_algebra},
      {5, "gradients", 300, gradients},
      {6, "bn folding", 60, bn_folding},
      {7, "accounting", 10, accounting},
      {8, "pappm vs dappm", 60, ppm_latency},
      {9, "desk learning", 1800, desk_learning},
      {10, "loss ablation", 5400, loss_ablation},
      {11, "loss arithmetic", 1, loss_arithmetic},
      {12, "checkpoint integrity", 10, checkpoint_integrity},
  };
  bool all_pass = true;
  bool ran = false;
  for (const auto& c : all) {
    if (only != 0 && c.id != only) continue;
    ran = true;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << (pass ? "PASS" : "FAIL") << " " << c.id << " " << c.name << ": " << o.detail
              << " [" << fmt(secs, 3) << " s" << (in_time ? "" : ", over budget " + fmt(c.budget_s) + " s")
              << "]" << std::endl;
  }
  if (!ran) {
    std::cerr << "no criterion " << only << "\n";
    return 2;
  }
  return all_pass ? 0 : 1;
}
