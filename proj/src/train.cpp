#include "pidnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "pidnet/metrics.hpp"

namespace pidnet {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void check_finite(const char* name, const Var<float>& v, int iter) {
  if (v.defined() && !v.value().all_finite()) {
    throw DivergenceError("non-finite values in '" + std::string(name) + "' at iteration " +
                          std::to_string(iter));
  }
}

Var<float> upsample(const Var<float>& x, int h, int w) { return bilinear_resize(x, h, w); }

}  // namespace

std::string metrics_csv_header() { return "iter,lr,l0,l1,l2,l3,total,miou,boundary_f"; }

std::string metrics_csv_row(const MetricsRow& r) {
  std::string s = std::to_string(r.iter) + "," + fmt(r.lr) + "," + fmt(r.l0) + "," + fmt(r.l1) +
                  "," + fmt(r.l2) + "," + fmt(r.l3) + "," + fmt(r.total) + ",";
  s += r.miou ? fmt(*r.miou) : "";
  s += ",";
  s += r.boundary_f ? fmt(*r.boundary_f) : "";
  return s;
}

EvalResult eval_loop(PidNet<float>& model, const std::vector<Sample>& samples,
                     const EvalOptions& opt) {
  if (samples.empty()) throw ValueError("eval_loop: empty dataset");
  const int k = model.config().num_classes;
  ConfusionMatrix cm(k);
  EvalResult r;
  double bf_sum = 0.0;
  for (const Sample& s : samples) {
    // Batch size is fixed to one image.
    const auto out = model.forward(Var<float>(s.image), RunMode::kEval);
    Var<float> up = upsample(out.main, s.labels.h, s.labels.w);
    const LabelMap pred = argmax_channels(up.value());
    cm.accumulate(pred, s.labels);
    bf_sum += boundary_f_score(pred, s.labels, opt.boundary_radius);
    ++r.images;
  }
  r.miou = cm.miou();
  r.class_iou = cm.iou();
  r.pixel_accuracy = cm.pixel_accuracy();
  r.boundary_f = bf_sum / r.images;
  return r;
}

EvalResult eval_loop(PidNet<float>& model, const SceneDataset& data, const EvalOptions& opt) {
  std::vector<Sample> samples;
  samples.reserve(static_cast<std::size_t>(data.size()));
  for (int i = 0; i < data.size(); ++i) samples.push_back(data[i]);
  return eval_loop(model, samples, opt);
}

StepLosses compute_losses(PidNet<float>& model, const SampleBatch& batch, const TrainConfig& cfg) {
  const int h = batch.labels.h, w = batch.labels.w;
  StepLosses st;
  st.outputs = model.forward(Var<float>(batch.images), RunMode::kTrain);
  const Var<float> aux = upsample(st.outputs.aux, h, w);
  const Var<float> main = upsample(st.outputs.main, h, w);
  const Var<float> bnd = upsample(st.outputs.boundary, h, w);

  const BoundaryMap bgt = extract_boundary_gt(batch.labels, model.config().boundary_radius);
  const Var<float> l0 = cross_entropy(aux, batch.labels).loss;
  const Var<float> l1 = weighted_bce(bnd, bgt);
  const Var<float> l2 = cfg.ohem ? ohem_cross_entropy(main, batch.labels, cfg.ohem_options).loss
                                 : cross_entropy(main, batch.labels).loss;
  const Var<float> l3 = bas_loss(main, batch.labels, bnd, cfg.weights.boundary_threshold);
  st.losses = composite_loss(l0, l1, l2, l3, cfg.weights);
  return st;
}

TrainResult train_loop(PidNet<float>& model, const TrainConfig& cfg, const SceneDataset& train,
                       const SceneDataset* eval, const TrainCallback& on_row) {
  if (cfg.iters < 1) throw ValueError("train_loop: iters must be >= 1");
  if (cfg.batch_size < 1) throw ValueError("train_loop: batch size must be >= 1");
  if (train.size() < 1) throw ValueError("train_loop: empty training set");
  if (model.fused()) throw Error("train_loop: cannot train a BN-fused model");
  cfg.weights.validate();

  TrainResult result;
  std::map<std::string, Tensor<float>> velocity;
  const SgdOptions base{cfg.base_lr, cfg.momentum, cfg.weight_decay};

  std::vector<int> order(static_cast<std::size_t>(train.size()));
  std::size_t cursor = order.size();
  int epoch = 0;
  auto next_index = [&]() {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      Rng perm(hash_name("epoch/" + std::to_string(epoch++), cfg.seed));
      for (std::size_t i = order.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(perm.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(order[i - 1], order[j]);
      }
      cursor = 0;
    }
    return order[cursor++];
  };

  for (int it = 0; it < cfg.iters; ++it) {
    const double lr = poly_lr(cfg.base_lr, it, cfg.iters, cfg.power);
    if (cfg.stop_below_lr && lr < *cfg.stop_below_lr) break;

    Rng aug(hash_name("augment/" + std::to_string(it), cfg.seed));
    std::vector<Sample> picked;
    for (int b = 0; b < cfg.batch_size; ++b) picked.push_back(augment(train[next_index()], cfg.augment, aug));
    const SampleBatch batch = stack(picked);

    Tape<float> tape;
    StepLosses st;
    {
      TapeScope<float> scope(&tape);
      st = compute_losses(model, batch, cfg);
    }
    const auto& L = st.losses;
    check_finite("aux_logits", st.outputs.aux, it + 1);
    check_finite("main_logits", st.outputs.main, it + 1);
    check_finite("boundary_logits", st.outputs.boundary, it + 1);
    check_finite("l0", L.l0, it + 1);
    check_finite("l1", L.l1, it + 1);
    check_finite("l2", L.l2, it + 1);
    check_finite("l3", L.l3, it + 1);
    check_finite("total", L.total, it + 1);

    model.zero_grad();
    tape.backward(L.total);
    SgdOptions opt = base;
    opt.lr = lr;
    for (auto& [name, p] : model.named_parameters()) {
      if (!p.has_grad()) continue;
      Tensor<float>* v = nullptr;
      if (opt.momentum > 0) {
        auto [slot, inserted] = velocity.try_emplace(name, p.shape());
        v = &slot->second;
      }
      sgd_update(p.value(), p.grad(), v, opt);
    }
    result.iterations_run = it + 1;

    const bool last = it + 1 == cfg.iters;
    const bool log = last || (cfg.log_every > 0 && (it + 1) % cfg.log_every == 0) || it == 0;
    const bool do_eval = eval != nullptr && (last || (cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0));
    if (log || do_eval) {
      MetricsRow row;
      row.iter = it + 1;
      row.lr = lr;
      row.l0 = L.l0.value().item();
      row.l1 = L.l1.value().item();
      row.l2 = L.l2.value().item();
      row.l3 = L.l3.value().item();
      row.total = L.total.value().item();
      if (do_eval) {
        const EvalResult er = eval_loop(model, *eval);
        row.miou = er.miou;
        row.boundary_f = er.boundary_f;
        if (last) result.final_eval = er;
      }
      result.rows.push_back(row);
      if (on_row && !on_row(row)) break;
    }
  }
  return result;
}

DeskSetup desk_setup(std::uint64_t seed) {
  DeskSetup d;
  d.model = ModelConfig::preset("tiny");
  d.model.seed = seed;
  d.scenes.seed = seed;
  d.train.seed = seed;
  d.train.augment.crop_h = d.scenes.height;
  d.train.augment.crop_w = d.scenes.width;
  return d;
}

}  // namespace pidnet
