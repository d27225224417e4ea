#include "pidnet/commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "pidnet/bench.hpp"
#include "pidnet/checkpoint.hpp"
#include "pidnet/image_io.hpp"
#include "pidnet/metrics.hpp"
#include "pidnet/pid_analysis.hpp"
#include "pidnet/train.hpp"

namespace pidnet {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised for bad flag values found after parsing; maps to the usage exit code.
struct UsageError : Error {
  using Error::Error;
};

std::string fmt(double v, int digits = 9) {
  std::ostringstream os;
  os << std::setprecision(digits) << v;
  return os.str();
}

std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("missing x");
    std::size_t used = 0;
    const int h = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument("trailing");
    const std::string rest = s.substr(x + 1);
    const int w = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("trailing");
    if (h < 1 || w < 1) throw std::invalid_argument("non-positive");
    return {h, w};
  } catch (const std::exception&) {
    throw UsageError("--size expects HxW with positive integers, got '" + s + "'");
  }
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + path.string() + "' failed");
}

void write_run_manifest(const fs::path& path, const std::string& command, const json& config) {
  json m;
  m["command"] = command;
  m["config"] = config;
  write_text(path, m.dump(2) + "\n");
}

json model_json(const ModelConfig& c) {
  return json{{"name", c.name},
              {"base_width", c.base_width},
              {"pd_depth", c.pd_depth},
              {"i_depth", c.i_depth},
              {"deep", c.deep},
              {"fusion", to_string(c.fusion)},
              {"context", to_string(c.context)},
              {"ppm_channels", c.ppm_channels},
              {"head_channels", c.head_channels},
              {"num_classes", c.num_classes},
              {"boundary_radius", c.boundary_radius},
              {"input_multiple", c.input_multiple},
              {"seed", c.seed}};
}

Tensor<float> load_image_checked(const std::string& path, const ModelConfig& cfg) {
  Tensor<float> img = read_ppm(path);
  const int m = cfg.input_multiple;
  if (img.h() % m != 0 || img.w() % m != 0) {
    throw UsageError("image '" + path + "' is " + std::to_string(img.h()) + "x" +
                     std::to_string(img.w()) + "; both sides must be multiples of " +
                     std::to_string(m));
  }
  return img;
}

// ---------------------------------------------------------------- analyze

struct AnalyzeArgs {
  double kp = 1.0, ki = 0.8, kd = 0.0;
  double wn = 1.0, zeta = 0.5, dt = 0.01;
  int steps = 3000;
  bool summary = false;
  double omega_min = 0.01, omega_max = M_PI;
  int n = 512;
  std::vector<int> kernels{3, 3, 3};
  std::vector<int> strides{1, 1, 1};
  int window = 1;
  std::string out;
};

void emit_table(const AnalyzeArgs& a, const std::string& name, const std::string& csv,
                const json& cfg, std::ostream& out) {
  out << csv;
  if (a.out.empty()) return;
  ensure_dir(a.out);
  write_text(fs::path(a.out) / (name + ".csv"), csv);
  write_run_manifest(fs::path(a.out) / "run.json", "analyze " + name, cfg);
}

void cmd_pid_step(const AnalyzeArgs& a, std::ostream& out) {
  const pid::ControllerGains g{a.kp, a.ki, a.kd};
  const pid::PlantParams plant{a.wn, a.zeta, 1.0};
  if (a.steps < 1) throw UsageError("--steps must be >= 1");
  const auto tr = pid::simulate_step(g, plant, a.dt, a.steps * a.dt);
  std::ostringstream csv;
  if (a.summary) {
    csv << "kp,ki,kd,overshoot\n" << fmt(a.kp) << "," << fmt(a.ki) << "," << fmt(a.kd) << ","
        << fmt(tr.overshoot) << "\n";
  } else {
    csv << "t,y,e,c\n";
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
      csv << fmt(tr.t[i]) << "," << fmt(tr.y[i]) << "," << fmt(tr.e[i]) << "," << fmt(tr.c[i])
          << "\n";
    }
  }
  const json cfg{{"kp", a.kp}, {"ki", a.ki},     {"kd", a.kd},       {"plant_wn", a.wn},
                 {"plant_zeta", a.zeta}, {"dt", a.dt}, {"steps", a.steps}, {"summary", a.summary}};
  emit_table(a, "pid-step", csv.str(), cfg, out);
}

void cmd_freq(const AnalyzeArgs& a, std::ostream& out) {
  if (a.n < 2) throw UsageError("--n must be >= 2");
  const auto fr = pid::frequency_response({a.kp, a.ki, a.kd},
                                          pid::omega_grid(a.omega_min, a.omega_max, a.n));
  std::ostringstream csv;
  csv << "omega,p_mag,i_mag,d_mag,c_mag\n";
  for (std::size_t i = 0; i < fr.omegas.size(); ++i) {
    csv << fmt(fr.omegas[i]) << "," << fmt(fr.p_mag[i]) << "," << fmt(fr.i_mag[i]) << ","
        << fmt(fr.d_mag[i]) << "," << fmt(fr.c_mag[i]) << "\n";
  }
  const json cfg{{"kp", a.kp},
                 {"ki", a.ki},
                 {"kd", a.kd},
                 {"omega_min", a.omega_min},
                 {"omega_max", a.omega_max},
                 {"n", a.n}};
  emit_table(a, "freq", csv.str(), cfg, out);
}

void cmd_locality(const AnalyzeArgs& a, std::ostream& out) {
  if (a.kernels.size() != a.strides.size()) {
    throw UsageError("--kernels and --strides must have the same length");
  }
  if (a.window < 0) throw UsageError("--window must be >= 0");
  const auto exp = pid::receptive_field_expansion(a.kernels, a.strides);
  const pid::Rational r = pid::locality_ratio(exp, a.window);
  std::ostringstream line;
  line << r.str() << " " << std::fixed << std::setprecision(6) << r.value() << "\n";
  out << line.str();
  if (a.out.empty()) return;
  ensure_dir(a.out);
  std::ostringstream csv;
  csv << "offset,count\n";
  for (const auto& [off, cnt] : exp.counts) csv << off << "," << cnt << "\n";
  write_text(fs::path(a.out) / "locality.csv", csv.str());
  write_text(fs::path(a.out) / "locality.txt", line.str());
  write_run_manifest(fs::path(a.out) / "run.json", "analyze locality",
                     json{{"kernels", a.kernels}, {"strides", a.strides}, {"window", a.window}});
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string preset = "tiny";
  std::optional<std::string> fusion, context, size;
  std::optional<int> classes, iters, batch, train_scenes, val_scenes, log_every, eval_every;
  std::optional<double> lr, lambda0, lambda1, lambda2, lambda3, bnd_thresh, stop_below_lr;
  std::uint64_t seed = 0;
  bool ohem = false;
  std::string out;
};

void cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  DeskSetup d = desk_setup(a.seed);
  try {
    const ModelConfig base = ModelConfig::preset(a.preset);
    d.model = base;
    d.model.seed = a.seed;
    if (a.fusion) d.model.fusion = parse_fusion(*a.fusion);
    if (a.context) d.model.context = parse_context(*a.context);
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  if (a.classes) d.model.num_classes = *a.classes;
  d.scenes.num_classes = d.model.num_classes;
  if (a.size) std::tie(d.scenes.height, d.scenes.width) = parse_size(*a.size);
  d.train.augment.crop_h = d.scenes.height;
  d.train.augment.crop_w = d.scenes.width;
  if (a.iters) d.train.iters = *a.iters;
  if (a.batch) d.train.batch_size = *a.batch;
  if (a.lr) d.train.base_lr = *a.lr;
  if (a.lambda0) d.train.weights.lambda0 = *a.lambda0;
  if (a.lambda1) d.train.weights.lambda1 = *a.lambda1;
  if (a.lambda2) d.train.weights.lambda2 = *a.lambda2;
  if (a.lambda3) d.train.weights.lambda3 = *a.lambda3;
  if (a.bnd_thresh) d.train.weights.boundary_threshold = *a.bnd_thresh;
  if (a.log_every) d.train.log_every = *a.log_every;
  if (a.eval_every) d.train.eval_every = *a.eval_every;
  d.train.stop_below_lr = a.stop_below_lr;
  d.train.ohem = a.ohem;
  if (a.train_scenes) d.train_count = *a.train_scenes;
  if (a.val_scenes) d.val_count = *a.val_scenes;

  try {
    d.model.validate();
    d.scenes.validate();
    d.train.weights.validate();
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  if (d.scenes.height % d.model.input_multiple || d.scenes.width % d.model.input_multiple) {
    throw UsageError("--size must be a multiple of " + std::to_string(d.model.input_multiple) +
                     " for preset " + d.model.name);
  }
  if (d.train_count < 1 || d.val_count < 1) throw UsageError("scene counts must be >= 1");

  ensure_dir(a.out);
  const fs::path dir(a.out);
  const json cfg{{"model", model_json(d.model)},
                 {"scenes",
                  {{"seed", d.scenes.seed},
                   {"height", d.scenes.height},
                   {"width", d.scenes.width},
                   {"num_classes", d.scenes.num_classes},
                   {"train_first", 0},
                   {"train_count", d.train_count},
                   {"val_first", d.val_first},
                   {"val_count", d.val_count}}},
                 {"train",
                  {{"iters", d.train.iters},
                   {"base_lr", d.train.base_lr},
                   {"power", d.train.power},
                   {"weight_decay", d.train.weight_decay},
                   {"momentum", d.train.momentum},
                   {"batch_size", d.train.batch_size},
                   {"scale_range", {d.train.augment.scale_min, d.train.augment.scale_max}},
                   {"flip_prob", d.train.augment.flip_prob},
                   {"crop", {d.train.augment.crop_h, d.train.augment.crop_w}},
                   {"lambda", {d.train.weights.lambda0, d.train.weights.lambda1,
                               d.train.weights.lambda2, d.train.weights.lambda3}},
                   {"boundary_threshold", d.train.weights.boundary_threshold},
                   {"ohem", d.train.ohem},
                   {"log_every", d.train.log_every},
                   {"eval_every", d.train.eval_every},
                   {"stop_below_lr", d.train.stop_below_lr ? json(*d.train.stop_below_lr)
                                                           : json(nullptr)},
                   {"seed", d.train.seed}}}};
  write_run_manifest(dir / "run.json", "train", cfg);

  PidNet<float> model(d.model);
  const SceneDataset train(d.scenes, 0, d.train_count);
  const SceneDataset val(d.scenes, d.val_first, d.val_count);

  std::ofstream csv(dir / "metrics.csv", std::ios::binary);
  if (!csv) throw IoError("cannot open '" + (dir / "metrics.csv").string() + "'");
  csv << metrics_csv_header() << "\n";
  const TrainResult r = train_loop(model, d.train, train, &val, [&](const MetricsRow& row) {
    csv << metrics_csv_row(row) << "\n";
    csv.flush();
    if (row.miou) save_checkpoint(model, (dir / "model.ckpt").string());
    err << "iter " << row.iter << " loss " << fmt(row.total, 5)
        << (row.miou ? " miou " + fmt(*row.miou, 4) : std::string()) << "\n";
    return true;
  });
  save_checkpoint(model, (dir / "model.ckpt").string());
  out << "iterations,miou,boundary_f,pixel_accuracy\n"
      << r.iterations_run << "," << fmt(r.final_eval.miou) << "," << fmt(r.final_eval.boundary_f)
      << "," << fmt(r.final_eval.pixel_accuracy) << "\n";
}

// ---------------------------------------------------------------- eval / infer

void cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& out_dir,
              int radius, std::ostream& out) {
  PidNet<float> model = load_checkpoint(ckpt);
  const auto samples = load_manifest_samples(manifest);
  for (const auto& s : samples) {
    if (s.labels.h != s.image.h() || s.labels.w != s.image.w()) {
      throw ShapeError("manifest sample image and label sizes differ");
    }
  }
  const EvalResult r = eval_loop(model, samples, EvalOptions{radius});
  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "images," << r.images << "\n";
  csv << "miou," << fmt(r.miou) << "\n";
  csv << "pixel_accuracy," << fmt(r.pixel_accuracy) << "\n";
  csv << "boundary_f," << fmt(r.boundary_f) << "\n";
  for (std::size_t k = 0; k < r.class_iou.size(); ++k) {
    csv << "iou_class_" << k << "," << fmt(r.class_iou[k]) << "\n";
  }
  out << csv.str();
  if (out_dir.empty()) return;
  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "eval.csv", csv.str());
  write_run_manifest(fs::path(out_dir) / "run.json", "eval",
                     json{{"ckpt", ckpt}, {"manifest", manifest}, {"boundary_radius", radius}});
}

void cmd_infer(const std::string& ckpt, const std::string& image, const std::string& out_path,
               const std::string& boundary_path, std::ostream& out) {
  PidNet<float> model = load_checkpoint(ckpt);
  const Tensor<float> img = load_image_checked(image, model.config());
  const auto o = model.forward(Var<float>(img), RunMode::kEval);
  const Var<float> main = bilinear_resize(o.main, img.h(), img.w());
  write_pgm(out_path, argmax_channels(main.value()));
  json cfg{{"ckpt", ckpt}, {"image", image}, {"out", out_path}};
  if (!boundary_path.empty()) {
    const Var<float> b = sigmoid(bilinear_resize(o.boundary, img.h(), img.w()));
    std::vector<std::uint8_t> px(b.value().size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      px[i] = static_cast<std::uint8_t>(std::lround(std::clamp(b.value()[i], 0.0f, 1.0f) * 255));
    }
    write_pgm(boundary_path, img.h(), img.w(), px);
    cfg["boundary"] = boundary_path;
  }
  write_run_manifest(out_path + ".json", "infer", cfg);
  out << "height,width,labels\n" << img.h() << "," << img.w() << "," << out_path << "\n";
}

// ---------------------------------------------------------------- bench / inspect

struct BenchArgs {
  std::string preset = "tiny";
  std::optional<std::string> fusion, context;
  std::string size = "64x64";
  int warmup = 3, runs = 20;
  bool fuse = false, compare_ppm = false;
  std::uint64_t seed = 0;
  std::string out;
};

void cmd_bench(const BenchArgs& a, std::ostream& out) {
  const auto [h, w] = parse_size(a.size);
  if (a.runs < 1 || a.warmup < 0) throw UsageError("--runs must be >= 1 and --warmup >= 0");
  std::ostringstream csv;
  json cfg{{"size", a.size}, {"warmup", a.warmup}, {"runs", a.runs}, {"seed", a.seed}};
  if (a.compare_ppm) {
    // Channel settings of the tiny preset's context module input.
    const int in = 128, branch = 96, outc = 128;
    const PpmLatency r = compare_ppm_latency(in, branch, outc, h, w, a.warmup, a.runs, a.seed);
    csv << "module,in_channels,branch,out_channels,out_shape,runs,wall_median_ms,wall_p5_ms,"
           "wall_p95_ms\n";
    csv << "pappm," << in << "," << branch << "," << outc << "," << r.pappm_out.str() << ","
        << r.pappm.runs << "," << fmt(r.pappm.median_ms, 6) << "," << fmt(r.pappm.p5_ms, 6) << ","
        << fmt(r.pappm.p95_ms, 6) << "\n";
    csv << "dappm," << in << "," << branch << "," << outc << "," << r.dappm_out.str() << ","
        << r.dappm.runs << "," << fmt(r.dappm.median_ms, 6) << "," << fmt(r.dappm.p5_ms, 6) << ","
        << fmt(r.dappm.p95_ms, 6) << "\n";
    cfg["compare_ppm"] = true;
  } else {
    ModelConfig mc;
    try {
      mc = ModelConfig::preset(a.preset);
      if (a.fusion) mc.fusion = parse_fusion(*a.fusion);
      if (a.context) mc.context = parse_context(*a.context);
    } catch (const ValueError& e) {
      throw UsageError(e.what());
    }
    mc.seed = a.seed;
    if (h % mc.input_multiple || w % mc.input_multiple) {
      throw UsageError("--size must be a multiple of " + std::to_string(mc.input_multiple));
    }
    PidNet<float> model(mc);
    BenchOptions opt{h, w, a.warmup, a.runs, a.fuse, a.seed};
    const BenchResult r = bench(model, opt);
    csv << "config,height,width,fused,fused_max_abs_diff,params,flops,runs,wall_median_ms,"
           "wall_p5_ms,wall_p95_ms,wall_fps\n";
    csv << mc.name << "," << h << "," << w << "," << (a.fuse ? 1 : 0) << ","
        << (r.fused_max_abs_diff ? fmt(*r.fused_max_abs_diff) : std::string()) << ","
        << model.count_params() << "," << model.count_flops(h, w) << "," << r.stats.runs << ","
        << fmt(r.stats.median_ms, 6) << "," << fmt(r.stats.p5_ms, 6) << ","
        << fmt(r.stats.p95_ms, 6) << "," << fmt(r.stats.fps, 6) << "\n";
    cfg["model"] = model_json(mc);
    cfg["fuse_bn"] = a.fuse;
  }
  out << csv.str();
  if (a.out.empty()) return;
  ensure_dir(a.out);
  write_text(fs::path(a.out) / "bench.csv", csv.str());
  write_run_manifest(fs::path(a.out) / "run.json", "bench", cfg);
}

void cmd_inspect(const std::string& ckpt, const std::string& image, const std::string& block,
                 const std::string& out_dir, std::ostream& out) {
  PidNet<float> model = load_checkpoint(ckpt);
  ProbeMap<float> probes;
  try {
    model.set_probe(block, &probes);
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  const Tensor<float> img = load_image_checked(image, model.config());
  model.forward(Var<float>(img), RunMode::kEval);
  model.set_probe("", nullptr);

  ensure_dir(out_dir);
  const fs::path dir(out_dir);
  std::ostringstream csv;
  csv << "role,channel,height,width,file\n";
  const std::string prefix = block + "/";
  for (const auto& [key, t] : probes) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string role = key.substr(prefix.size());
    const std::size_t plane = static_cast<std::size_t>(t.h()) * t.w();
    for (int c = 0; c < t.c(); ++c) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_c%03d.pgm", role.c_str(), c);
      const float* p = t.ptr() + static_cast<std::size_t>(c) * plane;
      write_pgm((dir / name).string(), t.h(), t.w(), normalize_plane(p, plane));
      csv << role << "," << c << "," << t.h() << "," << t.w() << "," << name << "\n";
    }
  }
  write_text(dir / "index.csv", csv.str());
  write_run_manifest(dir / "run.json", "inspect",
                     json{{"ckpt", ckpt}, {"image", image}, {"block", block}});
  out << csv.str();
}

// ---------------------------------------------------------------- generate

void cmd_generate(const SceneSpec& spec, std::uint64_t first, int count, const std::string& out_dir,
                  std::ostream& out) {
  if (count < 1) throw UsageError("--count must be >= 1");
  try {
    spec.validate();
  } catch (const ValueError& e) {
    throw UsageError(e.what());
  }
  const fs::path dir(out_dir);
  ensure_dir((dir / "scenes").string());
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t idx = first + static_cast<std::uint64_t>(i);
    const Sample s = gen_scene(spec, idx);
    char stem[32];
    std::snprintf(stem, sizeof stem, "%08llu", static_cast<unsigned long long>(idx));
    const std::string img = std::string("scenes/") + stem + ".ppm";
    const std::string lab = std::string("scenes/") + stem + ".pgm";
    write_ppm((dir / img).string(), s.image);
    write_pgm((dir / lab).string(), s.labels);
    entries.push_back({static_cast<int>(idx), img, lab});
  }
  write_manifest((dir / "manifest.txt").string(), entries);
  write_run_manifest(dir / "run.json", "generate",
                     json{{"seed", spec.seed},
                          {"height", spec.height},
                          {"width", spec.width},
                          {"num_classes", spec.num_classes},
                          {"first", first},
                          {"count", count}});
  out << "count,manifest\n" << count << "," << (dir / "manifest.txt").string() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"PIDNet desk-scale toolkit", "pidnet"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  app.set_config("--config-file", "", "INI/TOML file with per-subcommand defaults");

  // analyze
  AnalyzeArgs an;
  auto* analyze = app.add_subcommand("analyze", "Control-theory analyses");
  analyze->require_subcommand(1);
  auto add_gains = [&](CLI::App* c) {
    c->add_option("--kp", an.kp, "Proportional gain")->capture_default_str();
    c->add_option("--ki", an.ki, "Integral gain")->capture_default_str();
    c->add_option("--kd", an.kd, "Derivative gain")->capture_default_str();
    c->add_option("--out", an.out, "Directory for CSV output");
  };
  auto* pid_step = analyze->add_subcommand("pid-step", "Closed-loop step response");
  add_gains(pid_step);
  pid_step->add_option("--plant-wn", an.wn, "Plant natural frequency")->capture_default_str();
  pid_step->add_option("--plant-zeta", an.zeta, "Plant damping ratio")->capture_default_str();
  pid_step->add_option("--dt", an.dt, "Sample period")->capture_default_str();
  pid_step->add_option("--steps", an.steps, "Number of steps")->capture_default_str();
  pid_step->add_flag("--summary", an.summary, "Print only the overshoot");
  auto* freq = analyze->add_subcommand("freq", "Controller frequency response");
  add_gains(freq);
  freq->add_option("--omega-min", an.omega_min)->capture_default_str();
  freq->add_option("--omega-max", an.omega_max)->capture_default_str();
  freq->add_option("--n", an.n, "Grid points")->capture_default_str();
  auto* locality = analyze->add_subcommand("locality", "Share of near taps in stacked convs");
  locality->add_option("--kernels", an.kernels)->delimiter(',')->capture_default_str();
  locality->add_option("--strides", an.strides)->delimiter(',')->capture_default_str();
  locality->add_option("--window", an.window)->capture_default_str();
  locality->add_option("--out", an.out, "Directory for CSV output");

  // train
  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train on synthetic scenes");
  train->add_option("--config", ta.preset, "Preset: tiny, s, m or l")->capture_default_str();
  train->add_option("--fusion", ta.fusion, "pag_bag or add");
  train->add_option("--context", ta.context, "pappm or dappm");
  train->add_option("--classes", ta.classes);
  train->add_option("--size", ta.size, "Scene size HxW");
  train->add_option("--iters", ta.iters);
  train->add_option("--batch", ta.batch);
  train->add_option("--lr", ta.lr, "Base learning rate");
  train->add_option("--seed", ta.seed)->capture_default_str();
  train->add_flag("--ohem", ta.ohem, "Use OHEM for the main loss");
  train->add_option("--lambda0", ta.lambda0);
  train->add_option("--lambda1", ta.lambda1);
  train->add_option("--lambda2", ta.lambda2);
  train->add_option("--lambda3", ta.lambda3);
  train->add_option("--bnd-thresh", ta.bnd_thresh, "Boundary threshold t");
  train->add_option("--train-scenes", ta.train_scenes);
  train->add_option("--val-scenes", ta.val_scenes);
  train->add_option("--log-every", ta.log_every);
  train->add_option("--eval-every", ta.eval_every);
  train->add_option("--stop-below-lr", ta.stop_below_lr, "Stop once the poly lr drops below");
  train->add_option("--out", ta.out, "Output directory")->required();

  // eval
  std::string ckpt, manifest, eval_out;
  int eval_radius = 1;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  eval->add_option("--ckpt", ckpt)->required();
  eval->add_option("--manifest", manifest, "index,image,label list")->required();
  eval->add_option("--boundary-radius", eval_radius)->capture_default_str();
  eval->add_option("--out", eval_out, "Directory for CSV output");

  // infer
  std::string image, infer_out, boundary_out;
  auto* infer = app.add_subcommand("infer", "Label one image");
  infer->add_option("--ckpt", ckpt)->required();
  infer->add_option("--image", image, "Input PPM")->required();
  infer->add_option("--out", infer_out, "Output label PGM")->required();
  infer->add_option("--boundary", boundary_out, "Output boundary probability PGM");

  // bench
  BenchArgs ba;
  auto* benchc = app.add_subcommand("bench", "Forward latency");
  benchc->add_option("--config", ba.preset)->capture_default_str();
  benchc->add_option("--fusion", ba.fusion);
  benchc->add_option("--context", ba.context);
  benchc->add_option("--size", ba.size)->capture_default_str();
  benchc->add_option("--warmup", ba.warmup)->capture_default_str();
  benchc->add_option("--runs", ba.runs)->capture_default_str();
  benchc->add_flag("--fuse-bn", ba.fuse, "Fold BN into convolutions first");
  benchc->add_flag("--compare-ppm", ba.compare_ppm, "Time PAPPM against DAPPM instead");
  benchc->add_option("--seed", ba.seed)->capture_default_str();
  benchc->add_option("--out", ba.out, "Directory for CSV output");

  // inspect
  std::string block, inspect_out;
  auto* inspect = app.add_subcommand("inspect", "Dump fusion-block feature maps");
  inspect->add_option("--ckpt", ckpt)->required();
  inspect->add_option("--image", image)->required();
  inspect->add_option("--block", block)->required();
  inspect->add_option("--out", inspect_out)->required();

  // generate
  SceneSpec spec;
  std::uint64_t gen_first = 0;
  int gen_count = 10;
  std::string gen_size = "64x64", gen_out;
  auto* generate = app.add_subcommand("generate", "Write synthetic scenes and a manifest");
  generate->add_option("--seed", spec.seed)->capture_default_str();
  generate->add_option("--first", gen_first)->capture_default_str();
  generate->add_option("--count", gen_count)->capture_default_str();
  generate->add_option("--size", gen_size)->capture_default_str();
  generate->add_option("--classes", spec.num_classes)->capture_default_str();
  generate->add_option("--out", gen_out)->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (pid_step->parsed()) cmd_pid_step(an, out);
    else if (freq->parsed()) cmd_freq(an, out);
    else if (locality->parsed()) cmd_locality(an, out);
    else if (train->parsed()) cmd_train(ta, out, err);
    else if (eval->parsed()) cmd_eval(ckpt, manifest, eval_out, eval_radius, out);
    else if (infer->parsed()) cmd_infer(ckpt, image, infer_out, boundary_out, out);
    else if (benchc->parsed()) cmd_bench(ba, out);
    else if (inspect->parsed()) cmd_inspect(ckpt, image, block, inspect_out, out);
    else if (generate->parsed()) {
      std::tie(spec.height, spec.width) = parse_size(gen_size);
      cmd_generate(spec, gen_first, gen_count, gen_out, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace pidnet
