#include "pidnet/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pidnet/image_io.hpp"
#include "pidnet/ops.hpp"

namespace pidnet {
namespace {

constexpr double kPi = 3.14159265358979323846;

using Rgb = std::array<double, 3>;

Rgb hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Texture {
  double freq;
  double angle;
};

// Class colour and stripe texture are fixed per class; the spec seed does
// not change them so that different seeds describe the same visual task.
Rgb class_color(int c, int classes) {
  const double hue = 0.05 + static_cast<double>(c - 1) / std::max(1, classes - 1);
  return hsv_to_rgb(hue, 0.75, 0.85);
}

Texture class_texture(int c) { return {0.35 + 0.25 * (c % 3), 0.6 * c}; }

enum class ShapeKind { kRect, kDisk, kTriangle };

struct ShapeDraw {
  ShapeKind kind;
  double cx, cy, a, b, rot;
  std::array<double, 6> tri;
};

bool inside(const ShapeDraw& s, double x, double y) {
  switch (s.kind) {
    case ShapeKind::kRect: {
      const double dx = x - s.cx, dy = y - s.cy;
      const double u = dx * std::cos(s.rot) + dy * std::sin(s.rot);
      const double v = -dx * std::sin(s.rot) + dy * std::cos(s.rot);
      return std::abs(u) <= s.a && std::abs(v) <= s.b;
    }
    case ShapeKind::kDisk: {
      const double dx = (x - s.cx) / s.a, dy = (y - s.cy) / s.b;
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::kTriangle: {
      auto edge = [&](int i, int j) {
        return (s.tri[2 * j] - s.tri[2 * i]) * (y - s.tri[2 * i + 1]) -
               (s.tri[2 * j + 1] - s.tri[2 * i + 1]) * (x - s.tri[2 * i]);
      };
      const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
      return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
    }
  }
  return false;
}

}  // namespace

void SceneSpec::validate() const {
  if (num_classes < 2) throw ValueError("scene spec: need K >= 2 classes, got " + std::to_string(num_classes));
  if (num_classes > 254) throw ValueError("scene spec: at most 254 classes");
  if (height < 1 || width < 1) throw ValueError("scene spec: image extent must be positive");
  if (min_shapes < 0 || max_shapes < min_shapes) throw ValueError("scene spec: bad shapes-per-image range");
  if (min_size < 1) throw ValueError("scene spec: min_size must be >= 1");
  if (noise < 0 || texture_jitter < 0) throw ValueError("scene spec: noise amplitudes must be >= 0");
}

Sample gen_scene(const SceneSpec& spec, std::uint64_t index) {
  spec.validate();
  Rng rng(hash_name("scene/" + std::to_string(index), spec.seed));
  const int h = spec.height, w = spec.width;
  const int max_size = std::max(spec.min_size, spec.max_size > 0 ? spec.max_size : std::min(h, w) / 2);

  Sample s{Tensor<float>(Shape{1, 3, h, w}), LabelMap(1, h, w, 0)};
  std::vector<Rgb> pixels(static_cast<std::size_t>(h) * w);

  // Background: muted colour with a soft linear gradient.
  const Rgb bg = hsv_to_rgb(rng.uniform(), rng.uniform(0.0, 0.2), rng.uniform(0.35, 0.6));
  const double gx = rng.uniform(-0.15, 0.15), gy = rng.uniform(-0.15, 0.15);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double shade = gx * (x / static_cast<double>(w) - 0.5) + gy * (y / static_cast<double>(h) - 0.5);
      for (int c = 0; c < 3; ++c) pixels[y * w + x][c] = bg[c] + shade;
    }

  const int shapes = rng.uniform_int(spec.min_shapes, spec.max_shapes);
  for (int k = 0; k < shapes; ++k) {
    const int cls = rng.uniform_int(1, spec.num_classes - 1);
    ShapeDraw d{};
    d.kind = static_cast<ShapeKind>(rng.uniform_int(0, 2));
    // Biased towards larger shapes while still producing tiny ones.
    const double size = spec.min_size + (max_size - spec.min_size) * std::sqrt(rng.uniform());
    d.cx = rng.uniform(0.0, w);
    d.cy = rng.uniform(0.0, h);
    d.a = size / 2 * rng.uniform(0.6, 1.0);
    d.b = size / 2 * rng.uniform(0.6, 1.0);
    d.rot = rng.uniform(0.0, kPi);
    for (int v = 0; v < 3; ++v) {
      const double ang = d.rot + 2 * kPi * v / 3 + rng.uniform(-0.3, 0.3);
      d.tri[2 * v] = d.cx + size / 2 * std::cos(ang);
      d.tri[2 * v + 1] = d.cy + size / 2 * std::sin(ang);
    }
    Rgb color = class_color(cls, spec.num_classes);
    for (auto& ch : color) ch += rng.uniform(-spec.texture_jitter, spec.texture_jitter);
    const Texture tex = class_texture(cls);
    const double phase = rng.uniform(0.0, 2 * kPi);
    const double freq = tex.freq * rng.uniform(0.8, 1.25);
    const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - size)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(d.cx + size)));
    const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - size)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(d.cy + size)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        if (!inside(d, x + 0.5, y + 0.5)) continue;
        const double stripe =
            1.0 + 0.15 * std::sin(freq * (x * std::cos(tex.angle) + y * std::sin(tex.angle)) + phase);
        for (int c = 0; c < 3; ++c) pixels[y * w + x][c] = color[c] * stripe;
        s.labels.at(0, y, x) = static_cast<std::uint8_t>(cls);
      }
  }

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = pixels[y * w + x][c] + spec.noise * rng.normal();
        s.image.at(0, c, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
  return s;
}

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const Shape sh = s.image.shape();
  for (int c = 0; c < sh.c; ++c)
    for (int y = 0; y < sh.h; ++y)
      for (int x = 0; x < sh.w; ++x) out.image.at(0, c, y, x) = s.image.at(0, c, y, sh.w - 1 - x);
  for (int y = 0; y < s.labels.h; ++y)
    for (int x = 0; x < s.labels.w; ++x) out.labels.at(0, y, x) = s.labels.at(0, y, s.labels.w - 1 - x);
  return out;
}

Sample augment(const Sample& s, const AugmentConfig& cfg, Rng& rng) {
  if (cfg.crop_h < 1 || cfg.crop_w < 1) throw ValueError("augment: crop size must be positive");
  if (!(cfg.scale_min > 0) || cfg.scale_max < cfg.scale_min) {
    throw ValueError("augment: scale range must satisfy 0 < min <= max");
  }
  const Shape sh = s.image.shape();
  const double factor = cfg.scale_min == cfg.scale_max ? cfg.scale_min
                                                       : rng.uniform(cfg.scale_min, cfg.scale_max);
  const int nh = std::max(1, static_cast<int>(std::lround(sh.h * factor)));
  const int nw = std::max(1, static_cast<int>(std::lround(sh.w * factor)));

  Sample scaled;
  {
    TapeScope<float> no_grad(nullptr);
    scaled.image = bilinear_resize(Var<float>(s.image), nh, nw).value();
  }
  scaled.labels = LabelMap(1, nh, nw);
  for (int y = 0; y < nh; ++y) {
    const int sy = std::min(sh.h - 1, static_cast<int>((y + 0.5) * sh.h / nh));
    for (int x = 0; x < nw; ++x) {
      const int sx = std::min(sh.w - 1, static_cast<int>((x + 0.5) * sh.w / nw));
      scaled.labels.at(0, y, x) = s.labels.at(0, sy, sx);
    }
  }
  if (cfg.flip_prob > 0 && rng.uniform() < cfg.flip_prob) scaled = flip_horizontal(scaled);

  // Crop origin may be negative when the scaled image is smaller than the crop.
  const int oy = nh >= cfg.crop_h ? rng.uniform_int(0, nh - cfg.crop_h) : -rng.uniform_int(0, cfg.crop_h - nh);
  const int ox = nw >= cfg.crop_w ? rng.uniform_int(0, nw - cfg.crop_w) : -rng.uniform_int(0, cfg.crop_w - nw);
  Sample out{Tensor<float>(Shape{1, 3, cfg.crop_h, cfg.crop_w}),
             LabelMap(1, cfg.crop_h, cfg.crop_w, kIgnoreLabel)};
  for (int y = 0; y < cfg.crop_h; ++y) {
    const int sy = y + oy;
    if (sy < 0 || sy >= nh) continue;
    for (int x = 0; x < cfg.crop_w; ++x) {
      const int sx = x + ox;
      if (sx < 0 || sx >= nw) continue;
      for (int c = 0; c < 3; ++c) out.image.at(0, c, y, x) = scaled.image.at(0, c, sy, sx);
      out.labels.at(0, y, x) = scaled.labels.at(0, sy, sx);
    }
  }
  return out;
}

SampleBatch stack(const std::vector<Sample>& samples) {
  if (samples.empty()) throw ValueError("stack: empty sample list");
  const Shape s0 = samples.front().image.shape();
  SampleBatch b{Tensor<float>(Shape{static_cast<int>(samples.size()), 3, s0.h, s0.w}),
                LabelMap(static_cast<int>(samples.size()), s0.h, s0.w)};
  const std::size_t img = static_cast<std::size_t>(3) * s0.plane();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].image.shape() != s0) throw ShapeError("stack: samples differ in size");
    std::copy(samples[i].image.ptr(), samples[i].image.ptr() + img, b.images.ptr() + i * img);
    std::copy(samples[i].labels.data.begin(), samples[i].labels.data.end(),
              b.labels.data.begin() + static_cast<std::ptrdiff_t>(i * s0.plane()));
  }
  return b;
}

double poly_lr(double base_lr, int iter, int max_iter, double power) {
  if (max_iter <= 0) throw ValueError("poly_lr: max_iter must be > 0");
  if (iter < 0 || iter > max_iter) {
    throw ValueError("poly_lr: iter " + std::to_string(iter) + " outside [0, " +
                     std::to_string(max_iter) + "]");
  }
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / max_iter, power);
}

SceneDataset::SceneDataset(SceneSpec spec, std::uint64_t first, int count) : spec_(spec) {
  if (count < 0) throw ValueError("scene dataset: count must be >= 0");
  samples_.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) samples_.push_back(gen_scene(spec_, first + i));
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (const auto& e : entries) out << e.index << "," << e.image << "," << e.labels << "\n";
  if (!out) throw IoError("write to '" + path + "' failed");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx, img, lbl;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, img, ',') || !std::getline(ss, lbl)) {
      throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) +
                        ": expected index,image-path,label-path");
    }
    ManifestEntry e;
    try {
      e.index = std::stoi(idx);
    } catch (const std::exception&) {
      throw FormatError("manifest '" + path + "' line " + std::to_string(line_no) + ": bad index");
    }
    auto resolve = [&](const std::string& p) {
      const std::filesystem::path fp(p);
      return fp.is_absolute() ? p : (base / fp).string();
    };
    e.image = resolve(img);
    e.labels = resolve(lbl);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<Sample> load_manifest_samples(const std::string& path) {
  std::vector<Sample> out;
  for (const auto& e : read_manifest(path)) {
    Sample s{read_ppm(e.image), read_pgm(e.labels)};
    if (s.labels.h != s.image.h() || s.labels.w != s.image.w()) {
      throw ShapeError("manifest entry " + std::to_string(e.index) + ": image and labels differ in size");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace pidnet
