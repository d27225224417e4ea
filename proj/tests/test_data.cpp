#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pidnet/data.hpp"
#include "pidnet/image_io.hpp"

using namespace pidnet;
namespace fs = std::filesystem;

namespace {

bool same(const Sample& a, const Sample& b) {
  return a.labels == b.labels && a.image.shape() == b.image.shape() &&
         std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin());
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pidnet_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("scenes are a pure function of seed and index") {
  SceneSpec spec;
  spec.seed = 7;
  const auto a = gen_scene(spec, 12);
  const auto b = gen_scene(spec, 12);
  CHECK(same(a, b));
  CHECK_FALSE(same(a, gen_scene(spec, 13)));
  spec.seed = 8;
  CHECK_FALSE(same(a, gen_scene(spec, 12)));
  CHECK(a.image.shape() == Shape{1, 3, 64, 64});
  CHECK(a.labels.h == 64);
  for (float v : a.image.data()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("scene spec validation and empty scenes") {
  SceneSpec spec;
  spec.num_classes = 1;
  CHECK_THROWS_AS(gen_scene(spec, 0), ValueError);
  spec = SceneSpec{};
  spec.min_shapes = 0;
  spec.max_shapes = 0;
  const auto s = gen_scene(spec, 3);
  for (auto v : s.labels.data) CHECK(v == 0);
}

TEST_CASE("every class appears in at least 1% of pixels over 1000 scenes") {
  SceneSpec spec;
  spec.num_classes = 4;
  spec.height = spec.width = 32;
  std::vector<std::int64_t> hist(4, 0);
  std::int64_t total = 0;
  for (int i = 0; i < 1000; ++i) {
    for (auto v : gen_scene(spec, i).labels.data) {
      REQUIRE(v < 4);
      ++hist[v];
      ++total;
    }
  }
  for (int c = 0; c < 4; ++c) CHECK(static_cast<double>(hist[c]) / total >= 0.01);
}

TEST_CASE("augmentation identities") {
  SceneSpec spec;
  const auto s = gen_scene(spec, 1);
  AugmentConfig id;
  id.scale_min = id.scale_max = 1.0;
  id.flip_prob = 0.0;
  Rng rng(1);
  CHECK(same(augment(s, id, rng), s));
  CHECK(same(flip_horizontal(flip_horizontal(s)), s));
  CHECK_FALSE(same(flip_horizontal(s), s));

  AugmentConfig flip = id;
  flip.flip_prob = 1.0;
  CHECK(same(augment(s, flip, rng), flip_horizontal(s)));
}

TEST_CASE("augmented labels come from the original set or ignore") {
  SceneSpec spec;
  spec.num_classes = 5;
  AugmentConfig cfg;
  cfg.crop_h = 48;
  cfg.crop_w = 40;
  Rng rng(2);
  bool saw_ignore = false;
  for (int i = 0; i < 30; ++i) {
    const auto s = gen_scene(spec, i);
    const std::set<std::uint8_t> before(s.labels.data.begin(), s.labels.data.end());
    const auto a = augment(s, cfg, rng);
    CHECK(a.image.shape() == Shape{1, 3, 48, 40});
    CHECK(a.labels.h == 48);
    CHECK(a.labels.w == 40);
    for (auto v : a.labels.data) {
      if (v == kIgnoreLabel) {
        saw_ignore = true;
        continue;
      }
      CHECK(before.count(v) == 1);
    }
  }
  CHECK(saw_ignore);  // some draws shrink the scene below the crop
}

TEST_CASE("poly learning rate") {
  CHECK(poly_lr(0.01, 0, 100) == 0.01);
  CHECK(poly_lr(0.01, 100, 100) == 0.0);
  CHECK(poly_lr(1.0, 50, 100) == doctest::Approx(std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(poly_lr(1.0, 50, 100) == doctest::Approx(0.5359).epsilon(1e-4));
  double prev = poly_lr(1.0, 0, 1000);
  for (int i = 1; i <= 1000; ++i) {
    const double lr = poly_lr(1.0, i, 1000);
    CHECK(lr < prev);
    prev = lr;
  }
  CHECK_THROWS_AS(poly_lr(0.01, 0, 0), ValueError);
  CHECK_THROWS_AS(poly_lr(0.01, 101, 100), ValueError);
}

TEST_CASE("datasets and batches") {
  SceneSpec spec;
  spec.height = 32;
  spec.width = 48;
  const SceneDataset ds(spec, 100, 5);
  CHECK(ds.size() == 5);
  CHECK(same(ds[2], gen_scene(spec, 102)));
  const auto b = stack({ds[0], ds[1], ds[2]});
  CHECK(b.images.shape() == Shape{3, 3, 32, 48});
  CHECK(b.labels.n == 3);
  CHECK(b.labels.at(1, 5, 7) == ds[1].labels.at(0, 5, 7));
  CHECK(b.images.at(2, 1, 4, 4) == ds[2].image.at(0, 1, 4, 4));
  SceneSpec other = spec;
  other.width = 32;
  CHECK_THROWS_AS(stack({ds[0], gen_scene(other, 0)}), ShapeError);
  CHECK_THROWS_AS(stack({}), ValueError);
}

TEST_CASE("PPM and PGM round trips") {
  const auto dir = scratch("io");
  const auto s = gen_scene(SceneSpec{}, 4);
  write_ppm((dir / "a.ppm").string(), s.image);
  const auto back = read_ppm((dir / "a.ppm").string());
  CHECK(back.shape() == s.image.shape());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::fabs(back[i] - s.image[i]) <= 0.5f / 255.0f + 1e-6f);
  // Second round trip is exact: values are already on the 8-bit grid.
  write_ppm((dir / "b.ppm").string(), back);
  const auto again = read_ppm((dir / "b.ppm").string());
  CHECK(std::equal(again.data().begin(), again.data().end(), back.data().begin()));

  LabelMap lm = s.labels;
  lm.at(0, 0, 0) = kIgnoreLabel;
  write_pgm((dir / "l.pgm").string(), lm);
  CHECK(read_pgm((dir / "l.pgm").string()) == lm);

  std::ofstream((dir / "bad.ppm").string()) << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm((dir / "bad.ppm").string()), FormatError);
  CHECK_THROWS_AS(read_pgm((dir / "missing.pgm").string()), IoError);
  fs::remove_all(dir);
}

TEST_CASE("plane normalization") {
  const float v[4] = {-1.0f, 0.0f, 1.0f, 3.0f};
  const auto n = normalize_plane(v, 4);
  CHECK(n[0] == 0);
  CHECK(n[3] == 255);
  CHECK(n[1] == 64);  // 1/4 of the range
  const float c[3] = {2.0f, 2.0f, 2.0f};
  for (auto x : normalize_plane(c, 3)) CHECK(x == 0);
}

TEST_CASE("manifest round trip resolves relative paths") {
  const auto dir = scratch("manifest");
  SceneSpec spec;
  spec.height = spec.width = 16;
  std::vector<ManifestEntry> entries;
  fs::create_directories(dir / "scenes");
  for (int i = 0; i < 3; ++i) {
    const auto s = gen_scene(spec, i);
    const std::string img = "scenes/" + std::to_string(i) + ".ppm";
    const std::string lab = "scenes/" + std::to_string(i) + ".pgm";
    write_ppm((dir / img).string(), s.image);
    write_pgm((dir / lab).string(), s.labels);
    entries.push_back({i, img, lab});
  }
  write_manifest((dir / "manifest.txt").string(), entries);
  const auto back = read_manifest((dir / "manifest.txt").string());
  REQUIRE(back.size() == 3);
  CHECK(back[1].index == 1);
  CHECK(fs::exists(back[1].image));
  const auto samples = load_manifest_samples((dir / "manifest.txt").string());
  REQUIRE(samples.size() == 3);
  CHECK(samples[2].labels == gen_scene(spec, 2).labels);

  std::ofstream((dir / "broken.txt").string()) << "index,image,label\n0,only-two\n";
  CHECK_THROWS_AS(read_manifest((dir / "broken.txt").string()), FormatError);
  fs::remove_all(dir);
}
