#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pidnet/losses.hpp"
#include "support.hpp"

using namespace pidnet;
using testing::random_tensor;

namespace {

LabelMap random_labels(int n, int h, int w, int k, std::uint64_t seed, double ignore_p = 0.0) {
  Rng rng(seed);
  LabelMap m(n, h, w);
  for (auto& v : m.data) {
    v = static_cast<std::uint8_t>(rng.uniform_int(0, k - 1));
    if (rng.uniform() < ignore_p) v = kIgnoreLabel;
  }
  return m;
}

// Per-pixel -log softmax at the true class, straight from the definition.
std::vector<double> pixel_ce(const Tensor<double>& logits, const LabelMap& labels) {
  const Shape s = logits.shape();
  std::vector<double> out;
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        double z = 0;
        for (int c = 0; c < s.c; ++c) z += std::exp(logits.at(n, c, y, x));
        const int t = labels.at(n, y, x);
        out.push_back(t == kIgnoreLabel ? NAN : std::log(z) - logits.at(n, t, y, x));
      }
  return out;
}

double value(const Var<double>& v) { return v.value().item(); }

}  // namespace

TEST_CASE("cross entropy: hand-computed two pixel case") {
  Tensor<double> z(Shape{1, 2, 1, 2});
  z.at(0, 0, 0, 0) = 1.0;
  z.at(0, 1, 0, 0) = 2.0;
  z.at(0, 0, 0, 1) = 0.0;
  z.at(0, 1, 0, 1) = 3.0;
  LabelMap y(1, 1, 2);
  y.at(0, 0, 0) = 0;
  y.at(0, 0, 1) = 1;
  // -log(e / (e + e^2)) = log(1 + e); -log(e^3 / (1 + e^3)) = log(1 + e^-3)
  const double expect = 0.5 * (std::log1p(std::exp(1.0)) + std::log1p(std::exp(-3.0)));
  CHECK(value(cross_entropy(Var<double>(z), y).loss) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("cross entropy: uniform logits, perfect predictions and ignore") {
  const Var<double> flat(Tensor<double>(Shape{2, 5, 3, 3}, 0.3));
  const auto y = random_labels(2, 3, 3, 5, 1);
  CHECK(value(cross_entropy(flat, y).loss) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  Tensor<double> sharp(Shape{2, 5, 3, 3}, -30.0);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) sharp.at(n, y.at(n, i, j), i, j) = 30.0;
  CHECK(value(cross_entropy(Var<double>(sharp), y).loss) < 1e-20);

  const LabelMap all_ignored(2, 3, 3, kIgnoreLabel);
  const auto r = cross_entropy(flat, all_ignored);
  CHECK(r.all_ignored);
  CHECK(value(r.loss) == 0.0);

  LabelMap bad = y;
  bad.at(0, 0, 0) = 7;
  CHECK_THROWS_AS(cross_entropy(flat, bad), ValueError);
  CHECK_THROWS_AS(cross_entropy(flat, LabelMap(2, 3, 4)), ShapeError);
}

TEST_CASE("cross entropy skips ignored pixels") {
  const auto z = random_tensor<double>(Shape{1, 3, 4, 4}, 2, -2, 2);
  const auto y = random_labels(1, 4, 4, 3, 3, 0.3);
  const auto ce = pixel_ce(z, y);
  double sum = 0;
  int count = 0;
  for (double v : ce)
    if (!std::isnan(v)) sum += v, ++count;
  REQUIRE(count > 0);
  CHECK(value(cross_entropy(Var<double>(z), y).loss) == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("OHEM matches a sorted-selection oracle") {
  for (double threshold : {0.9, 0.5, 0.2, 0.05}) {
    for (std::uint64_t seed = 10; seed < 16; ++seed) {
      const auto z = random_tensor<double>(Shape{1, 3, 4, 8}, seed, -3, 3);
      const auto y = random_labels(1, 4, 8, 3, seed + 100, 0.1);
      const auto ce = pixel_ce(z, y);
      std::vector<double> valid, hard;
      for (double v : ce) {
        if (std::isnan(v)) continue;
        valid.push_back(v);
        if (std::exp(-v) < threshold) hard.push_back(v);
      }
      const std::size_t min_kept = std::max<std::size_t>(1, valid.size() / 16);
      double expect;
      if (hard.size() >= min_kept) {
        expect = std::accumulate(hard.begin(), hard.end(), 0.0) / hard.size();
      } else {
        std::sort(valid.rbegin(), valid.rend());
        expect = std::accumulate(valid.begin(), valid.begin() + min_kept, 0.0) / min_kept;
      }
      OhemOptions opt;
      opt.threshold = threshold;
      CHECK(value(ohem_cross_entropy(Var<double>(z), y, opt).loss) ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("OHEM edge cases") {
  const auto z = random_tensor<double>(Shape{2, 4, 5, 5}, 20, -2, 2);
  const auto y = random_labels(2, 5, 5, 4, 21);
  OhemOptions all;
  all.threshold = 1.0 + 1e-9;
  CHECK(value(ohem_cross_entropy(Var<double>(z), y, all).loss) ==
        doctest::Approx(value(cross_entropy(Var<double>(z), y).loss)).epsilon(1e-12));

  Tensor<double> sharp(Shape{2, 4, 5, 5}, -40.0);
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) sharp.at(n, y.at(n, i, j), i, j) = 40.0;
  CHECK(value(ohem_cross_entropy(Var<double>(sharp), y).loss) < 1e-20);

  OhemOptions bad;
  bad.min_kept_fraction = 1.5;
  CHECK_THROWS_AS(ohem_cross_entropy(Var<double>(z), y, bad), ValueError);
}

TEST_CASE("weighted BCE: zero logits, saturation and a 3:1 toy") {
  const BoundaryMap zeros(1, 4, 4, 0);
  const Var<double> flat(Tensor<double>(Shape{1, 1, 4, 4}, 0.0));
  CHECK(value(weighted_bce(flat, zeros)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(positive_weight(zeros) == 1.0);

  const BoundaryMap ones(1, 4, 4, 1);
  CHECK(value(weighted_bce(Var<double>(Tensor<double>(Shape{1, 1, 4, 4}, 40.0)), ones)) < 1e-15);

  // One positive, three negatives: w+ = 3.
  BoundaryMap gt(1, 2, 2, 0);
  gt.at(0, 0, 0) = 1;
  const double xs[4] = {0.5, -1.0, 2.0, 0.3};
  Tensor<double> z(Shape{1, 1, 2, 2});
  for (int k = 0; k < 4; ++k) z[k] = xs[k];
  auto softplus = [](double v) { return std::log1p(std::exp(v)); };
  const double expect =
      (3.0 * softplus(-xs[0]) + softplus(xs[1]) + softplus(xs[2]) + softplus(xs[3])) / 4.0;
  CHECK(positive_weight(gt) == 3.0);
  CHECK(value(weighted_bce(Var<double>(z), gt)) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("weighted BCE positive weight is clamped") {
  BoundaryMap sparse(1, 20, 20, 0);
  sparse.at(0, 3, 3) = 1;
  CHECK(positive_weight(sparse) == 50.0);
  BoundaryMap dense(1, 4, 4, 1);
  dense.at(0, 0, 0) = 0;
  CHECK(positive_weight(dense) == 1.0);
}

TEST_CASE("boundary-aware CE indicator cases") {
  const auto z = random_tensor<double>(Shape{1, 3, 3, 3}, 30, -2, 2);
  const auto y = random_labels(1, 3, 3, 3, 31);
  const Var<double> seg(z);
  const double t = 0.8;
  const Var<double> below(Tensor<double>(Shape{1, 1, 3, 3}, std::log(t / (1 - t)) - 1e-3));
  const Var<double> above(Tensor<double>(Shape{1, 1, 3, 3}, 5.0));
  CHECK(value(bas_loss(seg, y, below, t)) == 0.0);
  CHECK(std::fabs(value(bas_loss(seg, y, above, t)) - value(cross_entropy(seg, y).loss)) <= 1e-6);

  // Mixed mask: pixels with sigmoid(b) > t are averaged by hand.
  const auto b = random_tensor<double>(Shape{1, 1, 3, 3}, 32, -1, 4);
  const auto ce = pixel_ce(z, y);
  double sum = 0;
  int count = 0;
  for (int k = 0; k < 9; ++k) {
    if (1.0 / (1.0 + std::exp(-b[k])) > t) sum += ce[k], ++count;
  }
  REQUIRE(count > 0);
  REQUIRE(count < 9);
  CHECK(value(bas_loss(seg, y, Var<double>(b), t)) == doctest::Approx(sum / count).epsilon(1e-12));
}

TEST_CASE("boundary-aware CE stays below the plain CE on average") {
  // Averaged over random masks the selected-pixel mean matches the full mean,
  // so it cannot systematically exceed it.
  const auto z = random_tensor<double>(Shape{1, 3, 8, 8}, 40, -2, 2);
  const auto y = random_labels(1, 8, 8, 3, 41);
  const double full = value(cross_entropy(Var<double>(z), y).loss);
  double acc = 0;
  const int trials = 400;
  for (int k = 0; k < trials; ++k) {
    const auto b = random_tensor<double>(Shape{1, 1, 8, 8}, 1000 + k, -3, 3);
    acc += value(bas_loss(Var<double>(z), y, Var<double>(b), 0.8));
  }
  CHECK(acc / trials <= full * 1.05);
}

TEST_CASE("composite loss arithmetic") {
  const Var<double> one(Tensor<double>(Shape{1, 1, 1, 1}, 1.0));
  CHECK(value(composite_loss(one, one, one, one, LossWeights{}).total) == 22.4);

  const Var<double> l0(Tensor<double>(Shape{1, 1, 1, 1}, 0.7));
  const Var<double> l2(Tensor<double>(Shape{1, 1, 1, 1}, 1.3));
  const Var<double> l3(Tensor<double>(Shape{1, 1, 1, 1}, 0.2));
  LossWeights w;
  w.lambda1 = 0;
  const double a = value(composite_loss(l0, one, l2, l3, w).total);
  const double b = value(
      composite_loss(l0, Var<double>(Tensor<double>(Shape{1, 1, 1, 1}, 99.0)), l2, l3, w).total);
  CHECK(a == b);

  // Linear in each weight.
  LossWeights w1, w2, w3;
  w1.lambda3 = 1.0;
  w2.lambda3 = 3.0;
  w3.lambda3 = 5.0;
  const double t1 = value(composite_loss(l0, one, l2, l3, w1).total);
  const double t2 = value(composite_loss(l0, one, l2, l3, w2).total);
  const double t3 = value(composite_loss(l0, one, l2, l3, w3).total);
  CHECK(t3 - t2 == doctest::Approx(t2 - t1).epsilon(1e-12));
  CHECK(t2 - t1 == doctest::Approx(2 * 0.2).epsilon(1e-12));

  LossWeights neg;
  neg.lambda2 = -1;
  CHECK_THROWS_AS(composite_loss(l0, one, l2, l3, neg), ValueError);
  LossWeights bad_t;
  bad_t.boundary_threshold = 1.0;
  CHECK_THROWS_AS(bad_t.validate(), ValueError);
}

TEST_CASE("losses are finite and non-negative on random inputs") {
  for (std::uint64_t seed = 50; seed < 60; ++seed) {
    const Var<double> z(random_tensor<double>(Shape{2, 4, 6, 6}, seed, -8, 8));
    const Var<double> b(random_tensor<double>(Shape{2, 1, 6, 6}, seed + 1, -8, 8));
    const auto y = random_labels(2, 6, 6, 4, seed + 2, 0.1);
    const auto gt = extract_boundary_gt(y, 1);
    for (double v : {value(cross_entropy(z, y).loss), value(ohem_cross_entropy(z, y).loss),
                     value(weighted_bce(b, gt)), value(bas_loss(z, y, b, 0.8))}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("boundary ground truth of two vertical halves") {
  LabelMap halves(1, 4, 4, 0);
  for (int i = 0; i < 4; ++i)
    for (int j = 2; j < 4; ++j) halves.at(0, i, j) = 1;
  const auto r0 = extract_boundary_gt(halves, 0);
  int marked = 0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(r0.at(0, i, j) == (j == 1 || j == 2 ? 1 : 0));
      marked += r0.at(0, i, j);
    }
  CHECK(marked == 8);
  const auto r1 = extract_boundary_gt(halves, 1);
  for (auto v : r1.data) CHECK(v == 1);

  CHECK(extract_boundary_gt(LabelMap(2, 5, 5, 3), 2) == LabelMap(2, 5, 5, 0));
}

TEST_CASE("boundary ground truth ignores the ignore label and class names") {
  LabelMap m(1, 3, 5, 0);
  for (int i = 0; i < 3; ++i) m.at(0, i, 4) = kIgnoreLabel;
  CHECK(extract_boundary_gt(m, 0) == LabelMap(1, 3, 5, 0));

  const auto y = random_labels(2, 9, 11, 4, 60, 0.05);
  LabelMap permuted = y;
  const std::uint8_t perm[4] = {2, 0, 3, 1};
  for (auto& v : permuted.data)
    if (v != kIgnoreLabel) v = perm[v];
  CHECK(extract_boundary_gt(y, 2) == extract_boundary_gt(permuted, 2));
}

TEST_CASE("dilation and max-pool downsampling") {
  BoundaryMap dot(1, 7, 7, 0);
  dot.at(0, 3, 3) = 1;
  const auto d2 = dilate(dot, 2);
  int n = 0;
  for (auto v : d2.data) n += v;
  CHECK(n == 25);
  CHECK(dilate(dot, 0) == dot);
  const auto ds = downsample_max(d2, 2);
  CHECK(ds.h == 4);
  CHECK(ds.w == 4);
  CHECK(ds.at(0, 0, 0) == 1);  // covers (1,1)
  CHECK(ds.at(0, 3, 3) == 0);  // covers (6,6)
  CHECK_THROWS_AS(dilate(dot, -1), ValueError);
}

TEST_CASE("loss gradients match central differences") {
  const auto y = random_labels(2, 5, 5, 3, 70, 0.1);
  auto z = Var<double>::parameter(random_tensor<double>(Shape{2, 3, 5, 5}, 71, -2, 2));
  auto b = Var<double>::parameter(random_tensor<double>(Shape{2, 1, 5, 5}, 72, -2, 3));
  const auto gt = extract_boundary_gt(y, 1);
  SUBCASE("cross entropy") {
    CHECK(testing::gradcheck({z}, [&] { return cross_entropy(z, y).loss; }, 73).max_rel_error <= 1e-4);
  }
  SUBCASE("OHEM") {
    OhemOptions opt;
    opt.threshold = 0.5;
    CHECK(testing::gradcheck({z}, [&] { return ohem_cross_entropy(z, y, opt).loss; }, 74)
              .max_rel_error <= 1e-4);
  }
  SUBCASE("weighted BCE") {
    CHECK(testing::gradcheck({b}, [&] { return weighted_bce(b, gt); }, 75).max_rel_error <= 1e-4);
  }
  SUBCASE("boundary-aware CE") {
    // Perturbations small enough not to flip the indicator.
    CHECK(testing::gradcheck({z}, [&] { return bas_loss(z, y, b, 0.8); }, 76).max_rel_error <= 1e-4);
    Tape<double> tape;
    Var<double> l;
    {
      TapeScope<double> scope(&tape);
      l = bas_loss(z, y, b, 0.8);
    }
    b.zero_grad();
    tape.backward(l);
    CHECK_FALSE(b.has_grad());
  }
  SUBCASE("composite") {
    CHECK(testing::gradcheck({z, b}, [&] {
      return composite_loss(cross_entropy(z, y).loss, weighted_bce(b, gt),
                            ohem_cross_entropy(z, y).loss, bas_loss(z, y, b, 0.8), LossWeights{})
          .total;
    }, 77).max_rel_error <= 1e-4);
  }
}
