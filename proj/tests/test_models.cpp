#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <vector>

#include "tie/nets.hpp"

using namespace tie;

namespace {

Tensor rand_input(std::size_t b, std::size_t d, Rng& rng) {
  Tensor x(Shape{b, d});
  for (double& v : x.data()) v = rng.uniform();
  return x;
}

Tensor simplex_rows(std::size_t b, std::size_t k, Rng& rng) {
  Tensor y(Shape{b, k});
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> v(k);
    for (double& x : v) x = rng.normal();
    const std::vector<double> p = softmax_row(v);
    for (std::size_t j = 0; j < k; ++j) y.at(i * k + j) = p[j];
  }
  return y;
}

}  // namespace

TEST_CASE("classifier forward is deterministic and batch-consistent",
          "[models]") {
  Rng rng(21);
  ClassifierNet clf(6, {16, 8}, 4);
  init_weights(clf, 77);
  REQUIRE(clf.num_classes() == 4);
  REQUIRE(clf.feature_dim() == 8);

  NoGradGuard ng;
  Tensor x = rand_input(5, 6, rng);
  auto out1 = clf.forward(x);
  auto out2 = clf.forward(x);
  REQUIRE(out1.logits.data() == out2.logits.data());
  REQUIRE(out1.features.shape() == Shape{5, 8});

  // each batch row equals the single-sample forward of that row
  for (std::size_t b = 0; b < 5; ++b) {
    Tensor single(Shape{1, 6});
    for (std::size_t j = 0; j < 6; ++j) single.at(j) = x.at(b * 6 + j);
    auto o = clf.forward(single);
    for (std::size_t k = 0; k < 4; ++k)
      REQUIRE(o.logits.at(k) ==
              Catch::Approx(out1.logits.at(b * 4 + k)).margin(1e-12));
  }

  REQUIRE_THROWS_WITH(clf.forward(rand_input(2, 5, rng)),
                      Catch::Matchers::ContainsSubstring("classifier_forward"));
}

TEST_CASE("fresh classifier logits are finite and near zero mean", "[models]") {
  Rng rng(22);
  ClassifierNet clf(10, {32, 16}, 5);
  init_weights(clf, 5);
  NoGradGuard ng;
  Tensor x = rand_input(64, 10, rng);
  Tensor logits = clf.forward(x).logits;
  double s = 0.0;
  for (double v : logits.data()) {
    REQUIRE(std::isfinite(v));
    s += v;
  }
  REQUIRE(std::abs(s / logits.size()) < 1.0);
}

TEST_CASE("generator output lives in the unit box", "[models]") {
  Rng rng(23);
  GeneratorNet gen(8, 3, {16, 16}, 12);
  init_weights(gen, 6);
  NoGradGuard ng;
  Tensor z = rand_input(7, 8, rng);
  Tensor y = simplex_rows(7, 3, rng);
  Tensor out = gen.forward(z, y);
  REQUIRE(out.shape() == Shape{7, 12});
  for (double v : out.data()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }

  // identical rows give identical outputs
  Tensor z2(Shape{2, 8}), y2(Shape{2, 3});
  for (std::size_t j = 0; j < 8; ++j) z2.at(j) = z2.at(8 + j) = z.at(j);
  for (std::size_t j = 0; j < 3; ++j) y2.at(j) = y2.at(3 + j) = y.at(j);
  Tensor o2 = gen.forward(z2, y2);
  for (std::size_t j = 0; j < 12; ++j)
    REQUIRE(o2.at(j) == o2.at(12 + j));
}

TEST_CASE("generator rejects off-simplex conditioning", "[models]") {
  GeneratorNet gen(4, 3, {8}, 5);
  init_weights(gen, 2);
  Tensor z(Shape{1, 4});
  REQUIRE_THROWS_WITH(
      gen.forward(z, Tensor::from_data({1, 3}, {0.5, 0.4, 0.3})),
      Catch::Matchers::ContainsSubstring("simplex"));
  REQUIRE_THROWS_WITH(
      gen.forward(z, Tensor::from_data({1, 3}, {1.2, -0.2, 0.0})),
      Catch::Matchers::ContainsSubstring("negative"));
}

TEST_CASE("generator output responds to the conditioning vector", "[models]") {
  Rng rng(24);
  GeneratorNet gen(6, 4, {32}, 9);
  init_weights(gen, 31);
  NoGradGuard ng;
  Tensor z = rand_input(1, 6, rng);
  Tensor y1 = Tensor::from_data({1, 4}, {0.7, 0.1, 0.1, 0.1});
  Tensor y2 = Tensor::from_data({1, 4}, {0.1, 0.7, 0.1, 0.1});
  Tensor a = gen.forward(z, y1);
  Tensor b = gen.forward(z, y2);
  double diff = 0.0;
  for (std::size_t j = 0; j < 9; ++j) diff += std::abs(a.at(j) - b.at(j));
  REQUIRE(diff > 1e-8);
}

TEST_CASE("weight init hits the prescribed scales", "[models]") {
  SECTION("generator weights are N(0, 0.02^2)") {
    GeneratorNet gen(32, 4, {256, 256}, 196);  // > 10^4 weights
    init_weights(gen, 91);
    double s = 0.0, s2 = 0.0;
    std::size_t count = 0;
    for (Parameter* p : gen.parameters()) {
      if (p->value.ndim() != 2 || p->value.dim(0) == 1) continue;  // skip biases
      for (double w : p->value.data()) {
        s += w;
        s2 += w * w;
        ++count;
      }
    }
    REQUIRE(count >= 10000);
    const double mean = s / count;
    const double sd = std::sqrt(s2 / count - mean * mean);
    REQUIRE(std::abs(sd - 0.02) < 0.002);  // within 10%
  }
  SECTION("classifier uses fan-in scaling and zero biases") {
    ClassifierNet clf(100, {200}, 10);
    init_weights(clf, 92);
    auto params = clf.parameters();
    // first layer weights: sigma = sqrt(2/100)
    double s2 = 0.0;
    for (double w : params[0]->value.data()) s2 += w * w;
    const double sd = std::sqrt(s2 / params[0]->value.size());
    REQUIRE(std::abs(sd - std::sqrt(0.02)) < 0.01);
    for (double b : params[1]->value.data()) REQUIRE(b == 0.0);
  }
  SECTION("seeds control reproducibility") {
    ClassifierNet a(5, {7}, 3), b(5, {7}, 3), c(5, {7}, 3);
    init_weights(a, 1);
    init_weights(b, 1);
    init_weights(c, 2);
    REQUIRE(a.parameters()[0]->value.data() == b.parameters()[0]->value.data());
    REQUIRE(a.parameters()[0]->value.data() != c.parameters()[0]->value.data());
  }
}

TEST_CASE("checkpoint round-trip reproduces forwards bitwise", "[models]") {
  Rng rng(25);
  ClassifierNet clf(12, {24, 16}, 5);
  GeneratorNet gen(8, 5, {20}, 12);
  init_weights(clf, 41);
  init_weights(gen, 42);

  NoGradGuard ng;
  Tensor x = rand_input(6, 12, rng);
  Tensor z = rand_input(6, 8, rng);
  Tensor y = simplex_rows(6, 5, rng);
  const std::vector<double> logits_before = clf.forward(x).logits.data();
  const std::vector<double> gen_before = gen.forward(z, y).data();

  CheckpointMeta meta;
  meta.seed = 123;
  meta.n = 4;
  meta.tau = 0.625;
  meta.epoch = 7;
  meta.height = 3;
  meta.width = 4;
  const std::string path = std::string(TIE_SOURCE_DIR) + "/build_ckpt_test.bin";
  save_checkpoint(path, clf, gen, meta);

  LoadedCheckpoint loaded = load_checkpoint(path);
  REQUIRE(loaded.meta.seed == 123);
  REQUIRE(loaded.meta.n == 4);
  REQUIRE(loaded.meta.tau == 0.625);
  REQUIRE(loaded.meta.epoch == 7);
  REQUIRE(loaded.meta.height == 3);
  REQUIRE(loaded.meta.width == 4);
  REQUIRE(loaded.clf.forward(x).logits.data() == logits_before);
  REQUIRE(loaded.gen.forward(z, y).data() == gen_before);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loader rejects corrupt files", "[models]") {
  const std::string path = std::string(TIE_SOURCE_DIR) + "/build_ckpt_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTACKPT";
  }
  REQUIRE_THROWS_WITH(load_checkpoint(path),
                      Catch::Matchers::ContainsSubstring("magic"));
  std::remove(path.c_str());
  REQUIRE_THROWS_WITH(load_checkpoint(path + ".missing"),
                      Catch::Matchers::ContainsSubstring("cannot open"));
}
