#include <doctest.h>

#include <cmath>

#include "ebim/attack.hpp"
#include "ebim/error.hpp"
#include "support.hpp"

using namespace ebim;
using namespace ebim::testing;

namespace {

AttackConfig targeted(int label, double step = 0.01, int iters = 200) {
  AttackConfig c;
  c.mode = AttackMode::targeted;
  c.target_label = label;
  c.stepsize = step;
  c.max_iterations = iters;
  return c;
}

// Textured left half (noise), flat right half.
Image half_textured(Shape s, Rng& rng) {
  Image img(s, 0.5);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width / 2; ++x) {
      for (int c = 0; c < s.channels; ++c) img(x, y, c) = double(rng.below(256)) / 255.0;
    }
  }
  return img;
}

void check_invariants(const AttackResult& r, const AttackConfig& cfg, const Model& m) {
  for (double v : r.adversarial.data()) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  CHECK(r.perturbation.linf <= std::min(cfg.linf_budget, r.iterations * cfg.stepsize) + 1e-12);
  const Prediction p = forward(m, r.adversarial);
  CHECK(p.probabilities == r.final_prediction.probabilities);
  CHECK(r.success == attack_succeeded(cfg, r.original_label, p));
  CHECK(r.original_label == forward(m, r.original).label);
}

}  // namespace

TEST_CASE("fgsm") {
  Rng rng(1);
  const Shape s{6, 5, 3};
  const Model m = linear_softmax(s, 3, rng);
  const Image x = random_image(s, rng, 0.1, 0.9);

  const AttackResult zero = fgsm(m, x, 0.0);
  CHECK(zero.adversarial == x);
  CHECK_FALSE(zero.success);

  const double eps = 0.05;
  const AttackResult r = fgsm(m, x, eps);
  const Prediction p = forward(m, x);
  const Dense& d = std::get<Dense>(m.layers()[1]);
  for (int i = 0; i < d.inputs; ++i) {
    double g = 0.0;
    for (int k = 0; k < 3; ++k) g += (p.probabilities[k] - (k == p.label ? 1.0 : 0.0)) * d.weights[i * 3 + k];
    const double expect = g > 0 ? eps : (g < 0 ? -eps : 0.0);
    CHECK(r.adversarial.data()[i] - x.data()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(r.success == (r.final_prediction.label != p.label));

  for (int t = 0; t < 20; ++t) {
    const Image y = random_image(s, rng);
    const double e = rng.uniform() * 0.3;
    const AttackResult f = fgsm(m, y, e);
    CHECK(f.perturbation.linf <= e + 1e-15);
    for (double v : f.adversarial.data()) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK_THROWS_AS(fgsm(m, x, -0.1), Error);
  CHECK_THROWS_AS(fgsm(m, x, 1.5), Error);
}

TEST_CASE("bim stops immediately when the target already holds") {
  Rng rng(2);
  const Shape s{4, 4, 1};
  Model m = linear_softmax(s, 3, rng);
  std::get<Dense>(m.mutable_layers()[1]).bias = {40.0, 0.0, 0.0};
  const Image x = random_image(s, rng);
  const AttackResult r = bim(m, x, targeted(0));
  CHECK(r.iterations == 0);
  CHECK(r.adversarial == x);
  CHECK(r.success);
}

TEST_CASE("bim reaches the target and respects its bounds") {
  Rng rng(3);
  const Shape s{12, 12, 1};
  for (int t = 0; t < 6; ++t) {
    const Model m = Model::reference(s, 4, 50 + t);
    const Image x = random_image(s, rng);
    const int target = (forward(m, x).label + 1) % 4;
    AttackConfig cfg = targeted(target, 0.01, 400);
    const AttackResult r = bim(m, x, cfg);
    check_invariants(r, cfg, m);
    if (r.success) CHECK(r.final_prediction.probabilities[target] >= 0.99);

    const Model lin = linear_softmax(s, 4, rng);
    const int lt = (forward(lin, x).label + 1) % 4;
    const AttackConfig lc = targeted(lt, 0.01, 400);
    const AttackResult lr = bim(lin, x, lc);
    CHECK(lr.success);
    CHECK(lr.final_prediction.probabilities[lt] >= 0.99);
    check_invariants(lr, lc, lin);

    cfg.linf_budget = 0.02;
    check_invariants(bim(m, x, cfg), cfg, m);

    AttackConfig un;
    un.mode = AttackMode::untargeted;
    un.stepsize = 0.01;
    un.max_iterations = 400;
    const AttackResult u = bim(m, x, un);
    check_invariants(u, un, m);
    if (u.success) CHECK(u.final_prediction.label != u.original_label);
  }
}

TEST_CASE("attack config validation") {
  const Model m = Model::reference({8, 8, 1}, 3, 1);
  const Image x({8, 8, 1}, 0.5);
  AttackConfig c = targeted(3);
  CHECK_THROWS_AS(bim(m, x, c), Error);
  c = targeted(1);
  c.certainty = 1.0;
  CHECK_THROWS_AS(bim(m, x, c), Error);
  c = targeted(1);
  c.stepsize = 0.0;
  CHECK_THROWS_AS(bim(m, x, c), Error);
  c = targeted(1);
  c.max_iterations = 0;
  CHECK_THROWS_AS(bim(m, x, c), Error);
  c = targeted(1);
  c.linf_budget = 0.0;
  CHECK_THROWS_AS(bim(m, x, c), Error);
  CHECK_THROWS_AS(bim(m, Image({9, 8, 1}, 0.5), targeted(1)), Error);
  CHECK_THROWS_AS(localized_bim(m, x, targeted(1), StrengthMap(7, 8, 1.0)), Error);
}

TEST_CASE("localized bim") {
  Rng rng(4);
  const Shape s{10, 10, 3};
  const Model m = Model::reference(s, 3, 9);
  for (int t = 0; t < 5; ++t) {
    const Image x = random_image(s, rng);
    const int target = (forward(m, x).label + 1) % 3;
    const AttackConfig cfg = targeted(target, 0.005, 150);

    const AttackResult a = bim(m, x, cfg);
    const AttackResult b = localized_bim(m, x, cfg, StrengthMap(10, 10, 1.0));
    CHECK(a.adversarial == b.adversarial);
    CHECK(a.iterations == b.iterations);

    StrengthMap left(10, 10);
    for (int y = 0; y < 10; ++y) {
      for (int xx = 0; xx < 5; ++xx) left(xx, y) = 1.0;
    }
    const AttackResult l = localized_bim(m, x, cfg, left);
    check_invariants(l, cfg, m);
    CHECK(l.iterations > 0);
    for (int y = 0; y < 10; ++y) {
      for (int xx = 5; xx < 10; ++xx) {
        for (int c = 0; c < 3; ++c) REQUIRE(l.adversarial(xx, y, c) == x(xx, y, c));
      }
    }

    StrengthMap soft(10, 10);
    for (double& v : soft.data()) v = rng.coin() ? rng.uniform() : 0.0;
    const AttackResult so = localized_bim(m, x, cfg, soft);
    check_invariants(so, cfg, m);
    for (int y = 0; y < 10; ++y) {
      for (int xx = 0; xx < 10; ++xx) {
        for (int c = 0; c < 3; ++c) {
          const double delta = std::abs(so.adversarial(xx, y, c) - x(xx, y, c));
          REQUIRE(delta <= so.iterations * cfg.stepsize * soft(xx, y) + 1e-12);
        }
      }
    }

    const AttackResult again = localized_bim(m, x, cfg, soft);
    CHECK(again.adversarial == so.adversarial);
    CHECK(again.iterations == so.iterations);
  }
  try {
    localized_bim(m, random_image(s, rng), targeted(1), StrengthMap(10, 10));
    FAIL("zero map must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_mask);
  }
}

TEST_CASE("one small localized step lowers the target loss") {
  Rng rng(5);
  const Shape s{8, 8, 1};
  int decreased = 0, trials = 0;
  for (int t = 0; t < 200; ++t) {
    const Model m = Model::reference(s, 3, 1000 + t);
    const Image x = random_image(s, rng, 0.05, 0.95);
    StrengthMap e(8, 8);
    for (double& v : e.data()) v = rng.coin() ? 1.0 : 0.0;
    if (kappa(e) == 0.0) continue;
    AttackConfig cfg = targeted(int(rng.below(3)), 1e-4, 1);
    cfg.certainty = 0.999999;
    if (forward(m, x).probabilities[std::size_t(cfg.target_label)] >= cfg.certainty) continue;
    const AttackResult r = localized_bim(m, x, cfg, e);
    ++trials;
    decreased += loss(m, r.adversarial, cfg.target_label) < loss(m, x, cfg.target_label);
  }
  CHECK(trials >= 190);
  CHECK(double(decreased) >= 0.99 * trials);
}

TEST_CASE("ebim") {
  Rng rng(6);
  const Shape s{24, 24, 1};
  const Model m = Model::reference(s, 3, 77);

  try {
    ebim_attack(m, Image(s, 0.4), targeted(1));
    FAIL("constant image must be rejected");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::zero_mask);
    CHECK(std::string(e.what()).find("lower the threshold") != std::string::npos);
  }

  for (int t = 0; t < 4; ++t) {
    const Image x = half_textured(s, rng);
    const StrengthMap e = entropy_strength_map(x);
    CHECK(kappa(e) > 0.0);
    CHECK(kappa(e) < 1.0);
    const int target = (forward(m, x).label + 1) % 3;
    const AttackConfig cfg = targeted(target, 0.01, 500);
    const AttackResult r = ebim_attack(m, x, cfg);
    CHECK(r.method == "ebim");
    CHECK(r.strength_map == e);
    check_invariants(r, cfg, m);
    for (int y = 0; y < 24; ++y) {
      for (int xx = 0; xx < 24; ++xx) {
        if (e(xx, y) == 0.0) REQUIRE(r.adversarial(xx, y) == x(xx, y));
      }
    }
    // the flat far-right columns are never touched
    for (int y = 0; y < 24; ++y) CHECK(e(23, y) == 0.0);
  }
}
