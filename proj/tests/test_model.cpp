#include <doctest.h>

#include <cmath>
#include <string>

#include "ebim/error.hpp"
#include "ebim/model.hpp"
#include "support.hpp"

using namespace ebim;
using namespace ebim::testing;

namespace {

// 1x1x1 input, logits = bias (the input is multiplied by zero weights).
Model bias_model(std::vector<double> bias) {
  Dense d;
  d.inputs = 1;
  d.outputs = int(bias.size());
  d.weights.assign(bias.size(), 0.0);
  d.bias = std::move(bias);
  return Model({1, 1, 1}, {Flatten{}, d});
}

// Two classes on 4x4: class 1 brighter in the left half.
Dataset toy_dataset(Rng& rng, int n) {
  Dataset out;
  for (int i = 0; i < n; ++i) {
    const int label = i % 2;
    Image img({4, 4, 1});
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) {
        const double base = (x < 2) == (label == 1) ? 0.75 : 0.25;
        img(x, y) = std::clamp(base + 0.1 * (rng.uniform() - 0.5), 0.0, 1.0);
      }
    }
    out.push_back({img, label});
  }
  return out;
}

}  // namespace

TEST_CASE("softmax") {
  auto p = predict_from_logits(std::vector<double>{0.0, 0.0});
  CHECK(p.probabilities[0] == 0.5);
  CHECK(p.probabilities[1] == 0.5);
  CHECK(p.label == 0);
  p = predict_from_logits(std::vector<double>{std::log(3.0), 0.0});
  CHECK(p.probabilities[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p.probabilities[1] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p.certainty == p.probabilities[0]);

  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(7);
    for (double& v : z) v = 20.0 * rng.normal();
    const auto a = predict_from_logits(z);
    double sum = 0.0;
    for (double v : a.probabilities) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    const double c = 50.0 * rng.normal();
    for (double& v : z) v += c;
    const auto b = predict_from_logits(z);
    for (std::size_t k = 0; k < z.size(); ++k) CHECK(std::abs(a.probabilities[k] - b.probabilities[k]) <= 1e-12);
  }
}

TEST_CASE("cross-entropy loss") {
  const Image x({1, 1, 1}, 0.5);
  CHECK(loss(bias_model({800.0, 0.0}), x, 0) == 0.0);
  CHECK(loss(bias_model({0.0, 0.0}), x, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(loss(bias_model({std::log(99.0), 0.0}), x, 0) == doctest::Approx(-std::log(0.99)).epsilon(1e-12));
  CHECK(-std::log(0.99) == doctest::Approx(0.01005).epsilon(1e-3));
  // the probability floor keeps the loss finite
  CHECK(loss(bias_model({0.0, 800.0}), x, 0) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(loss(bias_model({0.0, 0.0}), x, 2), Error);
  CHECK_THROWS_AS(loss(bias_model({0.0, 0.0}), x, -1), Error);
}

TEST_CASE("model validation") {
  CHECK_THROWS_AS(bias_model({1.0}), Error);
  CHECK_THROWS_AS(bias_model({std::nan(""), 0.0}), Error);
  Dense d{3, 2, std::vector<double>(6, 0.0), {0.0, 0.0}};
  CHECK_THROWS_AS(Model({2, 2, 1}, {Flatten{}, d}), Error);
  CHECK_THROWS_AS(Model({2, 2, 1}, {ReLU{}}), Error);
  CHECK_THROWS_AS(Model({2, 2, 1}, {}), Error);
  const Model m = Model::reference({8, 8, 1}, 3, 1);
  CHECK_THROWS_AS(forward(m, Image({9, 8, 1})), Error);
  CHECK_THROWS_AS(forward(m, Image({8, 8, 3})), Error);
}

TEST_CASE("linear softmax gradient has the closed form (p - onehot) W^T") {
  Rng rng(9);
  const Shape s{3, 2, 3};
  for (int t = 0; t < 10; ++t) {
    const Model m = linear_softmax(s, 4, rng);
    const Dense& d = std::get<Dense>(m.layers()[1]);
    const Image x = random_image(s, rng);
    const int y = int(rng.below(4));
    const Prediction p = forward(m, x);
    const InputGradient g = input_gradient(m, x, y);
    CHECK(g.shape == s);
    for (int i = 0; i < d.inputs; ++i) {
      double expect = 0.0;
      for (int k = 0; k < 4; ++k) expect += (p.probabilities[k] - (k == y ? 1.0 : 0.0)) * d.weights[i * 4 + k];
      CHECK(g.data[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("input gradient matches central finite differences on 8x8x1") {
  Rng rng(17);
  double worst = 0.0;
  int compared = 0;
  for (int t = 0; t < 20; ++t) {
    const Model m = Model::reference({8, 8, 1}, 4, 100 + t);
    const Image x = random_image({8, 8, 1}, rng, 0.01, 0.99);
    const auto r = finite_difference_check(m, x, int(rng.below(4)), rng, 0);
    worst = std::max(worst, r.max_rel_error);
    compared += r.coordinates;
  }
  CHECK(compared > 20 * 60);
  CHECK(worst <= 1e-4);
}

TEST_CASE("gradient shape equals input shape") {
  Rng rng(4);
  for (Shape s : {Shape{8, 8, 1}, Shape{12, 8, 3}, Shape{5, 7, 3}}) {
    const Model m = Model::reference(s, 3, 2);
    CHECK(input_gradient(m, random_image(s, rng), 1).shape == s);
    CHECK(input_gradient(m, random_image(s, rng), 1).data.size() == s.size());
  }
}

TEST_CASE("relu subgradient at zero is zero and pooling ties route to the first element") {
  // Dense(4 -> 2) after ReLU on a 2x2 input containing exact zeros.
  Dense d{4, 2, {1, -1, 2, -2, 3, -3, 4, -4}, {0, 0}};
  const Model relu_model({2, 2, 1}, {ReLU{}, Flatten{}, d});
  const Image x({2, 2, 1}, std::vector<double>{0.0, 0.5, 0.0, 0.25});
  const auto g = input_gradient(relu_model, x, 0);
  CHECK(g.data[0] == 0.0);
  CHECK(g.data[2] == 0.0);
  CHECK(g.data[1] != 0.0);

  Dense d1{1, 2, {1, -1}, {0, 0}};
  const Model pool_model({2, 2, 1}, {MaxPool2{}, Flatten{}, d1});
  const Image tie({2, 2, 1}, std::vector<double>{0.7, 0.7, 0.7, 0.7});
  const auto gp = input_gradient(pool_model, tie, 0);
  CHECK(gp.data[0] != 0.0);
  CHECK(gp.data[1] == 0.0);
  CHECK(gp.data[2] == 0.0);
  CHECK(gp.data[3] == 0.0);
}

TEST_CASE("training") {
  Rng rng(21);
  const Dataset data = toy_dataset(rng, 40);
  TrainOptions o;
  o.epochs = 50;
  o.learning_rate = 0.1;
  o.batch_size = 8;
  o.seed = 3;
  const Model init = Model::reference({4, 4, 1}, 2, 3);
  const TrainResult r = train(init, data, {}, o);
  CHECK(r.train_accuracy >= 0.99);
  CHECK(r.epoch_loss.size() == 50);
  CHECK(std::isnan(r.test_accuracy));

  const TrainResult again = train(init, data, {}, o);
  CHECK(flatten_parameters(again.model) == flatten_parameters(r.model));

  o.epochs = 0;
  CHECK(flatten_parameters(train(init, data, {}, o).model) == flatten_parameters(init));

  CHECK_THROWS_AS(train(init, {}, {}, o), Error);
  Dataset bad = data;
  bad[0].label = 2;
  CHECK_THROWS_AS(train(init, bad, {}, o), Error);
}

TEST_CASE("weights round trip") {
  Rng rng(8);
  const Model m = Model::reference({10, 10, 3}, 5, 12);
  const auto blob = encode_weights(m);
  const Model back = decode_weights(blob);
  CHECK(back.architecture() == m.architecture());
  CHECK(flatten_parameters(back) == flatten_parameters(m));
  for (int t = 0; t < 5; ++t) {
    const Image x = random_image({10, 10, 3}, rng);
    const auto a = m.logits(x), b = back.logits(x);
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[k]) <= 1e-6);
  }

  const Model fa = Model::from_architecture(m.architecture());
  CHECK(fa.architecture() == m.architecture());
  CHECK(fa.parameter_count() == m.parameter_count());
}

TEST_CASE("weights decoding errors") {
  const Model m = Model::reference({8, 8, 1}, 3, 1);
  auto blob = encode_weights(m);

  auto bad = blob;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_weights(bad), doctest::Contains("magic"), ParseError);

  auto truncated = blob;
  truncated.resize(blob.size() - 10);
  const std::size_t header = blob.size() - m.parameter_count() * 4;
  const std::string expect = "expected " + std::to_string(m.parameter_count() * 4) + " bytes, found " +
                             std::to_string(truncated.size() - header);
  CHECK_THROWS_WITH_AS(decode_weights(truncated), doctest::Contains(expect.c_str()), ParseError);

  auto longer = blob;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_weights(longer), ParseError);
  CHECK_THROWS_AS(decode_weights(std::vector<unsigned char>{}), ParseError);
}
