#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ebim/image.hpp"

namespace ebim {

// Convolution with stride 1 and zero padding k/2. Weights are laid out
// [ky][kx][in][out] so the innermost loop runs over output channels.
struct Conv2D {
  int kernel = 3;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

struct ReLU {};
struct MaxPool2 {};
struct Flatten {};

// Weights laid out [in][out].
struct Dense {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

using Layer = std::variant<Conv2D, ReLU, MaxPool2, Flatten, Dense>;

struct Prediction {
  std::vector<double> logits;
  std::vector<double> probabilities;
  int label = 0;
  double certainty = 0.0;
};

// Softmax with max subtraction; label is the first maximal index.
Prediction predict_from_logits(std::span<const double> logits);

struct InputGradient {
  Shape shape;
  std::vector<double> data;
};

inline constexpr double kProbabilityFloor = 1e-12;

// Layered classifier. Immutable once built; every evaluation method is const
// and safe to call concurrently.
class Model {
 public:
  Model(Shape input, std::vector<Layer> layers);

  // conv 3x3x16 -> relu -> maxpool -> conv 3x3x32 -> relu -> maxpool -> flatten -> dense K,
  // He-uniform initialised from `seed`.
  static Model reference(Shape input, int classes, std::uint64_t seed);

  // Layers described by `canonical architecture` text, all weights zero.
  static Model from_architecture(const std::string& text);

  const Shape& input_shape() const noexcept { return input_; }
  int num_classes() const noexcept { return classes_; }
  std::span<const Layer> layers() const noexcept { return layers_; }
  std::span<Layer> mutable_layers() noexcept { return layers_; }

  std::string architecture() const;
  std::size_t parameter_count() const;

  std::vector<double> logits(const Image& x) const;

 private:
  Shape input_;
  int classes_ = 0;
  std::vector<Layer> layers_;
};

Prediction forward(const Model& m, const Image& x);

// Cross-entropy -log p_y with p_y floored at kProbabilityFloor.
double loss(const Model& m, const Image& x, int label);

InputGradient input_gradient(const Model& m, const Image& x, int label);

// One forward and backward pass; the attack loop needs all three.
struct Evaluation {
  Prediction prediction;
  double loss = 0.0;
  InputGradient gradient;
};
Evaluation evaluate(const Model& m, const Image& x, int label);

// ReLU on/off bits and max-pool winner indices; two inputs with equal patterns
// lie in the same linear region of the network.
std::vector<std::uint32_t> activation_pattern(const Model& m, const Image& x);

// Flat parameter vector in layer order (weights then bias per layer).
std::vector<double> flatten_parameters(const Model& m);
void assign_parameters(Model& m, std::span<const double> params);

struct Sample {
  Image image;
  int label = 0;
};
using Dataset = std::vector<Sample>;

struct TrainOptions {
  int epochs = 10;
  double learning_rate = 0.05;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct TrainResult {
  Model model;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;  // NaN when no test set was given
  std::vector<double> epoch_loss;
};

// Plain minibatch SGD. Parameters are kept at float32 precision after each
// update so that the weight file round trip is exact.
TrainResult train(const Model& init, const Dataset& train_set, const Dataset& test_set, const TrainOptions& opts);

double accuracy(const Model& m, const Dataset& data);

// "NNW1" weight file: magic, u32 LE architecture length, architecture text,
// then every parameter as little-endian float32 in layer order.
std::vector<unsigned char> encode_weights(const Model& m);
Model decode_weights(std::span<const unsigned char> bytes);
void save_weights(const Model& m, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path);

}  // namespace ebim
