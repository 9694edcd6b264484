#pragma once

#include <string>

#include "ebim/image.hpp"
#include "ebim/model.hpp"
#include "ebim/strength.hpp"

namespace ebim {

enum class AttackMode { targeted, untargeted };

struct AttackConfig {
  AttackMode mode = AttackMode::targeted;
  int target_label = 0;
  double certainty = 0.99;  // tau, required target probability (targeted only)
  double stepsize = 0.004;  // per-iteration change of a pixel at full strength
  int max_iterations = 1000;
  double linf_budget = 1.0;  // cap on the total per-pixel change
};

void validate(const AttackConfig& cfg, int num_classes);

struct AttackResult {
  std::string method;
  Image original;
  Image adversarial;
  int original_label = 0;
  int iterations = 0;
  Prediction final_prediction;
  bool success = false;
  Distances perturbation;
  StrengthMap strength_map;
};

// Untargeted single step x' = clip(x + eps * sign(grad J(x, f(x)))).
AttackResult fgsm(const Model& m, const Image& x, double eps);

// Iterated sign-gradient steps with [0,1] and l-inf clipping after every step.
// Targeted mode descends on J(x, target) until the target certainty reaches tau;
// untargeted mode ascends on J(x, f(x)) until the label changes.
AttackResult bim(const Model& m, const Image& x, const AttackConfig& cfg);

// As bim, but the step of pixel (i,j) is scaled by e(i,j) on every channel.
// Pixels with e = 0 are never touched.
AttackResult localized_bim(const Model& m, const Image& x, const AttackConfig& cfg, const StrengthMap& e);

struct EntropyParams {
  int radius = kDefaultEntropyRadius;
  int bins = kDefaultEntropyBins;
  double threshold = kDefaultEntropyThreshold;
  GrayWeights gray = GrayWeights::mean;
};

// phi(local_entropy(gray(x))) with binarization at params.threshold.
StrengthMap entropy_strength_map(const Image& x, const EntropyParams& params = {});

// Entropy-based iterative method: localized_bim with the entropy strength map.
AttackResult ebim_attack(const Model& m, const Image& x, const AttackConfig& cfg, const EntropyParams& params = {});

// Success as defined for the config, evaluated on a prediction.
bool attack_succeeded(const AttackConfig& cfg, int original_label, const Prediction& p);

}  // namespace ebim
