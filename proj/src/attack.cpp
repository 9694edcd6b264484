#include "ebim/attack.hpp"

#include <algorithm>
#include <cmath>

#include "ebim/error.hpp"

namespace ebim {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

AttackResult finish(std::string method, const Image& x, Image adv, int original_label, int iterations,
                    Prediction final_prediction, bool success, StrengthMap map) {
  AttackResult r;
  r.method = std::move(method);
  r.original = x;
  r.perturbation = distances(x, adv);
  r.adversarial = std::move(adv);
  r.original_label = original_label;
  r.iterations = iterations;
  r.final_prediction = std::move(final_prediction);
  r.success = success;
  r.strength_map = std::move(map);
  return r;
}

}  // namespace

void validate(const AttackConfig& cfg, int num_classes) {
  if (cfg.mode == AttackMode::targeted && (cfg.target_label < 0 || cfg.target_label >= num_classes)) {
    throw Error(Errc::invalid_argument, "target label " + std::to_string(cfg.target_label) + " outside [0, " +
                                            std::to_string(num_classes) + ")");
  }
  if (!(cfg.certainty > 0.0 && cfg.certainty < 1.0)) throw Error(Errc::invalid_argument, "certainty must lie in (0,1)");
  if (!(cfg.stepsize > 0.0)) throw Error(Errc::invalid_argument, "stepsize must be > 0");
  if (cfg.max_iterations < 1) throw Error(Errc::invalid_argument, "max_iterations must be >= 1");
  if (!(cfg.linf_budget > 0.0 && cfg.linf_budget <= 1.0)) {
    throw Error(Errc::invalid_argument, "linf budget must lie in (0,1]");
  }
}

bool attack_succeeded(const AttackConfig& cfg, int original_label, const Prediction& p) {
  if (cfg.mode == AttackMode::untargeted) return p.label != original_label;
  return p.label == cfg.target_label && p.probabilities[std::size_t(cfg.target_label)] >= cfg.certainty;
}

AttackResult fgsm(const Model& m, const Image& x, double eps) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw Error(Errc::invalid_argument, "fgsm epsilon must lie in [0,1]");
  const int original = forward(m, x).label;
  Image adv = x;
  if (eps > 0.0) {
    const InputGradient g = input_gradient(m, x, original);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      adv.data()[i] = std::clamp(x.data()[i] + eps * sign(g.data[i]), 0.0, 1.0);
    }
  }
  Prediction p = forward(m, adv);
  const bool success = p.label != original;
  return finish("fgsm", x, std::move(adv), original, 1, std::move(p), success,
                StrengthMap(x.width(), x.height(), 1.0));
}

AttackResult localized_bim(const Model& m, const Image& x, const AttackConfig& cfg, const StrengthMap& e) {
  validate(cfg, m.num_classes());
  if (x.shape() != m.input_shape()) {
    throw Error(Errc::shape_mismatch,
                "input shape " + to_string(x.shape()) + " does not match model input " + to_string(m.input_shape()));
  }
  if (e.width() != x.width() || e.height() != x.height()) {
    throw Error(Errc::shape_mismatch, "strength map is " + std::to_string(e.width()) + "x" +
                                          std::to_string(e.height()) + ", image is " + to_string(x.shape()));
  }
  if (kappa(e) == 0.0) throw Error(Errc::zero_mask, "strength map is all zero (kappa = 0)");

  const bool targeted = cfg.mode == AttackMode::targeted;
  const int channels = x.channels();
  Evaluation eval = evaluate(m, x, targeted ? cfg.target_label : 0);
  const int original = eval.prediction.label;
  const int loss_label = targeted ? cfg.target_label : original;
  if (!targeted) eval = evaluate(m, x, loss_label);

  // Targeted: x <- x - step*E*sign(grad); untargeted: x <- x + step*E*sign(grad).
  const double direction = targeted ? -1.0 : 1.0;
  Image adv = x;
  int iterations = 0;
  while (!attack_succeeded(cfg, original, eval.prediction) && iterations < cfg.max_iterations) {
    auto data = adv.data();
    for (std::size_t p = 0; p < e.size(); ++p) {
      const double strength = e.data()[p];
      if (strength == 0.0) continue;
      const double step = cfg.stepsize * strength;
      for (int k = 0; k < channels; ++k) {
        const std::size_t i = p * std::size_t(channels) + std::size_t(k);
        const double s = sign(eval.gradient.data[i]);
        if (s == 0.0) continue;
        const double orig = x.data()[i];
        const double lo = std::max(0.0, orig - cfg.linf_budget);
        const double hi = std::min(1.0, orig + cfg.linf_budget);
        data[i] = std::clamp(data[i] + direction * step * s, lo, hi);
      }
    }
    ++iterations;
    eval = evaluate(m, adv, loss_label);
  }
  const bool success = attack_succeeded(cfg, original, eval.prediction);
  return finish("localized_bim", x, std::move(adv), original, iterations, std::move(eval.prediction), success, e);
}

AttackResult bim(const Model& m, const Image& x, const AttackConfig& cfg) {
  AttackResult r = localized_bim(m, x, cfg, StrengthMap(x.width(), x.height(), 1.0));
  r.method = "bim";
  return r;
}

StrengthMap entropy_strength_map(const Image& x, const EntropyParams& params) {
  return phi(local_entropy(to_grayscale(x, params.gray), params.radius, params.bins), Binarize{params.threshold});
}

AttackResult ebim_attack(const Model& m, const Image& x, const AttackConfig& cfg, const EntropyParams& params) {
  StrengthMap e = entropy_strength_map(x, params);
  if (kappa(e) == 0.0) {
    throw Error(Errc::zero_mask, "entropy mask is empty: no pixel exceeds the entropy threshold " +
                                     std::to_string(params.threshold) + "; lower the threshold");
  }
  AttackResult r = localized_bim(m, x, cfg, e);
  r.method = "ebim";
  return r;
}

}  // namespace ebim
