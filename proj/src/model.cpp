#include "ebim/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <sstream>

#include "ebim/error.hpp"
#include "ebim/rng.hpp"

namespace ebim {

namespace {

struct Dims {
  int h = 0;
  int w = 0;
  int c = 0;
  std::size_t size() const { return std::size_t(h) * std::size_t(w) * std::size_t(c); }
};

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

Dims output_dims(const Layer& layer, Dims in) {
  return std::visit(
      overloaded{
          [&](const Conv2D& l) -> Dims {
            if (l.kernel < 1 || l.kernel % 2 == 0) throw Error(Errc::invalid_argument, "conv kernel must be odd");
            if (in.c != l.in_channels) {
              throw Error(Errc::shape_mismatch, "conv expects " + std::to_string(l.in_channels) +
                                                    " input channels, got " + std::to_string(in.c));
            }
            return {in.h, in.w, l.out_channels};
          },
          [&](const ReLU&) { return in; },
          [&](const MaxPool2&) -> Dims {
            if (in.h < 2 || in.w < 2) throw Error(Errc::shape_mismatch, "max-pool input smaller than 2x2");
            return {in.h / 2, in.w / 2, in.c};
          },
          [&](const Flatten&) { return Dims{1, 1, int(in.size())}; },
          [&](const Dense& l) -> Dims {
            if (in.size() != std::size_t(l.inputs)) {
              throw Error(Errc::shape_mismatch, "dense expects " + std::to_string(l.inputs) + " inputs, got " +
                                                    std::to_string(in.size()));
            }
            return {1, 1, l.outputs};
          },
      },
      layer);
}

struct Tape {
  std::vector<Dims> dims;                           // dims[i] = input of layer i; back() = logits
  std::vector<std::vector<double>> acts;            // same indexing
  std::vector<std::vector<std::uint32_t>> argmax;   // pool layers only
};

void conv_forward(const Conv2D& l, const Dims& d, const double* in, double* out) {
  const int pad = l.kernel / 2;
  const int co_n = l.out_channels;
  const int ci_n = l.in_channels;
  for (int oy = 0; oy < d.h; ++oy) {
    for (int ox = 0; ox < d.w; ++ox) {
      double* o = out + (std::size_t(oy) * d.w + ox) * co_n;
      std::copy(l.bias.begin(), l.bias.end(), o);
      for (int ky = 0; ky < l.kernel; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= d.h) continue;
        for (int kx = 0; kx < l.kernel; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= d.w) continue;
          const double* px = in + (std::size_t(iy) * d.w + ix) * ci_n;
          const double* wk = l.weights.data() + std::size_t(ky * l.kernel + kx) * ci_n * co_n;
          for (int ci = 0; ci < ci_n; ++ci) {
            const double v = px[ci];
            if (v == 0.0) continue;
            const double* wr = wk + std::size_t(ci) * co_n;
            for (int co = 0; co < co_n; ++co) o[co] += v * wr[co];
          }
        }
      }
    }
  }
}

// Accumulates into grad_in (if non-null) and grad_w/grad_b (if non-null).
void conv_backward(const Conv2D& l, const Dims& d, const double* in, const double* g, double* grad_in,
                   double* grad_w, double* grad_b) {
  const int pad = l.kernel / 2;
  const int co_n = l.out_channels;
  const int ci_n = l.in_channels;
  for (int oy = 0; oy < d.h; ++oy) {
    for (int ox = 0; ox < d.w; ++ox) {
      const double* go = g + (std::size_t(oy) * d.w + ox) * co_n;
      if (grad_b) {
        for (int co = 0; co < co_n; ++co) grad_b[co] += go[co];
      }
      for (int ky = 0; ky < l.kernel; ++ky) {
        const int iy = oy + ky - pad;
        if (iy < 0 || iy >= d.h) continue;
        for (int kx = 0; kx < l.kernel; ++kx) {
          const int ix = ox + kx - pad;
          if (ix < 0 || ix >= d.w) continue;
          const std::size_t pix = (std::size_t(iy) * d.w + ix) * ci_n;
          const std::size_t wofs = std::size_t(ky * l.kernel + kx) * ci_n * co_n;
          for (int ci = 0; ci < ci_n; ++ci) {
            const double* wr = l.weights.data() + wofs + std::size_t(ci) * co_n;
            if (grad_in) {
              double acc = 0.0;
              for (int co = 0; co < co_n; ++co) acc += wr[co] * go[co];
              grad_in[pix + ci] += acc;
            }
            if (grad_w) {
              const double v = in[pix + ci];
              if (v == 0.0) continue;
              double* gw = grad_w + wofs + std::size_t(ci) * co_n;
              for (int co = 0; co < co_n; ++co) gw[co] += v * go[co];
            }
          }
        }
      }
    }
  }
}

Tape run_forward(const Model& m, std::span<const double> input) {
  Tape t;
  const auto layers = m.layers();
  t.dims.reserve(layers.size() + 1);
  t.acts.reserve(layers.size() + 1);
  t.argmax.resize(layers.size());
  Dims d{m.input_shape().height, m.input_shape().width, m.input_shape().channels};
  t.dims.push_back(d);
  t.acts.emplace_back(input.begin(), input.end());
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const Dims od = output_dims(layers[li], d);
    std::vector<double> out(od.size(), 0.0);
    const std::vector<double>& in = t.acts.back();
    std::visit(overloaded{
                   [&](const Conv2D& l) { conv_forward(l, d, in.data(), out.data()); },
                   [&](const ReLU&) {
                     for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
                   },
                   [&](const MaxPool2&) {
                     auto& am = t.argmax[li];
                     am.resize(od.size());
                     for (int oy = 0; oy < od.h; ++oy) {
                       for (int ox = 0; ox < od.w; ++ox) {
                         for (int c = 0; c < d.c; ++c) {
                           // scan order: (0,0), (0,1), (1,0), (1,1); first maximum wins
                           std::size_t best = (std::size_t(2 * oy) * d.w + 2 * ox) * d.c + c;
                           for (int dy = 0; dy < 2; ++dy) {
                             for (int dx = 0; dx < 2; ++dx) {
                               const std::size_t idx = (std::size_t(2 * oy + dy) * d.w + 2 * ox + dx) * d.c + c;
                               if (in[idx] > in[best]) best = idx;
                             }
                           }
                           const std::size_t o = (std::size_t(oy) * od.w + ox) * od.c + c;
                           out[o] = in[best];
                           am[o] = std::uint32_t(best);
                         }
                       }
                     }
                   },
                   [&](const Flatten&) { out = in; },
                   [&](const Dense& l) {
                     std::copy(l.bias.begin(), l.bias.end(), out.begin());
                     for (int i = 0; i < l.inputs; ++i) {
                       const double v = in[i];
                       if (v == 0.0) continue;
                       const double* wr = l.weights.data() + std::size_t(i) * l.outputs;
                       for (int o = 0; o < l.outputs; ++o) out[o] += v * wr[o];
                     }
                   },
               },
               layers[li]);
    t.dims.push_back(od);
    t.acts.push_back(std::move(out));
    d = od;
  }
  return t;
}

struct ParamOffsets {
  std::vector<std::size_t> weight;
  std::vector<std::size_t> bias;
  std::size_t total = 0;
};

ParamOffsets param_offsets(const Model& m) {
  ParamOffsets p;
  for (const Layer& layer : m.layers()) {
    p.weight.push_back(p.total);
    std::visit(overloaded{
                   [&](const Conv2D& l) { p.total += l.weights.size(); },
                   [&](const Dense& l) { p.total += l.weights.size(); },
                   [](const auto&) {},
               },
               layer);
    p.bias.push_back(p.total);
    std::visit(overloaded{
                   [&](const Conv2D& l) { p.total += l.bias.size(); },
                   [&](const Dense& l) { p.total += l.bias.size(); },
                   [](const auto&) {},
               },
               layer);
  }
  return p;
}

// Backpropagates `g` (gradient w.r.t. logits). Writes the input gradient when
// grad_input is non-null and accumulates parameter gradients when grad_params is.
void run_backward(const Model& m, const Tape& t, std::vector<double> g, std::vector<double>* grad_input,
                  std::vector<double>* grad_params, const ParamOffsets* offs) {
  const auto layers = m.layers();
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Dims& d = t.dims[li];
    const std::vector<double>& in = t.acts[li];
    const bool need_input = li > 0 || grad_input != nullptr;
    const bool has_params = std::holds_alternative<Conv2D>(layers[li]) || std::holds_alternative<Dense>(layers[li]);
    if (!need_input && !(has_params && grad_params)) return;
    std::vector<double> gin;
    if (need_input) gin.assign(d.size(), 0.0);
    std::visit(overloaded{
                   [&](const Conv2D& l) {
                     double* gw = grad_params ? grad_params->data() + offs->weight[li] : nullptr;
                     double* gb = grad_params ? grad_params->data() + offs->bias[li] : nullptr;
                     conv_backward(l, d, in.data(), g.data(), need_input ? gin.data() : nullptr, gw, gb);
                   },
                   [&](const ReLU&) {
                     // subgradient at 0 is 0
                     for (std::size_t i = 0; i < in.size(); ++i) gin[i] = in[i] > 0.0 ? g[i] : 0.0;
                   },
                   [&](const MaxPool2&) {
                     const auto& am = t.argmax[li];
                     for (std::size_t o = 0; o < am.size(); ++o) gin[am[o]] += g[o];
                   },
                   [&](const Flatten&) { gin = g; },
                   [&](const Dense& l) {
                     if (grad_params) {
                       double* gw = grad_params->data() + offs->weight[li];
                       double* gb = grad_params->data() + offs->bias[li];
                       for (int o = 0; o < l.outputs; ++o) gb[o] += g[o];
                       for (int i = 0; i < l.inputs; ++i) {
                         const double v = in[i];
                         if (v == 0.0) continue;
                         double* row = gw + std::size_t(i) * l.outputs;
                         for (int o = 0; o < l.outputs; ++o) row[o] += v * g[o];
                       }
                     }
                     if (need_input) {
                       for (int i = 0; i < l.inputs; ++i) {
                         const double* wr = l.weights.data() + std::size_t(i) * l.outputs;
                         double acc = 0.0;
                         for (int o = 0; o < l.outputs; ++o) acc += wr[o] * g[o];
                         gin[i] = acc;
                       }
                     }
                   },
               },
               layers[li]);
    if (!need_input) return;
    g = std::move(gin);
  }
  if (grad_input) *grad_input = std::move(g);
}

void check_input(const Model& m, const Image& x) {
  if (x.shape() != m.input_shape()) {
    throw Error(Errc::shape_mismatch,
                "input shape " + to_string(x.shape()) + " does not match model input " + to_string(m.input_shape()));
  }
}

void check_label(const Model& m, int label) {
  if (label < 0 || label >= m.num_classes()) {
    throw Error(Errc::invalid_argument, "label " + std::to_string(label) + " outside [0, " +
                                            std::to_string(m.num_classes()) + ")");
  }
}

// Loss and its gradient w.r.t. the logits.
double loss_from_prediction(const Prediction& p, int label, std::vector<double>* dlogits) {
  const double mx = *std::max_element(p.logits.begin(), p.logits.end());
  double z = 0.0;
  for (double v : p.logits) z += std::exp(v - mx);
  const double log_py = p.logits[std::size_t(label)] - mx - std::log(z);
  const double floor = std::log(kProbabilityFloor);
  if (dlogits) dlogits->assign(p.logits.size(), 0.0);
  if (log_py < floor) return -floor;
  if (dlogits) {
    for (std::size_t k = 0; k < p.logits.size(); ++k) (*dlogits)[k] = p.probabilities[k];
    (*dlogits)[std::size_t(label)] -= 1.0;
  }
  return -log_py;
}

double round_to_float(double v) { return double(float(v)); }

}  // namespace

Prediction predict_from_logits(std::span<const double> logits) {
  if (logits.empty()) throw Error(Errc::invalid_argument, "empty logits");
  Prediction p;
  p.logits.assign(logits.begin(), logits.end());
  const double mx = *std::max_element(logits.begin(), logits.end());
  p.probabilities.resize(logits.size());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p.probabilities[k] = std::exp(logits[k] - mx);
    z += p.probabilities[k];
  }
  for (double& v : p.probabilities) v /= z;
  p.label = int(std::max_element(p.probabilities.begin(), p.probabilities.end()) - p.probabilities.begin());
  p.certainty = p.probabilities[std::size_t(p.label)];
  return p;
}

Model::Model(Shape input, std::vector<Layer> layers) : input_(input), layers_(std::move(layers)) {
  if (input.width <= 0 || input.height <= 0 || input.channels <= 0) {
    throw Error(Errc::invalid_argument, "invalid model input shape");
  }
  Dims d{input.height, input.width, input.channels};
  for (const Layer& l : layers_) {
    std::visit(overloaded{
                   [](const Conv2D& c) {
                     if (c.weights.size() != std::size_t(c.kernel * c.kernel) * c.in_channels * c.out_channels ||
                         c.bias.size() != std::size_t(c.out_channels)) {
                       throw Error(Errc::shape_mismatch, "conv weight tensor has wrong size");
                     }
                   },
                   [](const Dense& c) {
                     if (c.weights.size() != std::size_t(c.inputs) * c.outputs || c.bias.size() != std::size_t(c.outputs)) {
                       throw Error(Errc::shape_mismatch, "dense weight tensor has wrong size");
                     }
                   },
                   [](const auto&) {},
               },
               l);
    d = output_dims(l, d);
  }
  if (layers_.empty() || d.h != 1 || d.w != 1 || d.c < 2) {
    throw Error(Errc::shape_mismatch, "model must end in a flat output with at least 2 classes");
  }
  classes_ = d.c;
  for (double v : flatten_parameters(*this)) {
    if (!std::isfinite(v)) throw Error(Errc::invalid_argument, "model weights must be finite");
  }
}

Model Model::reference(Shape input, int classes, std::uint64_t seed) {
  Rng rng(seed);
  auto he = [&](std::vector<double>& w, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& v : w) v = round_to_float((2.0 * rng.uniform() - 1.0) * limit);
  };
  Conv2D c1{3, input.channels, 16, std::vector<double>(9 * input.channels * 16), std::vector<double>(16, 0.0)};
  he(c1.weights, 9 * input.channels);
  Conv2D c2{3, 16, 32, std::vector<double>(9 * 16 * 32), std::vector<double>(32, 0.0)};
  he(c2.weights, 9 * 16);
  const int flat = (input.height / 2 / 2) * (input.width / 2 / 2) * 32;
  Dense fc{flat, classes, std::vector<double>(std::size_t(flat) * classes), std::vector<double>(classes, 0.0)};
  he(fc.weights, flat);
  return Model(input, {c1, ReLU{}, MaxPool2{}, c2, ReLU{}, MaxPool2{}, Flatten{}, fc});
}

std::string Model::architecture() const {
  std::ostringstream os;
  os << "input " << input_.width << ' ' << input_.height << ' ' << input_.channels << '\n';
  for (const Layer& l : layers_) {
    std::visit(overloaded{
                   [&](const Conv2D& c) { os << "conv " << c.kernel << ' ' << c.in_channels << ' ' << c.out_channels << '\n'; },
                   [&](const ReLU&) { os << "relu\n"; },
                   [&](const MaxPool2&) { os << "maxpool 2\n"; },
                   [&](const Flatten&) { os << "flatten\n"; },
                   [&](const Dense& d) { os << "dense " << d.inputs << ' ' << d.outputs << '\n'; },
               },
               l);
  }
  return os.str();
}

Model Model::from_architecture(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  Shape input;
  bool have_input = false;
  std::vector<Layer> layers;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    auto fail = [&]() { return Error(Errc::format, "bad architecture line: '" + line + "'"); };
    if (kind == "input") {
      if (!(ls >> input.width >> input.height >> input.channels)) throw fail();
      have_input = true;
    } else if (kind == "conv") {
      Conv2D c;
      if (!(ls >> c.kernel >> c.in_channels >> c.out_channels) || c.kernel <= 0 || c.in_channels <= 0 ||
          c.out_channels <= 0 || c.kernel > 15 || c.in_channels > 4096 || c.out_channels > 4096) {
        throw fail();
      }
      c.weights.assign(std::size_t(c.kernel * c.kernel) * c.in_channels * c.out_channels, 0.0);
      c.bias.assign(std::size_t(c.out_channels), 0.0);
      layers.emplace_back(std::move(c));
    } else if (kind == "relu") {
      layers.emplace_back(ReLU{});
    } else if (kind == "maxpool") {
      int k = 0;
      if (!(ls >> k) || k != 2) throw fail();
      layers.emplace_back(MaxPool2{});
    } else if (kind == "flatten") {
      layers.emplace_back(Flatten{});
    } else if (kind == "dense") {
      Dense d;
      if (!(ls >> d.inputs >> d.outputs) || d.inputs <= 0 || d.outputs <= 0 || d.inputs > (1 << 24) ||
          d.outputs > 65536) {
        throw fail();
      }
      d.weights.assign(std::size_t(d.inputs) * d.outputs, 0.0);
      d.bias.assign(std::size_t(d.outputs), 0.0);
      layers.emplace_back(std::move(d));
    } else {
      throw fail();
    }
  }
  if (!have_input) throw Error(Errc::format, "architecture lacks an input line");
  return Model(input, std::move(layers));
}

std::size_t Model::parameter_count() const { return param_offsets(*this).total; }

std::vector<double> Model::logits(const Image& x) const {
  check_input(*this, x);
  Tape t = run_forward(*this, x.data());
  return std::move(t.acts.back());
}

Prediction forward(const Model& m, const Image& x) { return predict_from_logits(m.logits(x)); }

double loss(const Model& m, const Image& x, int label) {
  check_label(m, label);
  return loss_from_prediction(forward(m, x), label, nullptr);
}

Evaluation evaluate(const Model& m, const Image& x, int label) {
  check_input(m, x);
  check_label(m, label);
  Tape t = run_forward(m, x.data());
  Evaluation e;
  e.prediction = predict_from_logits(t.acts.back());
  std::vector<double> dlogits;
  e.loss = loss_from_prediction(e.prediction, label, &dlogits);
  e.gradient.shape = x.shape();
  run_backward(m, t, std::move(dlogits), &e.gradient.data, nullptr, nullptr);
  return e;
}

InputGradient input_gradient(const Model& m, const Image& x, int label) { return evaluate(m, x, label).gradient; }

std::vector<std::uint32_t> activation_pattern(const Model& m, const Image& x) {
  check_input(m, x);
  const Tape t = run_forward(m, x.data());
  std::vector<std::uint32_t> bits;
  const auto layers = m.layers();
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (std::holds_alternative<ReLU>(layers[li])) {
      const auto& in = t.acts[li];
      std::uint32_t word = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        if (in[i] > 0.0) word |= 1u << (i % 32);
        if (i % 32 == 31 || i + 1 == in.size()) {
          bits.push_back(word);
          word = 0;
        }
      }
    } else if (std::holds_alternative<MaxPool2>(layers[li])) {
      bits.insert(bits.end(), t.argmax[li].begin(), t.argmax[li].end());
    }
  }
  return bits;
}

std::vector<double> flatten_parameters(const Model& m) {
  std::vector<double> out;
  for (const Layer& layer : m.layers()) {
    std::visit(overloaded{
                   [&](const Conv2D& l) {
                     out.insert(out.end(), l.weights.begin(), l.weights.end());
                     out.insert(out.end(), l.bias.begin(), l.bias.end());
                   },
                   [&](const Dense& l) {
                     out.insert(out.end(), l.weights.begin(), l.weights.end());
                     out.insert(out.end(), l.bias.begin(), l.bias.end());
                   },
                   [](const auto&) {},
               },
               layer);
  }
  return out;
}

void assign_parameters(Model& m, std::span<const double> params) {
  if (params.size() != m.parameter_count()) {
    throw Error(Errc::shape_mismatch, "expected " + std::to_string(m.parameter_count()) + " parameters, got " +
                                          std::to_string(params.size()));
  }
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& dst) {
    std::copy_n(params.begin() + std::ptrdiff_t(pos), dst.size(), dst.begin());
    pos += dst.size();
  };
  for (Layer& layer : m.mutable_layers()) {
    std::visit(overloaded{
                   [&](Conv2D& l) {
                     take(l.weights);
                     take(l.bias);
                   },
                   [&](Dense& l) {
                     take(l.weights);
                     take(l.bias);
                   },
                   [](auto&) {},
               },
               layer);
  }
}

double accuracy(const Model& m, const Dataset& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::size_t hit = 0;
  for (const Sample& s : data) hit += forward(m, s.image).label == s.label;
  return double(hit) / double(data.size());
}

TrainResult train(const Model& init, const Dataset& train_set, const Dataset& test_set, const TrainOptions& opts) {
  if (train_set.empty()) throw Error(Errc::invalid_argument, "training set is empty");
  if (opts.epochs < 0 || opts.batch_size < 1 || !(opts.learning_rate > 0.0)) {
    throw Error(Errc::invalid_argument, "invalid training options");
  }
  for (const Dataset* ds : {&train_set, &test_set}) {
    for (const Sample& s : *ds) {
      check_input(init, s.image);
      check_label(init, s.label);
    }
  }

  TrainResult result{init, 0.0, 0.0, {}};
  Model& m = result.model;
  const ParamOffsets offs = param_offsets(m);
  std::vector<double> params = flatten_parameters(m);
  std::vector<double> grad(offs.total);
  std::vector<std::size_t> order(train_set.size());
  Rng rng(opts.seed);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(opts.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(opts.batch_size));
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& s = train_set[order[i]];
        const Tape t = run_forward(m, s.image.data());
        const Prediction p = predict_from_logits(t.acts.back());
        std::vector<double> dlogits;
        epoch_loss += loss_from_prediction(p, s.label, &dlogits);
        run_backward(m, t, std::move(dlogits), nullptr, &grad, &offs);
      }
      const double scale = opts.learning_rate / double(end - start);
      for (std::size_t k = 0; k < params.size(); ++k) params[k] = round_to_float(params[k] - scale * grad[k]);
      assign_parameters(m, params);
    }
    result.epoch_loss.push_back(epoch_loss / double(order.size()));
  }
  result.train_accuracy = accuracy(m, train_set);
  result.test_accuracy = accuracy(m, test_set);
  return result;
}

// ---- NNW1 ------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'N', 'W', '1'};

void put_u32le(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

std::uint32_t get_u32le(std::span<const unsigned char> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<unsigned char> encode_weights(const Model& m) {
  std::vector<unsigned char> out(kMagic, kMagic + 4);
  const std::string arch = m.architecture();
  put_u32le(out, std::uint32_t(arch.size()));
  out.insert(out.end(), arch.begin(), arch.end());
  for (double v : flatten_parameters(m)) put_u32le(out, std::bit_cast<std::uint32_t>(float(v)));
  return out;
}

Model decode_weights(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || !std::equal(kMagic, kMagic + 4, bytes.begin())) {
    throw ParseError("bad magic: expected NNW1", 0);
  }
  if (bytes.size() < 8) throw ParseError("truncated architecture length", bytes.size());
  const std::uint32_t len = get_u32le(bytes, 4);
  if (bytes.size() - 8 < len) {
    throw ParseError("truncated architecture: expected " + std::to_string(len) + " bytes, found " +
                         std::to_string(bytes.size() - 8),
                     bytes.size());
  }
  const std::string arch(bytes.begin() + 8, bytes.begin() + 8 + len);
  Model m = Model::from_architecture(arch);
  const std::size_t count = m.parameter_count();
  const std::size_t blob = bytes.size() - 8 - len;
  if (blob != count * 4) {
    throw ParseError("weight blob length mismatch: expected " + std::to_string(count * 4) + " bytes, found " +
                         std::to_string(blob),
                     8 + len);
  }
  std::vector<double> params(count);
  for (std::size_t i = 0; i < count; ++i) {
    params[i] = double(std::bit_cast<float>(get_u32le(bytes, 8 + len + 4 * i)));
    if (!std::isfinite(params[i])) throw ParseError("non-finite weight", 8 + len + 4 * i);
  }
  assign_parameters(m, params);
  return m;
}

void save_weights(const Model& m, const std::filesystem::path& path) {
  const auto bytes = encode_weights(m);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

Model load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_weights(bytes);
}

}  // namespace ebim
