#pragma once

// Oracles and fixtures shared by the unit and acceptance tests. Everything here
// is written independently of the library internals it is compared against.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "ebim/image.hpp"
#include "ebim/model.hpp"
#include "ebim/rng.hpp"

namespace ebim::testing {

inline Image random_image(Shape s, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Image img(s);
  for (double& v : img.data()) v = lo + (hi - lo) * rng.uniform();
  return img;
}

inline Plane random_gray(int w, int h, Rng& rng) {
  Plane p(w, h);
  for (double& v : p.data()) v = rng.uniform();
  return p;
}

// Flatten -> Dense: logits = W^T x + b.
inline Model linear_softmax(Shape s, int classes, Rng& rng) {
  Dense d;
  d.inputs = int(s.size());
  d.outputs = classes;
  d.weights.resize(std::size_t(d.inputs) * classes);
  d.bias.resize(std::size_t(classes));
  for (double& w : d.weights) w = rng.normal() * 0.5;
  for (double& b : d.bias) b = rng.normal() * 0.1;
  return Model(s, {Flatten{}, d});
}

// Shannon entropy (bits) of the truncated square window around every pixel,
// computed from scratch per pixel.
inline Plane naive_local_entropy(const Plane& g, int radius, int bins) {
  Plane out(g.width(), g.height());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      std::map<int, int> hist;
      int count = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(g.height() - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(g.width() - 1, x + radius); ++xx) {
          const int b = std::min(bins - 1, int(std::floor(g(xx, yy) * bins)));
          ++hist[b];
          ++count;
        }
      }
      double s = 0.0;
      for (const auto& [bin, c] : hist) {
        const double p = double(c) / count;
        s -= p * std::log2(p);
      }
      out(x, y) = s;
    }
  }
  return out;
}

// One-tailed exact signed-rank p-value by enumerating all 2^n sign vectors of
// the nonzero |d| (midranks for ties). `greater`: P(W+ >= observed).
inline double brute_force_wilcoxon(const std::vector<double>& d, bool greater) {
  std::vector<double> a;
  for (double v : d) {
    if (v != 0.0) a.push_back(v);
  }
  const std::size_t n = a.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return std::abs(a[i]) < std::abs(a[j]); });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(a[order[j + 1]]) == std::abs(a[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = (double(i + 1) + double(j + 1)) / 2.0;
    i = j + 1;
  }
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] > 0) observed += rank[i];
  }
  std::uint64_t hits = 0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) w += rank[i];
    }
    if (greater ? w >= observed - 1e-9 : w <= observed + 1e-9) ++hits;
  }
  return double(hits) / double(total);
}

struct GradientCheck {
  double max_rel_error = 0.0;
  int coordinates = 0;  // compared
  int excluded = 0;     // skipped: a relu/pool decision changed within +-h
};

// Central finite differences on a subset of coordinates (all when
// `coordinates` <= 0), compared norm-wise: max|g - fd| / max|fd|.
inline GradientCheck finite_difference_check(const Model& m, const Image& x, int label, Rng& rng, int coordinates,
                                             double h = 1e-5) {
  const InputGradient g = input_gradient(m, x, label);
  const auto base = activation_pattern(m, x);
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  if (coordinates > 0 && std::size_t(coordinates) < idx.size()) {
    rng.shuffle(idx);
    idx.resize(std::size_t(coordinates));
  }
  GradientCheck r;
  double max_diff = 0.0, max_fd = 0.0;
  Image probe = x;
  for (std::size_t i : idx) {
    const double v = x.data()[i];
    probe.data()[i] = v + h;
    const bool same_plus = activation_pattern(m, probe) == base;
    const double jp = loss(m, probe, label);
    probe.data()[i] = v - h;
    const bool same_minus = activation_pattern(m, probe) == base;
    const double jm = loss(m, probe, label);
    probe.data()[i] = v;
    if (!same_plus || !same_minus) {
      ++r.excluded;
      continue;
    }
    const double fd = (jp - jm) / (2.0 * h);
    max_diff = std::max(max_diff, std::abs(fd - g.data[i]));
    max_fd = std::max(max_fd, std::abs(fd));
    ++r.coordinates;
  }
  r.max_rel_error = max_fd > 0.0 ? max_diff / max_fd : max_diff;
  return r;
}

}  // namespace ebim::testing
