#include "ebim/strength.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "ebim/error.hpp"

namespace ebim {

namespace {

void check_unit_range(const Plane& p) {
  for (double v : p.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_argument, "strength value outside [0,1]");
  }
}

void check_binary(const StrengthMap& e) {
  if (!e.is_binary()) throw Error(Errc::invalid_argument, "morphology requires a binary map (values in {0,1})");
}

}  // namespace

StrengthMap::StrengthMap(int width, int height, double fill) : Plane(width, height, fill) { check_unit_range(*this); }

StrengthMap::StrengthMap(int width, int height, std::vector<double> data) : Plane(width, height, std::move(data)) {
  check_unit_range(*this);
}

StrengthMap::StrengthMap(Plane plane) : Plane(std::move(plane)) { check_unit_range(*this); }

bool StrengthMap::is_binary() const {
  return std::all_of(data().begin(), data().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

double EntropyMap::max_attainable() const {
  const int side = 2 * radius + 1;
  return std::log2(double(std::min(bins, side * side)));
}

int intensity_bin(double v, int bins) noexcept {
  const int b = int(std::clamp(v, 0.0, 1.0) * bins);
  return std::min(b, bins - 1);
}

EntropyMap local_entropy(const GrayMap& gray, int radius, int bins) {
  if (radius < 1) throw Error(Errc::invalid_argument, "entropy radius must be >= 1");
  if (bins < 2) throw Error(Errc::invalid_argument, "entropy bins must be >= 2");
  const int w = gray.width();
  const int h = gray.height();
  std::vector<int> binned(gray.size());
  for (std::size_t i = 0; i < binned.size(); ++i) binned[i] = intensity_bin(gray.data()[i], bins);

  EntropyMap out{Plane(w, h), radius, bins};
  std::vector<int> hist(std::size_t(bins), 0);
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - radius);
    const int y1 = std::min(h - 1, y + radius);
    std::fill(hist.begin(), hist.end(), 0);
    // slide the window along the row: add the entering column, drop the leaving one
    auto add_column = [&](int x, int delta) {
      for (int yy = y0; yy <= y1; ++yy) hist[std::size_t(binned[std::size_t(yy) * w + x])] += delta;
    };
    for (int x = 0; x <= std::min(w - 1, radius); ++x) add_column(x, +1);
    for (int x = 0; x < w; ++x) {
      if (x > 0) {
        if (x + radius < w) add_column(x + radius, +1);
        if (x - radius - 1 >= 0) add_column(x - radius - 1, -1);
      }
      const int x0 = std::max(0, x - radius);
      const int x1 = std::min(w - 1, x + radius);
      const double n = double((x1 - x0 + 1) * (y1 - y0 + 1));
      double s = 0.0;
      for (int c : hist) {
        if (c == 0) continue;
        const double p = c / n;
        s -= p * std::log2(p);
      }
      out.values(x, y) = s;
    }
  }
  return out;
}

StrengthMap phi(const EntropyMap& s, Binarize mode) { return binarize(s.values, mode.threshold); }

StrengthMap phi(const EntropyMap& s, NormalizeGamma mode) {
  if (!(mode.gamma > 0.0)) throw Error(Errc::invalid_argument, "gamma must be > 0");
  const double smax = s.max_attainable();
  StrengthMap e(s.values.width(), s.values.height());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const double r = std::clamp(s.values.data()[i] / smax, 0.0, 1.0);
    e.data()[i] = r == 0.0 ? 0.0 : std::pow(r, mode.gamma);
  }
  return e;
}

StrengthMap binarize(const Plane& values, double threshold) {
  StrengthMap e(values.width(), values.height());
  for (std::size_t i = 0; i < e.size(); ++i) e.data()[i] = values.data()[i] > threshold ? 1.0 : 0.0;
  return e;
}

double kappa(const Plane& e) { return e.size() == 0 ? 0.0 : e.sum() / double(e.size()); }

StrengthMap scale_brightness(const StrengthMap& e, double factor) {
  if (!(factor >= 0.0 && factor <= 1.0)) throw Error(Errc::invalid_argument, "brightness factor outside [0,1]");
  StrengthMap out = e;
  for (double& v : out.data()) v *= factor;
  return out;
}

namespace {

// Separable running max (dilate) or min (erode) over a (2r+1)-wide window.
StrengthMap morph(const StrengthMap& e, int radius, double outside, bool is_dilate) {
  check_binary(e);
  if (radius < 1) throw Error(Errc::invalid_argument, "structuring element radius must be >= 1");
  if (outside != 0.0 && outside != 1.0) throw Error(Errc::invalid_argument, "outside value must be 0 or 1");
  const int w = e.width();
  const int h = e.height();
  auto pick = [is_dilate](double a, double b) { return is_dilate ? std::max(a, b) : std::min(a, b); };
  Plane tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = is_dilate ? 0.0 : 1.0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        acc = pick(acc, (xx < 0 || xx >= w) ? outside : e(xx, y));
      }
      tmp(x, y) = acc;
    }
  }
  StrengthMap out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = is_dilate ? 0.0 : 1.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        // a row beyond the border is entirely `outside`
        acc = pick(acc, (yy < 0 || yy >= h) ? outside : tmp(x, yy));
      }
      out(x, y) = acc;
    }
  }
  return out;
}

}  // namespace

StrengthMap dilate(const StrengthMap& e, int radius, double outside) { return morph(e, radius, outside, true); }
StrengthMap erode(const StrengthMap& e, int radius, double outside) { return morph(e, radius, outside, false); }

// ---- Perlin noise -------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Gradient2 {
  double gx;
  double gy;
};

Gradient2 lattice_gradient(std::uint64_t seed, int octave, int ix, int iy) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ std::uint64_t(std::uint32_t(octave)));
  h = splitmix(h ^ std::uint64_t(std::uint32_t(ix)));
  h = splitmix(h ^ (std::uint64_t(std::uint32_t(iy)) << 32));
  const double angle = double(h >> 11) * 0x1.0p-53 * 6.283185307179586;
  return {std::cos(angle), std::sin(angle)};
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double gradient_noise(double x, double y, std::uint64_t seed, int octave) {
  const int x0 = int(std::floor(x));
  const int y0 = int(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto corner = [&](int cx, int cy) {
    const Gradient2 g = lattice_gradient(seed, octave, x0 + cx, y0 + cy);
    return g.gx * (fx - cx) + g.gy * (fy - cy);
  };
  const double u = smoothstep(fx);
  const double v = smoothstep(fy);
  const double top = corner(0, 0) + u * (corner(1, 0) - corner(0, 0));
  const double bottom = corner(0, 1) + u * (corner(1, 1) - corner(0, 1));
  return top + v * (bottom - top);
}

}  // namespace

StrengthMap perlin_map(int width, int height, int cell_size, int octaves, std::uint64_t seed) {
  if (width < 1 || height < 1) throw Error(Errc::invalid_argument, "degenerate noise map dimensions");
  if (cell_size < 2) throw Error(Errc::invalid_argument, "cell size must be >= 2");
  if (octaves < 1) throw Error(Errc::invalid_argument, "octaves must be >= 1");
  Plane raw(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double amplitude = 1.0;
      double cell = cell_size;
      double acc = 0.0;
      for (int o = 0; o < octaves; ++o) {
        acc += amplitude * gradient_noise((x + 0.5) / cell, (y + 0.5) / cell, seed, o);
        amplitude *= 0.5;
        cell *= 0.5;
      }
      raw(x, y) = acc;
    }
  }
  const double lo = raw.min();
  const double hi = raw.max();
  if (!(hi > lo)) throw Error(Errc::invalid_argument, "degenerate noise map dimensions: raw noise is constant");
  StrengthMap out(width, height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::clamp((raw.data()[i] - lo) / (hi - lo), 0.0, 1.0);
  }
  return out;
}

// ---- kappa adjustment ----------------------------------------------------------

namespace {

constexpr int kBisectionCap = 64;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Brightening knob t in (0,1]: v -> min(1, v / t). t = 1 is the identity and
// t -> 0 saturates every nonzero pixel.
StrengthMap brighten(const StrengthMap& e, double t) {
  StrengthMap out = e;
  for (double& v : out.data()) v = std::min(1.0, v / t);
  return out;
}

double nonzero_fraction(const Plane& e) {
  const auto n = std::count_if(e.data().begin(), e.data().end(), [](double v) { return v > 0.0; });
  return double(n) / double(e.size());
}

}  // namespace

StrengthMap adjust_to_kappa(const StrengthMap& e, double target, double tol, KappaMethod method) {
  if (!(target > 0.0 && target <= 1.0)) throw Error(Errc::invalid_argument, "target kappa must lie in (0,1]");
  if (!(tol >= 0.0)) throw Error(Errc::invalid_argument, "tolerance must be >= 0");
  const double k0 = kappa(e);
  const double reach = nonzero_fraction(e);
  if (k0 == 0.0 || target > reach + tol) {
    throw Error(Errc::unreachable_kappa, "target kappa " + fmt(target) + " unreachable: achievable range is (0, " +
                                             fmt(reach) + "]");
  }

  if (method == KappaMethod::threshold) {
    // kappa of (e > t) is nonincreasing in t; bisect t over [0, 1].
    double lo = 0.0;
    double hi = 1.0;
    StrengthMap best = binarize(e, lo);
    for (int i = 0; i < kBisectionCap; ++i) {
      const double mid = 0.5 * (lo + hi);
      StrengthMap b = binarize(e, mid);
      const double k = kappa(b);
      if (std::abs(k - target) < std::abs(kappa(best) - target)) best = b;
      if (std::abs(k - target) <= tol) return b;
      (k > target ? lo : hi) = mid;
    }
    if (std::abs(kappa(best) - target) <= tol) return best;
    throw Error(Errc::unreachable_kappa, "target kappa " + fmt(target) + " unreachable by thresholding: closest is " +
                                             fmt(kappa(best)));
  }

  if (target <= k0) {
    StrengthMap out = scale_brightness(e, target / k0);
    if (std::abs(kappa(out) - target) <= tol) return out;
  }
  // kappa(brighten(e, t)) is nonincreasing in t; bisect t over (0, 1].
  double lo = 0.0;
  double hi = 1.0;
  for (int i = 0; i < kBisectionCap; ++i) {
    const double mid = 0.5 * (lo + hi);
    StrengthMap b = brighten(e, mid);
    const double k = kappa(b);
    if (std::abs(k - target) <= tol) return b;
    (k > target ? lo : hi) = mid;
  }
  throw Error(Errc::unreachable_kappa, "target kappa " + fmt(target) + " not reached within tolerance " + fmt(tol));
}

// ---- EMAP1 ----------------------------------------------------------------

std::vector<unsigned char> encode_map(const Plane& p) {
  const std::string header = "EMAP1\n" + std::to_string(p.width()) + " " + std::to_string(p.height()) + "\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + 8 * p.size());
  for (double v : p.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back((bits >> (8 * i)) & 0xff);
  }
  return out;
}

Plane decode_map(std::span<const unsigned char> bytes) {
  const std::string magic = "EMAP1\n";
  if (bytes.size() < magic.size() || !std::equal(magic.begin(), magic.end(), bytes.begin())) {
    throw ParseError("bad magic: expected EMAP1", 0);
  }
  std::size_t pos = magic.size();
  auto read_int = [&](char terminator) {
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1'000'000) throw ParseError("map dimension too large", start);
      ++pos;
    }
    if (pos == start || pos >= bytes.size() || bytes[pos] != terminator) {
      throw ParseError("malformed map header", pos);
    }
    ++pos;
    return int(v);
  };
  const int w = read_int(' ');
  const int h = read_int('\n');
  if (w <= 0 || h <= 0) throw ParseError("malformed map header: zero dimension", magic.size());
  const std::size_t need = std::size_t(w) * std::size_t(h) * 8;
  if (bytes.size() - pos != need) {
    throw ParseError("map payload length mismatch: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(bytes.size() - pos),
                     pos);
  }
  std::vector<double> data(std::size_t(w) * std::size_t(h));
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= std::uint64_t(bytes[pos + 8 * i + k]) << (8 * k);
    data[i] = std::bit_cast<double>(bits);
  }
  return Plane(w, h, std::move(data));
}

void save_map(const Plane& p, const std::filesystem::path& path) {
  const auto bytes = encode_map(p);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

Plane load_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_map(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

Image strength_to_image(const StrengthMap& e) { return from_plane(e); }

Image entropy_to_image(const EntropyMap& s) {
  const double smax = s.max_attainable();
  Plane scaled(s.values.width(), s.values.height());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    scaled.data()[i] = std::clamp(s.values.data()[i] / smax, 0.0, 1.0);
  }
  return from_plane(scaled);
}

}  // namespace ebim
