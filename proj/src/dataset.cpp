#include "ebim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "ebim/error.hpp"
#include "ebim/rng.hpp"

namespace ebim {

namespace {

bool inside_shape(int cls, double u, double v) {
  const double au = std::abs(u);
  const double av = std::abs(v);
  switch (cls) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return au <= 0.8 && av <= 0.8;
    case 2: {
      const double r = std::sqrt(u * u + v * v);
      return r >= 0.55 && r <= 1.0;
    }
    case 3: return av <= 0.35 && au <= 1.1;
    case 4: return au <= 0.35 && av <= 1.1;
    case 5: return (au <= 0.3 && av <= 1.0) || (av <= 0.3 && au <= 1.0);
    case 6: return (std::abs(u - v) <= 0.4 || std::abs(u + v) <= 0.4) && au <= 1.0 && av <= 1.0;
    case 7: return v >= -0.9 && v <= 0.8 && au <= 0.55 * (v + 0.9);
    case 8: return (u - 0.55) * (u - 0.55) + v * v <= 0.2 || (u + 0.55) * (u + 0.55) + v * v <= 0.2;
    case 9: return (u >= -0.9 && u <= -0.3 && av <= 1.0) || (u >= -0.9 && u <= 0.9 && v >= 0.4 && v <= 1.0);
  }
  return false;
}

double quantized(double v) { return double(quantize(v)) / 255.0; }

Image draw_sample(int cls, Rng& rng, Shape shape) {
  const double cx = (shape.width - 1) / 2.0 + (rng.uniform() * 6.0 - 3.0);
  const double cy = (shape.height - 1) / 2.0 + (rng.uniform() * 6.0 - 3.0);
  const double scale = std::min(shape.width, shape.height) * (0.25 + 0.1 * rng.uniform());
  const double background = 0.15 + 0.3 * rng.uniform();
  const double angle = rng.uniform() * 6.283185307179586;
  const double slope = 0.06 / std::max(shape.width, shape.height);
  const double foreground = background + 0.25 + 0.2 * rng.uniform();
  const double texture = 0.18;

  Image img(shape);
  for (int y = 0; y < shape.height; ++y) {
    for (int x = 0; x < shape.width; ++x) {
      const double u = (x - cx) / scale;
      const double v = (y - cy) / scale;
      const double base = background + slope * (std::cos(angle) * x + std::sin(angle) * y);
      for (int c = 0; c < shape.channels; ++c) {
        double value = base + 0.01 * (2.0 * rng.uniform() - 1.0);
        if (inside_shape(cls, u, v)) value = foreground + texture * (2.0 * rng.uniform() - 1.0);
        img(x, y, c) = quantized(value);
      }
    }
  }
  return img;
}

}  // namespace

Dataset make_synthetic_dataset(int per_class, std::uint64_t seed, Shape shape) {
  if (per_class < 1) throw Error(Errc::invalid_argument, "per_class must be >= 1");
  Rng rng(seed);
  Dataset out;
  out.reserve(std::size_t(per_class) * kSyntheticClasses);
  for (int i = 0; i < per_class; ++i) {
    for (int cls = 0; cls < kSyntheticClasses; ++cls) out.push_back({draw_sample(cls, rng, shape), cls});
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(Errc::io, "dataset directory not found: " + dir.string());
  std::vector<std::pair<int, fs::path>> class_dirs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.empty() || !std::all_of(name.begin(), name.end(), [](char c) { return c >= '0' && c <= '9'; }) ||
        name.size() > 6) {
      throw Error(Errc::format, "dataset subdirectory '" + name + "' is not an integer class label");
    }
    class_dirs.emplace_back(std::stoi(name), entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  Dataset out;
  for (const auto& [label, path] : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      const auto ext = entry.path().extension().string();
      if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out.push_back({load_image(f), label});
  }
  if (out.empty()) throw Error(Errc::invalid_argument, "dataset is empty: " + dir.string());
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::vector<int> counters;
  for (const Sample& s : data) {
    if (s.label < 0) throw Error(Errc::invalid_argument, "negative label");
    if (std::size_t(s.label) >= counters.size()) counters.resize(std::size_t(s.label) + 1, 0);
    const fs::path sub = dir / std::to_string(s.label);
    fs::create_directories(sub);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.%s", counters[std::size_t(s.label)]++, s.image.channels() == 1 ? "pgm" : "ppm");
    save_image(s.image, sub / name);
  }
}

}  // namespace ebim
