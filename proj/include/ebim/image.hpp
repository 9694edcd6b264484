#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ebim {

struct Shape {
  int width = 0;
  int height = 0;
  int channels = 1;

  std::size_t pixels() const noexcept { return std::size_t(width) * std::size_t(height); }
  std::size_t size() const noexcept { return pixels() * std::size_t(channels); }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Dense w x h x c raster, row-major and channel-interleaved, values in [0,1].
class Image {
 public:
  Image() = default;
  Image(Shape shape, double fill = 0.0);
  Image(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  int width() const noexcept { return shape_.width; }
  int height() const noexcept { return shape_.height; }
  int channels() const noexcept { return shape_.channels; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }
  double& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (std::size_t(y) * std::size_t(shape_.width) + std::size_t(x)) * std::size_t(shape_.channels) +
           std::size_t(c);
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Single-channel w x h plane. Used for gray images, entropy maps and strength maps;
// the value range is enforced by the producer, not by the container.
class Plane {
 public:
  Plane() = default;
  Plane(int width, int height, double fill = 0.0);
  Plane(int width, int height, std::vector<double> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }

  double operator()(int x, int y) const noexcept { return data_[std::size_t(y) * std::size_t(width_) + std::size_t(x)]; }
  double& operator()(int x, int y) noexcept { return data_[std::size_t(y) * std::size_t(width_) + std::size_t(x)]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double min() const;
  double max() const;
  double sum() const;

  friend bool operator==(const Plane&, const Plane&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

using GrayMap = Plane;

enum class GrayWeights { mean, luminance };

// Mean of the channels by default; `luminance` uses Rec. 601 weights.
GrayMap to_grayscale(const Image& img, GrayWeights weights = GrayWeights::mean);

Image from_plane(const Plane& p);

struct Distances {
  double linf = 0.0;
  double l2 = 0.0;
  std::size_t l0 = 0;
};

inline constexpr double kL0Epsilon = 1e-12;

double linf_distance(const Image& a, const Image& b);
double l2_distance(const Image& a, const Image& b);
std::size_t l0_count(const Image& a, const Image& b);
Distances distances(const Image& a, const Image& b);

// b - a per sample, mapped affinely so the smallest difference becomes 0 and the
// largest 1. Identical images give an all-zero image.
Image contrast_difference(const Image& a, const Image& b);

// Binary PGM (P5) / PPM (P6), maxval 255.
Image load_image(const std::filesystem::path& path);
void save_image(const Image& img, const std::filesystem::path& path);
Image decode_pnm(std::span<const unsigned char> bytes);
std::vector<unsigned char> encode_pnm(const Image& img);

// 8-bit PNG, used for serving images to browsers.
std::vector<unsigned char> encode_png(const Image& img);

// Nearest of 256 levels, ties rounded up.
unsigned char quantize(double v) noexcept;

}  // namespace ebim
