#include "ebim/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include <zlib.h>

#include "ebim/error.hpp"

namespace ebim {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::shape_mismatch: return "shape_mismatch";
    case Errc::io: return "io";
    case Errc::format: return "format";
    case Errc::unreachable_kappa: return "unreachable_kappa";
    case Errc::zero_mask: return "zero_mask";
    case Errc::degenerate: return "degenerate";
    case Errc::not_found: return "not_found";
    case Errc::conflict: return "conflict";
  }
  return "unknown";
}

std::string to_string(const Shape& s) {
  return std::to_string(s.width) + "x" + std::to_string(s.height) + "x" + std::to_string(s.channels);
}

namespace {

void check_shape(const Shape& s) {
  if (s.width <= 0 || s.height <= 0 || (s.channels != 1 && s.channels != 3)) {
    throw Error(Errc::invalid_argument, "invalid image shape " + to_string(s));
  }
}

void check_same_shape(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) {
    throw Error(Errc::shape_mismatch,
                "image shapes differ: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

Image::Image(Shape shape, double fill) : shape_(shape) {
  check_shape(shape);
  if (!(fill >= 0.0 && fill <= 1.0)) throw Error(Errc::invalid_argument, "image fill value outside [0,1]");
  data_.assign(shape.size(), fill);
}

Image::Image(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  check_shape(shape);
  if (data_.size() != shape.size()) {
    throw Error(Errc::shape_mismatch, "image data length " + std::to_string(data_.size()) + " does not match shape " +
                                          to_string(shape));
  }
  for (double v : data_) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::invalid_argument, "image value outside [0,1]");
  }
}

Plane::Plane(int width, int height, double fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw Error(Errc::invalid_argument, "invalid plane dimensions");
  data_.assign(std::size_t(width) * std::size_t(height), fill);
}

Plane::Plane(int width, int height, std::vector<double> data) : width_(width), height_(height), data_(std::move(data)) {
  if (width <= 0 || height <= 0) throw Error(Errc::invalid_argument, "invalid plane dimensions");
  if (data_.size() != std::size_t(width) * std::size_t(height)) {
    throw Error(Errc::shape_mismatch, "plane data length does not match " + std::to_string(width) + "x" +
                                          std::to_string(height));
  }
}

double Plane::min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }
double Plane::max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }
double Plane::sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

GrayMap to_grayscale(const Image& img, GrayWeights weights) {
  GrayMap out(img.width(), img.height());
  const int c = img.channels();
  auto src = img.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < dst.size(); ++p) {
    if (c == 1) {
      dst[p] = src[p];
    } else if (weights == GrayWeights::luminance) {
      dst[p] = std::clamp(0.299 * src[3 * p] + 0.587 * src[3 * p + 1] + 0.114 * src[3 * p + 2], 0.0, 1.0);
    } else {
      dst[p] = (src[3 * p] + src[3 * p + 1] + src[3 * p + 2]) / 3.0;
    }
  }
  return out;
}

Image from_plane(const Plane& p) {
  return Image({p.width(), p.height(), 1}, std::vector<double>(p.data().begin(), p.data().end()));
}

double linf_distance(const Image& a, const Image& b) {
  check_same_shape(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double l2_distance(const Image& a, const Image& b) {
  check_same_shape(a, b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::size_t l0_count(const Image& a, const Image& b) {
  check_same_shape(a, b);
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += std::abs(a.data()[i] - b.data()[i]) > kL0Epsilon;
  return n;
}

Distances distances(const Image& a, const Image& b) { return {linf_distance(a, b), l2_distance(a, b), l0_count(a, b)}; }

Image contrast_difference(const Image& a, const Image& b) {
  check_same_shape(a, b);
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = b.data()[i] - a.data()[i];
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double low = d.empty() ? 0.0 : *lo;
  const double span = d.empty() ? 0.0 : *hi - low;
  for (double& v : d) v = span > 0.0 ? std::clamp((v - low) / span, 0.0, 1.0) : 0.0;
  return Image(a.shape(), std::move(d));
}

unsigned char quantize(double v) noexcept {
  const double scaled = std::clamp(v, 0.0, 1.0) * 255.0;
  return static_cast<unsigned char>(std::floor(scaled + 0.5));
}

// ---- PNM -------------------------------------------------------------------

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const unsigned char> bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::size_t pos() const { return pos_; }

  // Skips whitespace and '#' comments; requires at least one separator.
  void separator() {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size()) {
      const unsigned char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
      } else if (is_space(ch)) {
        ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) throw ParseError("malformed header: expected whitespace", pos_);
    if (pos_ >= bytes_.size()) throw ParseError("malformed header: unexpected end of file", pos_);
  }

  long number(const char* what) {
    const std::size_t start = pos_;
    long v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw ParseError(std::string("malformed header: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) throw ParseError(std::string("malformed header: expected ") + what, start);
    return v;
  }

  // Exactly one whitespace byte separates maxval from the raster.
  void single_space() {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_])) {
      throw ParseError("malformed header: expected single whitespace before raster", pos_);
    }
    ++pos_;
  }

 private:
  static bool is_space(unsigned char ch) { return ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\v' || ch == '\f'; }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_pnm(std::span<const unsigned char> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw ParseError("malformed header: expected magic P5 or P6", 0);
  }
  const int channels = bytes[1] == '5' ? 1 : 3;
  HeaderReader r(bytes, 2);
  r.separator();
  const long width = r.number("width");
  r.separator();
  const long height = r.number("height");
  r.separator();
  const std::size_t maxval_offset = r.pos();
  const long maxval = r.number("maxval");
  if (maxval != 255) {
    throw ParseError("unsupported maxval " + std::to_string(maxval) + " (only 255)", maxval_offset);
  }
  r.single_space();
  if (width <= 0 || height <= 0) throw ParseError("malformed header: zero dimension", 2);

  const std::size_t raster_offset = r.pos();
  const Shape shape{int(width), int(height), channels};
  const std::size_t need = shape.size();
  if (bytes.size() - raster_offset < need) {
    throw ParseError("truncated raster: expected " + std::to_string(need) + " bytes, found " +
                         std::to_string(bytes.size() - raster_offset),
                     bytes.size());
  }
  std::vector<double> data(need);
  for (std::size_t i = 0; i < need; ++i) data[i] = double(bytes[raster_offset + i]) / 255.0;
  return Image(shape, std::move(data));
}

std::vector<unsigned char> encode_pnm(const Image& img) {
  const std::string header = std::string(img.channels() == 1 ? "P5" : "P6") + "\n" + std::to_string(img.width()) +
                             " " + std::to_string(img.height()) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img.size());
  for (double v : img.data()) out.push_back(quantize(v));
  return out;
}

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_pnm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.offset());
  }
}

void save_image(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_pnm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

// ---- PNG -------------------------------------------------------------------

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back((v >> 24) & 0xff);
  out.push_back((v >> 16) & 0xff);
  out.push_back((v >> 8) & 0xff);
  out.push_back(v & 0xff);
}

void put_chunk(std::vector<unsigned char>& out, const char* type, const std::vector<unsigned char>& payload) {
  put_u32(out, std::uint32_t(payload.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(0L, out.data() + start, uInt(out.size() - start));
  put_u32(out, std::uint32_t(crc));
}

}  // namespace

std::vector<unsigned char> encode_png(const Image& img) {
  const std::size_t row = std::size_t(img.width()) * std::size_t(img.channels());
  std::vector<unsigned char> raw;
  raw.reserve((row + 1) * std::size_t(img.height()));
  for (int y = 0; y < img.height(); ++y) {
    raw.push_back(0);  // filter: none
    for (std::size_t i = 0; i < row; ++i) raw.push_back(quantize(img.data()[std::size_t(y) * row + i]));
  }
  uLongf zlen = compressBound(uLong(raw.size()));
  std::vector<unsigned char> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), uLong(raw.size()), 6) != Z_OK) {
    throw Error(Errc::io, "zlib compression failed");
  }
  z.resize(zlen);

  std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::vector<unsigned char> ihdr;
  put_u32(ihdr, std::uint32_t(img.width()));
  put_u32(ihdr, std::uint32_t(img.height()));
  ihdr.push_back(8);                                 // bit depth
  ihdr.push_back(img.channels() == 1 ? 0 : 2);       // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

}  // namespace ebim
