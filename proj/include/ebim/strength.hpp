#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ebim/image.hpp"

namespace ebim {

// Per-pixel attack magnitude in [0,1], applied to every channel of a pixel.
class StrengthMap : public Plane {
 public:
  StrengthMap() = default;
  StrengthMap(int width, int height, double fill = 0.0);
  StrengthMap(int width, int height, std::vector<double> data);
  explicit StrengthMap(Plane plane);

  bool is_binary() const;
};

// Local Shannon entropies in bits, plus the window parameters that bound them.
struct EntropyMap {
  Plane values;
  int radius = 5;
  int bins = 256;

  // log2(min(bins, full window pixel count)).
  double max_attainable() const;
};

inline constexpr int kDefaultEntropyRadius = 5;
inline constexpr int kDefaultEntropyBins = 256;
inline constexpr double kDefaultEntropyThreshold = 4.2;
inline constexpr double kDefaultKappaTolerance = 0.005;

// Bin index for an intensity in [0,1]; 1.0 falls into the top bin.
int intensity_bin(double v, int bins) noexcept;

// Square window of side 2*radius+1, truncated at the borders.
EntropyMap local_entropy(const GrayMap& gray, int radius = kDefaultEntropyRadius, int bins = kDefaultEntropyBins);

struct Binarize {
  double threshold = kDefaultEntropyThreshold;
};
struct NormalizeGamma {
  double gamma = 1.0;
};

// 1 where S > threshold, else 0.
StrengthMap phi(const EntropyMap& s, Binarize mode);
// (S / S_max)^gamma with S_max the attainable maximum.
StrengthMap phi(const EntropyMap& s, NormalizeGamma mode);

// Relative total strength: mean of the map.
double kappa(const Plane& e);

StrengthMap scale_brightness(const StrengthMap& e, double factor);

// Binary morphology with a square structuring element of side 2r+1. `outside`
// is the value assumed beyond the image border (0 unless stated otherwise).
StrengthMap dilate(const StrengthMap& e, int radius, double outside = 0.0);
StrengthMap erode(const StrengthMap& e, int radius, double outside = 0.0);

// Gradient-lattice noise with smoothstep interpolation; each octave halves the
// cell size and the amplitude. Rescaled to span exactly [0,1].
StrengthMap perlin_map(int width, int height, int cell_size, int octaves, std::uint64_t seed);

enum class KappaMethod {
  brightness,  // scale down, or saturate upward, the continuous map
  threshold,   // binarize the continuous map at a bisected threshold
};

StrengthMap adjust_to_kappa(const StrengthMap& e, double target, double tol = kDefaultKappaTolerance,
                            KappaMethod method = KappaMethod::brightness);

StrengthMap binarize(const Plane& values, double threshold);

// "EMAP1\n", "w h\n", then w*h little-endian float64 values, row-major.
std::vector<unsigned char> encode_map(const Plane& p);
Plane decode_map(std::span<const unsigned char> bytes);
void save_map(const Plane& p, const std::filesystem::path& path);
Plane load_map(const std::filesystem::path& path);

// Visualisations: strength scaled by 255, entropy by 255 / S_max.
Image strength_to_image(const StrengthMap& e);
Image entropy_to_image(const EntropyMap& s);

}  // namespace ebim
