#pragma once

#include <cstdint>
#include <filesystem>

#include "ebim/model.hpp"

namespace ebim {

inline constexpr int kSyntheticClasses = 10;

// Ten shape classes (disk, square, ring, bars, cross, X, triangle, twin dots, L)
// drawn with a noise texture over a smooth low-contrast background, quantized to
// 8 bits. Shapes are jittered in position and size. Deterministic in `seed`.
Dataset make_synthetic_dataset(int per_class, std::uint64_t seed, Shape shape = {28, 28, 1});

// Directory layout: one subdirectory per integer class label holding PGM/PPM
// files. Files are read in lexicographic order.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

}  // namespace ebim
