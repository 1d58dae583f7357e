#pragma once

// Slice montages of label volumes: rows are the base, middle and apex
// slices, columns are time frames.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "icaunet/neural_ops.hpp"
#include "icaunet/tensor.hpp"

namespace icaunet {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Yellow RV, red MYO, green LV; background is not drawn.
Rgb class_color(std::uint8_t cls);

struct Image {
  std::int64_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

  Rgb at(std::int64_t x, std::int64_t y) const;
};

// Slice indices (base, middle, apex) for a volume of depth d.
std::array<std::int64_t, 3> montage_slices(std::int64_t depth);

inline constexpr std::int64_t kMontageGap = 2;

// Tiles of w x h pixels separated by kMontageGap. Frames (d,h,w), when
// given, supply a min-max scaled grayscale backdrop under the label colors.
Image render_montage(const std::vector<LabelVolume>& labels, const std::vector<Tensor>& frames = {});

// DataError on I/O failure.
void write_png(const std::string& path, const Image& image);
Image read_png(const std::string& path);

}  // namespace icaunet
