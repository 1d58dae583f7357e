#include "icaunet/montage.hpp"

#include <png.h>

#include <algorithm>
#include <cstdio>
#include <memory>

#include "icaunet/errors.hpp"

namespace icaunet {

Rgb class_color(std::uint8_t cls) {
  switch (cls) {
    case 1: return {255, 255, 0};
    case 2: return {255, 0, 0};
    case 3: return {0, 255, 0};
    default: return {0, 0, 0};
  }
}

Rgb Image::at(std::int64_t x, std::int64_t y) const {
  const auto i = static_cast<std::size_t>((y * width + x) * 3);
  return {rgb[i], rgb[i + 1], rgb[i + 2]};
}

std::array<std::int64_t, 3> montage_slices(std::int64_t depth) { return {0, depth / 2, depth - 1}; }

Image render_montage(const std::vector<LabelVolume>& labels, const std::vector<Tensor>& frames) {
  if (labels.empty()) throw DataError("montage needs at least one label volume");
  if (!frames.empty() && frames.size() != labels.size()) throw DataError("montage: frame and label counts differ");
  const Extents3 e = labels.front().extents;
  const auto cols = static_cast<std::int64_t>(labels.size());
  Image img;
  img.width = cols * e.w + (cols - 1) * kMontageGap;
  img.height = 3 * e.h + 2 * kMontageGap;
  img.rgb.assign(static_cast<std::size_t>(img.width * img.height * 3), 64);

  const auto slices = montage_slices(e.d);
  for (std::int64_t t = 0; t < cols; ++t) {
    const auto& l = labels[static_cast<std::size_t>(t)];
    if (!(l.extents == e)) throw DataError("montage: label volumes differ in extents");
    float lo = 0, hi = 1;
    if (!frames.empty()) {
      const auto& f = frames[static_cast<std::size_t>(t)].data();
      if (static_cast<std::int64_t>(f.size()) != e.voxels()) throw DataError("montage: frame extents differ");
      const auto [mn, mx] = std::minmax_element(f.begin(), f.end());
      lo = *mn;
      hi = *mx > *mn ? *mx : *mn + 1;
    }
    for (std::int64_t row = 0; row < 3; ++row) {
      const std::int64_t z = slices[static_cast<std::size_t>(row)];
      for (std::int64_t y = 0; y < e.h; ++y)
        for (std::int64_t x = 0; x < e.w; ++x) {
          const std::int64_t v = (z * e.h + y) * e.w + x;
          double gray = 0;
          if (!frames.empty()) gray = 255.0 * (frames[static_cast<std::size_t>(t)].data()[static_cast<std::size_t>(v)] - lo) / (hi - lo);
          const std::uint8_t cls = l.ids[static_cast<std::size_t>(v)];
          Rgb px{static_cast<std::uint8_t>(gray), static_cast<std::uint8_t>(gray), static_cast<std::uint8_t>(gray)};
          if (cls != 0) px = class_color(cls);
          const std::int64_t ox = t * (e.w + kMontageGap) + x, oy = row * (e.h + kMontageGap) + y;
          const auto i = static_cast<std::size_t>((oy * img.width + ox) * 3);
          img.rgb[i] = px.r;
          img.rgb[i + 1] = px.g;
          img.rgb[i + 2] = px.b;
        }
    }
  }
  return img;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_png(const std::string& path, const Image& image) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw DataError("cannot write " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::int64_t y = 0; y < image.height; ++y)
    png_write_row(png, image.rgb.data() + y * image.width * 3);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image read_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DataError("cannot read " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng initialisation failed");
  }
  Image image;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("libpng failed reading " + path);
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError(path + " is not an 8-bit RGB image");
  }
  image.width = png_get_image_width(png, info);
  image.height = png_get_image_height(png, info);
  image.rgb.resize(static_cast<std::size_t>(image.width * image.height * 3));
  for (std::int64_t y = 0; y < image.height; ++y) png_read_row(png, image.rgb.data() + y * image.width * 3, nullptr);
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

}  // namespace icaunet
