#include <filesystem>

#include "doctest.h"
#include "icaunet/data.hpp"
#include "icaunet/errors.hpp"
#include "icaunet/montage.hpp"

using namespace icaunet;

TEST_CASE("class colors") {
  CHECK(class_color(kRV) == Rgb{255, 255, 0});
  CHECK(class_color(kMYO) == Rgb{255, 0, 0});
  CHECK(class_color(kLV) == Rgb{0, 255, 0});
  CHECK(montage_slices(8) == std::array<std::int64_t, 3>{0, 4, 7});
}

TEST_CASE("montage layout and PNG round trip") {
  const Extents3 e{3, 4, 5};
  std::vector<LabelVolume> labels(2, LabelVolume(e));
  labels[0].at(0, 1, 2) = kRV;   // base row, first column
  labels[1].at(1, 0, 0) = kMYO;  // middle row, second column
  labels[1].at(2, 3, 4) = kLV;   // apex row, second column
  const auto img = render_montage(labels);
  CHECK(img.width == 2 * 5 + kMontageGap);
  CHECK(img.height == 3 * 4 + 2 * kMontageGap);
  CHECK(img.at(2, 1) == class_color(kRV));
  CHECK(img.at(5 + kMontageGap, 4 + kMontageGap) == class_color(kMYO));
  CHECK(img.at(5 + kMontageGap + 4, 2 * (4 + kMontageGap) + 3) == class_color(kLV));
  CHECK(img.at(0, 0) == Rgb{0, 0, 0});

  const auto path = (std::filesystem::temp_directory_path() / "icaunet_montage.png").string();
  write_png(path, img);
  const auto back = read_png(path);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_png(path), DataError);
}

TEST_CASE("montage of a phantom uses the frame as backdrop") {
  const auto seq = generate_phantom(1, 3, {4, 32, 32});
  const auto img = render_montage(seq.labels, seq.frames);
  CHECK(img.width == 3 * 32 + 2 * kMontageGap);
  bool gray = false, yellow = false;
  for (std::int64_t y = 0; y < img.height; ++y)
    for (std::int64_t x = 0; x < img.width; ++x) {
      const auto p = img.at(x, y);
      gray |= p.r == p.g && p.g == p.b && p.r > 0 && p.r != 64;
      yellow |= p == class_color(kRV);
    }
  CHECK(gray);
  CHECK(yellow);
  CHECK_THROWS_AS(render_montage({}), DataError);
}
