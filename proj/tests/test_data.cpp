#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "icaunet/byte_io.hpp"
#include "icaunet/data.hpp"
#include "test_util.hpp"

using namespace icaunet;
using icaunet::testing::random_tensor;

namespace {

std::int64_t count(const LabelVolume& l, std::uint8_t cls) {
  std::int64_t n = 0;
  for (auto id : l.ids) n += id == cls;
  return n;
}

std::uint64_t offset_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_volume(bytes);
  } catch (const FormatError& e) {
    return e.offset();
  }
  FAIL("expected FormatError");
  return 0;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("icaunet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("xoshiro is deterministic and in range") {
  Xoshiro256 a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    differs |= x != c.next();
  }
  CHECK(differs);
  double mean = 0;
  for (int i = 0; i < 10000; ++i) {
    const double u = a.uniform();
    CHECK((u >= 0 && u < 1));
    mean += u;
    CHECK(a.below(7) < 7);
  }
  CHECK(std::abs(mean / 10000 - 0.5) < 0.02);
}

TEST_CASE("portable_cos matches the library cosine") {
  for (double x = -20; x <= 20; x += 0.37) CHECK(std::abs(portable_cos(x) - std::cos(x)) < 1e-12);
}

TEST_CASE("phantom is deterministic") {
  const auto a = generate_phantom(7, 4, {8, 32, 32});
  const auto b = generate_phantom(7, 4, {8, 32, 32});
  const auto c = generate_phantom(8, 4, {8, 32, 32});
  REQUIRE(a.length() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(std::memcmp(a.frames[t].data().data(), b.frames[t].data().data(), a.frames[t].data().size() * 4) == 0);
    CHECK(a.labels[t].ids == b.labels[t].ids);
  }
  CHECK(std::memcmp(a.frames[0].data().data(), c.frames[0].data().data(), a.frames[0].data().size() * 4) != 0);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("phantom anatomy") {
  const auto seq = generate_phantom(1, 12, {8, 64, 64});
  CHECK(count(seq.labels[6], kLV) < count(seq.labels[0], kLV));
  for (const auto& l : seq.labels) {
    for (std::uint8_t c = 0; c < 4; ++c) CHECK(count(l, c) > 0);
    for (auto id : l.ids) CHECK(id < 4);
  }
  // Intensities follow the labels: class means are ordered BG < MYO < RV < LV.
  double sum[4] = {}, n[4] = {};
  for (std::size_t i = 0; i < seq.labels[0].ids.size(); ++i) {
    sum[seq.labels[0].ids[i]] += seq.frames[0].data()[i];
    n[seq.labels[0].ids[i]] += 1;
  }
  CHECK(sum[0] / n[0] < sum[2] / n[2]);
  CHECK(sum[2] / n[2] < sum[1] / n[1]);
  CHECK(sum[1] / n[1] < sum[3] / n[3]);

  CHECK_THROWS_AS(generate_phantom(1, 2, {8, 64, 64}), DataError);
  CHECK_THROWS_AS(generate_phantom(1, 4, {8, 16, 64}), DataError);
}

TEST_CASE("ICAV round trips bit-exactly") {
  for (std::int64_t rank = 1; rank <= 5; ++rank) {
    Shape shape;
    for (std::int64_t i = 0; i < rank; ++i) shape.push_back(2 + i);
    const auto t = random_tensor<float>(shape, static_cast<std::uint64_t>(rank), -1e3, 1e3);
    RawVolume v;
    v.shape = shape;
    v.f32.assign(t.data().begin(), t.data().end());
    const auto back = volume_to_tensor(decode_volume(encode_volume(v)));
    CHECK(back.shape() == shape);
    CHECK(std::memcmp(back.data().data(), t.data().data(), t.data().size() * 4) == 0);
  }

  const auto dir = scratch_dir("icav");
  const auto t = random_tensor<float>(Shape{2, 8, 8}, 1);
  save_volume((dir / "f.icav").string(), t);
  const auto back = volume_to_tensor(load_volume((dir / "f.icav").string()));
  CHECK(std::memcmp(back.data().data(), t.data().data(), t.data().size() * 4) == 0);

  const auto seq = generate_phantom(3, 3, {4, 32, 32});
  save_labels((dir / "l.icav").string(), seq.labels[1]);
  const auto raw = load_volume((dir / "l.icav").string());
  CHECK(raw.dtype == VolumeDtype::u8);
  const auto labels = volume_to_labels(raw);
  for (std::uint8_t c = 0; c < 4; ++c) CHECK(count(labels, c) == count(seq.labels[1], c));
  CHECK(labels.ids == seq.labels[1].ids);

  CHECK_THROWS_AS(save_volume((dir / "bad.icav").string(), Tensor(Shape{2}, 0.5f), VolumeDtype::u8), DataError);
  CHECK_THROWS_AS(load_volume((dir / "missing.icav").string()), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("ICAV corruption reports byte offsets") {
  RawVolume v;
  v.shape = {2, 3};
  v.f32 = {1, 2, 3, 4, 5, 6};
  const auto good = encode_volume(v);
  CHECK(good.size() == 4 + 4 + 1 + 1 + 2 * 4 + 6 * 4);

  auto bad = good;
  bad[1] = 'X';
  CHECK(offset_of(bad) == 0);
  bad = good;
  bad[4] = 2;
  CHECK(offset_of(bad) == 4);
  bad = good;
  bad[8] = 9;
  CHECK(offset_of(bad) == 8);
  bad = good;
  bad[9] = 0;
  CHECK(offset_of(bad) == 9);
  bad = good;
  bad[9] = 6;
  CHECK(offset_of(bad) == 9);

  // Truncating the payload reports the first missing byte.
  for (std::size_t keep : {good.size() - 1, std::size_t{20}, std::size_t{12}, std::size_t{3}}) {
    bad.assign(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(keep));
    CHECK(offset_of(bad) == keep);
  }
  bad = good;
  bad.push_back(0);
  CHECK(offset_of(bad) == good.size());
}

TEST_CASE("normalize") {
  const auto x = random_tensor<float>(Shape{2, 8, 8}, 5, -3, 7);
  const auto y = normalize(x);
  double mean = 0, var = 0;
  for (float v : y.data()) mean += v;
  mean /= static_cast<double>(y.numel());
  for (float v : y.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.numel());
  CHECK(std::abs(mean) < 1e-5);
  CHECK(std::abs(var - 1) < 1e-5);

  std::vector<float> affine(x.data().begin(), x.data().end());
  for (auto& v : affine) v = 2.5f * v - 4.0f;
  const auto z = normalize(Tensor(x.shape(), affine));
  for (std::size_t i = 0; i < z.data().size(); ++i) CHECK(std::abs(z.data()[i] - y.data()[i]) < 1e-5);

  const auto flat = normalize(Tensor(Shape{2, 2}, 3.0f));
  for (float v : flat.data()) CHECK(v == 0.0f);
}

TEST_CASE("iterate_triples") {
  const auto seq = iterate_triples(3, false);
  REQUIRE(seq.size() == 3);
  CHECK((seq[0].prev == 0 && seq[0].centre == 0 && seq[0].next == 1));
  CHECK((seq[1].prev == 0 && seq[1].centre == 1 && seq[1].next == 2));
  CHECK((seq[2].prev == 1 && seq[2].centre == 2 && seq[2].next == 2));

  const auto one = iterate_triples(1, true, 3);
  REQUIRE(one.size() == 1);
  CHECK((one[0].prev == 0 && one[0].next == 0));

  const auto a = iterate_triples(12, true, 9), b = iterate_triples(12, true, 9), c = iterate_triples(12, true, 10);
  std::set<std::int64_t> centres;
  bool same = true, differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same &= a[i].centre == b[i].centre;
    differs |= a[i].centre != c[i].centre;
    centres.insert(a[i].centre);
    CHECK(a[i].prev == std::max<std::int64_t>(a[i].centre - 1, 0));
    CHECK(a[i].next == std::min<std::int64_t>(a[i].centre + 1, 11));
  }
  CHECK(same);
  CHECK(differs);
  CHECK(centres.size() == 12);

  const auto phantom = generate_phantom(2, 4, {4, 32, 32});
  const auto triple = make_triple(phantom, seq[0]);
  CHECK(triple.centre.shape() == Shape{1, 1, 4, 32, 32});
  CHECK(triple.labels == &phantom.labels[0]);
}

TEST_CASE("dataset directory round trip") {
  const auto dir = scratch_dir("dataset");
  const auto seq = generate_phantom(5, 3, {4, 32, 32}, {2.0, 1.5, 1.5});
  save_dataset(dir.string(), seq);
  const auto back = load_dataset(dir.string());
  REQUIRE(back.length() == 3);
  CHECK(back.spacing == seq.spacing);
  CHECK(back.seed == seq.seed);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(std::memcmp(back.frames[t].data().data(), seq.frames[t].data().data(), seq.frames[t].data().size() * 4) == 0);
    CHECK(back.labels[t].ids == seq.labels[t].ids);
  }
  std::filesystem::remove(dir / "meta.txt");
  CHECK_THROWS_AS(load_dataset(dir.string()), DataError);
  std::filesystem::remove_all(dir);
}
