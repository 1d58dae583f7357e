#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "icaunet/byte_io.hpp"
#include "icaunet/losses.hpp"
#include "icaunet/model.hpp"
#include "icaunet/ops.hpp"
#include "test_util.hpp"

using namespace icaunet;
using icaunet::testing::random_tensor;

namespace {

ModelConfig make_config(std::int64_t n, std::int64_t m, std::int64_t u, Extents3 e) {
  ModelConfig c;
  c.n = n;
  c.m = m;
  c.u = u;
  c.extents = e;
  return c;
}

template <typename Real = float>
BasicTensor<Real> frame(const Extents3& e, std::uint64_t seed) {
  auto t = random_tensor<Real>(Shape{1, 1, e.d, e.h, e.w}, seed);
  return t;
}

BasicTensor<float>* find(IcaUNet<float>& net, const std::string& name) {
  for (auto& t : net.tensors())
    if (t.name == name) return t.tensor;
  return nullptr;
}

bool any_nonzero(std::span<const float> v) {
  for (float x : v)
    if (x != 0.0f) return true;
  return false;
}

}  // namespace

TEST_CASE("encoder output shapes") {
  {
    IcaUNet<float> net(make_config(3, 32, 4, {8, 64, 64}));
    NoGradGuard ng;
    auto [a, x] = net.encode(frame(net.config().extents, 1), false, true);
    CHECK(a.shape() == Shape{1, 32, 4, 16, 16});
    CHECK(x.shape() == Shape{1, 128, 8, 4, 4});
  }
  {
    IcaUNet<float> net(make_config(2, 4, 2, {2, 16, 16}));
    NoGradGuard ng;
    auto [a, x] = net.encode(frame(net.config().extents, 2), false, true);
    CHECK(a.shape() == Shape{1, 4, 1, 4, 4});
    CHECK(x.shape() == Shape{1, 8, 2, 1, 1});
    CHECK_THROWS_AS(net.encode(Tensor(Shape{1, 1, 2, 32, 16}), false, true), ShapeError);
  }
}

TEST_CASE("zero input with zero final biases gives finite outputs") {
  IcaUNet<float> net(make_config(2, 4, 2, {2, 32, 32}));
  for (auto& t : net.parameters())
    if (t.name.find(".bias") != std::string::npos)
      for (auto& v : t.tensor->mutable_data()) v = 0.0f;
  NoGradGuard ng;
  Tensor zero(Shape{1, 1, 2, 32, 32}, 0.0f);
  auto out = net.forward(zero, zero, zero, true);
  for (const auto& y : out.logits)
    for (float v : y.data()) REQUIRE(std::isfinite(v));
  for (float v : out.basis.data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("contracting, expanding and decoder shapes for n=3, m=8") {
  IcaUNet<float> net(make_config(3, 8, 4, {8, 64, 64}));
  const auto e = net.config().extents;
  NoGradGuard ng;
  auto out = net.forward(frame(e, 3), frame(e, 4), frame(e, 5), false);
  REQUIRE(out.contracted.size() == 4);
  CHECK(out.contracted[3].shape() == Shape{1, 8, 4, 16, 16});
  CHECK(out.contracted[2].shape() == Shape{1, 16, 4, 8, 8});  // A_3 -> A_2
  CHECK(out.contracted[1].shape() == Shape{1, 32, 4, 4, 4});  // quarter extents
  CHECK(out.contracted[0].shape() == Shape{1, 64, 4, 2, 2});

  // Level 2: 16 + 49 + 49 = 114 channels into the 1x1 block, back to 16;
  // the upsampling then reaches level 3 with 8 channels.
  CHECK(find(net, "backbone.g0.fuse2.weight")->shape() == Shape{16, 114, 1, 1, 1});
  CHECK(out.fused[1].shape() == Shape{1, 16, 4, 8, 8});
  CHECK(find(net, "backbone.g0.up2.weight")->shape() == Shape{16, 8, 1, 2, 2});
  CHECK(out.corr_prev[1].shape() == Shape{1, 49, 4, 8, 8});

  REQUIRE(out.logits.size() == 3);
  CHECK(out.logits[0].shape() == Shape{1, 4, 8, 16, 16});
  CHECK(out.logits[1].shape() == Shape{1, 4, 8, 32, 32});
  CHECK(out.logits[2].shape() == Shape{1, 4, 8, 64, 64});
  CHECK(out.mixed[2].shape() == Shape{1, 4, 8, 64, 64});
  CHECK(out.reduced[0].shape() == Shape{1, 8, 4, 4, 4});
}

TEST_CASE("a unit in-plane extent cannot be halved") {
  ConvSpec down;
  down.in_channels = 2;
  down.out_channels = 2;
  down.kernel = {1, 4, 4};
  down.stride = {1, 2, 2};
  down.padding = {0, 1, 1};
  CHECK_THROWS_AS(down.conv_output({4, 1, 1}), ShapeError);
}

TEST_CASE("mixing geometry") {
  const auto c = make_config(3, 32, 4, {8, 64, 64});
  const auto s = mixing_spec(c, 3);
  CHECK(s.kernel == Triple{8, 4, 4});
  CHECK(s.stride == Triple{2, 4, 4});
  CHECK(s.padding == Triple{3, 0, 0});
  CHECK(s.transposed_output(c.level_extents(3)) == Extents3{8, 64, 64});
  for (std::int64_t k = 1; k <= 3; ++k)
    CHECK(mixing_spec(c, k).transposed_output(c.level_extents(k)) == c.output_extents(k));

  CHECK(solve_transposed_axis(16, 4, 64) == std::pair<std::int64_t, std::int64_t>{4, 0});
  CHECK(solve_transposed_axis(4, 8, 8) == std::pair<std::int64_t, std::int64_t>{2, 3});
  CHECK(solve_transposed_axis(8, 2, 32) == std::pair<std::int64_t, std::int64_t>{6, 6});
  CHECK_THROWS_AS(solve_transposed_axis(1, 4, 8), ShapeError);
  CHECK_THROWS_AS(solve_transposed_axis(3, 2, 9), ShapeError);  // 2s - 7 is never even
  CHECK_NOTHROW(make_config(4, 4, 2, {4, 64, 64}).validate());
}

TEST_CASE("mixing impulse response stamps one basis group") {
  const auto c = make_config(2, 4, 2, {4, 64, 64});
  const auto spec = mixing_spec(c, 2);
  const Extents3 in = c.level_extents(2), be = c.basis_extents();
  auto basis = random_tensor<double>(Shape{1, c.u * c.m, be.d, be.h, be.w}, 7);
  const auto kernel = reshape(basis, Shape{c.m, c.u, be.d, be.h, be.w});
  Tensor64 a(Shape{1, c.m, in.d, in.h, in.w}, 0.0);
  const std::int64_t ch = 2, z0 = 1, y0 = 3, x0 = 5;
  a.mutable_data()[static_cast<std::size_t>(((ch * in.d + z0) * in.h + y0) * in.w + x0)] = 1.0;
  const auto y = transposed_conv3d(a, kernel, spec);
  const Extents3 out = c.output_extents(2);
  std::int64_t stamped = 0;
  for (std::int64_t j = 0; j < c.u; ++j)
    for (std::int64_t z = 0; z < out.d; ++z)
      for (std::int64_t yy = 0; yy < out.h; ++yy)
        for (std::int64_t xx = 0; xx < out.w; ++xx) {
          const std::int64_t kd = z - (z0 * spec.stride[0] - spec.padding[0]);
          const std::int64_t kh = yy - (y0 * spec.stride[1] - spec.padding[1]);
          const std::int64_t kw = xx - (x0 * spec.stride[2] - spec.padding[2]);
          const double got = y[((j * out.d + z) * out.h + yy) * out.w + xx];
          if (kd >= 0 && kh >= 0 && kw >= 0 && kd < be.d && kh < be.h && kw < be.w) {
            const double want = basis[(((ch * c.u + j) * be.d + kd) * be.h + kh) * be.w + kw];
            CHECK(got == want);
            ++stamped;
          } else {
            CHECK(got == 0.0);
          }
        }
  CHECK(stamped > 0);
}

TEST_CASE("zero basis leaves only the head bias") {
  IcaUNet<float> net(make_config(2, 4, 2, {2, 32, 32}));
  for (auto* name : {"encoder.x_up.weight", "encoder.x_up.bias"})
    for (auto& v : find(net, name)->mutable_data()) v = 0.0f;
  for (int k = 1; k <= 2; ++k) {
    auto bias = find(net, "decoder" + std::to_string(k) + ".head.bias")->mutable_data();
    for (std::size_t c = 0; c < bias.size(); ++c) bias[c] = 0.25f * static_cast<float>(c + k);
  }
  NoGradGuard ng;
  const auto e = net.config().extents;
  auto out = net.forward(frame(e, 1), frame(e, 2), frame(e, 3), false);
  for (float v : out.basis.data()) REQUIRE(v == 0.0f);
  for (int k = 1; k <= 2; ++k) {
    const auto& y = out.logits[static_cast<std::size_t>(k - 1)];
    const std::int64_t vox = spatial_extents(y.shape()).voxels();
    for (std::int64_t c = 0; c < 4; ++c)
      for (std::int64_t i = 0; i < vox; ++i) REQUIRE(y[c * vox + i] == 0.25f * static_cast<float>(c + k));
  }
}

TEST_CASE("identical neighbours give identical correlation stacks") {
  IcaUNet<float> net(make_config(3, 8, 4, {8, 64, 64}));
  NoGradGuard ng;
  const auto f = frame(net.config().extents, 11);
  auto out = net.forward(f, f, f, false);
  REQUIRE(out.corr_prev.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) {
    auto a = out.corr_prev[k].data(), b = out.corr_next[k].data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("shape contract sweep") {
  const std::vector<Extents3> extents{{2, 32, 32}, {4, 64, 64}, {2, 128, 128}};
  for (std::int64_t n : {2, 3, 4}) {
    int valid = 0;
    for (std::int64_t m : {4, 8})
      for (const auto& e : extents) {
        auto c = make_config(n, m, 2, e);
        c.stem_channels = 8;
        try {
          c.validate();
        } catch (const ShapeError&) {
          continue;
        }
        ++valid;
        CAPTURE(n);
        CAPTURE(m);
        CAPTURE(e.h);
        IcaUNet<float> net(c);
        NoGradGuard ng;
        auto out = net.forward(frame(e, 1), frame(e, 2), frame(e, 3), false);
        CHECK(out.mixing.shape() == Shape{1, m, e.d / 2, e.h / 4, e.w / 4});
        CHECK(out.basis.shape() == Shape{1, 2 * m, e.d, e.h / 16, e.w / 16});
        REQUIRE(static_cast<std::int64_t>(out.logits.size()) == n);
        for (std::int64_t k = 1; k <= n; ++k) {
          const std::int64_t f = std::int64_t{1} << (n - k);
          CHECK(out.logits[static_cast<std::size_t>(k - 1)].shape() == Shape{1, 4, e.d, e.h / f, e.w / f});
          const Extents3 le = c.level_extents(k);
          CHECK(out.contracted[static_cast<std::size_t>(k)].shape() ==
                Shape{1, c.channels(k), le.d, le.h, le.w});
        }
      }
    CHECK(valid > 0);
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(make_config(3, 8, 4, {7, 64, 64}).validate(), ShapeError);
  CHECK_THROWS_AS(make_config(3, 8, 4, {8, 48, 48}).validate(), ShapeError);
  CHECK_THROWS_AS(make_config(1, 8, 4, {8, 64, 64}).validate(), ConfigError);
  auto grouped = make_config(3, 8, 4, {8, 64, 64});
  grouped.groups = 3;
  CHECK_THROWS_AS(grouped.validate(), ConfigError);
  grouped.groups = 4;
  CHECK_NOTHROW(grouped.validate());
  CHECK(ModelConfig::from_text(grouped.to_text()) == grouped);
  CHECK_THROWS_AS(ModelConfig::from_text(grouped.to_text() + "extra = 1\n"), ConfigError);
}

TEST_CASE("every parameter receives a gradient from the full objective") {
  IcaUNet<float> net(make_config(2, 4, 2, {2, 32, 32}));
  const auto e = net.config().extents;
  const auto cur = frame(e, 22);
  LabelVolume gt(e);
  std::mt19937_64 rng(5);
  for (auto& id : gt.ids) id = static_cast<std::uint8_t>(rng() % 4);
  auto out = net.forward(frame(e, 21), cur, frame(e, 23), true);
  const auto weights = LossWeights::defaults(2);
  auto loss = loss_total(out, gt, weights, cur, reconstruction_operator<float>(net.config()));
  loss.total.backward();
  std::int64_t params = 0;
  for (const auto& p : net.parameters()) {
    CAPTURE(p.name);
    REQUIRE(p.tensor->has_grad());
    CHECK(any_nonzero(p.tensor->grad()));
    ++params;
  }
  CHECK(params > 40);
  CHECK(net.parameter_count() > 0);
}

TEST_CASE("every output level depends on the basis") {
  IcaUNet<float> net(make_config(3, 4, 2, {2, 64, 64}));
  const auto e = net.config().extents;
  for (std::size_t k = 0; k < 3; ++k) {
    auto out = net.forward(frame(e, 1), frame(e, 2), frame(e, 3), false);
    out.basis.retain_grad();
    sum(out.logits[k]).backward();
    CAPTURE(k);
    CHECK(any_nonzero(out.basis.grad()));
  }
}

TEST_CASE("forward is deterministic and weights are shared over time") {
  const auto c = make_config(2, 4, 2, {2, 32, 32});
  IcaUNet<float> a(c), b(c);
  const auto e = c.extents;
  NoGradGuard ng;
  const auto count = a.parameter_count();
  auto ya = a.forward(frame(e, 1), frame(e, 2), frame(e, 3), false);
  auto yb = b.forward(frame(e, 1), frame(e, 2), frame(e, 3), false);
  for (std::size_t k = 0; k < ya.logits.size(); ++k) {
    auto da = ya.logits[k].data(), db = yb.logits[k].data();
    CHECK(std::equal(da.begin(), da.end(), db.begin()));
  }
  a.forward(frame(e, 4), frame(e, 5), frame(e, 6), false);
  CHECK(a.parameter_count() == count);
  CHECK(std::isfinite(static_cast<double>(count)));
}

TEST_CASE("checkpoint round trip and corruption") {
  auto c = make_config(2, 4, 2, {2, 32, 32});
  c.seed = 9;
  IcaUNet<float> net(c);
  {  // put something into the running statistics
    const auto e = c.extents;
    NoGradGuard ng;
    net.forward(frame(e, 1), frame(e, 2), frame(e, 3), true);
  }
  const auto bytes = checkpoint_bytes(net);
  auto loaded = checkpoint_from_bytes(bytes);
  CHECK(loaded->config() == c);
  CHECK(checkpoint_bytes(*loaded) == bytes);
  auto ta = net.tensors(), tb = loaded->tensors();
  REQUIRE(ta.size() == tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) {
    auto da = ta[i].tensor->data(), db = tb[i].tensor->data();
    CHECK(std::equal(da.begin(), da.end(), db.begin()));
  }

  const auto path = (std::filesystem::temp_directory_path() / "icaunet_test.icac").string();
  save_checkpoint(path, net);
  CHECK(io::read_file(path) == bytes);
  CHECK(checkpoint_bytes(*load_checkpoint(path)) == bytes);
  std::remove(path.c_str());

  auto expect_offset = [](const std::vector<std::uint8_t>& b, std::uint64_t offset) {
    try {
      checkpoint_from_bytes(b);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == offset);
    }
  };
  auto bad = bytes;
  bad[0] = 'X';
  expect_offset(bad, 0);
  bad = bytes;
  bad[4] = 2;
  expect_offset(bad, 4);
  bad = bytes;
  bad.resize(bytes.size() - 3);
  expect_offset(bad, bad.size());
  bad = bytes;
  bad.push_back(0);
  expect_offset(bad, bytes.size());
  bad = bytes;
  bad[12] = '#';  // first config character: "n = 2" becomes a comment
  expect_offset(bad, 8);
}
