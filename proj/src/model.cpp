#include "icaunet/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include "icaunet/byte_io.hpp"
#include "icaunet/key_value.hpp"
#include "icaunet/ops.hpp"
#include "icaunet/thread_pool.hpp"

namespace icaunet {

// ---------------------------------------------------------------- config

void ModelConfig::validate() const {
  if (n < 2) throw ConfigError("model: n must be >= 2, got " + std::to_string(n));
  if (m < 1 || u < 1) throw ConfigError("model: m and u must be >= 1");
  if (base_channels < 0 || stem_channels < 1) throw ConfigError("model: channel widths must be positive");
  if (corr.max_disp < 0) throw ConfigError("model: correlation displacement must be >= 0");
  if (num_classes < 2) throw ConfigError("model: need at least two classes");
  if (groups < 1 || m % groups != 0 || base() % groups != 0)
    throw ConfigError("model: groups=" + std::to_string(groups) + " must divide m=" + std::to_string(m) +
                      " and base channels=" + std::to_string(base()));
  if (!(leaky_slope >= 0.0)) throw ConfigError("model: leaky slope must be >= 0");

  const std::int64_t div = std::max<std::int64_t>(16, 4LL << n);
  if (extents.d < 2 || extents.d % 2 != 0)
    throw ShapeError("model: depth must be even and >= 2, got " + std::to_string(extents.d));
  if (extents.h < div || extents.w < div || extents.h % div != 0 || extents.w % div != 0)
    throw ShapeError("model: height and width must be multiples of " + std::to_string(div) + " for n=" +
                     std::to_string(n));
  for (std::int64_t k = 1; k <= n; ++k) (void)mixing_spec(*this, k);
}

std::int64_t ModelConfig::channels(std::int64_t level) const {
  if (level < 0 || level > n) throw ShapeError("model: level out of range");
  if (level == n) return m;
  return std::min(base() << (n - level), 8 * base());
}

Extents3 ModelConfig::level_extents(std::int64_t level) const {
  const std::int64_t f = 4LL << (n - level);
  return {extents.d / 2, extents.h / f, extents.w / f};
}

Extents3 ModelConfig::output_extents(std::int64_t level) const {
  const std::int64_t f = 1LL << (n - level);
  return {extents.d, extents.h / f, extents.w / f};
}

std::string ModelConfig::to_text() const {
  std::ostringstream o;
  o.precision(17);
  o << "n = " << n << "\nm = " << m << "\nu = " << u << "\nbase_channels = " << base_channels
    << "\nstem_channels = " << stem_channels << "\ncorr_max_disp = " << corr.max_disp
    << "\nnum_classes = " << num_classes << "\ndepth = " << extents.d << "\nheight = " << extents.h
    << "\nwidth = " << extents.w << "\ngroups = " << groups << "\nseed = " << seed
    << "\nleaky_slope = " << leaky_slope << "\n";
  return o.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  const auto kv = parse_key_values(text);
  static const char* known[] = {"n",     "m",      "u",     "base_channels", "stem_channels", "corr_max_disp",
                                "num_classes", "depth", "height", "width", "groups", "seed", "leaky_slope"};
  for (const auto& [key, entry] : kv)
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) == std::end(known))
      throw ConfigError("model config: unknown key '" + key + "'");
  ModelConfig c;
  c.n = kv_int(kv, "n");
  c.m = kv_int(kv, "m");
  c.u = kv_int(kv, "u");
  c.base_channels = kv_int(kv, "base_channels");
  c.stem_channels = kv_int(kv, "stem_channels");
  c.corr.max_disp = kv_int(kv, "corr_max_disp");
  c.num_classes = kv_int(kv, "num_classes");
  c.extents = {kv_int(kv, "depth"), kv_int(kv, "height"), kv_int(kv, "width")};
  c.groups = kv_int(kv, "groups");
  c.seed = static_cast<std::uint64_t>(kv_int(kv, "seed"));
  c.leaky_slope = kv_real(kv, "leaky_slope");
  c.validate();
  return c;
}

std::pair<std::int64_t, std::int64_t> solve_transposed_axis(std::int64_t in, std::int64_t kernel,
                                                            std::int64_t out) {
  if (in < 1 || kernel < 1 || out < 1) throw ShapeError("mixing geometry: extents must be positive");
  // Inputs whose taps all fall outside [0, out) are lost; prefer geometries
  // that lose none, then the stride nearest the scale ratio.
  auto dropped = [&](std::int64_t s, std::int64_t p) {
    std::int64_t lost = 0;
    for (std::int64_t i = 0; i < in; ++i) {
      const std::int64_t first = i * s - p, last = first + kernel - 1;
      if (last < 0 || first >= out) ++lost;
    }
    return lost;
  };
  const double ratio = static_cast<double>(out) / static_cast<double>(in);
  std::optional<std::pair<std::int64_t, std::int64_t>> best;
  std::int64_t best_lost = 0;
  double best_gap = 0;
  const std::int64_t max_stride = in == 1 ? 1 : out + 2 * kernel;
  for (std::int64_t s = 1; s <= max_stride; ++s) {
    const std::int64_t twice_p = (in - 1) * s + kernel - out;
    if (twice_p < 0 || twice_p % 2 != 0) continue;
    const std::int64_t p = twice_p / 2;
    const std::int64_t lost = dropped(s, p);
    const double gap = std::abs(static_cast<double>(s) - ratio);
    if (!best || lost < best_lost || (lost == best_lost && gap < best_gap)) {
      best = {s, p};
      best_lost = lost;
      best_gap = gap;
    }
  }
  if (!best)
    throw ShapeError("mixing geometry: no stride/padding maps " + std::to_string(in) + " to " +
                     std::to_string(out) + " with kernel " + std::to_string(kernel));
  return *best;
}

ConvSpec mixing_spec(const ModelConfig& config, std::int64_t level) {
  const Extents3 in = config.level_extents(level);
  const Extents3 out = config.output_extents(level);
  const Extents3 k = config.basis_extents();
  if (in.h < 1 || in.w < 1 || k.h < 1 || k.w < 1)
    throw ShapeError("mixing geometry: level " + std::to_string(level) + " has empty extents");
  ConvSpec spec;
  spec.in_channels = config.m;
  spec.out_channels = config.u;
  spec.kernel = {k.d, k.h, k.w};
  const auto [sd, pd] = solve_transposed_axis(in.d, k.d, out.d);
  const auto [sh, ph] = solve_transposed_axis(in.h, k.h, out.h);
  const auto [sw, pw] = solve_transposed_axis(in.w, k.w, out.w);
  spec.stride = {sd, sh, sw};
  spec.padding = {pd, ph, pw};
  return spec;
}

// ---------------------------------------------------------------- layers

namespace {

ConvSpec make_spec(std::int64_t cin, std::int64_t cout, Triple k, Triple s, Triple p) {
  ConvSpec spec;
  spec.in_channels = cin;
  spec.out_channels = cout;
  spec.kernel = k;
  spec.stride = s;
  spec.padding = p;
  return spec;
}

template <typename Real>
void he_uniform(BasicTensor<Real>& w, double fan_in, double slope, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * std::max(fan_in, 1.0)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : w.mutable_data()) v = static_cast<Real>(dist(rng));
}

std::int64_t taps(const ConvSpec& s) { return s.kernel[0] * s.kernel[1] * s.kernel[2]; }

template <typename Real>
BasicTensor<Real> conv_weight(const ConvSpec& spec, bool transposed) {
  const Shape shape = transposed ? Shape{spec.in_channels, spec.out_channels / spec.groups, spec.kernel[0],
                                         spec.kernel[1], spec.kernel[2]}
                                 : Shape{spec.out_channels, spec.in_channels / spec.groups, spec.kernel[0],
                                         spec.kernel[1], spec.kernel[2]};
  return BasicTensor<Real>(shape, Real(0));
}

double fan_in(const ConvSpec& spec, bool transposed) {
  const double per_tap = static_cast<double>(spec.in_channels / spec.groups);
  if (!transposed) return per_tap * static_cast<double>(taps(spec));
  const double overlap = static_cast<double>(taps(spec)) /
                         static_cast<double>(spec.stride[0] * spec.stride[1] * spec.stride[2]);
  return per_tap * std::max(overlap, 1.0);
}

// Convolution, batch norm, leaky ReLU. No conv bias: the batch-norm shift
// subsumes it.
template <typename Real>
struct ConvBlock {
  ConvSpec spec;
  bool transposed = false;
  BasicTensor<Real> weight, gamma, beta;
  BatchNormState<Real> bn;

  ConvBlock(const ConvSpec& s, bool trans, double slope, std::mt19937_64& rng)
      : spec(s), transposed(trans), weight(conv_weight<Real>(s, trans)),
        gamma(Shape{s.out_channels}, Real(1)), beta(Shape{s.out_channels}, Real(0)), bn(s.out_channels) {
    spec.validate();
    he_uniform(weight, fan_in(spec, transposed), slope, rng);
    weight.set_requires_grad();
    gamma.set_requires_grad();
    beta.set_requires_grad();
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x, bool training, Real slope) {
    const auto y = transposed ? transposed_conv3d(x, weight, spec) : conv3d<Real>(x, weight, std::nullopt, spec);
    return leaky_relu(batch_norm(y, gamma, beta, bn, training), slope);
  }

  void collect(const std::string& prefix, std::vector<NamedTensor<Real>>& params,
               std::vector<NamedTensor<Real>>& buffers) {
    params.push_back({prefix + ".weight", &weight, true});
    params.push_back({prefix + ".bn.gamma", &gamma, true});
    params.push_back({prefix + ".bn.beta", &beta, true});
    buffers.push_back({prefix + ".bn.running_mean", &bn.running_mean, false});
    buffers.push_back({prefix + ".bn.running_var", &bn.running_var, false});
  }
};

// Convolution with bias and no normalization or activation.
template <typename Real>
struct PlainConv {
  ConvSpec spec;
  bool transposed = false;
  BasicTensor<Real> weight, bias;

  PlainConv(const ConvSpec& s, bool trans, double slope, std::mt19937_64& rng)
      : spec(s), transposed(trans), weight(conv_weight<Real>(s, trans)), bias(Shape{s.out_channels}, Real(0)) {
    spec.validate();
    he_uniform(weight, fan_in(spec, transposed), slope, rng);
    weight.set_requires_grad();
    bias.set_requires_grad();
  }

  BasicTensor<Real> forward(const BasicTensor<Real>& x) const {
    return transposed ? transposed_conv3d(x, weight, spec, std::optional<BasicTensor<Real>>(bias))
                      : conv3d(x, weight, std::optional<BasicTensor<Real>>(bias), spec);
  }

  void collect(const std::string& prefix, std::vector<NamedTensor<Real>>& params) {
    params.push_back({prefix + ".weight", &weight, true});
    params.push_back({prefix + ".bias", &bias, true});
  }
};

constexpr Triple k_down{1, 4, 4}, s_down{1, 2, 2}, p_down{0, 1, 1};
constexpr Triple k_3x3{1, 3, 3}, s_1{1, 1, 1}, p_3x3{0, 1, 1};
constexpr Triple k_1x1{1, 1, 1}, p_0{0, 0, 0};
constexpr Triple k_up{1, 2, 2};

// One channel group of the U-Net backbone.
template <typename Real>
struct Backbone {
  std::vector<ConvBlock<Real>> down;    // [n-k]: level k -> k-1 (stride (1,2,2))
  std::vector<ConvBlock<Real>> refine;  // [n-k]: (1,3,3) block after down[n-k]
  std::vector<ConvBlock<Real>> up;      // [k]: level k -> k+1, k = 0..n-1
  std::vector<ConvBlock<Real>> fuse;    // [k-1]: 1x1 block over concat(A', corr-, corr+)
  std::vector<PlainConv<Real>> reduce;  // [k-1]: 1x1 conv to m/g channels

  Backbone(const ModelConfig& c, std::mt19937_64& rng) {
    const std::int64_t g = c.groups, n = c.n;
    const double slope = c.leaky_slope;
    for (std::int64_t k = n; k >= 1; --k) {
      const std::int64_t from = c.channels(k) / g, to = c.channels(k - 1) / g;
      down.emplace_back(make_spec(from, to, k_down, s_down, p_down), false, slope, rng);
      refine.emplace_back(make_spec(to, to, k_3x3, s_1, p_3x3), false, slope, rng);
    }
    for (std::int64_t k = 0; k < n; ++k)
      up.emplace_back(make_spec(c.channels(k) / g, c.channels(k + 1) / g, k_up, k_up, p_0), true, slope, rng);
    for (std::int64_t k = 1; k <= n; ++k) {
      const std::int64_t ck = c.channels(k) / g;
      fuse.emplace_back(make_spec(ck + 2 * c.corr.channels(), ck, k_1x1, s_1, p_0), false, slope, rng);
      reduce.emplace_back(make_spec(ck, c.m / g, k_1x1, s_1, p_0), false, 1.0, rng);
    }
  }

  void collect(const std::string& prefix, std::int64_t n, std::vector<NamedTensor<Real>>& params,
               std::vector<NamedTensor<Real>>& buffers) {
    for (std::int64_t j = 0; j < n; ++j) {
      const std::string lvl = std::to_string(n - j);
      down[static_cast<std::size_t>(j)].collect(prefix + ".contract" + lvl + ".down", params, buffers);
      refine[static_cast<std::size_t>(j)].collect(prefix + ".contract" + lvl + ".conv", params, buffers);
    }
    for (std::int64_t k = 0; k < n; ++k)
      up[static_cast<std::size_t>(k)].collect(prefix + ".up" + std::to_string(k), params, buffers);
    for (std::int64_t k = 1; k <= n; ++k) {
      fuse[static_cast<std::size_t>(k - 1)].collect(prefix + ".fuse" + std::to_string(k), params, buffers);
      reduce[static_cast<std::size_t>(k - 1)].collect(prefix + ".reduce" + std::to_string(k), params);
    }
  }
};

template <typename Real>
struct GroupResult {
  std::vector<BasicTensor<Real>> contracted;  // centre frame, k = 0..n
  std::vector<BasicTensor<Real>> corr_prev, corr_next, fused, reduced;
};

// Restores the caller's no-grad state on a pool thread.
struct GradScope {
  std::optional<NoGradGuard> guard;
  explicit GradScope(bool record) {
    if (!record) guard.emplace();
  }
};

}  // namespace

template <typename Real>
struct IcaUNet<Real>::Layers {
  ConvBlock<Real> stem0, stem1, a_head, x_head0, x_head1;
  PlainConv<Real> x_up;
  std::vector<Backbone<Real>> groups;
  std::vector<PlainConv<Real>> head;  // [k-1]
  std::vector<ConvSpec> mixing;       // [k-1]

  Layers(const ModelConfig& c, std::mt19937_64& rng)
      : stem0(make_spec(1, c.stem_channels, {2, 4, 4}, {2, 2, 2}, {0, 1, 1}), false, c.leaky_slope, rng),
        stem1(make_spec(c.stem_channels, c.stem_channels, k_down, s_down, p_down), false, c.leaky_slope, rng),
        a_head(make_spec(c.stem_channels, c.m, k_3x3, s_1, p_3x3), false, c.leaky_slope, rng),
        x_head0(make_spec(c.stem_channels, c.u * c.m, k_down, s_down, p_down), false, c.leaky_slope, rng),
        x_head1(make_spec(c.u * c.m, c.u * c.m, k_down, s_down, p_down), false, c.leaky_slope, rng),
        x_up(make_spec(c.u * c.m, c.u * c.m, {2, 1, 1}, {2, 1, 1}, {0, 0, 0}), true, 1.0, rng) {
    for (std::int64_t g = 0; g < c.groups; ++g) groups.emplace_back(c, rng);
    for (std::int64_t k = 1; k <= c.n; ++k) {
      head.emplace_back(make_spec(c.u, c.num_classes, k_3x3, s_1, p_3x3), false, 1.0, rng);
      mixing.push_back(mixing_spec(c, k));
    }
  }
};

template <typename Real>
IcaUNet<Real>::IcaUNet(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  layers_ = std::make_unique<Layers>(config_, rng);
}

template <typename Real>
IcaUNet<Real>::~IcaUNet() = default;

template <typename Real>
std::pair<BasicTensor<Real>, BasicTensor<Real>> IcaUNet<Real>::encode(const BasicTensor<Real>& frame, bool training,
                                                                      bool with_basis) {
  const auto& e = config_.extents;
  if (frame.shape() != Shape{1, 1, e.d, e.h, e.w})
    throw ShapeError("model: frame must be (1,1," + std::to_string(e.d) + "," + std::to_string(e.h) + "," +
                     std::to_string(e.w) + "), got " + shape_str(frame.shape()));
  auto& L = *layers_;
  const Real slope = static_cast<Real>(config_.leaky_slope);
  const auto shared = L.stem1.forward(L.stem0.forward(frame, training, slope), training, slope);
  auto a = L.a_head.forward(shared, training, slope);
  BasicTensor<Real> x;
  if (with_basis) {
    const auto h = L.x_head1.forward(L.x_head0.forward(shared, training, slope), training, slope);
    x = L.x_up.forward(h);
  }
  return {a, x};
}

template <typename Real>
ModelOutputs<Real> IcaUNet<Real>::forward(const BasicTensor<Real>& prev, const BasicTensor<Real>& cur,
                                          const BasicTensor<Real>& next, bool training, ThreadPool* pool) {
  if (prev.shape() != cur.shape() || next.shape() != cur.shape())
    throw ShapeError("model: neighbour frames differ in shape from the centre frame");
  const ModelConfig& c = config_;
  auto& L = *layers_;
  const Real slope = static_cast<Real>(c.leaky_slope);
  const bool record = grad_enabled();
  ThreadPool* workers = (!training && !record) ? pool : nullptr;

  // Encoder on all three frames; only the centre frame's basis is used.
  const BasicTensor<Real>* frames[3] = {&prev, &cur, &next};
  std::pair<BasicTensor<Real>, BasicTensor<Real>> enc[3];
  run_indexed(workers, 3, [&](std::size_t i) {
    GradScope scope(record);
    enc[i] = encode(*frames[i], training, i == 1);
  });

  const std::int64_t n = c.n, g = c.groups, mg = c.m / g;
  std::vector<GroupResult<Real>> results(static_cast<std::size_t>(g));
  run_indexed(workers, static_cast<std::size_t>(g), [&](std::size_t gi) {
    GradScope scope(record);
    auto& net = L.groups[gi];
    auto& out = results[gi];
    const auto j = static_cast<std::int64_t>(gi);
    // a[f][k]: level-k tensor of frame f. Neighbours stop at level 1 since
    // correlation is never taken at the bottleneck.
    std::vector<std::vector<BasicTensor<Real>>> a(3, std::vector<BasicTensor<Real>>(static_cast<std::size_t>(n + 1)));
    for (std::size_t f = 0; f < 3; ++f) {
      a[f][static_cast<std::size_t>(n)] = g == 1 ? enc[f].first : slice_channels(enc[f].first, j * mg, (j + 1) * mg);
      const std::int64_t lowest = f == 1 ? 0 : 1;
      for (std::int64_t k = n; k > lowest; --k) {
        const auto idx = static_cast<std::size_t>(n - k);
        a[f][static_cast<std::size_t>(k - 1)] =
            net.refine[idx].forward(net.down[idx].forward(a[f][static_cast<std::size_t>(k)], training, slope),
                                    training, slope);
      }
    }
    out.contracted = a[1];
    auto lifted = net.up[0].forward(a[1][0], training, slope);
    for (std::int64_t k = 1; k <= n; ++k) {
      const auto ki = static_cast<std::size_t>(k);
      auto cm = correlation3d(a[1][ki], a[0][ki], c.corr);
      auto cp = correlation3d(a[1][ki], a[2][ki], c.corr);
      auto fused = net.fuse[ki - 1].forward(concat_channels<Real>({lifted, cm, cp}), training, slope);
      out.reduced.push_back(net.reduce[ki - 1].forward(fused));
      if (k < n) lifted = net.up[ki].forward(fused, training, slope);
      out.corr_prev.push_back(std::move(cm));
      out.corr_next.push_back(std::move(cp));
      out.fused.push_back(std::move(fused));
    }
  });

  auto gather = [&](auto member, std::size_t index) {
    if (g == 1) return (results[0].*member)[index];
    std::vector<BasicTensor<Real>> parts;
    for (auto& r : results) parts.push_back((r.*member)[index]);
    return concat_channels(parts);
  };

  ModelOutputs<Real> out;
  out.mixing = enc[1].first;
  out.basis = enc[1].second;
  for (std::int64_t k = 0; k <= n; ++k)
    out.contracted.push_back(gather(&GroupResult<Real>::contracted, static_cast<std::size_t>(k)));

  const Extents3 be = c.basis_extents();
  const auto kernel = reshape(out.basis, Shape{c.m, c.u, be.d, be.h, be.w});
  for (std::int64_t k = 1; k <= n; ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    out.corr_prev.push_back(gather(&GroupResult<Real>::corr_prev, i));
    out.corr_next.push_back(gather(&GroupResult<Real>::corr_next, i));
    out.fused.push_back(gather(&GroupResult<Real>::fused, i));
    out.reduced.push_back(gather(&GroupResult<Real>::reduced, i));
    out.mixed.push_back(transposed_conv3d(out.reduced.back(), kernel, L.mixing[i]));
    out.logits.push_back(L.head[i].forward(out.mixed.back()));
  }
  return out;
}

template <typename Real>
std::vector<NamedTensor<Real>> IcaUNet<Real>::tensors() {
  std::vector<NamedTensor<Real>> params, buffers;
  auto& L = *layers_;
  L.stem0.collect("encoder.stem0", params, buffers);
  L.stem1.collect("encoder.stem1", params, buffers);
  L.a_head.collect("encoder.a_head", params, buffers);
  L.x_head0.collect("encoder.x_head0", params, buffers);
  L.x_head1.collect("encoder.x_head1", params, buffers);
  L.x_up.collect("encoder.x_up", params);
  for (std::size_t gi = 0; gi < L.groups.size(); ++gi)
    L.groups[gi].collect("backbone.g" + std::to_string(gi), config_.n, params, buffers);
  for (std::size_t k = 0; k < L.head.size(); ++k) L.head[k].collect("decoder" + std::to_string(k + 1) + ".head", params);
  params.insert(params.end(), buffers.begin(), buffers.end());
  return params;
}

template <typename Real>
std::vector<NamedTensor<Real>> IcaUNet<Real>::parameters() {
  auto all = tensors();
  std::erase_if(all, [](const NamedTensor<Real>& t) { return !t.trainable; });
  return all;
}

template <typename Real>
std::int64_t IcaUNet<Real>::parameter_count() {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor->numel();
  return total;
}

template <typename Real>
void IcaUNet<Real>::zero_grad() {
  for (auto& p : parameters()) p.tensor->zero_grad();
}

// ---------------------------------------------------------------- checkpoint

namespace {
constexpr char kCheckpointMagic[4] = {'I', 'C', 'A', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace

template <typename Real>
std::vector<std::uint8_t> checkpoint_bytes(IcaUNet<Real>& model) {
  io::ByteWriter w;
  w.put_bytes(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put_string(model.config().to_text());
  auto all = model.tensors();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(all.size()));
  for (const auto& t : all) {
    w.put_string(t.name);
    const Shape& s = t.tensor->shape();
    w.put<std::uint8_t>(static_cast<std::uint8_t>(s.size()));
    for (auto e : s) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
    for (Real v : t.tensor->data()) w.put<float>(static_cast<float>(v));
  }
  return w.bytes();
}

template <typename Real>
void save_checkpoint(const std::string& path, IcaUNet<Real>& model) {
  io::write_file(path, checkpoint_bytes(model));
}

std::unique_ptr<IcaUNet<float>> checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  char magic[4];
  r.get_bytes(magic, 4, "magic");
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) throw FormatError("not an ICAC checkpoint", 0);
  const auto version_at = r.offset();
  if (r.get<std::uint32_t>("version") != kCheckpointVersion)
    throw FormatError("unsupported ICAC version", version_at);
  const auto config_at = r.offset();
  ModelConfig config;
  try {
    config = ModelConfig::from_text(r.get_string("config"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("bad model config: ") + e.what(), config_at);
  }
  auto model = std::make_unique<IcaUNet<float>>(config);
  auto all = model->tensors();
  const auto count_at = r.offset();
  if (r.get<std::uint32_t>("tensor count") != all.size())
    throw FormatError("tensor count does not match the model", count_at);
  for (auto& t : all) {
    const auto name_at = r.offset();
    if (r.get_string("tensor name") != t.name) throw FormatError("expected tensor '" + t.name + "'", name_at);
    const auto shape_at = r.offset();
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& e : shape) e = r.get<std::uint32_t>("extent");
    if (shape != t.tensor->shape()) throw FormatError("shape mismatch for '" + t.name + "'", shape_at);
    auto data = t.tensor->mutable_data();
    r.need(data.size() * sizeof(float), "tensor data");
    for (auto& v : data) v = r.get<float>("tensor data");
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return model;
}

std::unique_ptr<IcaUNet<float>> load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(io::read_file(path));
}

template class IcaUNet<float>;
template class IcaUNet<double>;
template void save_checkpoint<float>(const std::string&, IcaUNet<float>&);
template void save_checkpoint<double>(const std::string&, IcaUNet<double>&);
template std::vector<std::uint8_t> checkpoint_bytes<float>(IcaUNet<float>&);
template std::vector<std::uint8_t> checkpoint_bytes<double>(IcaUNet<double>&);

}  // namespace icaunet
