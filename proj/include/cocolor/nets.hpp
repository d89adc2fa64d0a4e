#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cocolor/digest.hpp"
#include "cocolor/ops.hpp"
#include "cocolor/rng.hpp"
#include "cocolor/tensor.hpp"

namespace cocolor {

namespace detail {

inline int ilog2_exact(int v, const char* what) {
  require(v > 0 && (v & (v - 1)) == 0, std::string(what) + " must be a power of two");
  int l = 0;
  while ((1 << l) < v) ++l;
  return l;
}

}  // namespace detail

// U-Net: stride-2 4x4 encoder convolutions (normalization from level 2,
// innermost unnormalized, leaky 0.2), mirrored stride-2 transposed
// convolutions with skip concatenation (all normalized, relu), then a 1x1
// projection squashed to (0,1).
struct GeneratorSpec {
  int in_channels = 1;
  int out_channels = 3;
  int image_size = 256;
  int base_channels = 64;
  int depth = 0;  // 0 → log2(image_size) − 2

  int resolved_depth() const {
    return depth > 0 ? depth : detail::ilog2_exact(image_size, "image_size") - 2;
  }

  void validate() const {
    require(image_size >= 8, "image_size must be at least 8");
    int lg = detail::ilog2_exact(image_size, "image_size");
    require((in_channels == 1 || in_channels == 3) && (out_channels == 1 || out_channels == 3),
            "channel counts must be 1 or 3");
    require(base_channels >= 1, "base_channels must be positive");
    int d = resolved_depth();
    require(d >= 1 && d <= lg, "depth must satisfy 1 <= depth and 2^depth <= image_size");
  }

  // Encoder output channels at level k (1-based), doubling and capped.
  int enc_channels(int k) const {
    int c = base_channels << (k - 1);
    int cap = 8 * base_channels;
    return c < cap ? c : cap;
  }
};

// PatchGAN: n_layers stride-2 4x4 convolutions (normalization from the
// second), a stride-1 block, then a 1-channel stride-1 head of raw scores.
struct DiscriminatorSpec {
  int in_channels = 1;
  int n_layers = 3;
  int base_channels = 64;

  void validate() const {
    require(in_channels == 1 || in_channels == 3, "in_channels must be 1 or 3");
    require(n_layers >= 0 && n_layers <= 5, "n_layers out of range");
    require(base_channels >= 1, "base_channels must be positive");
  }

  int layer_channels(int i) const {  // 1-based stride-2 layer
    int c = base_channels << (i - 1);
    int cap = 8 * base_channels;
    return c < cap ? c : cap;
  }
  int pen_channels() const {
    int c = base_channels << n_layers;
    int cap = 8 * base_channels;
    return c < cap ? c : cap;
  }
};

inline int default_n_layers(int image_size) {
  int lg = detail::ilog2_exact(image_size, "image_size");
  int n = lg - 3;
  if (n < 0) n = 0;
  return n < 3 ? n : 3;
}

// Ordered named parameter tensors; the walk order is canonical and shared by
// construction, initialization, forward evaluation, and serialization.
struct Params {
  std::vector<std::pair<std::string, Tensor<double>>> entries;

  Tensor<double>& at(const std::string& name) {
    for (auto& [n, t] : entries)
      if (n == name) return t;
    throw ShapeError("no parameter named " + name);
  }
  const Tensor<double>& at(const std::string& name) const {
    return const_cast<Params*>(this)->at(name);
  }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [name, t] : entries) n += t.numel();
    return n;
  }

  bool all_finite() const {
    for (const auto& [name, t] : entries)
      if (!t.all_finite()) return false;
    return true;
  }

  std::uint64_t digest() const {
    Fnv1a64 d;
    for (const auto& [name, t] : entries) {
      d.update_string(name);
      d.update(t.data(), static_cast<std::size_t>(t.numel()) * sizeof(double));
    }
    return d.value();
  }
};

namespace detail {

inline void add_param(Params& p, const std::string& name, std::vector<int> shape) {
  p.entries.emplace_back(name, Tensor<double>(std::move(shape)));
}

}  // namespace detail

// Weights ~ N(0, 0.02), biases 0, filled in canonical entry order.
inline void init_params(Params& p, Rng& rng) {
  for (auto& [name, t] : p.entries) {
    if (name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
      for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.02 * rng.normal();
    } else {
      for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
    }
  }
}

inline Params build_generator(const GeneratorSpec& spec, Rng& rng) {
  spec.validate();
  const int d = spec.resolved_depth();
  Params p;
  int prev = spec.in_channels;
  for (int k = 1; k <= d; ++k) {
    detail::add_param(p, "enc" + std::to_string(k) + ".w", {spec.enc_channels(k), prev, 4, 4});
    detail::add_param(p, "enc" + std::to_string(k) + ".b", {spec.enc_channels(k)});
    prev = spec.enc_channels(k);
  }
  for (int j = d; j >= 1; --j) {
    int cin = (j == d) ? spec.enc_channels(d) : 2 * spec.enc_channels(j);
    int cout = (j >= 2) ? spec.enc_channels(j - 1) : spec.base_channels;
    detail::add_param(p, "dec" + std::to_string(j) + ".w", {cin, cout, 4, 4});
    detail::add_param(p, "dec" + std::to_string(j) + ".b", {cout});
  }
  detail::add_param(p, "out.w", {spec.out_channels, spec.base_channels, 1, 1});
  detail::add_param(p, "out.b", {spec.out_channels});
  init_params(p, rng);
  return p;
}

inline Params build_discriminator(const DiscriminatorSpec& spec, Rng& rng) {
  spec.validate();
  Params p;
  int prev = spec.in_channels;
  for (int i = 1; i <= spec.n_layers; ++i) {
    detail::add_param(p, "layer" + std::to_string(i) + ".w", {spec.layer_channels(i), prev, 4, 4});
    detail::add_param(p, "layer" + std::to_string(i) + ".b", {spec.layer_channels(i)});
    prev = spec.layer_channels(i);
  }
  detail::add_param(p, "pen.w", {spec.pen_channels(), prev, 4, 4});
  detail::add_param(p, "pen.b", {spec.pen_channels()});
  detail::add_param(p, "final.w", {1, spec.pen_channels(), 4, 4});
  detail::add_param(p, "final.b", {1});
  init_params(p, rng);
  return p;
}

// Parameters lifted onto a tape as leaves, entry-aligned with Params.
struct TapedNet {
  std::vector<Var<double>> v;

  Var<double> operator[](std::size_t i) const { return v[i]; }
};

inline TapedNet lift_params(Tape<double>& tape, const Params& p, bool trainable) {
  TapedNet net;
  net.v.reserve(p.entries.size());
  for (const auto& [name, t] : p.entries) net.v.push_back(make_leaf(tape, t, trainable));
  return net;
}

namespace detail {

inline void check_forward_input(const Tensor<double>& x, int channels, int size,
                                const char* what) {
  require(x.rank() == 4, std::string(what) + ": input must be (N, C, H, W)");
  require(x.size(1) == channels, std::string(what) + ": expected " + std::to_string(channels) +
                                     " channels, got " + std::to_string(x.size(1)));
  if (size > 0)
    require(x.size(2) == size && x.size(3) == size,
            std::string(what) + ": expected " + std::to_string(size) + "x" +
                std::to_string(size) + " input, got " + x.shape_str());
  if (!x.all_finite()) throw NumericError(std::string(what) + ": non-finite input");
}

}  // namespace detail

inline Var<double> generator_forward(const GeneratorSpec& spec, const TapedNet& net,
                                     Var<double> x) {
  const int d = spec.resolved_depth();
  detail::check_forward_input(x.val(), spec.in_channels, spec.image_size, "generator");
  std::vector<Var<double>> skips;
  skips.reserve(static_cast<std::size_t>(d));
  Var<double> h = x;
  std::size_t pi = 0;
  for (int k = 1; k <= d; ++k) {
    h = conv2d(h, net[pi], net[pi + 1], 2, 1);
    pi += 2;
    if (k >= 2 && k < d) h = instance_norm(h);
    h = leaky_relu(h, 0.2);
    skips.push_back(h);
  }
  for (int j = d; j >= 1; --j) {
    Var<double> in = (j == d) ? h : concat_channels(h, skips[static_cast<std::size_t>(j) - 1]);
    h = conv_transpose2d(in, net[pi], net[pi + 1], 2, 1);
    pi += 2;
    h = instance_norm(h);
    h = relu(h);
  }
  return sigmoid(conv2d(h, net[pi], net[pi + 1], 1, 0));
}

inline Var<double> discriminator_forward(const DiscriminatorSpec& spec, const TapedNet& net,
                                         Var<double> x) {
  detail::check_forward_input(x.val(), spec.in_channels, 0, "discriminator");
  Var<double> h = x;
  std::size_t pi = 0;
  for (int i = 1; i <= spec.n_layers; ++i) {
    h = conv2d(h, net[pi], net[pi + 1], 2, 1);
    pi += 2;
    if (i >= 2) h = instance_norm(h);
    h = leaky_relu(h, 0.2);
  }
  h = conv2d(h, net[pi], net[pi + 1], 1, 1);
  pi += 2;
  if (spec.n_layers >= 1) h = instance_norm(h);
  h = leaky_relu(h, 0.2);
  return conv2d(h, net[pi], net[pi + 1], 1, 1);
}

// Value-only forward for inference and evaluation.
inline Tensor<double> generator_apply(const GeneratorSpec& spec, const Params& p,
                                      const Tensor<double>& x) {
  Tape<double> tape;
  TapedNet net = lift_params(tape, p, false);
  return generator_forward(spec, net, make_constant(tape, x)).val();
}

// The eight networks: two translators, two colorizers, two image-level and
// two colorization-level discriminators.
struct ModelBundle {
  GeneratorSpec spec_tr;    // 1 → 1
  GeneratorSpec spec_col;   // 1 → 3
  DiscriminatorSpec spec_d_img;   // scores 1-channel images
  DiscriminatorSpec spec_d_feat;  // scores 3-channel colorizations
  Params g_n2g, g_g2n, f_n, f_g, d_img_n, d_img_g, d_feat_n, d_feat_g;

  static constexpr int kNetCount = 8;
  static const char* net_name(int i) {
    static const char* names[kNetCount] = {"g_n2g", "g_g2n", "f_n",      "f_g",
                                           "d_img_n", "d_img_g", "d_feat_n", "d_feat_g"};
    return names[i];
  }
  Params& net(int i) {
    Params* nets[kNetCount] = {&g_n2g, &g_g2n, &f_n, &f_g, &d_img_n, &d_img_g, &d_feat_n,
                               &d_feat_g};
    return *nets[i];
  }
  const Params& net(int i) const { return const_cast<ModelBundle*>(this)->net(i); }

  int image_size() const { return spec_tr.image_size; }
  int base_channels() const { return spec_tr.base_channels; }

  // Specs only; parameter entries left empty for a loader to fill.
  static ModelBundle shape_only(int image_size, int base_channels) {
    ModelBundle b;
    b.spec_tr = GeneratorSpec{1, 1, image_size, base_channels, 0};
    b.spec_col = GeneratorSpec{1, 3, image_size, base_channels, 0};
    int nl = default_n_layers(image_size);
    b.spec_d_img = DiscriminatorSpec{1, nl, base_channels};
    b.spec_d_feat = DiscriminatorSpec{3, nl, base_channels};
    return b;
  }

  static ModelBundle create(int image_size, int base_channels, std::uint64_t seed) {
    ModelBundle b = shape_only(image_size, base_channels);
    for (int i = 0; i < kNetCount; ++i) {
      Rng rng = Rng::derive(seed, 100, static_cast<std::uint64_t>(i));
      switch (i) {
        case 0:
        case 1:
          b.net(i) = build_generator(b.spec_tr, rng);
          break;
        case 2:
        case 3:
          b.net(i) = build_generator(b.spec_col, rng);
          break;
        case 4:
        case 5:
          b.net(i) = build_discriminator(b.spec_d_img, rng);
          break;
        default:
          b.net(i) = build_discriminator(b.spec_d_feat, rng);
          break;
      }
    }
    return b;
  }

  std::uint64_t digest() const {
    Fnv1a64 d;
    for (int i = 0; i < kNetCount; ++i) {
      d.update_string(net_name(i));
      d.update_value(net(i).digest());
    }
    return d.value();
  }
};

}  // namespace cocolor
