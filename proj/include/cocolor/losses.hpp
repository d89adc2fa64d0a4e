#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "cocolor/autodiff.hpp"
#include "cocolor/common.hpp"
#include "cocolor/ops.hpp"
#include "cocolor/tensor.hpp"

// Scalar training objectives, all differentiable through the tape. Every
// function returns a one-element Var.
namespace cocolor {

struct LossWeights {
  double lambda1 = 0.1;    // cycle
  double lambda2 = 0.01;   // identity
  double lambda3 = 0.025;  // latent-path term against the gray sample's truth
  double lambda4 = 0.025;  // latent-path term against the NIR sample's truth
  double lambda_p = 10.0;  // pair
  double lambda_c = 1.0;   // bilateral consistency

  void validate() const {
    require(lambda1 >= 0 && lambda2 >= 0 && lambda3 >= 0 && lambda4 >= 0 && lambda_p >= 0 &&
                lambda_c >= 0,
            "loss weights must be nonnegative");
  }
};

// Per-step scalar record; total is the generator-side objective.
struct LossBreakdown {
  double pair = 0;
  double blt = 0;
  double gan_img_n = 0;
  double gan_feat_n = 0;
  double gan_img_g = 0;
  double gan_feat_g = 0;
  double cyc = 0;
  double idt = 0;
  double tran = 0;
  double total = 0;
};

inline Var<double> l1_loss(Var<double> a, Var<double> b) {
  return mean_all(abs_val(sub(a, b)));
}

// Normalized 2-D Gaussian window as a plain tensor.
inline Tensor<double> gaussian_window(int size, double sigma) {
  require(size >= 1 && size % 2 == 1, "window size must be odd and positive");
  Tensor<double> w({size, size});
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2.0 * sigma * sigma));
      w[i * size + j] = v;
      sum += v;
    }
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] /= sum;
  return w;
}

namespace detail {

constexpr double kSsimC1 = 1e-4;  // (0.01 * peak)^2, peak = 1
constexpr double kSsimC2 = 9e-4;  // (0.03 * peak)^2

struct SsimMeans {
  Var<double> l;   // scalar mean of the luminance map
  Var<double> cs;  // scalar mean of the contrast-structure map
};

// Gaussian-windowed SSIM component means over all valid positions.
inline SsimMeans ssim_means(Var<double> a, Var<double> b, const Tensor<double>& window) {
  Var<double> mu_a = depthwise_conv_valid(a, window);
  Var<double> mu_b = depthwise_conv_valid(b, window);
  Var<double> e_aa = depthwise_conv_valid(mul(a, a), window);
  Var<double> e_bb = depthwise_conv_valid(mul(b, b), window);
  Var<double> e_ab = depthwise_conv_valid(mul(a, b), window);
  Var<double> var_a = sub(e_aa, mul(mu_a, mu_a));
  Var<double> var_b = sub(e_bb, mul(mu_b, mu_b));
  Var<double> cov = sub(e_ab, mul(mu_a, mu_b));

  Var<double> l_map = div(add_const(scale(mul(mu_a, mu_b), 2.0), kSsimC1),
                          add_const(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), kSsimC1));
  Var<double> cs_map =
      div(add_const(scale(cov, 2.0), kSsimC2), add_const(add(var_a, var_b), kSsimC2));
  return {mean_all(l_map), mean_all(cs_map)};
}

}  // namespace detail

// Number of scales the multi-scale structural similarity uses for a given
// spatial extent: as many halvings as keep an 11x11 window valid, capped at 5.
inline int ms_ssim_scales(int min_hw) {
  require(min_hw >= 8, "image too small for structural similarity");
  if (min_hw < 11) return 1;          // 7x7 fallback window, single scale
  int s = 1;
  while (s < 5 && (min_hw >> s) >= 11) ++s;
  return s;
}

// Multi-scale structural similarity in (0, 1]; exactly 1 for identical
// inputs. Standard five-scale weights renormalized to the scales in use;
// contrast terms from every scale, luminance from the coarsest only.
inline Var<double> ms_ssim(Var<double> a, Var<double> b) {
  require_same_shape(a.val(), b.val(), "ms_ssim");
  require(a.val().shape().size() == 4, "ms_ssim expects a rank-4 batch");
  const int h = a.val().shape()[2], w = a.val().shape()[3];
  const int min_hw = h < w ? h : w;
  const int s = ms_ssim_scales(min_hw);
  const Tensor<double> window = gaussian_window(min_hw < 11 ? 7 : 11, 1.5);

  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double wsum = 0.0;
  for (int j = 0; j < s; ++j) wsum += kWeights[j];

  Var<double> prod{nullptr, -1};
  Var<double> ca = a, cb = b;
  for (int j = 0; j < s; ++j) {
    const double wj = kWeights[j] / wsum;
    detail::SsimMeans m = detail::ssim_means(ca, cb, window);
    Var<double> term = pow_const(max_const(m.cs, 1e-8), wj);
    if (j == s - 1) term = mul(term, pow_const(max_const(m.l, 1e-8), wj));
    prod = (j == 0) ? term : mul(prod, term);
    if (j + 1 < s) {
      ca = avg_pool2(ca);
      cb = avg_pool2(cb);
    }
  }
  return prod;
}

// 0.84 perceptual + 0.16 pixel blend; zero exactly for identical inputs.
inline Var<double> mix_loss(Var<double> a, Var<double> b) {
  constexpr double kAlpha = 0.84;
  Var<double> structural = affine(ms_ssim(a, b), -kAlpha, kAlpha);  // α(1 − msssim)
  return add(structural, scale(l1_loss(a, b), 1.0 - kAlpha));
}

// Supervision for both colorizers: each direct output against its own truth,
// each latent-path output against the truth of the sample it came from.
inline Var<double> pair_loss(Var<double> out_g_direct, Var<double> out_g_latent,
                             Var<double> out_n_direct, Var<double> out_n_latent,
                             Var<double> gt_gray_rgb, Var<double> gt_nir_rgb,
                             const LossWeights& w) {
  Var<double> loss = l1_loss(gt_gray_rgb, out_g_direct);
  loss = add(loss, scale(l1_loss(gt_nir_rgb, out_g_latent), w.lambda3));
  loss = add(loss, l1_loss(gt_nir_rgb, out_n_direct));
  loss = add(loss, scale(l1_loss(gt_gray_rgb, out_n_latent), w.lambda4));
  return loss;
}

// Agreement between the direct and translator-routed colorizations.
inline Var<double> bilateral_consistency_loss(Var<double> n2c, Var<double> n2g2c,
                                              Var<double> g2c, Var<double> g2n2c) {
  return add(mix_loss(n2c, n2g2c), mix_loss(g2c, g2n2c));
}

// Least-squares adversarial objectives on raw patch scores.
inline Var<double> gan_loss_d(Var<double> real_scores, Var<double> fake_scores) {
  if (!real_scores.val().all_finite() || !fake_scores.val().all_finite())
    throw NumericError("non-finite discriminator scores");
  return add(mean_all(square(add_const(real_scores, -1.0))), mean_all(square(fake_scores)));
}

inline Var<double> gan_loss_g(Var<double> fake_scores) {
  if (!fake_scores.val().all_finite()) throw NumericError("non-finite discriminator scores");
  return mean_all(square(add_const(fake_scores, -1.0)));
}

inline Var<double> cycle_loss(Var<double> g_roundtrip, Var<double> g_orig,
                              Var<double> n_roundtrip, Var<double> n_orig) {
  return add(l1_loss(g_roundtrip, g_orig), l1_loss(n_roundtrip, n_orig));
}

inline Var<double> identity_loss(Var<double> n2g_of_gray, Var<double> gray,
                                 Var<double> g2n_of_nir, Var<double> nir) {
  return add(l1_loss(n2g_of_gray, gray), l1_loss(g2n_of_nir, nir));
}

// Generator-side adversarial terms plus cycle and identity, pre-weighted.
struct TranslationTerms {
  Var<double> gan_img_n;
  Var<double> gan_feat_n;
  Var<double> gan_img_g;
  Var<double> gan_feat_g;
  Var<double> cyc;
  Var<double> idt;
};

inline Var<double> translation_loss(const TranslationTerms& t, const LossWeights& w) {
  Var<double> loss = scale(t.cyc, w.lambda1);
  loss = add(loss, scale(t.idt, w.lambda2));
  loss = add(loss, t.gan_img_n);
  loss = add(loss, t.gan_feat_n);
  loss = add(loss, t.gan_img_g);
  return add(loss, t.gan_feat_g);
}

inline Var<double> total_loss(Var<double> tran, Var<double> pair, Var<double> blt,
                              const LossWeights& w) {
  Var<double> loss = add(tran, scale(pair, w.lambda_p));
  Var<double> out = add(loss, scale(blt, w.lambda_c));
  if (!out.val().all_finite()) throw NumericError("total loss is non-finite");
  return out;
}

// Value-only convenience for evaluation code.
inline double mix_loss_value(const Tensor<double>& a, const Tensor<double>& b) {
  Tape<double> tape;
  return mix_loss(make_constant(tape, a), make_constant(tape, b)).val()[0];
}

}  // namespace cocolor
