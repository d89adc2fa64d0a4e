#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cocolor/losses.hpp"
#include "gradcheck.hpp"

using cocolor::LossWeights;
using cocolor::Rng;
using cocolor::Tape;
using cocolor::Tensor;
using cocolor::Var;

namespace {

constexpr double kGradTol = 1e-3;

Tensor<double> random_image(std::vector<int> shape, Rng& rng, double lo = 0.05,
                            double hi = 0.95) {
  Tensor<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor<double> constant(std::vector<int> shape, double v) {
  Tensor<double> t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = v;
  return t;
}

double scalar(Var<double> v) { return v.val()[0]; }

// Reference multi-scale structural similarity, written as plain scalar
// loops with its own window, pooling, and scale handling. Shares nothing
// with the tape implementation beyond the published algorithm.
namespace ref {

std::vector<double> gaussian(int k, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(k) * k);
  double c = (k - 1) / 2.0, sum = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      double v = std::exp(-((i - c) * (i - c) + (j - c) * (j - c)) / (2 * sigma * sigma));
      w[static_cast<std::size_t>(i) * k + j] = v;
      sum += v;
    }
  for (double& v : w) v /= sum;
  return w;
}

struct Img {  // one batch as flat vector + dims
  std::vector<double> v;
  int n, c, h, w;
  double at(int ni, int ci, int y, int x) const {
    return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
  }
};

Img from_tensor(const Tensor<double>& t) {
  Img im;
  im.n = t.shape()[0];
  im.c = t.shape()[1];
  im.h = t.shape()[2];
  im.w = t.shape()[3];
  im.v.assign(t.data(), t.data() + t.numel());
  return im;
}

Img halve(const Img& a) {
  Img o;
  o.n = a.n;
  o.c = a.c;
  o.h = a.h / 2;
  o.w = a.w / 2;
  o.v.resize(static_cast<std::size_t>(o.n) * o.c * o.h * o.w);
  std::size_t idx = 0;
  for (int ni = 0; ni < o.n; ++ni)
    for (int ci = 0; ci < o.c; ++ci)
      for (int y = 0; y < o.h; ++y)
        for (int x = 0; x < o.w; ++x)
          o.v[idx++] = 0.25 * (a.at(ni, ci, 2 * y, 2 * x) + a.at(ni, ci, 2 * y, 2 * x + 1) +
                               a.at(ni, ci, 2 * y + 1, 2 * x) + a.at(ni, ci, 2 * y + 1, 2 * x + 1));
  return o;
}

void ssim_means(const Img& a, const Img& b, int k, double& l_out, double& cs_out) {
  const double c1 = 1e-4, c2 = 9e-4;
  std::vector<double> win = gaussian(k, 1.5);
  double lsum = 0, cssum = 0;
  std::int64_t count = 0;
  for (int ni = 0; ni < a.n; ++ni)
    for (int ci = 0; ci < a.c; ++ci)
      for (int y = 0; y + k <= a.h; ++y)
        for (int x = 0; x + k <= a.w; ++x) {
          double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
          for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
              double wv = win[static_cast<std::size_t>(i) * k + j];
              double av = a.at(ni, ci, y + i, x + j), bv = b.at(ni, ci, y + i, x + j);
              ma += wv * av;
              mb += wv * bv;
              aa += wv * av * av;
              bb += wv * bv * bv;
              ab += wv * av * bv;
            }
          double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
          lsum += (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
          cssum += (2 * cov + c2) / (va + vb + c2);
          ++count;
        }
  l_out = lsum / count;
  cs_out = cssum / count;
}

double msssim(const Tensor<double>& ta, const Tensor<double>& tb) {
  Img a = from_tensor(ta), b = from_tensor(tb);
  int min_hw = a.h < a.w ? a.h : a.w;
  int k = min_hw < 11 ? 7 : 11;
  int s = 1;
  if (min_hw >= 11)
    while (s < 5 && min_hw / (1 << s) >= 11) ++s;
  const double wts[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double wsum = 0;
  for (int j = 0; j < s; ++j) wsum += wts[j];
  double prod = 1;
  for (int j = 0; j < s; ++j) {
    double l, cs;
    ssim_means(a, b, k, l, cs);
    double wj = wts[j] / wsum;
    prod *= std::pow(std::max(cs, 1e-8), wj);
    if (j == s - 1) prod *= std::pow(std::max(l, 1e-8), wj);
    if (j + 1 < s) {
      a = halve(a);
      b = halve(b);
    }
  }
  return prod;
}

}  // namespace ref

}  // namespace

TEST_CASE("l1 loss basics") {
  Rng rng(1);
  Tensor<double> a = random_image({2, 3, 8, 8}, rng, 0.2, 0.8);
  Tensor<double> b = a;
  for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += 0.1;
  Tape<double> t;
  auto va = cocolor::make_constant(t, a);
  auto vb = cocolor::make_constant(t, b);
  REQUIRE(scalar(cocolor::l1_loss(va, va)) == 0.0);
  REQUIRE(scalar(cocolor::l1_loss(va, vb)) == Catch::Approx(0.1).margin(1e-12));
  REQUIRE(scalar(cocolor::l1_loss(va, vb)) == scalar(cocolor::l1_loss(vb, va)));
}

TEST_CASE("scale count tracks spatial extent") {
  REQUIRE(cocolor::ms_ssim_scales(8) == 1);
  REQUIRE(cocolor::ms_ssim_scales(10) == 1);
  REQUIRE(cocolor::ms_ssim_scales(11) == 1);
  REQUIRE(cocolor::ms_ssim_scales(22) == 2);
  REQUIRE(cocolor::ms_ssim_scales(32) == 2);
  REQUIRE(cocolor::ms_ssim_scales(64) == 3);
  REQUIRE(cocolor::ms_ssim_scales(176) == 5);
  REQUIRE(cocolor::ms_ssim_scales(512) == 5);
  REQUIRE_THROWS_AS(cocolor::ms_ssim_scales(7), cocolor::ShapeError);
}

TEST_CASE("multiscale similarity fixed points and reference") {
  Rng rng(2);
  Tape<double> t;
  Tensor<double> a64 = random_image({1, 3, 64, 64}, rng);
  auto va = cocolor::make_constant(t, a64);
  REQUIRE(scalar(cocolor::ms_ssim(va, va)) == 1.0);

  for (int trial = 0; trial < 3; ++trial) {
    Tensor<double> x = random_image({1, 3, 64, 64}, rng);
    Tensor<double> y = random_image({1, 3, 64, 64}, rng);
    Tape<double> tt;
    double got = scalar(cocolor::ms_ssim(cocolor::make_constant(tt, x), cocolor::make_constant(tt, y)));
    double want = ref::msssim(x, y);
    REQUIRE(got == Catch::Approx(want).margin(1e-4));
    REQUIRE(got > 0.0);
    REQUIRE(got <= 1.0);
  }

  // Smaller sizes exercise the two-scale and fallback-window branches.
  for (int hw : {32, 8}) {
    Tensor<double> x = random_image({2, 1, hw, hw}, rng);
    Tensor<double> y = random_image({2, 1, hw, hw}, rng);
    Tape<double> tt;
    double got = scalar(cocolor::ms_ssim(cocolor::make_constant(tt, x), cocolor::make_constant(tt, y)));
    REQUIRE(got == Catch::Approx(ref::msssim(x, y)).margin(1e-4));
  }
}

TEST_CASE("mix loss weighting") {
  // The blend rule itself: alpha = 0.84 puts 0.016 on a 0.1 pixel error
  // under perfect structural similarity.
  REQUIRE(std::abs(0.84 * (1.0 - 1.0) + 0.16 * 0.1 - 0.016) < 1e-15);

  Rng rng(3);
  Tensor<double> a = random_image({1, 3, 16, 16}, rng);
  Tensor<double> b = random_image({1, 3, 16, 16}, rng);
  Tape<double> t;
  auto va = cocolor::make_constant(t, a);
  auto vb = cocolor::make_constant(t, b);
  REQUIRE(scalar(cocolor::mix_loss(va, va)) == 0.0);

  double mx = scalar(cocolor::mix_loss(va, vb));
  double ms = scalar(cocolor::ms_ssim(va, vb));
  double l1 = scalar(cocolor::l1_loss(va, vb));
  REQUIRE(mx == Catch::Approx(0.84 * (1 - ms) + 0.16 * l1).margin(1e-12));
  REQUIRE(mx >= 0.0);

  double maxdiff = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    maxdiff = std::max(maxdiff, std::abs(a[i] - b[i]));
  REQUIRE(mx <= 0.84 + 0.16 * maxdiff + 1e-12);
}

TEST_CASE("pair loss composition") {
  Rng rng(4);
  LossWeights w;
  std::vector<int> sh{2, 3, 8, 8};
  Tensor<double> gt_g = random_image(sh, rng), gt_n = random_image(sh, rng);
  Tape<double> t;
  auto vg = cocolor::make_constant(t, gt_g);
  auto vn = cocolor::make_constant(t, gt_n);

  REQUIRE(scalar(cocolor::pair_loss(vg, vn, vn, vg, vg, vn, w)) == 0.0);

  Tensor<double> off = gt_n;
  for (std::int64_t i = 0; i < off.numel(); ++i) off[i] = std::min(0.999, off[i] + 0.1);
  double shift = 0;
  for (std::int64_t i = 0; i < off.numel(); ++i) shift += std::abs(off[i] - gt_n[i]);
  shift /= static_cast<double>(off.numel());
  auto voff = cocolor::make_constant(t, off);
  REQUIRE(scalar(cocolor::pair_loss(vg, voff, vn, vg, vg, vn, w)) ==
          Catch::Approx(0.025 * shift).margin(1e-12));

  LossWeights w0 = w;
  w0.lambda3 = w0.lambda4 = 0.0;
  Tensor<double> o1 = random_image(sh, rng), o2 = random_image(sh, rng),
                 o3 = random_image(sh, rng), o4 = random_image(sh, rng);
  auto v1 = cocolor::make_constant(t, o1), v2 = cocolor::make_constant(t, o2),
       v3 = cocolor::make_constant(t, o3), v4 = cocolor::make_constant(t, o4);
  double got = scalar(cocolor::pair_loss(v1, v2, v3, v4, vg, vn, w0));
  double want = scalar(cocolor::l1_loss(vg, v1)) + scalar(cocolor::l1_loss(vn, v3));
  REQUIRE(got == Catch::Approx(want).margin(1e-12));

  // Full composition against hand-built terms.
  double full = scalar(cocolor::pair_loss(v1, v2, v3, v4, vg, vn, w));
  double hand = scalar(cocolor::l1_loss(vg, v1)) + 0.025 * scalar(cocolor::l1_loss(vn, v2)) +
                scalar(cocolor::l1_loss(vn, v3)) + 0.025 * scalar(cocolor::l1_loss(vg, v4));
  REQUIRE(full == Catch::Approx(hand).margin(1e-12));
}

TEST_CASE("bilateral consistency composition and symmetry") {
  Rng rng(5);
  std::vector<int> sh{1, 3, 16, 16};
  Tensor<double> a = random_image(sh, rng), b = random_image(sh, rng),
                 c = random_image(sh, rng), d = random_image(sh, rng);
  Tape<double> t;
  auto va = cocolor::make_constant(t, a), vb = cocolor::make_constant(t, b),
       vc = cocolor::make_constant(t, c), vd = cocolor::make_constant(t, d);

  REQUIRE(scalar(cocolor::bilateral_consistency_loss(va, va, vc, vc)) == 0.0);

  double got = scalar(cocolor::bilateral_consistency_loss(va, vb, vc, vd));
  double want = scalar(cocolor::mix_loss(va, vb)) + scalar(cocolor::mix_loss(vc, vd));
  REQUIRE(got == Catch::Approx(want).margin(1e-12));

  double swapped = scalar(cocolor::bilateral_consistency_loss(vb, va, vd, vc));
  REQUIRE(got == Catch::Approx(swapped).margin(1e-12));
}

TEST_CASE("adversarial loss fixed points") {
  Tape<double> t;
  std::vector<int> sh{2, 1, 6, 6};
  auto ones = cocolor::make_constant(t, constant(sh, 1.0));
  auto zeros = cocolor::make_constant(t, constant(sh, 0.0));
  auto halves = cocolor::make_constant(t, constant(sh, 0.5));

  REQUIRE(scalar(cocolor::gan_loss_d(ones, zeros)) == 0.0);
  REQUIRE(scalar(cocolor::gan_loss_g(ones)) == 0.0);
  REQUIRE(scalar(cocolor::gan_loss_d(halves, halves)) == Catch::Approx(0.5).margin(1e-12));
  REQUIRE(scalar(cocolor::gan_loss_g(zeros)) == Catch::Approx(1.0).margin(1e-12));

  Tensor<double> bad = constant(sh, 0.0);
  bad[0] = std::nan("");
  auto vbad = cocolor::make_constant(t, bad);
  REQUIRE_THROWS_AS(cocolor::gan_loss_d(vbad, zeros), cocolor::NumericError);
  REQUIRE_THROWS_AS(cocolor::gan_loss_g(vbad), cocolor::NumericError);
}

TEST_CASE("cycle and identity losses") {
  Rng rng(6);
  std::vector<int> sh{2, 1, 8, 8};
  Tensor<double> g = random_image(sh, rng, 0.2, 0.8), n = random_image(sh, rng, 0.2, 0.8);
  Tensor<double> g_off = g;
  for (std::int64_t i = 0; i < g_off.numel(); ++i) g_off[i] += 0.1;
  Tape<double> t;
  auto vg = cocolor::make_constant(t, g), vn = cocolor::make_constant(t, n),
       vgo = cocolor::make_constant(t, g_off);

  REQUIRE(scalar(cocolor::cycle_loss(vg, vg, vn, vn)) == 0.0);
  REQUIRE(scalar(cocolor::cycle_loss(vgo, vg, vn, vn)) == Catch::Approx(0.1).margin(1e-12));

  REQUIRE(scalar(cocolor::identity_loss(vg, vg, vn, vn)) == 0.0);
  Tensor<double> g05 = g, n05 = n;
  for (std::int64_t i = 0; i < g05.numel(); ++i) g05[i] += 0.05;
  for (std::int64_t i = 0; i < n05.numel(); ++i) n05[i] += 0.05;
  REQUIRE(scalar(cocolor::identity_loss(cocolor::make_constant(t, g05), vg,
                                        cocolor::make_constant(t, n05), vn)) ==
          Catch::Approx(0.1).margin(1e-12));
}

TEST_CASE("translation and total combination") {
  LossWeights w;
  Tape<double> t;
  auto sc = [&](double v) { return cocolor::make_constant(t, Tensor<double>({1}, v)); };

  cocolor::TranslationTerms zero{sc(0), sc(0), sc(0), sc(0), sc(1), sc(1)};
  REQUIRE(scalar(cocolor::translation_loss(zero, w)) == Catch::Approx(0.11).margin(1e-12));
  cocolor::TranslationTerms all0{sc(0), sc(0), sc(0), sc(0), sc(0), sc(0)};
  REQUIRE(scalar(cocolor::translation_loss(all0, w)) == 0.0);

  // Linear in each component.
  cocolor::TranslationTerms base{sc(0.3), sc(0.2), sc(0.4), sc(0.1), sc(0.5), sc(0.6)};
  double b0 = scalar(cocolor::translation_loss(base, w));
  cocolor::TranslationTerms dbl = base;
  dbl.gan_feat_g = sc(0.2);
  REQUIRE(scalar(cocolor::translation_loss(dbl, w)) == Catch::Approx(b0 + 0.1).margin(1e-12));
  dbl = base;
  dbl.cyc = sc(1.5);
  REQUIRE(scalar(cocolor::translation_loss(dbl, w)) == Catch::Approx(b0 + 0.1).margin(1e-12));

  REQUIRE(scalar(cocolor::total_loss(sc(0.11), sc(0.0025), sc(0), w)) ==
          Catch::Approx(0.135).margin(1e-12));
  REQUIRE(scalar(cocolor::total_loss(sc(0), sc(0), sc(0), w)) == 0.0);
  REQUIRE_THROWS_AS(cocolor::total_loss(sc(std::nan("")), sc(0), sc(0), w),
                    cocolor::NumericError);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(7);
  LossWeights w;

  SECTION("l1") {
    gradtest::BuildFn f = [](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::l1_loss(in[0], in[1]);
    };
    REQUIRE(gradtest::max_rel_err({random_image({1, 1, 8, 8}, rng),
                                   random_image({1, 1, 8, 8}, rng)}, f) < kGradTol);
  }
  SECTION("multiscale similarity") {
    gradtest::BuildFn f = [](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::ms_ssim(in[0], in[1]);
    };
    REQUIRE(gradtest::max_rel_err({random_image({1, 1, 8, 8}, rng),
                                   random_image({1, 1, 8, 8}, rng)}, f) < kGradTol);
  }
  SECTION("mix and bilateral") {
    gradtest::BuildFn f = [](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::bilateral_consistency_loss(in[0], in[1], in[2], in[3]);
    };
    REQUIRE(gradtest::max_rel_err({random_image({1, 3, 8, 8}, rng),
                                   random_image({1, 3, 8, 8}, rng),
                                   random_image({1, 3, 8, 8}, rng),
                                   random_image({1, 3, 8, 8}, rng)}, f) < kGradTol);
  }
  SECTION("pair") {
    gradtest::BuildFn f = [&w](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::pair_loss(in[0], in[1], in[2], in[3], in[4], in[5], w);
    };
    std::vector<Tensor<double>> ins;
    for (int i = 0; i < 6; ++i) ins.push_back(random_image({1, 3, 8, 8}, rng));
    REQUIRE(gradtest::max_rel_err(ins, f) < kGradTol);
  }
  SECTION("adversarial") {
    gradtest::BuildFn fd = [](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::gan_loss_d(in[0], in[1]);
    };
    REQUIRE(gradtest::max_rel_err({random_image({2, 1, 3, 3}, rng, -1, 2),
                                   random_image({2, 1, 3, 3}, rng, -1, 2)}, fd) < kGradTol);
    gradtest::BuildFn fg = [](Tape<double>&, const std::vector<Var<double>>& in) {
      return cocolor::gan_loss_g(in[0]);
    };
    REQUIRE(gradtest::max_rel_err({random_image({2, 1, 3, 3}, rng, -1, 2)}, fg) < kGradTol);
  }
  SECTION("cycle, identity, and full combination") {
    gradtest::BuildFn f = [&w](Tape<double>&, const std::vector<Var<double>>& in) {
      Var<double> cyc = cocolor::cycle_loss(in[0], in[1], in[2], in[3]);
      Var<double> idt = cocolor::identity_loss(in[0], in[1], in[2], in[3]);
      Var<double> g1 = cocolor::gan_loss_g(in[4]);
      Var<double> g2 = cocolor::gan_loss_g(in[5]);
      cocolor::TranslationTerms terms{g1, g2, g1, g2, cyc, idt};
      Var<double> tran = cocolor::translation_loss(terms, w);
      Var<double> pair = cocolor::l1_loss(in[0], in[1]);
      Var<double> blt = cocolor::mix_loss(in[2], in[3]);
      return cocolor::total_loss(tran, pair, blt, w);
    };
    std::vector<Tensor<double>> ins;
    for (int i = 0; i < 4; ++i) ins.push_back(random_image({1, 1, 8, 8}, rng));
    ins.push_back(random_image({1, 1, 3, 3}, rng, -1, 2));
    ins.push_back(random_image({1, 1, 3, 3}, rng, -1, 2));
    REQUIRE(gradtest::max_rel_err(ins, f) < kGradTol);
  }
}
