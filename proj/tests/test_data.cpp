#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "cocolor/data.hpp"

using cocolor::AugmentConfig;
using cocolor::DataError;
using cocolor::GraySample;
using cocolor::ImageTensor;
using cocolor::PairedSample;
using cocolor::Rng;

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / (tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ImageTensor random_image(int c, int h, int w, Rng& rng) {
  ImageTensor img(c, h, w);
  for (std::int64_t i = 0; i < img.data.numel(); ++i) img.data[i] = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("grayscale projection") {
  ImageTensor img(3, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      img.at(0, y, x) = 1.0;
      img.at(1, y, x) = 1.0;
      img.at(2, y, x) = 1.0;
    }
  REQUIRE(cocolor::rgb_to_grayscale(img).at(0, 3, 3) == Catch::Approx(1.0).margin(1e-12));

  img.at(1, 0, 0) = 0.0;
  img.at(2, 0, 0) = 0.0;  // pure red
  REQUIRE(cocolor::rgb_to_grayscale(img).at(0, 0, 0) == Catch::Approx(0.299).margin(1e-12));

  ImageTensor mid(3, 8, 8);
  for (std::int64_t i = 0; i < mid.data.numel(); ++i) mid.data[i] = 0.5;
  REQUIRE(cocolor::rgb_to_grayscale(mid).at(0, 4, 4) == Catch::Approx(0.5).margin(1e-12));

  ImageTensor gray1(1, 8, 8);
  REQUIRE_THROWS(cocolor::rgb_to_grayscale(gray1));
}

TEST_CASE("image validation") {
  ImageTensor ok(3, 8, 8);
  REQUIRE_NOTHROW(ok.validate());
  ImageTensor small(1, 7, 8);
  REQUIRE_THROWS_AS(small.validate(), DataError);
  ImageTensor bad(3, 8, 8);
  bad.at(0, 0, 0) = 1.5;
  REQUIRE_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("png roundtrip") {
  TempDir dir("cocolor_png");
  Rng rng(7);
  for (int c : {1, 3}) {
    ImageTensor img = random_image(c, 12, 9, rng);
    std::string p = (dir.path / ("img" + std::to_string(c) + ".png")).string();
    cocolor::save_png(p, img);
    ImageTensor back = cocolor::load_png(p);
    REQUIRE(back.channels() == c);
    REQUIRE(back.height() == 12);
    REQUIRE(back.width() == 9);
    for (std::int64_t i = 0; i < img.data.numel(); ++i)
      REQUIRE(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  }
  REQUIRE_THROWS_AS(cocolor::load_png((dir.path / "missing.png").string()), cocolor::IoError);
}

TEST_CASE("png quantization is round-half-up") {
  TempDir dir("cocolor_pngq");
  ImageTensor img(1, 8, 8);
  img.at(0, 0, 0) = 128.0 / 255.0;
  img.at(0, 0, 1) = 0.4 / 255.0;   // rounds to 0
  img.at(0, 0, 2) = 0.5 / 255.0;   // rounds to 1
  std::string p = (dir.path / "q.png").string();
  cocolor::save_png(p, img);
  ImageTensor back = cocolor::load_png(p);
  REQUIRE(back.at(0, 0, 0) == Catch::Approx(128.0 / 255.0).margin(1e-12));
  REQUIRE(back.at(0, 0, 1) == 0.0);
  REQUIRE(back.at(0, 0, 2) == Catch::Approx(1.0 / 255.0).margin(1e-12));
}

TEST_CASE("augment identity when disabled") {
  Rng rng(3);
  ImageTensor rgb = random_image(3, 16, 16, rng);
  PairedSample s{random_image(1, 16, 16, rng), rgb, cocolor::rgb_to_grayscale(rgb), "s0"};
  Rng arng(5);
  PairedSample out = cocolor::augment(s, arng, AugmentConfig{});
  for (std::int64_t i = 0; i < s.nir.data.numel(); ++i) REQUIRE(out.nir.data[i] == s.nir.data[i]);
  for (std::int64_t i = 0; i < s.rgb.data.numel(); ++i) REQUIRE(out.rgb.data[i] == s.rgb.data[i]);
}

TEST_CASE("augment preserves pairing invariant") {
  Rng rng(4);
  ImageTensor rgb = random_image(3, 24, 24, rng);
  PairedSample s{random_image(1, 24, 24, rng), rgb, cocolor::rgb_to_grayscale(rgb), "s1"};
  AugmentConfig cfg;
  cfg.enable_scale = cfg.enable_mirror = cfg.enable_crop = cfg.enable_contrast = true;
  cfg.scale_lo = 0.8;
  cfg.scale_hi = 1.3;
  cfg.crop_size = 16;
  cfg.contrast_lo = 0.7;
  cfg.contrast_hi = 1.4;
  for (int trial = 0; trial < 20; ++trial) {
    Rng arng(static_cast<std::uint64_t>(trial));
    PairedSample out = cocolor::augment(s, arng, cfg);
    REQUIRE(out.rgb.height() == 16);
    REQUIRE(out.nir.height() == 16);
    REQUIRE_NOTHROW(out.rgb.validate());
    REQUIRE_NOTHROW(out.nir.validate());
    ImageTensor expect = cocolor::rgb_to_grayscale(out.rgb);
    for (std::int64_t i = 0; i < expect.data.numel(); ++i)
      REQUIRE(out.gray.data[i] == expect.data[i]);  // bit-exact
  }
}

TEST_CASE("contrast gain 1 is identity, mirror is an involution") {
  Rng rng(5);
  ImageTensor rgb = random_image(3, 16, 16, rng);
  GraySample s{rgb, cocolor::rgb_to_grayscale(rgb), "g0"};

  AugmentConfig contrast1;
  contrast1.enable_contrast = true;
  contrast1.contrast_lo = contrast1.contrast_hi = 1.0;
  Rng arng(1);
  GraySample out = cocolor::augment(s, arng, contrast1);
  for (std::int64_t i = 0; i < s.rgb.data.numel(); ++i) REQUIRE(out.rgb.data[i] == s.rgb.data[i]);

  ImageTensor m = rgb;
  cocolor::detail::mirror_inplace(m);
  ImageTensor m2 = m;
  cocolor::detail::mirror_inplace(m2);
  for (std::int64_t i = 0; i < rgb.data.numel(); ++i) REQUIRE(m2.data[i] == rgb.data[i]);
  REQUIRE(m.at(0, 0, 0) == rgb.at(0, 0, 15));
}

TEST_CASE("crop larger than image is rejected") {
  Rng rng(6);
  ImageTensor rgb = random_image(3, 16, 16, rng);
  GraySample s{rgb, cocolor::rgb_to_grayscale(rgb), "g1"};
  AugmentConfig cfg;
  cfg.enable_crop = true;
  cfg.crop_size = 32;
  Rng arng(1);
  REQUIRE_THROWS_AS(cocolor::augment(s, arng, cfg), DataError);
}

TEST_CASE("batching counts and determinism") {
  Rng rng(8);
  auto [paired, gray] = cocolor::synth_dataset(rng, 25, 10, 16);
  REQUIRE(paired.size() == 25);
  REQUIRE(gray.size() == 10);

  Rng brng1(42), brng2(42);
  auto b1 = cocolor::make_batches(paired, gray, 10, brng1);
  auto b2 = cocolor::make_batches(paired, gray, 10, brng2);
  REQUIRE(b1.size() == 2);  // 25/10 → 2, 5 dropped
  for (std::size_t b = 0; b < b1.size(); ++b) {
    REQUIRE(b1[b].paired.size() == 10);
    REQUIRE(b1[b].gray.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) {
      REQUIRE(b1[b].paired[i].id == b2[b].paired[i].id);
      REQUIRE(b1[b].gray[i].id == b2[b].gray[i].id);
    }
  }

  // 10 paired + 10 gray at batch 10 → exactly one batch.
  std::vector<PairedSample> p10(paired.begin(), paired.begin() + 10);
  Rng brng3(1);
  REQUIRE(cocolor::make_batches(p10, gray, 10, brng3).size() == 1);

  Rng brng4(1);
  REQUIRE_THROWS_AS(cocolor::make_batches(p10, gray, 11, brng4), DataError);
  std::vector<GraySample> empty;
  Rng brng5(1);
  REQUIRE_THROWS_AS(cocolor::make_batches(p10, empty, 2, brng5), DataError);
}

TEST_CASE("synthetic dataset determinism and invariants") {
  Rng r1(123), r2(123);
  auto [p1, g1] = cocolor::synth_dataset(r1, 3, 2, 16);
  auto [p2, g2] = cocolor::synth_dataset(r2, 3, 2, 16);
  for (std::size_t i = 0; i < p1.size(); ++i) {
    REQUIRE(p1[i].id == p2[i].id);
    for (std::int64_t j = 0; j < p1[i].nir.data.numel(); ++j)
      REQUIRE(p1[i].nir.data[j] == p2[i].nir.data[j]);
    for (std::int64_t j = 0; j < p1[i].rgb.data.numel(); ++j)
      REQUIRE(p1[i].rgb.data[j] == p2[i].rgb.data[j]);
  }
  for (const auto& s : p1) {
    REQUIRE_NOTHROW(s.nir.validate());
    REQUIRE_NOTHROW(s.rgb.validate());
    ImageTensor expect = cocolor::rgb_to_grayscale(s.rgb);
    for (std::int64_t j = 0; j < expect.data.numel(); ++j)
      REQUIRE(s.gray.data[j] == expect.data[j]);
  }

  // The fixed material map: pure blue → 0.4·exp(−2).
  REQUIRE(cocolor::synth::nir_of_material(0) ==
          Catch::Approx(0.05413411329464508).margin(1e-15));
}

TEST_CASE("synthetic NIR is not affine in grayscale") {
  Rng rng(99);
  auto [paired, gray] = cocolor::synth_dataset(rng, 200, 1, 16);
  double sg = 0, sn = 0, sgg = 0, sgn = 0;
  std::int64_t n = 0;
  for (const auto& s : paired)
    for (std::int64_t i = 0; i < s.gray.data.numel(); ++i) {
      double g = s.gray.data[i], v = s.nir.data[i];
      sg += g;
      sn += v;
      sgg += g * g;
      sgn += g * v;
      ++n;
    }
  double mg = sg / n, mn = sn / n;
  double var = sgg / n - mg * mg;
  double cov = sgn / n - mg * mn;
  double a = cov / var, b = mn - a * mg;
  double sse = 0;
  for (const auto& s : paired)
    for (std::int64_t i = 0; i < s.gray.data.numel(); ++i) {
      double e = a * s.gray.data[i] + b - s.nir.data[i];
      sse += e * e;
    }
  double rmse = std::sqrt(sse / n);
  REQUIRE(rmse > 0.05);
}

TEST_CASE("dataset directory roundtrip") {
  TempDir dir("cocolor_ds");
  Rng rng(11);
  auto [paired, gray] = cocolor::synth_dataset(rng, 4, 3, 16);
  cocolor::save_dataset(dir.path.string(), paired, gray);

  cocolor::Dataset ds = cocolor::load_dataset(dir.path.string());
  REQUIRE(ds.paired.size() == 4);
  REQUIRE(ds.gray_only.size() == 3);
  for (std::size_t i = 0; i < ds.paired.size(); ++i) {
    REQUIRE(ds.paired[i].id == paired[i].id);
    REQUIRE(ds.paired[i].nir.channels() == 1);
    REQUIRE(ds.paired[i].rgb.channels() == 3);
    // 8-bit quantization error only.
    for (std::int64_t j = 0; j < paired[i].nir.data.numel(); ++j)
      REQUIRE(std::abs(ds.paired[i].nir.data[j] - paired[i].nir.data[j]) <= 0.5 / 255.0 + 1e-12);
    ImageTensor expect = cocolor::rgb_to_grayscale(ds.paired[i].rgb);
    for (std::int64_t j = 0; j < expect.data.numel(); ++j)
      REQUIRE(ds.paired[i].gray.data[j] == expect.data[j]);
  }

  fs::remove(dir.path / "paired" / "nir" / (paired[0].id + ".png"));
  REQUIRE_THROWS_AS(cocolor::load_dataset(dir.path.string()), DataError);
  REQUIRE_THROWS_AS(cocolor::load_dataset((dir.path / "nope").string()), cocolor::IoError);
}
