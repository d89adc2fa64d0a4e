#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "cocolor/common.hpp"
#include "cocolor/image.hpp"
#include "cocolor/png_io.hpp"
#include "cocolor/rng.hpp"

namespace cocolor {

struct PairedSample {
  ImageTensor nir;   // 1 channel
  ImageTensor rgb;   // 3 channels
  ImageTensor gray;  // derived: rgb_to_grayscale(rgb)
  std::string id;
};

struct GraySample {
  ImageTensor rgb;
  ImageTensor gray;
  std::string id;
};

struct Dataset {
  std::vector<PairedSample> paired;
  std::vector<GraySample> gray_only;
};

struct AugmentConfig {
  bool enable_scale = false;
  bool enable_mirror = false;
  bool enable_crop = false;
  bool enable_contrast = false;
  double scale_lo = 0.8, scale_hi = 1.2;     // ⊂ (0.5, 2.0]
  int crop_size = 0;
  double contrast_lo = 0.9, contrast_hi = 1.1;  // ⊂ [0.5, 1.5]

  bool any() const { return enable_scale || enable_mirror || enable_crop || enable_contrast; }

  void validate() const {
    if (enable_scale)
      require_data(scale_lo > 0.5 && scale_lo <= scale_hi && scale_hi <= 2.0,
                   "scale range must lie in (0.5, 2.0]");
    if (enable_contrast)
      require_data(contrast_lo >= 0.5 && contrast_lo <= contrast_hi && contrast_hi <= 1.5,
                   "contrast range must lie in [0.5, 1.5]");
    if (enable_crop) require_data(crop_size >= 8, "crop_size must be at least 8");
  }
};

namespace detail {

inline ImageTensor resize_bilinear(const ImageTensor& img, int h2, int w2) {
  require_data(h2 >= 8 && w2 >= 8, "resize target below the 8-pixel minimum");
  const int C = img.channels(), H = img.height(), W = img.width();
  ImageTensor out(C, h2, w2);
  const double sy = static_cast<double>(H) / h2, sx = static_cast<double>(W) / w2;
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < h2; ++y) {
      double fy = (y + 0.5) * sy - 0.5;
      int y0 = static_cast<int>(std::floor(fy));
      double wy = fy - y0;
      int y0c = std::clamp(y0, 0, H - 1), y1c = std::clamp(y0 + 1, 0, H - 1);
      for (int x = 0; x < w2; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        int x0 = static_cast<int>(std::floor(fx));
        double wx = fx - x0;
        int x0c = std::clamp(x0, 0, W - 1), x1c = std::clamp(x0 + 1, 0, W - 1);
        double v = (1 - wy) * ((1 - wx) * img.at(c, y0c, x0c) + wx * img.at(c, y0c, x1c)) +
                   wy * ((1 - wx) * img.at(c, y1c, x0c) + wx * img.at(c, y1c, x1c));
        out.at(c, y, x) = clamp01(v);
      }
    }
  return out;
}

inline ImageTensor crop(const ImageTensor& img, int y0, int x0, int size) {
  ImageTensor out(img.channels(), size, size);
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

inline void mirror_inplace(ImageTensor& img) {
  const int C = img.channels(), H = img.height(), W = img.width();
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W / 2; ++x) std::swap(img.at(c, y, x), img.at(c, y, W - 1 - x));
}

inline void contrast_inplace(ImageTensor& img, double gain) {
  for (std::int64_t i = 0; i < img.data.numel(); ++i)
    img.data[i] = clamp01(gain * (img.data[i] - 0.5) + 0.5);
}

// One augmentation pass over the 1-channel and 3-channel members of a sample.
// Draw order: scale ratio, crop y, crop x, mirror coin, contrast gain —
// each drawn only when its stage is enabled.
inline void augment_images(std::vector<ImageTensor*> imgs, Rng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  if (cfg.enable_scale) {
    double ratio = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    for (ImageTensor* im : imgs) {
      int h2 = static_cast<int>(std::lround(im->height() * ratio));
      int w2 = static_cast<int>(std::lround(im->width() * ratio));
      *im = resize_bilinear(*im, h2, w2);
    }
  }
  if (cfg.enable_crop) {
    int H = imgs[0]->height(), W = imgs[0]->width();
    require_data(cfg.crop_size <= H && cfg.crop_size <= W, "crop larger than image");
    int y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(H - cfg.crop_size + 1)));
    int x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(W - cfg.crop_size + 1)));
    for (ImageTensor* im : imgs) *im = crop(*im, y0, x0, cfg.crop_size);
  }
  if (cfg.enable_mirror && rng.coin()) {
    for (ImageTensor* im : imgs) mirror_inplace(*im);
  }
  if (cfg.enable_contrast) {
    double gain = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);
    for (ImageTensor* im : imgs) contrast_inplace(*im, gain);
  }
}

}  // namespace detail

inline PairedSample augment(const PairedSample& s, Rng& rng, const AugmentConfig& cfg) {
  if (!cfg.any()) return s;
  PairedSample out{s.nir, s.rgb, ImageTensor{}, s.id};
  detail::augment_images({&out.nir, &out.rgb}, rng, cfg);
  out.gray = rgb_to_grayscale(out.rgb);
  return out;
}

inline GraySample augment(const GraySample& s, Rng& rng, const AugmentConfig& cfg) {
  if (!cfg.any()) return s;
  GraySample out{s.rgb, ImageTensor{}, s.id};
  detail::augment_images({&out.rgb}, rng, cfg);
  out.gray = rgb_to_grayscale(out.rgb);
  return out;
}

struct Batch {
  std::vector<PairedSample> paired;
  std::vector<GraySample> gray;
};

// One epoch of batches: a seeded permutation of the paired list chunked into
// floor(n/batch_size) batches, with grayscale-domain samples drawn from the
// union of gray-only samples and the grays of the paired set via an
// independent permutation. The short tail is dropped.
inline std::vector<Batch> make_batches(const std::vector<PairedSample>& paired,
                                       const std::vector<GraySample>& gray_only,
                                       std::size_t batch_size, Rng& rng) {
  require_data(!paired.empty() && !gray_only.empty(), "make_batches: empty dataset");
  require(batch_size >= 1, "make_batches: batch_size must be at least 1");
  require_data(batch_size <= paired.size(), "make_batches: batch_size exceeds dataset size");

  std::vector<GraySample> pool;
  pool.reserve(gray_only.size() + paired.size());
  for (const GraySample& g : gray_only) pool.push_back(g);
  for (const PairedSample& p : paired) pool.push_back(GraySample{p.rgb, p.gray, p.id});

  std::vector<std::size_t> porder = rng.permutation(paired.size());
  std::vector<std::size_t> gorder = rng.permutation(pool.size());

  const std::size_t n_batches = paired.size() / batch_size;
  std::vector<Batch> out(n_batches);
  for (std::size_t b = 0; b < n_batches; ++b) {
    out[b].paired.reserve(batch_size);
    out[b].gray.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
      out[b].paired.push_back(paired[porder[b * batch_size + i]]);
      out[b].gray.push_back(pool[gorder[b * batch_size + i]]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic spectral pairs: a smooth material field quantized into 5 material
// labels; each material has a fixed RGB and a NIR intensity from a fixed
// nonlinear map, so NIR↔RGB is deterministic per material but NIR is far from
// any affine function of the derived grayscale. Degradations mirror a real
// two-sensor rig: every NIR capture is noisy, and the RGB reference shot
// through the NIR rig (the paired split) is much poorer than the curated
// RGB-only corpus, so the gray domain carries the reliable color knowledge.
// ---------------------------------------------------------------------------

namespace synth {

constexpr int kBumps = 4;
constexpr int kMaterials = 5;
constexpr double kNirNoiseSigma = 0.05;
constexpr double kPairedRefNoiseSigma = 0.12;
constexpr double kCuratedRefNoiseSigma = 0.01;

constexpr double kPalette[kMaterials][3] = {
    {0.00, 0.00, 1.00},
    {0.10, 0.45, 0.60},
    {0.20, 0.75, 0.35},
    {0.75, 0.75, 0.10},
    {0.95, 0.90, 0.05},
};

inline double nir_of_material(int m) {
  const double r = kPalette[m][0], b = kPalette[m][2];
  return clamp01(0.6 * r + 0.4 * std::exp(-2.0 * b));
}

// Label map for one scene: sum of random low-frequency Gaussian bumps,
// quantile-quantized into equal-area material labels.
inline std::vector<int> material_field(int size, Rng& rng) {
  std::vector<double> field(static_cast<std::size_t>(size) * size, 0.0);
  for (int k = 0; k < kBumps; ++k) {
    double cx = rng.uniform(0.0, size);
    double cy = rng.uniform(0.0, size);
    double sigma = rng.uniform(size / 8.0, size / 3.0);
    double amp = rng.uniform(-1.0, 1.0);
    double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        field[static_cast<std::size_t>(y) * size + x] += amp * std::exp(-d2 * inv2s2);
      }
  }
  std::vector<std::size_t> order(field.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return field[a] != field[b] ? field[a] < field[b] : a < b;
  });
  std::vector<int> labels(field.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    labels[order[rank]] = static_cast<int>(rank * kMaterials / order.size());
  return labels;
}

inline PairedSample make_sample(std::uint64_t base, std::uint64_t kind, std::uint64_t index,
                                int size) {
  Rng rng = Rng::derive(base, kind, index);
  std::vector<int> labels = material_field(size, rng);
  ImageTensor nir(1, size, size);
  ImageTensor rgb(3, size, size);
  const std::int64_t plane = static_cast<std::int64_t>(size) * size;
  for (std::int64_t i = 0; i < plane; ++i) {
    int m = labels[static_cast<std::size_t>(i)];
    nir.data[i] = nir_of_material(m);
    rgb.data[i] = kPalette[m][0];
    rgb.data[i + plane] = kPalette[m][1];
    rgb.data[i + 2 * plane] = kPalette[m][2];
  }
  const double ref_sigma = kind == 0 ? kPairedRefNoiseSigma : kCuratedRefNoiseSigma;
  for (std::int64_t i = 0; i < plane; ++i)
    nir.data[i] = clamp01(nir.data[i] + kNirNoiseSigma * rng.normal());
  for (std::int64_t i = 0; i < 3 * plane; ++i)
    rgb.data[i] = clamp01(rgb.data[i] + ref_sigma * rng.normal());

  PairedSample s;
  s.nir = std::move(nir);
  s.rgb = std::move(rgb);
  s.gray = rgb_to_grayscale(s.rgb);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%06llu", kind == 0 ? "p" : "g",
                static_cast<unsigned long long>(index));
  s.id = buf;
  return s;
}

}  // namespace synth

inline std::pair<std::vector<PairedSample>, std::vector<GraySample>> synth_dataset(
    Rng& rng, std::size_t n_paired, std::size_t n_gray, int size) {
  require_data(size >= 16, "synth_dataset: size must be at least 16");
  require_data(n_paired >= 1 && n_gray >= 1, "synth_dataset: counts must be at least 1");
  const std::uint64_t base = rng.next_u64();
  std::vector<PairedSample> paired;
  paired.reserve(n_paired);
  for (std::size_t i = 0; i < n_paired; ++i)
    paired.push_back(synth::make_sample(base, 0, i, size));
  std::vector<GraySample> gray;
  gray.reserve(n_gray);
  for (std::size_t i = 0; i < n_gray; ++i) {
    PairedSample s = synth::make_sample(base, 1, i, size);
    gray.push_back(GraySample{std::move(s.rgb), std::move(s.gray), s.id});
  }
  return {std::move(paired), std::move(gray)};
}

// Evaluation split: pairs with curated (clean) references and the usual noisy
// NIR capture. Feed a dedicated Rng so the scene stream stays disjoint from
// any training pool.
inline std::vector<PairedSample> synth_holdout(Rng& rng, std::size_t n, int size) {
  require_data(size >= 16, "synth_holdout: size must be at least 16");
  require_data(n >= 1, "synth_holdout: count must be at least 1");
  const std::uint64_t base = rng.next_u64();
  std::vector<PairedSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(synth::make_sample(base, 1, i, size));
  return out;
}

// ---------------------------------------------------------------------------
// Directory layout: <root>/paired/nir/<id>.png + <root>/paired/rgb/<id>.png
// matched by stem, and <root>/gray_only/rgb/<id>.png.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> png_stems(const std::filesystem::path& dir) {
  std::vector<std::string> stems;
  if (!std::filesystem::is_directory(dir)) return stems;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

}  // namespace detail

inline void save_dataset(const std::string& root, const std::vector<PairedSample>& paired,
                         const std::vector<GraySample>& gray_only) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(root) / "paired" / "nir", ec);
  fs::create_directories(fs::path(root) / "paired" / "rgb", ec);
  fs::create_directories(fs::path(root) / "gray_only" / "rgb", ec);
  if (ec) throw IoError("cannot create dataset directories under " + root);
  for (const PairedSample& p : paired) {
    save_png((fs::path(root) / "paired" / "nir" / (p.id + ".png")).string(), p.nir);
    save_png((fs::path(root) / "paired" / "rgb" / (p.id + ".png")).string(), p.rgb);
  }
  for (const GraySample& g : gray_only)
    save_png((fs::path(root) / "gray_only" / "rgb" / (g.id + ".png")).string(), g.rgb);
}

inline Dataset load_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  fs::path r(root);
  if (!fs::is_directory(r)) throw IoError("dataset root not found: " + root);
  Dataset ds;
  std::vector<std::string> nir_stems = detail::png_stems(r / "paired" / "nir");
  std::vector<std::string> rgb_stems = detail::png_stems(r / "paired" / "rgb");
  if (nir_stems != rgb_stems)
    throw DataError("paired/nir and paired/rgb stems do not match under " + root);
  for (const std::string& id : nir_stems) {
    PairedSample p;
    p.nir = load_png((r / "paired" / "nir" / (id + ".png")).string());
    p.rgb = load_png((r / "paired" / "rgb" / (id + ".png")).string());
    require_data(p.nir.channels() == 1, "paired/nir/" + id + ".png is not grayscale");
    require_data(p.rgb.channels() == 3, "paired/rgb/" + id + ".png is not RGB");
    require_data(p.nir.height() == p.rgb.height() && p.nir.width() == p.rgb.width(),
                 "paired sample " + id + " has mismatched dimensions");
    p.gray = rgb_to_grayscale(p.rgb);
    p.id = id;
    ds.paired.push_back(std::move(p));
  }
  for (const std::string& id : detail::png_stems(r / "gray_only" / "rgb")) {
    GraySample g;
    g.rgb = load_png((r / "gray_only" / "rgb" / (id + ".png")).string());
    require_data(g.rgb.channels() == 3, "gray_only/rgb/" + id + ".png is not RGB");
    g.gray = rgb_to_grayscale(g.rgb);
    g.id = id;
    ds.gray_only.push_back(std::move(g));
  }
  return ds;
}

}  // namespace cocolor
