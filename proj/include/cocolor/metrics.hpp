#pragma once

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "cocolor/common.hpp"
#include "cocolor/data.hpp"
#include "cocolor/image.hpp"
#include "cocolor/losses.hpp"
#include "cocolor/nets.hpp"

// Image-quality metrics and per-path evaluation reports.
namespace cocolor {

constexpr double kPsnrCap = 99.0;

inline double psnr(const ImageTensor& pred, const ImageTensor& gt) {
  require_same_shape(pred.data, gt.data, "psnr");
  double sse = 0.0;
  for (std::int64_t i = 0; i < pred.data.numel(); ++i) {
    double d = pred.data[i] - gt.data[i];
    sse += d * d;
  }
  double mse = sse / static_cast<double>(pred.data.numel());
  if (mse <= 0.0) return kPsnrCap;
  double db = 10.0 * std::log10(1.0 / mse);
  return db < kPsnrCap ? db : kPsnrCap;
}

// Single-scale structural similarity: 11x11 Gaussian window (sigma 1.5) over
// valid positions, per-pixel product map, channel mean. Peak 1.
inline double ssim(const ImageTensor& pred, const ImageTensor& gt) {
  require_same_shape(pred.data, gt.data, "ssim");
  const int c = pred.channels(), h = pred.height(), w = pred.width();
  constexpr int k = 11;
  require(h >= k && w >= k, "image smaller than the similarity window");
  const Tensor<double> win = gaussian_window(k, 1.5);
  constexpr double c1 = 1e-4, c2 = 9e-4;
  double sum = 0.0;
  std::int64_t count = 0;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y + k <= h; ++y)
      for (int x = 0; x + k <= w; ++x) {
        double ma = 0, mb = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < k; ++i)
          for (int j = 0; j < k; ++j) {
            double wv = win[i * k + j];
            double av = pred.at(ci, y + i, x + j);
            double bv = gt.at(ci, y + i, x + j);
            ma += wv * av;
            mb += wv * bv;
            aa += wv * av * av;
            bb += wv * bv * bv;
            ab += wv * av * bv;
          }
        double va = aa - ma * ma, vb = bb - mb * mb, cov = ab - ma * mb;
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return sum / static_cast<double>(count);
}

// Mean per-pixel angle between RGB vectors, in degrees.
inline double angular_error(const ImageTensor& pred, const ImageTensor& gt) {
  require_same_shape(pred.data, gt.data, "angular_error");
  require(pred.channels() == 3, "angular error needs 3-channel images");
  constexpr double eps = 1e-8;
  const int h = pred.height(), w = pred.width();
  double sum = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dot = 0, np = 0, ng = 0;
      for (int ci = 0; ci < 3; ++ci) {
        double p = pred.at(ci, y, x), g = gt.at(ci, y, x);
        dot += p * g;
        np += p * p;
        ng += g * g;
      }
      double cosv = dot / (std::sqrt(np) * std::sqrt(ng) + eps);
      if (cosv > 1.0) cosv = 1.0;
      if (cosv < -1.0) cosv = -1.0;
      sum += std::acos(cosv);
    }
  return sum / (static_cast<double>(h) * w) * (180.0 / 3.14159265358979323846);
}

enum class Path { n2c, n2g, n2g2c, g2c, g2n, g2n2c };

inline const char* path_name(Path p) {
  switch (p) {
    case Path::n2c: return "N2C";
    case Path::n2g: return "N2G";
    case Path::n2g2c: return "N2G2C";
    case Path::g2c: return "G2C";
    case Path::g2n: return "G2N";
    case Path::g2n2c: return "G2N2C";
  }
  throw ConfigError("unreachable path");
}

inline Path parse_path(const std::string& s) {
  for (Path p : {Path::n2c, Path::n2g, Path::n2g2c, Path::g2c, Path::g2n, Path::g2n2c})
    if (s == path_name(p)) return p;
  throw ConfigError("unknown path: " + s + " (expected N2C|N2G|N2G2C|G2C|G2N|G2N2C)");
}

inline bool path_targets_rgb(Path p) {
  return p == Path::n2c || p == Path::n2g2c || p == Path::g2c || p == Path::g2n2c;
}

struct ImageMetrics {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
  double ae_deg = 0;
  bool has_ae = false;
};

struct MetricsReport {
  std::string path;
  std::string dataset_tag;
  std::string model_digest;
  std::vector<ImageMetrics> per_image;
  double mean_psnr = 0;
  double mean_ssim = 0;
  double mean_ae = 0;
  bool has_ae = false;
  // No pretrained perceptual network is shipped, so this metric cannot be
  // computed; the marker makes the omission explicit in every report.
  static constexpr const char* kLpips = "absent";
};

// Per-sample prediction for one evaluation path.
using PathForward = std::function<ImageTensor(const PairedSample&)>;

inline PathForward path_forward(const ModelBundle& bundle, Path p) {
  auto run1 = [&bundle](const GeneratorSpec& spec, const Params& params, const ImageTensor& in) {
    std::vector<const ImageTensor*> one{&in};
    Tensor<double> out = generator_apply(spec, params, batch_images(one));
    ImageTensor img(static_cast<int>(out.shape()[1]), static_cast<int>(out.shape()[2]),
                    static_cast<int>(out.shape()[3]));
    for (std::int64_t i = 0; i < img.data.numel(); ++i) img.data[i] = out[i];
    return img;
  };
  switch (p) {
    case Path::n2c:
      return [&bundle, run1](const PairedSample& s) { return run1(bundle.spec_col, bundle.f_n, s.nir); };
    case Path::n2g:
      return [&bundle, run1](const PairedSample& s) { return run1(bundle.spec_tr, bundle.g_n2g, s.nir); };
    case Path::n2g2c:
      return [&bundle, run1](const PairedSample& s) {
        return run1(bundle.spec_col, bundle.f_g, run1(bundle.spec_tr, bundle.g_n2g, s.nir));
      };
    case Path::g2c:
      return [&bundle, run1](const PairedSample& s) { return run1(bundle.spec_col, bundle.f_g, s.gray); };
    case Path::g2n:
      return [&bundle, run1](const PairedSample& s) { return run1(bundle.spec_tr, bundle.g_g2n, s.gray); };
    case Path::g2n2c:
      return [&bundle, run1](const PairedSample& s) {
        return run1(bundle.spec_col, bundle.f_n, run1(bundle.spec_tr, bundle.g_g2n, s.gray));
      };
  }
  throw ConfigError("unreachable path");
}

inline const ImageTensor& path_target(const PairedSample& s, Path p) {
  if (path_targets_rgb(p)) return s.rgb;
  return p == Path::n2g ? s.gray : s.nir;
}

inline MetricsReport evaluate_with(const PathForward& forward,
                                   const std::vector<PairedSample>& samples, Path p,
                                   const std::string& dataset_tag,
                                   const std::string& model_digest) {
  require_data(!samples.empty(), "evaluation needs at least one paired sample");
  MetricsReport rep;
  rep.path = path_name(p);
  rep.dataset_tag = dataset_tag;
  rep.model_digest = model_digest;
  rep.has_ae = path_targets_rgb(p);
  double sp = 0, ss = 0, sa = 0;
  for (const PairedSample& s : samples) {
    ImageTensor pred = forward(s);
    const ImageTensor& gt = path_target(s, p);
    ImageMetrics m;
    m.id = s.id;
    m.psnr_db = psnr(pred, gt);
    m.ssim = ssim(pred, gt);
    m.has_ae = rep.has_ae;
    if (m.has_ae) m.ae_deg = angular_error(pred, gt);
    sp += m.psnr_db;
    ss += m.ssim;
    sa += m.ae_deg;
    rep.per_image.push_back(std::move(m));
  }
  double n = static_cast<double>(rep.per_image.size());
  rep.mean_psnr = sp / n;
  rep.mean_ssim = ss / n;
  rep.mean_ae = rep.has_ae ? sa / n : 0.0;
  return rep;
}

inline MetricsReport evaluate(const ModelBundle& bundle, const Dataset& ds, Path p,
                              const std::string& dataset_tag = "") {
  return evaluate_with(path_forward(bundle, p), ds.paired, p, dataset_tag,
                       hex_digest(bundle.digest()));
}

// One JSON record per image, then an aggregate footer record.
inline void write_report(std::ostream& os, const MetricsReport& rep) {
  for (const ImageMetrics& m : rep.per_image) {
    nlohmann::json j{{"id", m.id}, {"psnr", m.psnr_db}, {"ssim", m.ssim}};
    if (m.has_ae) j["ae"] = m.ae_deg;
    os << j.dump() << "\n";
  }
  nlohmann::json agg{{"aggregate", true},
                     {"path", rep.path},
                     {"dataset", rep.dataset_tag},
                     {"model_digest", rep.model_digest},
                     {"n", rep.per_image.size()},
                     {"mean_psnr", rep.mean_psnr},
                     {"mean_ssim", rep.mean_ssim},
                     {"lpips", MetricsReport::kLpips}};
  if (rep.has_ae) agg["mean_ae"] = rep.mean_ae;
  os << agg.dump() << "\n";
}

// Horizontal input | prediction | ground-truth strip for eyeballing results.
inline ImageTensor preview_strip(const ImageTensor& input, const ImageTensor& pred,
                                 const ImageTensor& gt) {
  require(input.height() == pred.height() && pred.height() == gt.height(),
          "preview rows must share a height");
  auto widen = [](const ImageTensor& im) {
    if (im.channels() == 3) return im;
    ImageTensor out(3, im.height(), im.width());
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < im.height(); ++y)
        for (int x = 0; x < im.width(); ++x) out.at(c, y, x) = im.at(0, y, x);
    return out;
  };
  ImageTensor a = widen(input), b = widen(pred), c = widen(gt);
  ImageTensor strip(3, a.height(), a.width() + b.width() + c.width());
  for (int ci = 0; ci < 3; ++ci)
    for (int y = 0; y < strip.height(); ++y) {
      for (int x = 0; x < a.width(); ++x) strip.at(ci, y, x) = a.at(ci, y, x);
      for (int x = 0; x < b.width(); ++x) strip.at(ci, y, a.width() + x) = b.at(ci, y, x);
      for (int x = 0; x < c.width(); ++x)
        strip.at(ci, y, a.width() + b.width() + x) = c.at(ci, y, x);
    }
  return strip;
}

}  // namespace cocolor
