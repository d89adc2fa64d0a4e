#pragma once

#include <string>
#include <vector>

#include "cocolor/common.hpp"
#include "cocolor/tensor.hpp"

namespace cocolor {

// One image, (C, H, W), values in [0,1]. Batches are plain (N, C, H, W)
// tensors assembled from these.
struct ImageTensor {
  Tensor<double> data;

  ImageTensor() = default;
  ImageTensor(int channels, int height, int width) : data({channels, height, width}) {}
  explicit ImageTensor(Tensor<double> t) : data(std::move(t)) {
    require(data.rank() == 3, "ImageTensor: expected (C, H, W), got " + data.shape_str());
  }

  int channels() const { return data.size(0); }
  int height() const { return data.size(1); }
  int width() const { return data.size(2); }

  double& at(int c, int y, int x) {
    return data[(static_cast<std::int64_t>(c) * height() + y) * width() + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::int64_t>(c) * height() + y) * width() + x];
  }

  void validate() const {
    require_data(channels() == 1 || channels() == 3,
                 "image must have 1 or 3 channels, got " + std::to_string(channels()));
    require_data(height() >= 8 && width() >= 8,
                 "image must be at least 8x8, got " + std::to_string(height()) + "x" +
                     std::to_string(width()));
    for (std::int64_t i = 0; i < data.numel(); ++i) {
      double v = data[i];
      require_data(std::isfinite(v) && v >= 0.0 && v <= 1.0,
                   "image values must be finite and in [0,1]");
    }
  }
};

// BT.601 luma projection.
inline ImageTensor rgb_to_grayscale(const ImageTensor& img) {
  require(img.channels() == 3, "rgb_to_grayscale: expected 3 channels, got " +
                                   std::to_string(img.channels()));
  ImageTensor out(1, img.height(), img.width());
  const std::int64_t plane = static_cast<std::int64_t>(img.height()) * img.width();
  const double* r = img.data.data();
  const double* g = r + plane;
  const double* b = g + plane;
  double* o = out.data.data();
  for (std::int64_t i = 0; i < plane; ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Stack same-shaped images into an (N, C, H, W) batch.
inline Tensor<double> batch_images(const std::vector<const ImageTensor*>& imgs) {
  require(!imgs.empty(), "batch_images: empty batch");
  const ImageTensor& first = *imgs[0];
  Tensor<double> out({static_cast<int>(imgs.size()), first.channels(), first.height(),
                      first.width()});
  const std::int64_t per = first.data.numel();
  for (std::size_t n = 0; n < imgs.size(); ++n) {
    require_same_shape(imgs[n]->data, first.data, "batch_images");
    std::copy(imgs[n]->data.data(), imgs[n]->data.data() + per, out.data() + n * per);
  }
  return out;
}

// Slice image n out of an (N, C, H, W) batch.
inline ImageTensor image_from_batch(const Tensor<double>& batch, int n) {
  require(batch.rank() == 4, "image_from_batch: expected 4-D batch");
  ImageTensor out(batch.size(1), batch.size(2), batch.size(3));
  const std::int64_t per = out.data.numel();
  std::copy(batch.data() + n * per, batch.data() + (n + 1) * per, out.data.data());
  return out;
}

}  // namespace cocolor
