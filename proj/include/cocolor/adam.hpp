#pragma once

#include <cmath>
#include <vector>

#include "cocolor/common.hpp"
#include "cocolor/nets.hpp"
#include "cocolor/tensor.hpp"

namespace cocolor {

struct AdamConfig {
  double beta1 = 0.5;  // GAN convention
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor<double>> m, v;  // entry-aligned with Params
  std::int64_t t = 0;
};

inline AdamState make_adam_state(const Params& p) {
  AdamState s;
  s.m.reserve(p.entries.size());
  s.v.reserve(p.entries.size());
  for (const auto& [name, tns] : p.entries) {
    s.m.push_back(Tensor<double>::zeros(tns.shape()));
    s.v.push_back(Tensor<double>::zeros(tns.shape()));
  }
  return s;
}

// Standard bias-corrected Adam. Gradients are entry-aligned with Params; an
// empty gradient tensor means "no gradient reached this parameter" and is
// treated as zero (moments still decay, step still counts).
inline void adam_step(Params& p, const std::vector<Tensor<double>>& grads, AdamState& s,
                      double lr, const AdamConfig& cfg = {}) {
  require(grads.size() == p.entries.size() && s.m.size() == p.entries.size(),
          "adam_step: misaligned state");
  s.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));
  for (std::size_t k = 0; k < p.entries.size(); ++k) {
    Tensor<double>& w = p.entries[k].second;
    Tensor<double>& m = s.m[k];
    Tensor<double>& v = s.v[k];
    const bool has_grad = !grads[k].empty();
    if (has_grad) {
      require_same_shape(grads[k], w, "adam_step");
      if (!grads[k].all_finite())
        throw NumericError("non-finite gradient for parameter " + p.entries[k].first);
    }
    for (std::int64_t i = 0; i < w.numel(); ++i) {
      const double g = has_grad ? grads[k][i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace cocolor
