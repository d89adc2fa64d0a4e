#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cocolor/adam.hpp"
#include "cocolor/checkpoint.hpp"
#include "cocolor/common.hpp"
#include "cocolor/config.hpp"
#include "cocolor/data.hpp"
#include "cocolor/losses.hpp"
#include "cocolor/nets.hpp"
#include "cocolor/rng.hpp"
#include "json.hpp"

// Three-phase cooperative training: translators with image discriminators
// first, colorizers against frozen translators second, everything jointly
// third. Each step runs a discriminator update on value-only generator
// outputs, then a generator update on a fresh tape.
namespace cocolor {

struct TrainState {
  ModelBundle bundle;
  std::array<AdamState, ModelBundle::kNetCount> opt;
  Rng rng{0};
  std::int64_t step = 0;
};

inline TrainState make_train_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st;
  st.bundle = ModelBundle::create(cfg.image_size, cfg.base_channels, cfg.seed);
  for (int i = 0; i < ModelBundle::kNetCount; ++i) st.opt[i] = make_adam_state(st.bundle.net(i));
  st.rng = Rng::derive(cfg.seed, 200);
  return st;
}

inline TrainState resume_state(const Checkpoint& ckpt) {
  TrainState st;
  st.bundle = ckpt.bundle;
  st.opt = ckpt.opt;
  st.rng.restore_state(ckpt.rng_state);
  return st;
}

struct TrainHooks {
  std::ostream* log = nullptr;  // one JSON line per step
  std::function<void(const Checkpoint&)> on_phase_end;
};

// Everything a step produces, for logging and tests.
struct StepRecord {
  LossBreakdown losses;
  double d_img_n = 0, d_img_g = 0, d_feat_n = 0, d_feat_g = 0;
  bool blt_in_grad = true;
};

// A batch lifted to network-ready tensors: one NIR-domain half with its color
// truth, one grayscale-domain half with its color truth.
struct BatchTensors {
  Tensor<double> nir;       // (B, 1, H, W)
  Tensor<double> nir_rgb;   // (B, 3, H, W)
  Tensor<double> gray;      // (B, 1, H, W)
  Tensor<double> gray_rgb;  // (B, 3, H, W)
};

inline BatchTensors prepare_batch(const Batch& b, const AugmentConfig& aug, Rng& rng) {
  std::vector<PairedSample> ps;
  ps.reserve(b.paired.size());
  for (const PairedSample& s : b.paired) ps.push_back(augment(s, rng, aug));
  std::vector<GraySample> gs;
  gs.reserve(b.gray.size());
  for (const GraySample& s : b.gray) gs.push_back(augment(s, rng, aug));

  std::vector<const ImageTensor*> v;
  auto stack = [&v](auto&& get, std::size_t n) {
    v.clear();
    for (std::size_t i = 0; i < n; ++i) v.push_back(get(i));
    return batch_images(v);
  };
  BatchTensors out;
  out.nir = stack([&](std::size_t i) { return &ps[i].nir; }, ps.size());
  out.nir_rgb = stack([&](std::size_t i) { return &ps[i].rgb; }, ps.size());
  out.gray = stack([&](std::size_t i) { return &gs[i].gray; }, gs.size());
  out.gray_rgb = stack([&](std::size_t i) { return &gs[i].rgb; }, gs.size());
  return out;
}

namespace detail {

inline void check_component(double v, const char* name, std::int64_t step) {
  if (!std::isfinite(v))
    throw NumericError("step " + std::to_string(step) + ": " + name + " is non-finite");
}

inline void apply_grads(Params& p, const TapedNet& net, AdamState& st, double lr) {
  std::vector<Tensor<double>> grads;
  grads.reserve(net.v.size());
  for (const Var<double>& v : net.v) grads.push_back(v.grad());
  adam_step(p, grads, st, lr, AdamConfig{});
}

inline Var<double> zero_scalar(Tape<double>& tape) {
  return make_constant(tape, Tensor<double>::scalar(0.0));
}

inline void log_step(const TrainHooks& hooks, std::int64_t step, int phase, int epoch,
                     std::size_t batch, const StepRecord& r) {
  if (!hooks.log) return;
  nlohmann::ordered_json j;
  j["step"] = step;
  j["phase"] = phase;
  j["epoch"] = epoch;
  j["batch"] = batch;
  j["pair"] = r.losses.pair;
  j["blt"] = r.losses.blt;
  j["gan_img_n"] = r.losses.gan_img_n;
  j["gan_feat_n"] = r.losses.gan_feat_n;
  j["gan_img_g"] = r.losses.gan_img_g;
  j["gan_feat_g"] = r.losses.gan_feat_g;
  j["cyc"] = r.losses.cyc;
  j["idt"] = r.losses.idt;
  j["tran"] = r.losses.tran;
  j["total"] = r.losses.total;
  j["d_img_n"] = r.d_img_n;
  j["d_img_g"] = r.d_img_g;
  j["d_feat_n"] = r.d_feat_n;
  j["d_feat_g"] = r.d_feat_g;
  j["blt_in_grad"] = r.blt_in_grad;
  *hooks.log << j.dump() << "\n";
}

}  // namespace detail

// Phase 1: translators + image discriminators. Cycle, identity, and the two
// image-level adversarial terms; colorizers untouched.
inline StepRecord phase1_step(TrainState& st, const BatchTensors& bt, const TrainConfig& cfg) {
  ModelBundle& m = st.bundle;
  const double lr = cfg.lr_phase1;
  StepRecord rec;

  Tensor<double> x_n2g = generator_apply(m.spec_tr, m.g_n2g, bt.nir);
  Tensor<double> x_g2n = generator_apply(m.spec_tr, m.g_g2n, bt.gray);

  {  // discriminator update on value-only fakes
    Tape<double> tape;
    TapedNet dn = lift_params(tape, m.d_img_n, true);
    TapedNet dg = lift_params(tape, m.d_img_g, true);
    Var<double> ln = gan_loss_d(discriminator_forward(m.spec_d_img, dn, make_constant(tape, bt.nir)),
                                discriminator_forward(m.spec_d_img, dn, make_constant(tape, x_g2n)));
    Var<double> lg = gan_loss_d(discriminator_forward(m.spec_d_img, dg, make_constant(tape, bt.gray)),
                                discriminator_forward(m.spec_d_img, dg, make_constant(tape, x_n2g)));
    rec.d_img_n = ln.val()[0];
    rec.d_img_g = lg.val()[0];
    detail::check_component(rec.d_img_n, "d_img_n", st.step);
    detail::check_component(rec.d_img_g, "d_img_g", st.step);
    tape.backward(add(ln, lg).id);
    detail::apply_grads(m.d_img_n, dn, st.opt[4], lr);
    detail::apply_grads(m.d_img_g, dg, st.opt[5], lr);
  }

  {  // generator update
    Tape<double> tape;
    TapedNet n2g = lift_params(tape, m.g_n2g, true);
    TapedNet g2n = lift_params(tape, m.g_g2n, true);
    TapedNet dn = lift_params(tape, m.d_img_n, false);
    TapedNet dg = lift_params(tape, m.d_img_g, false);
    Var<double> vnir = make_constant(tape, bt.nir);
    Var<double> vgray = make_constant(tape, bt.gray);

    Var<double> t_n2g = generator_forward(m.spec_tr, n2g, vnir);
    Var<double> t_g2n = generator_forward(m.spec_tr, g2n, vgray);
    Var<double> cyc = cycle_loss(generator_forward(m.spec_tr, n2g, t_g2n), vgray,
                                 generator_forward(m.spec_tr, g2n, t_n2g), vnir);
    Var<double> idt = identity_loss(generator_forward(m.spec_tr, n2g, vgray), vgray,
                                    generator_forward(m.spec_tr, g2n, vnir), vnir);
    Var<double> gan_img_n = gan_loss_g(discriminator_forward(m.spec_d_img, dn, t_g2n));
    Var<double> gan_img_g = gan_loss_g(discriminator_forward(m.spec_d_img, dg, t_n2g));
    Var<double> zero = detail::zero_scalar(tape);
    Var<double> tran = translation_loss({gan_img_n, zero, gan_img_g, zero, cyc, idt}, cfg.weights);

    rec.losses.cyc = cyc.val()[0];
    rec.losses.idt = idt.val()[0];
    rec.losses.gan_img_n = gan_img_n.val()[0];
    rec.losses.gan_img_g = gan_img_g.val()[0];
    rec.losses.tran = tran.val()[0];
    rec.losses.total = rec.losses.tran;
    detail::check_component(rec.losses.cyc, "cyc", st.step);
    detail::check_component(rec.losses.idt, "idt", st.step);
    detail::check_component(rec.losses.tran, "tran", st.step);

    tape.backward(tran.id);
    detail::apply_grads(m.g_n2g, n2g, st.opt[0], lr);
    detail::apply_grads(m.g_g2n, g2n, st.opt[1], lr);
  }
  return rec;
}

// Phase 2: colorizers + feature discriminators against frozen translators.
// Latent inputs are plain tensors, so no gradient reaches the translators.
inline StepRecord phase2_step(TrainState& st, const BatchTensors& bt, const TrainConfig& cfg,
                              bool blt_in_grad) {
  ModelBundle& m = st.bundle;
  const double lr = cfg.lr_phase2;
  StepRecord rec;
  rec.blt_in_grad = blt_in_grad;

  Tensor<double> x_n2g = generator_apply(m.spec_tr, m.g_n2g, bt.nir);
  Tensor<double> x_g2n = generator_apply(m.spec_tr, m.g_g2n, bt.gray);
  Tensor<double> fn_direct = generator_apply(m.spec_col, m.f_n, bt.nir);
  Tensor<double> fn_latent = generator_apply(m.spec_col, m.f_n, x_g2n);
  Tensor<double> fg_direct = generator_apply(m.spec_col, m.f_g, bt.gray);
  Tensor<double> fg_latent = generator_apply(m.spec_col, m.f_g, x_n2g);

  {  // feature discriminators: direct colorizations real, latent-path fake
    Tape<double> tape;
    TapedNet dn = lift_params(tape, m.d_feat_n, true);
    TapedNet dg = lift_params(tape, m.d_feat_g, true);
    Var<double> ln =
        gan_loss_d(discriminator_forward(m.spec_d_feat, dn, make_constant(tape, fn_direct)),
                   discriminator_forward(m.spec_d_feat, dn, make_constant(tape, fn_latent)));
    Var<double> lg =
        gan_loss_d(discriminator_forward(m.spec_d_feat, dg, make_constant(tape, fg_direct)),
                   discriminator_forward(m.spec_d_feat, dg, make_constant(tape, fg_latent)));
    rec.d_feat_n = ln.val()[0];
    rec.d_feat_g = lg.val()[0];
    detail::check_component(rec.d_feat_n, "d_feat_n", st.step);
    detail::check_component(rec.d_feat_g, "d_feat_g", st.step);
    tape.backward(add(ln, lg).id);
    detail::apply_grads(m.d_feat_n, dn, st.opt[6], lr);
    detail::apply_grads(m.d_feat_g, dg, st.opt[7], lr);
  }

  {  // colorizer update
    Tape<double> tape;
    TapedNet fn = lift_params(tape, m.f_n, true);
    TapedNet fg = lift_params(tape, m.f_g, true);
    TapedNet dn = lift_params(tape, m.d_feat_n, false);
    TapedNet dg = lift_params(tape, m.d_feat_g, false);

    Var<double> out_n_direct = generator_forward(m.spec_col, fn, make_constant(tape, bt.nir));
    Var<double> out_n_latent = generator_forward(m.spec_col, fn, make_constant(tape, x_g2n));
    Var<double> out_g_direct = generator_forward(m.spec_col, fg, make_constant(tape, bt.gray));
    Var<double> out_g_latent = generator_forward(m.spec_col, fg, make_constant(tape, x_n2g));

    Var<double> pair = pair_loss(out_g_direct, out_g_latent, out_n_direct, out_n_latent,
                                 make_constant(tape, bt.gray_rgb), make_constant(tape, bt.nir_rgb),
                                 cfg.weights);
    Var<double> blt =
        bilateral_consistency_loss(out_n_direct, out_g_latent, out_g_direct, out_n_latent);
    Var<double> gan_feat_n = gan_loss_g(discriminator_forward(m.spec_d_feat, dn, out_n_latent));
    Var<double> gan_feat_g = gan_loss_g(discriminator_forward(m.spec_d_feat, dg, out_g_latent));
    Var<double> zero = detail::zero_scalar(tape);
    Var<double> tran =
        translation_loss({zero, gan_feat_n, zero, gan_feat_g, zero, zero}, cfg.weights);

    Var<double> objective = add(tran, scale(pair, cfg.weights.lambda_p));
    if (blt_in_grad) objective = add(objective, scale(blt, cfg.weights.lambda_c));

    rec.losses.pair = pair.val()[0];
    rec.losses.blt = blt.val()[0];
    rec.losses.gan_feat_n = gan_feat_n.val()[0];
    rec.losses.gan_feat_g = gan_feat_g.val()[0];
    rec.losses.tran = tran.val()[0];
    rec.losses.total = total_loss(tran, pair, blt, cfg.weights).val()[0];
    detail::check_component(rec.losses.pair, "pair", st.step);
    detail::check_component(rec.losses.blt, "blt", st.step);
    detail::check_component(rec.losses.gan_feat_n, "gan_feat_n", st.step);
    detail::check_component(rec.losses.gan_feat_g, "gan_feat_g", st.step);
    detail::check_component(rec.losses.total, "total", st.step);

    tape.backward(objective.id);
    detail::apply_grads(m.f_n, fn, st.opt[2], lr);
    detail::apply_grads(m.f_g, fg, st.opt[3], lr);
  }
  return rec;
}

// Phase 3: joint refinement. All four generators update together, so the
// latent colorizations stay on the tape and the translators feel the
// colorizers' losses.
inline StepRecord phase3_step(TrainState& st, const BatchTensors& bt, const TrainConfig& cfg,
                              bool blt_in_grad, double lr) {
  ModelBundle& m = st.bundle;
  StepRecord rec;
  rec.blt_in_grad = blt_in_grad;

  Tensor<double> x_n2g = generator_apply(m.spec_tr, m.g_n2g, bt.nir);
  Tensor<double> x_g2n = generator_apply(m.spec_tr, m.g_g2n, bt.gray);
  Tensor<double> fn_direct = generator_apply(m.spec_col, m.f_n, bt.nir);
  Tensor<double> fn_latent = generator_apply(m.spec_col, m.f_n, x_g2n);
  Tensor<double> fg_direct = generator_apply(m.spec_col, m.f_g, bt.gray);
  Tensor<double> fg_latent = generator_apply(m.spec_col, m.f_g, x_n2g);

  {  // all four discriminators
    Tape<double> tape;
    TapedNet din = lift_params(tape, m.d_img_n, true);
    TapedNet dig = lift_params(tape, m.d_img_g, true);
    TapedNet dfn = lift_params(tape, m.d_feat_n, true);
    TapedNet dfg = lift_params(tape, m.d_feat_g, true);
    Var<double> lin =
        gan_loss_d(discriminator_forward(m.spec_d_img, din, make_constant(tape, bt.nir)),
                   discriminator_forward(m.spec_d_img, din, make_constant(tape, x_g2n)));
    Var<double> lig =
        gan_loss_d(discriminator_forward(m.spec_d_img, dig, make_constant(tape, bt.gray)),
                   discriminator_forward(m.spec_d_img, dig, make_constant(tape, x_n2g)));
    Var<double> lfn =
        gan_loss_d(discriminator_forward(m.spec_d_feat, dfn, make_constant(tape, fn_direct)),
                   discriminator_forward(m.spec_d_feat, dfn, make_constant(tape, fn_latent)));
    Var<double> lfg =
        gan_loss_d(discriminator_forward(m.spec_d_feat, dfg, make_constant(tape, fg_direct)),
                   discriminator_forward(m.spec_d_feat, dfg, make_constant(tape, fg_latent)));
    rec.d_img_n = lin.val()[0];
    rec.d_img_g = lig.val()[0];
    rec.d_feat_n = lfn.val()[0];
    rec.d_feat_g = lfg.val()[0];
    detail::check_component(rec.d_img_n, "d_img_n", st.step);
    detail::check_component(rec.d_img_g, "d_img_g", st.step);
    detail::check_component(rec.d_feat_n, "d_feat_n", st.step);
    detail::check_component(rec.d_feat_g, "d_feat_g", st.step);
    tape.backward(add(add(lin, lig), add(lfn, lfg)).id);
    detail::apply_grads(m.d_img_n, din, st.opt[4], lr);
    detail::apply_grads(m.d_img_g, dig, st.opt[5], lr);
    detail::apply_grads(m.d_feat_n, dfn, st.opt[6], lr);
    detail::apply_grads(m.d_feat_g, dfg, st.opt[7], lr);
  }

  {  // joint generator update
    Tape<double> tape;
    TapedNet n2g = lift_params(tape, m.g_n2g, true);
    TapedNet g2n = lift_params(tape, m.g_g2n, true);
    TapedNet fn = lift_params(tape, m.f_n, true);
    TapedNet fg = lift_params(tape, m.f_g, true);
    TapedNet din = lift_params(tape, m.d_img_n, false);
    TapedNet dig = lift_params(tape, m.d_img_g, false);
    TapedNet dfn = lift_params(tape, m.d_feat_n, false);
    TapedNet dfg = lift_params(tape, m.d_feat_g, false);
    Var<double> vnir = make_constant(tape, bt.nir);
    Var<double> vgray = make_constant(tape, bt.gray);

    Var<double> t_n2g = generator_forward(m.spec_tr, n2g, vnir);
    Var<double> t_g2n = generator_forward(m.spec_tr, g2n, vgray);
    Var<double> cyc = cycle_loss(generator_forward(m.spec_tr, n2g, t_g2n), vgray,
                                 generator_forward(m.spec_tr, g2n, t_n2g), vnir);
    Var<double> idt = identity_loss(generator_forward(m.spec_tr, n2g, vgray), vgray,
                                    generator_forward(m.spec_tr, g2n, vnir), vnir);

    Var<double> out_n_direct = generator_forward(m.spec_col, fn, vnir);
    Var<double> out_n_latent = generator_forward(m.spec_col, fn, t_g2n);
    Var<double> out_g_direct = generator_forward(m.spec_col, fg, vgray);
    Var<double> out_g_latent = generator_forward(m.spec_col, fg, t_n2g);

    Var<double> pair = pair_loss(out_g_direct, out_g_latent, out_n_direct, out_n_latent,
                                 make_constant(tape, bt.gray_rgb), make_constant(tape, bt.nir_rgb),
                                 cfg.weights);
    Var<double> blt =
        bilateral_consistency_loss(out_n_direct, out_g_latent, out_g_direct, out_n_latent);
    Var<double> gan_img_n = gan_loss_g(discriminator_forward(m.spec_d_img, din, t_g2n));
    Var<double> gan_img_g = gan_loss_g(discriminator_forward(m.spec_d_img, dig, t_n2g));
    Var<double> gan_feat_n = gan_loss_g(discriminator_forward(m.spec_d_feat, dfn, out_n_latent));
    Var<double> gan_feat_g = gan_loss_g(discriminator_forward(m.spec_d_feat, dfg, out_g_latent));
    Var<double> tran =
        translation_loss({gan_img_n, gan_feat_n, gan_img_g, gan_feat_g, cyc, idt}, cfg.weights);

    Var<double> total = total_loss(tran, pair, blt, cfg.weights);
    Var<double> objective =
        blt_in_grad ? total : add(tran, scale(pair, cfg.weights.lambda_p));

    rec.losses.pair = pair.val()[0];
    rec.losses.blt = blt.val()[0];
    rec.losses.gan_img_n = gan_img_n.val()[0];
    rec.losses.gan_feat_n = gan_feat_n.val()[0];
    rec.losses.gan_img_g = gan_img_g.val()[0];
    rec.losses.gan_feat_g = gan_feat_g.val()[0];
    rec.losses.cyc = cyc.val()[0];
    rec.losses.idt = idt.val()[0];
    rec.losses.tran = tran.val()[0];
    rec.losses.total = total.val()[0];
    detail::check_component(rec.losses.pair, "pair", st.step);
    detail::check_component(rec.losses.blt, "blt", st.step);
    detail::check_component(rec.losses.cyc, "cyc", st.step);
    detail::check_component(rec.losses.idt, "idt", st.step);
    detail::check_component(rec.losses.tran, "tran", st.step);
    detail::check_component(rec.losses.total, "total", st.step);

    tape.backward(objective.id);
    detail::apply_grads(m.g_n2g, n2g, st.opt[0], lr);
    detail::apply_grads(m.g_g2n, g2n, st.opt[1], lr);
    detail::apply_grads(m.f_n, fn, st.opt[2], lr);
    detail::apply_grads(m.f_g, fg, st.opt[3], lr);
  }
  return rec;
}

// Single-colorizer supervision, no discriminators. With `with_latent` the
// frozen translators feed the cross-domain term as in the paired objective.
inline StepRecord colorizer_only_step(TrainState& st, const BatchTensors& bt,
                                      const TrainConfig& cfg, bool n_side, bool with_latent,
                                      double lr) {
  ModelBundle& m = st.bundle;
  StepRecord rec;
  rec.blt_in_grad = false;

  Tensor<double> latent_in;
  if (with_latent)
    latent_in = n_side ? generator_apply(m.spec_tr, m.g_g2n, bt.gray)
                       : generator_apply(m.spec_tr, m.g_n2g, bt.nir);

  Tape<double> tape;
  Params& params = n_side ? m.f_n : m.f_g;
  TapedNet net = lift_params(tape, params, true);
  Var<double> direct_in = make_constant(tape, n_side ? bt.nir : bt.gray);
  Var<double> direct_gt = make_constant(tape, n_side ? bt.nir_rgb : bt.gray_rgb);
  Var<double> out_direct = generator_forward(m.spec_col, net, direct_in);
  Var<double> pair = l1_loss(direct_gt, out_direct);
  if (with_latent) {
    Var<double> latent_gt = make_constant(tape, n_side ? bt.gray_rgb : bt.nir_rgb);
    Var<double> out_latent = generator_forward(m.spec_col, net, make_constant(tape, latent_in));
    double lam = n_side ? cfg.weights.lambda4 : cfg.weights.lambda3;
    pair = add(pair, scale(l1_loss(latent_gt, out_latent), lam));
  }
  Var<double> objective = scale(pair, cfg.weights.lambda_p);

  rec.losses.pair = pair.val()[0];
  rec.losses.total = objective.val()[0];
  detail::check_component(rec.losses.pair, "pair", st.step);
  detail::check_component(rec.losses.total, "total", st.step);

  tape.backward(objective.id);
  detail::apply_grads(params, net, st.opt[n_side ? 2 : 3], lr);
  return rec;
}

inline Checkpoint make_checkpoint(const TrainState& st, int phase, std::int64_t epoch,
                                  const TrainConfig& cfg) {
  Checkpoint c;
  c.phase = phase;
  c.epoch = epoch;
  c.config_digest = config_digest(cfg);
  c.rng_state = st.rng.serialize_state();
  c.bundle = st.bundle;
  c.opt = st.opt;
  return c;
}

namespace detail {

// Shared epoch/batch loop; `fn(st, bt)` performs one optimization step.
template <class StepFn>
Checkpoint run_epochs(TrainState& st, const Dataset& ds, const TrainConfig& cfg,
                      const TrainHooks& hooks, int phase_tag, int epochs, StepFn&& fn) {
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::vector<Batch> batches = make_batches(ds.paired, ds.gray_only,
                                              static_cast<std::size_t>(cfg.batch_size), st.rng);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      BatchTensors bt = prepare_batch(batches[bi], cfg.augment, st.rng);
      StepRecord rec = fn(st, bt);
      ++st.step;
      log_step(hooks, st.step, phase_tag, epoch, bi, rec);
    }
  }
  Checkpoint c = make_checkpoint(st, phase_tag, epochs, cfg);
  if (hooks.on_phase_end) hooks.on_phase_end(c);
  return c;
}

}  // namespace detail

inline Checkpoint train_phase1(TrainState& st, const Dataset& ds, const TrainConfig& cfg,
                               const TrainHooks& hooks = {}) {
  return detail::run_epochs(st, ds, cfg, hooks, 1, cfg.epochs_phase1,
                            [&cfg](TrainState& s, const BatchTensors& bt) {
                              return phase1_step(s, bt, cfg);
                            });
}

inline Checkpoint train_phase2(TrainState& st, const Dataset& ds, const TrainConfig& cfg,
                               const TrainHooks& hooks = {}) {
  const bool blt = cfg.ablation != Ablation::no_blt;
  return detail::run_epochs(st, ds, cfg, hooks, 2, cfg.epochs_phase2,
                            [&cfg, blt](TrainState& s, const BatchTensors& bt) {
                              return phase2_step(s, bt, cfg, blt);
                            });
}

inline Checkpoint train_phase3(TrainState& st, const Dataset& ds, const TrainConfig& cfg,
                               const TrainHooks& hooks = {}) {
  const bool blt = cfg.ablation != Ablation::no_blt;
  return detail::run_epochs(st, ds, cfg, hooks, 3, cfg.epochs_phase3,
                            [&cfg, blt](TrainState& s, const BatchTensors& bt) {
                              return phase3_step(s, bt, cfg, blt, cfg.lr_phase3);
                            });
}

// Runs the configured schedule from a fresh state and returns the final
// checkpoint. Intermediate phase checkpoints are delivered via hooks.
inline Checkpoint train_full(const Dataset& ds, const TrainConfig& cfg,
                             const TrainHooks& hooks = {}) {
  cfg.validate();
  TrainState st = make_train_state(cfg);
  switch (cfg.ablation) {
    case Ablation::full:
    case Ablation::no_blt: {
      train_phase1(st, ds, cfg, hooks);
      train_phase2(st, ds, cfg, hooks);
      return train_phase3(st, ds, cfg, hooks);
    }
    case Ablation::from_scratch: {
      // Joint objective from random init, phase-1 learning rate throughout.
      const int epochs = cfg.epochs_phase1 + cfg.epochs_phase2 + cfg.epochs_phase3;
      return detail::run_epochs(st, ds, cfg, hooks, 3, epochs,
                                [&cfg](TrainState& s, const BatchTensors& bt) {
                                  return phase3_step(s, bt, cfg, true, cfg.lr_phase1);
                                });
    }
    case Ablation::n2c_standalone:
    case Ablation::g2c_standalone: {
      const bool n_side = cfg.ablation == Ablation::n2c_standalone;
      detail::run_epochs(st, ds, cfg, hooks, 2, cfg.epochs_phase2,
                         [&cfg, n_side](TrainState& s, const BatchTensors& bt) {
                           return colorizer_only_step(s, bt, cfg, n_side, false, cfg.lr_phase2);
                         });
      return detail::run_epochs(st, ds, cfg, hooks, 3, cfg.epochs_phase3,
                                [&cfg, n_side](TrainState& s, const BatchTensors& bt) {
                                  return colorizer_only_step(s, bt, cfg, n_side, false,
                                                             cfg.lr_phase3);
                                });
    }
    case Ablation::n2c_partial: {
      // Translators pretrained as usual, then the NIR colorizer alone with
      // the latent supervision term but no adversaries.
      train_phase1(st, ds, cfg, hooks);
      detail::run_epochs(st, ds, cfg, hooks, 2, cfg.epochs_phase2,
                         [&cfg](TrainState& s, const BatchTensors& bt) {
                           return colorizer_only_step(s, bt, cfg, true, true, cfg.lr_phase2);
                         });
      return detail::run_epochs(st, ds, cfg, hooks, 3, cfg.epochs_phase3,
                                [&cfg](TrainState& s, const BatchTensors& bt) {
                                  return colorizer_only_step(s, bt, cfg, true, true,
                                                             cfg.lr_phase3);
                                });
    }
  }
  throw ConfigError("unreachable ablation");
}

}  // namespace cocolor
