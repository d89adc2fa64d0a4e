#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "cocolor/autodiff.hpp"
#include "cocolor/tensor.hpp"

namespace cocolor {

// ---------------------------------------------------------------------------
// Raw kernels (no tape). Layout is NCHW throughout; conv weights are
// {Cout,Cin,k,k}, transposed-conv weights {Cin,Cout,k,k}.
// ---------------------------------------------------------------------------

namespace detail {

// Interval [lo,hi) of output indices o with 0 <= o < out_limit and
// 0 <= o*stride + off < in_limit.
inline std::pair<int, int> stride_range(int out_limit, int in_limit, int stride, int off) {
  int lo = off < 0 ? (-off + stride - 1) / stride : 0;
  int hi_in = in_limit - 1 - off;
  int hi = hi_in < 0 ? 0 : hi_in / stride + 1;
  if (hi > out_limit) hi = out_limit;
  if (lo > hi) lo = hi;
  return {lo, hi};
}

inline int conv_out_size(int in, int k, int stride, int pad) {
  int num = in + 2 * pad - k;
  require(num >= 0 && num % stride == 0,
          "conv: size " + std::to_string(in) + " incompatible with k=" + std::to_string(k) +
              " s=" + std::to_string(stride) + " p=" + std::to_string(pad));
  return num / stride + 1;
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride,
                     int pad) {
  require(x.rank() == 4 && w.rank() == 4 && b.rank() == 1, "conv2d: bad ranks");
  const int N = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int Cout = w.size(0), k = w.size(2);
  require(w.size(1) == Cin, "conv2d: channel mismatch");
  require(w.size(3) == k && b.size(0) == Cout, "conv2d: bad weight shape");
  const int Ho = detail::conv_out_size(H, k, stride, pad);
  const int Wo = detail::conv_out_size(W, k, stride, pad);
  Tensor<T> out({N, Cout, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      T* oplane = out.data() + out.idx4(n, co, 0, 0);
      const T bias = b[static_cast<std::size_t>(co)];
      for (int i = 0; i < Ho * Wo; ++i) oplane[i] = bias;
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xplane = x.data() + x.idx4(n, ci, 0, 0);
        const T* wplane = w.data() + w.idx4(co, ci, 0, 0);
        for (int ki = 0; ki < k; ++ki) {
          const int ioff = ki - pad;
          auto [ylo, yhi] = detail::stride_range(Ho, H, stride, ioff);
          for (int kj = 0; kj < k; ++kj) {
            const T wv = wplane[ki * k + kj];
            const int joff = kj - pad;
            auto [xlo, xhi] = detail::stride_range(Wo, W, stride, joff);
            for (int oy = ylo; oy < yhi; ++oy) {
              const T* xr = xplane + static_cast<std::ptrdiff_t>(oy * stride + ioff) * W;
              T* orow = oplane + static_cast<std::ptrdiff_t>(oy) * Wo;
              for (int ox = xlo; ox < xhi; ++ox) orow[ox] += wv * xr[ox * stride + joff];
            }
          }
        }
      }
    }
  return out;
}

template <typename T>
void conv2d_bwd_x(const Tensor<T>& go, const Tensor<T>& w, Tensor<T>& gx, int stride, int pad) {
  const int N = gx.size(0), Cin = gx.size(1), H = gx.size(2), W = gx.size(3);
  const int Cout = w.size(0), k = w.size(2);
  const int Ho = go.size(2), Wo = go.size(3);
  for (int n = 0; n < N; ++n)
    for (int ci = 0; ci < Cin; ++ci) {
      T* gxplane = gx.data() + gx.idx4(n, ci, 0, 0);
      for (int co = 0; co < Cout; ++co) {
        const T* goplane = go.data() + go.idx4(n, co, 0, 0);
        const T* wplane = w.data() + w.idx4(co, ci, 0, 0);
        for (int ki = 0; ki < k; ++ki) {
          const int ioff = ki - pad;
          auto [ylo, yhi] = detail::stride_range(Ho, H, stride, ioff);
          for (int kj = 0; kj < k; ++kj) {
            const T wv = wplane[ki * k + kj];
            const int joff = kj - pad;
            auto [xlo, xhi] = detail::stride_range(Wo, W, stride, joff);
            for (int oy = ylo; oy < yhi; ++oy) {
              T* gxr = gxplane + static_cast<std::ptrdiff_t>(oy * stride + ioff) * W;
              const T* gor = goplane + static_cast<std::ptrdiff_t>(oy) * Wo;
              for (int ox = xlo; ox < xhi; ++ox) gxr[ox * stride + joff] += wv * gor[ox];
            }
          }
        }
      }
    }
}

template <typename T>
void conv2d_bwd_w(const Tensor<T>& go, const Tensor<T>& x, Tensor<T>& gw, int stride, int pad) {
  const int N = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int Cout = gw.size(0), k = gw.size(2);
  const int Ho = go.size(2), Wo = go.size(3);
  for (int co = 0; co < Cout; ++co)
    for (int ci = 0; ci < Cin; ++ci) {
      T* gwplane = gw.data() + gw.idx4(co, ci, 0, 0);
      for (int ki = 0; ki < k; ++ki) {
        const int ioff = ki - pad;
        auto [ylo, yhi] = detail::stride_range(Ho, H, stride, ioff);
        for (int kj = 0; kj < k; ++kj) {
          const int joff = kj - pad;
          auto [xlo, xhi] = detail::stride_range(Wo, W, stride, joff);
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* xplane = x.data() + x.idx4(n, ci, 0, 0);
            const T* goplane = go.data() + go.idx4(n, co, 0, 0);
            for (int oy = ylo; oy < yhi; ++oy) {
              const T* xr = xplane + static_cast<std::ptrdiff_t>(oy * stride + ioff) * W;
              const T* gor = goplane + static_cast<std::ptrdiff_t>(oy) * Wo;
              for (int ox = xlo; ox < xhi; ++ox) acc += gor[ox] * xr[ox * stride + joff];
            }
          }
          gwplane[ki * k + kj] += acc;
        }
      }
    }
}

template <typename T>
void conv2d_bwd_b(const Tensor<T>& go, Tensor<T>& gb) {
  const int N = go.size(0), Cout = go.size(1), plane = go.size(2) * go.size(3);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      const T* gop = go.data() + go.idx4(n, co, 0, 0);
      T acc = 0;
      for (int i = 0; i < plane; ++i) acc += gop[i];
      gb[static_cast<std::size_t>(co)] += acc;
    }
}

template <typename T>
Tensor<T> conv_transpose2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                               int stride, int pad) {
  require(x.rank() == 4 && w.rank() == 4 && b.rank() == 1, "conv_transpose2d: bad ranks");
  const int N = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int Cout = w.size(1), k = w.size(2);
  require(w.size(0) == Cin, "conv_transpose2d: channel mismatch");
  require(w.size(3) == k && b.size(0) == Cout, "conv_transpose2d: bad weight shape");
  const int Ho = (H - 1) * stride + k - 2 * pad;
  const int Wo = (W - 1) * stride + k - 2 * pad;
  require(Ho > 0 && Wo > 0, "conv_transpose2d: empty output");
  Tensor<T> out({N, Cout, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Cout; ++co) {
      T* oplane = out.data() + out.idx4(n, co, 0, 0);
      const T bias = b[static_cast<std::size_t>(co)];
      for (int i = 0; i < Ho * Wo; ++i) oplane[i] = bias;
      for (int ci = 0; ci < Cin; ++ci) {
        const T* xplane = x.data() + x.idx4(n, ci, 0, 0);
        const T* wplane = w.data() + w.idx4(ci, co, 0, 0);
        for (int ki = 0; ki < k; ++ki) {
          const int ioff = ki - pad;
          auto [ylo, yhi] = detail::stride_range(H, Ho, stride, ioff);
          for (int kj = 0; kj < k; ++kj) {
            const T wv = wplane[ki * k + kj];
            const int joff = kj - pad;
            auto [xlo, xhi] = detail::stride_range(W, Wo, stride, joff);
            for (int y = ylo; y < yhi; ++y) {
              const T* xr = xplane + static_cast<std::ptrdiff_t>(y) * W;
              T* orow = oplane + static_cast<std::ptrdiff_t>(y * stride + ioff) * Wo;
              for (int xx = xlo; xx < xhi; ++xx) orow[xx * stride + joff] += wv * xr[xx];
            }
          }
        }
      }
    }
  return out;
}

template <typename T>
void conv_transpose2d_bwd_x(const Tensor<T>& go, const Tensor<T>& w, Tensor<T>& gx, int stride,
                            int pad) {
  const int N = gx.size(0), Cin = gx.size(1), H = gx.size(2), W = gx.size(3);
  const int Cout = w.size(1), k = w.size(2);
  const int Ho = go.size(2), Wo = go.size(3);
  for (int n = 0; n < N; ++n)
    for (int ci = 0; ci < Cin; ++ci) {
      T* gxplane = gx.data() + gx.idx4(n, ci, 0, 0);
      for (int co = 0; co < Cout; ++co) {
        const T* goplane = go.data() + go.idx4(n, co, 0, 0);
        const T* wplane = w.data() + w.idx4(ci, co, 0, 0);
        for (int ki = 0; ki < k; ++ki) {
          const int ioff = ki - pad;
          auto [ylo, yhi] = detail::stride_range(H, Ho, stride, ioff);
          for (int kj = 0; kj < k; ++kj) {
            const T wv = wplane[ki * k + kj];
            const int joff = kj - pad;
            auto [xlo, xhi] = detail::stride_range(W, Wo, stride, joff);
            for (int y = ylo; y < yhi; ++y) {
              T* gxr = gxplane + static_cast<std::ptrdiff_t>(y) * W;
              const T* gor = goplane + static_cast<std::ptrdiff_t>(y * stride + ioff) * Wo;
              for (int xx = xlo; xx < xhi; ++xx) gxr[xx] += wv * gor[xx * stride + joff];
            }
          }
        }
      }
    }
}

template <typename T>
void conv_transpose2d_bwd_w(const Tensor<T>& go, const Tensor<T>& x, Tensor<T>& gw, int stride,
                            int pad) {
  const int N = x.size(0), Cin = x.size(1), H = x.size(2), W = x.size(3);
  const int Cout = gw.size(1), k = gw.size(2);
  const int Ho = go.size(2), Wo = go.size(3);
  for (int ci = 0; ci < Cin; ++ci)
    for (int co = 0; co < Cout; ++co) {
      T* gwplane = gw.data() + gw.idx4(ci, co, 0, 0);
      for (int ki = 0; ki < k; ++ki) {
        const int ioff = ki - pad;
        auto [ylo, yhi] = detail::stride_range(H, Ho, stride, ioff);
        for (int kj = 0; kj < k; ++kj) {
          const int joff = kj - pad;
          auto [xlo, xhi] = detail::stride_range(W, Wo, stride, joff);
          T acc = 0;
          for (int n = 0; n < N; ++n) {
            const T* xplane = x.data() + x.idx4(n, ci, 0, 0);
            const T* goplane = go.data() + go.idx4(n, co, 0, 0);
            for (int y = ylo; y < yhi; ++y) {
              const T* xr = xplane + static_cast<std::ptrdiff_t>(y) * W;
              const T* gor = goplane + static_cast<std::ptrdiff_t>(y * stride + ioff) * Wo;
              for (int xx = xlo; xx < xhi; ++xx) acc += xr[xx] * gor[xx * stride + joff];
            }
          }
          gwplane[ki * k + kj] += acc;
        }
      }
    }
}

// Same fixed kernel applied to every channel, no padding.
template <typename T>
Tensor<T> depthwise_conv_valid_fwd(const Tensor<T>& x, const Tensor<T>& kernel) {
  require(x.rank() == 4 && kernel.rank() == 2, "depthwise_conv_valid: bad ranks");
  const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const int kh = kernel.size(0), kw = kernel.size(1);
  require(H >= kh && W >= kw, "depthwise_conv_valid: input smaller than kernel");
  const int Ho = H - kh + 1, Wo = W - kw + 1;
  Tensor<T> out({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xplane = x.data() + x.idx4(n, c, 0, 0);
      T* oplane = out.data() + out.idx4(n, c, 0, 0);
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          T acc = 0;
          for (int ki = 0; ki < kh; ++ki) {
            const T* xr = xplane + static_cast<std::ptrdiff_t>(oy + ki) * W + ox;
            const T* kr = kernel.data() + static_cast<std::ptrdiff_t>(ki) * kw;
            for (int kj = 0; kj < kw; ++kj) acc += kr[kj] * xr[kj];
          }
          oplane[oy * Wo + ox] = acc;
        }
    }
  return out;
}

template <typename T>
Tensor<T> avg_pool2_fwd(const Tensor<T>& x) {
  require(x.rank() == 4, "avg_pool2: bad rank");
  const int N = x.size(0), C = x.size(1), H = x.size(2), W = x.size(3);
  const int Ho = H / 2, Wo = W / 2;
  require(Ho > 0 && Wo > 0, "avg_pool2: input too small");
  Tensor<T> out({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xp = x.data() + x.idx4(n, c, 0, 0);
      T* op = out.data() + out.idx4(n, c, 0, 0);
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          const T* r0 = xp + static_cast<std::ptrdiff_t>(2 * oy) * W + 2 * ox;
          const T* r1 = r0 + W;
          op[oy * Wo + ox] = (r0[0] + r0[1] + r1[0] + r1[1]) * T(0.25);
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Tape ops.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename Fn>
Var<T> unary_op(Var<T> a, Tensor<T> out, Fn&& make_backward) {
  Tape<T>& tp = *a.tape;
  bool rg = a.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) tp.set_backward(id, make_backward(a.id, id));
  return Var<T>{&tp, id};
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.val(), b.val(), "add");
  Tape<T>& tp = *a.tape;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] + pb[i];
  bool rg = a.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int ai = a.id, bi = b.id;
    tp.set_backward(id, [ai, bi, id](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      for (int src : {ai, bi})
        if (t.requires_grad(src)) {
          Tensor<T>& g = t.grad_buf(src);
          for (std::size_t i = 0; i < go.numel(); ++i) g[i] += go[i];
        }
    });
  }
  return Var<T>{&tp, id};
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a.val(), b.val(), "sub");
  Tape<T>& tp = *a.tape;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] - pb[i];
  bool rg = a.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int ai = a.id, bi = b.id;
    tp.set_backward(id, [ai, bi, id](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      if (t.requires_grad(ai)) {
        Tensor<T>& g = t.grad_buf(ai);
        for (std::size_t i = 0; i < go.numel(); ++i) g[i] += go[i];
      }
      if (t.requires_grad(bi)) {
        Tensor<T>& g = t.grad_buf(bi);
        for (std::size_t i = 0; i < go.numel(); ++i) g[i] -= go[i];
      }
    });
  }
  return Var<T>{&tp, id};
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.val(), b.val(), "mul");
  Tape<T>& tp = *a.tape;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pb[i];
  bool rg = a.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int ai = a.id, bi = b.id;
    tp.set_backward(id, [ai, bi, id](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      if (t.requires_grad(ai)) {
        Tensor<T>& g = t.grad_buf(ai);
        const Tensor<T>& bv = t.value(bi);
        for (std::size_t i = 0; i < go.numel(); ++i) g[i] += go[i] * bv[i];
      }
      if (t.requires_grad(bi)) {
        Tensor<T>& g = t.grad_buf(bi);
        const Tensor<T>& av = t.value(ai);
        for (std::size_t i = 0; i < go.numel(); ++i) g[i] += go[i] * av[i];
      }
    });
  }
  return Var<T>{&tp, id};
}

template <typename T>
Var<T> div(Var<T> a, Var<T> b) {
  require_same_shape(a.val(), b.val(), "div");
  Tape<T>& tp = *a.tape;
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  const T* pb = b.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] / pb[i];
  bool rg = a.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int ai = a.id, bi = b.id;
    tp.set_backward(id, [ai, bi, id](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& bv = t.value(bi);
      if (t.requires_grad(ai)) {
        Tensor<T>& g = t.grad_buf(ai);
        for (std::size_t i = 0; i < go.numel(); ++i) g[i] += go[i] / bv[i];
      }
      if (t.requires_grad(bi)) {
        Tensor<T>& g = t.grad_buf(bi);
        const Tensor<T>& av = t.value(ai);
        for (std::size_t i = 0; i < go.numel(); ++i)
          g[i] -= go[i] * av[i] / (bv[i] * bv[i]);
      }
    });
  }
  return Var<T>{&tp, id};
}

// out = scale * x + shift
template <typename T>
Var<T> affine(Var<T> a, T scale, T shift) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = scale * pa[i] + shift;
  return detail::unary_op(a, std::move(out), [scale](int ai, int id) {
    return [ai, id, scale](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i) g[i] += scale * go[i];
    };
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return affine(a, s, T{0});
}

template <typename T>
Var<T> add_const(Var<T> a, T c) {
  return affine(a, T{1}, c);
}

template <typename T>
Var<T> square(Var<T> a) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] * pa[i];
  return detail::unary_op(a, std::move(out), [](int ai, int id) {
    return [ai, id](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& av = t.value(ai);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i) g[i] += T{2} * av[i] * go[i];
    };
  });
}

// |x|, with subgradient 0 at x == 0.
template <typename T>
Var<T> abs_val(Var<T> a) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::abs(pa[i]);
  return detail::unary_op(a, std::move(out), [](int ai, int id) {
    return [ai, id](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& av = t.value(ai);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i) {
        if (av[i] > 0)
          g[i] += go[i];
        else if (av[i] < 0)
          g[i] -= go[i];
      }
    };
  });
}

// x^p for x > 0 (callers clamp first when p is fractional).
template <typename T>
Var<T> pow_const(Var<T> a, T p) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = std::pow(pa[i], p);
  return detail::unary_op(a, std::move(out), [p](int ai, int id) {
    return [ai, id, p](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& av = t.value(ai);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i)
        g[i] += p * std::pow(av[i], p - T{1}) * go[i];
    };
  });
}

// max(x, c); gradient passes only where x > c.
template <typename T>
Var<T> max_const(Var<T> a, T c) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > c ? pa[i] : c;
  return detail::unary_op(a, std::move(out), [c](int ai, int id) {
    return [ai, id, c](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& av = t.value(ai);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i)
        if (av[i] > c) g[i] += go[i];
    };
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return max_const(a, T{0});
}

template <typename T>
Var<T> leaky_relu(Var<T> a, T slope) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = pa[i] > 0 ? pa[i] : slope * pa[i];
  return detail::unary_op(a, std::move(out), [slope](int ai, int id) {
    return [ai, id, slope](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& av = t.value(ai);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i) g[i] += (av[i] > 0 ? T{1} : slope) * go[i];
    };
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out(a.val().shape());
  const T* pa = a.val().data();
  T* po = out.data();
  for (std::size_t i = 0; i < out.numel(); ++i) po[i] = T{1} / (T{1} + std::exp(-pa[i]));
  return detail::unary_op(a, std::move(out), [](int ai, int id) {
    return [ai, id](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& ov = t.value(id);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < go.numel(); ++i) g[i] += ov[i] * (T{1} - ov[i]) * go[i];
    };
  });
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  const std::size_t n = a.val().numel();
  Tensor<T> out = Tensor<T>::scalar(a.val().sum() / static_cast<T>(n));
  return detail::unary_op(a, std::move(out), [n](int ai, int id) {
    return [ai, id, n](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const T go = t.node(id).grad[0] / static_cast<T>(n);
      Tensor<T>& g = t.grad_buf(ai);
      for (std::size_t i = 0; i < g.numel(); ++i) g[i] += go;
    };
  });
}

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.val();
  const Tensor<T>& bv = b.val();
  require(av.rank() == 4 && bv.rank() == 4, "concat_channels: bad ranks");
  require(av.size(0) == bv.size(0) && av.size(2) == bv.size(2) && av.size(3) == bv.size(3),
          "concat_channels: mismatched shapes " + av.shape_str() + " vs " + bv.shape_str());
  const int N = av.size(0), Ca = av.size(1), Cb = bv.size(1), H = av.size(2), W = av.size(3);
  Tensor<T> out({N, Ca + Cb, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::copy(av.data() + av.idx4(n, 0, 0, 0), av.data() + av.idx4(n, 0, 0, 0) + plane * Ca,
              out.data() + out.idx4(n, 0, 0, 0));
    std::copy(bv.data() + bv.idx4(n, 0, 0, 0), bv.data() + bv.idx4(n, 0, 0, 0) + plane * Cb,
              out.data() + out.idx4(n, Ca, 0, 0));
  }
  Tape<T>& tp = *a.tape;
  bool rg = a.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int ai = a.id, bi = b.id;
    tp.set_backward(id, [ai, bi, id, N, Ca, Cb, plane](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      if (t.requires_grad(ai)) {
        Tensor<T>& g = t.grad_buf(ai);
        for (int n = 0; n < N; ++n) {
          const T* src = go.data() + go.idx4(n, 0, 0, 0);
          T* dst = g.data() + g.idx4(n, 0, 0, 0);
          for (std::size_t i = 0; i < plane * Ca; ++i) dst[i] += src[i];
        }
      }
      if (t.requires_grad(bi)) {
        Tensor<T>& g = t.grad_buf(bi);
        for (int n = 0; n < N; ++n) {
          const T* src = go.data() + go.idx4(n, Ca, 0, 0);
          T* dst = g.data() + g.idx4(n, 0, 0, 0);
          for (std::size_t i = 0; i < plane * Cb; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return Var<T>{&tp, id};
}

template <typename T>
Var<T> avg_pool2(Var<T> a) {
  Tensor<T> out = avg_pool2_fwd(a.val());
  const int Ho = out.size(2), Wo = out.size(3);
  return detail::unary_op(a, std::move(out), [Ho, Wo](int ai, int id) {
    return [ai, id, Ho, Wo](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      Tensor<T>& g = t.grad_buf(ai);
      const int N = g.size(0), C = g.size(1), W = g.size(3);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* gop = go.data() + go.idx4(n, c, 0, 0);
          T* gp = g.data() + g.idx4(n, c, 0, 0);
          for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
              const T v = gop[oy * Wo + ox] * T(0.25);
              T* r0 = gp + static_cast<std::ptrdiff_t>(2 * oy) * W + 2 * ox;
              r0[0] += v;
              r0[1] += v;
              r0[W] += v;
              r0[W + 1] += v;
            }
        }
    };
  });
}

template <typename T>
Var<T> depthwise_conv_valid(Var<T> a, const Tensor<T>& kernel) {
  Tensor<T> out = depthwise_conv_valid_fwd(a.val(), kernel);
  Tensor<T> kcopy = kernel;
  return detail::unary_op(a, std::move(out), [kcopy = std::move(kcopy)](int ai, int id) {
    return [ai, id, kcopy](Tape<T>& t) {
      if (!t.requires_grad(ai)) return;
      const Tensor<T>& go = t.node(id).grad;
      Tensor<T>& g = t.grad_buf(ai);
      const int N = g.size(0), C = g.size(1), W = g.size(3);
      const int Ho = go.size(2), Wo = go.size(3);
      const int kh = kcopy.size(0), kw = kcopy.size(1);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* gop = go.data() + go.idx4(n, c, 0, 0);
          T* gp = g.data() + g.idx4(n, c, 0, 0);
          for (int oy = 0; oy < Ho; ++oy)
            for (int ki = 0; ki < kh; ++ki) {
              T* gr = gp + static_cast<std::ptrdiff_t>(oy + ki) * W;
              const T* gor = gop + static_cast<std::ptrdiff_t>(oy) * Wo;
              const T* kr = kcopy.data() + static_cast<std::ptrdiff_t>(ki) * kw;
              for (int kj = 0; kj < kw; ++kj) {
                const T kv = kr[kj];
                for (int ox = 0; ox < Wo; ++ox) gr[ox + kj] += kv * gor[ox];
              }
            }
        }
    };
  });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Tape<T>& tp = *x.tape;
  Tensor<T> out = conv2d_fwd(x.val(), w.val(), b.val(), stride, pad);
  bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int xi = x.id, wi = w.id, bi = b.id;
    tp.set_backward(id, [xi, wi, bi, id, stride, pad](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      if (t.requires_grad(xi)) conv2d_bwd_x(go, t.value(wi), t.grad_buf(xi), stride, pad);
      if (t.requires_grad(wi)) conv2d_bwd_w(go, t.value(xi), t.grad_buf(wi), stride, pad);
      if (t.requires_grad(bi)) conv2d_bwd_b(go, t.grad_buf(bi));
    });
  }
  return Var<T>{&tp, id};
}

template <typename T>
Var<T> conv_transpose2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad) {
  Tape<T>& tp = *x.tape;
  Tensor<T> out = conv_transpose2d_fwd(x.val(), w.val(), b.val(), stride, pad);
  bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
  int id = tp.add_node(std::move(out), rg);
  if (rg) {
    int xi = x.id, wi = w.id, bi = b.id;
    tp.set_backward(id, [xi, wi, bi, id, stride, pad](Tape<T>& t) {
      const Tensor<T>& go = t.node(id).grad;
      if (t.requires_grad(xi))
        conv_transpose2d_bwd_x(go, t.value(wi), t.grad_buf(xi), stride, pad);
      if (t.requires_grad(wi))
        conv_transpose2d_bwd_w(go, t.value(xi), t.grad_buf(wi), stride, pad);
      if (t.requires_grad(bi)) conv2d_bwd_b(go, t.grad_buf(bi));
    });
  }
  return Var<T>{&tp, id};
}

// Channel-wise normalization over each (sample, channel) plane, no affine.
template <typename T>
Var<T> instance_norm(Var<T> x, T eps = T(1e-5)) {
  const Tensor<T>& xv = x.val();
  require(xv.rank() == 4, "instance_norm: bad rank");
  const int N = xv.size(0), C = xv.size(1), H = xv.size(2), W = xv.size(3);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  Tensor<T> out(xv.shape());
  std::vector<T> inv(static_cast<std::size_t>(N) * C);
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c) {
      const T* xp = xv.data() + xv.idx4(n, c, 0, 0);
      T* op = out.data() + out.idx4(n, c, 0, 0);
      T mean = 0;
      for (std::size_t i = 0; i < plane; ++i) mean += xp[i];
      mean /= static_cast<T>(plane);
      T var = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const T d = xp[i] - mean;
        var += d * d;
      }
      var /= static_cast<T>(plane);
      const T iv = T{1} / std::sqrt(var + eps);
      inv[static_cast<std::size_t>(n) * C + c] = iv;
      for (std::size_t i = 0; i < plane; ++i) op[i] = (xp[i] - mean) * iv;
    }
  return detail::unary_op(x, std::move(out),
                          [inv = std::move(inv), N, C, plane](int xi, int id) {
    return [xi, id, inv, N, C, plane](Tape<T>& t) {
      if (!t.requires_grad(xi)) return;
      const Tensor<T>& go = t.node(id).grad;
      const Tensor<T>& yv = t.value(id);
      Tensor<T>& g = t.grad_buf(xi);
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          const T* gop = go.data() + go.idx4(n, c, 0, 0);
          const T* yp = yv.data() + yv.idx4(n, c, 0, 0);
          T* gp = g.data() + g.idx4(n, c, 0, 0);
          T mg = 0, mgy = 0;
          for (std::size_t i = 0; i < plane; ++i) {
            mg += gop[i];
            mgy += gop[i] * yp[i];
          }
          mg /= static_cast<T>(plane);
          mgy /= static_cast<T>(plane);
          const T iv = inv[static_cast<std::size_t>(n) * C + c];
          for (std::size_t i = 0; i < plane; ++i)
            gp[i] += iv * (gop[i] - mg - yp[i] * mgy);
        }
    };
  });
}

}  // namespace cocolor
