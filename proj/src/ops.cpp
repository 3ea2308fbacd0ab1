// Copyright 2026 The Maskmark Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "maskmark/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace maskmark {

namespace {

using MatRM = Eigen::Matrix<real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

Tensor new_op(std::vector<int> shape, std::initializer_list<Tensor> parents) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.resize(size_t(n->numel()));
  bool rg = false;
  if (grad_enabled()) {
    for (const auto& p : parents) rg = rg || p.requires_grad();
  }
  n->requires_grad = rg;
  if (rg) {
    for (const auto& p : parents) n->parents.push_back(p.node());
  }
  return Tensor(n);
}

// Luminance weights used for grayscale conversion throughout.
constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) { return axpby(a, 1, b, 1); }
Tensor sub(const Tensor& a, const Tensor& b) { return axpby(a, 1, b, -1); }

Tensor axpby(const Tensor& a, real alpha, const Tensor& b, real beta) {
  check(same_shape(a, b), "axpby: shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
  Tensor out = new_op(a.shape(), {a, b});
  const int64_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = alpha * pa[i] + beta * pb[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backward_fn = [an, bn, on, alpha, beta, n]() {
      const real* g = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        real* ga = an->grad.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += alpha * g[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        real* gb = bn->grad.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += beta * g[i];
      }
    };
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "mul: shape mismatch");
  Tensor out = new_op(a.shape(), {a, b});
  const int64_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backward_fn = [an, bn, on, n]() {
      const real* g = on->grad.data();
      if (an->requires_grad) {
        an->ensure_grad();
        real* ga = an->grad.data();
        const real* pb2 = bn->value.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        real* gb = bn->grad.data();
        const real* pa2 = an->value.data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
      }
    };
  }
  return out;
}

Tensor affine(const Tensor& x, real a, real b) {
  Tensor out = new_op(x.shape(), {x});
  const int64_t n = x.numel();
  const real* px = x.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = a * px[i] + b;
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, a, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += a * g[i];
    };
  }
  return out;
}

Tensor per_sample_affine(const Tensor& x, const std::vector<real>& a,
                         const std::vector<real>& b) {
  const int N = x.dim(0);
  check(int(a.size()) == N && int(b.size()) == N, "per_sample_affine: coefficient count");
  Tensor out = new_op(x.shape(), {x});
  const int64_t per = x.numel() / N;
  const real* px = x.data();
  real* po = out.data();
  for (int n = 0; n < N; ++n) {
    for (int64_t i = 0; i < per; ++i) po[n * per + i] = a[n] * px[n * per + i] + b[n];
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, a, N, per]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int n = 0; n < N; ++n)
        for (int64_t i = 0; i < per; ++i) gx[n * per + i] += a[n] * g[n * per + i];
    };
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = new_op(x.shape(), {x});
  const int64_t n = x.numel();
  const real* px = x.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] > 0 ? px[i] : real(0);
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      const real* px2 = xn->value.data();
      for (int64_t i = 0; i < n; ++i)
        if (px2[i] > 0) gx[i] += g[i];
    };
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = new_op(x.shape(), {x});
  const int64_t n = x.numel();
  const real* px = x.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = real(1) / (real(1) + std::exp(-px[i]));
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      const real* y = on->value.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (real(1) - y[i]);
    };
  }
  return out;
}

Tensor clamp(const Tensor& x, real lo, real hi) {
  Tensor out = new_op(x.shape(), {x});
  const int64_t n = x.numel();
  const real* px = x.data();
  real* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = std::min(hi, std::max(lo, px[i]));
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, lo, hi, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      const real* px2 = xn->value.data();
      for (int64_t i = 0; i < n; ++i)
        if (px2[i] > lo && px2[i] < hi) gx[i] += g[i];
    };
  }
  return out;
}

Tensor mul_bcast(const Tensor& x, const Tensor& m) {
  check(x.ndim() == 4 && m.ndim() == 4, "mul_bcast: expects NCHW inputs");
  check(m.dim(0) == x.dim(0) && m.dim(1) == 1 && m.dim(2) == x.dim(2) && m.dim(3) == x.dim(3),
        "mul_bcast: mask must be [N,1,H,W] matching " + shape_str(x.shape()));
  const int N = x.dim(0), C = x.dim(1);
  const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
  Tensor out = new_op(x.shape(), {x});
  const real* px = x.data();
  const real* pm = m.data();
  real* po = out.data();
  for (int n = 0; n < N; ++n) {
    const real* mn = pm + n * hw;
    for (int c = 0; c < C; ++c) {
      const real* xi = px + (n * C + c) * hw;
      real* oi = po + (n * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) oi[i] = xi[i] * mn[i];
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    // keep the mask values alive for backward
    std::vector<real> mv = m.vec();
    out.node()->backward_fn = [xn, on, mv = std::move(mv), N, C, hw]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int n = 0; n < N; ++n) {
        const real* mn = mv.data() + n * hw;
        for (int c = 0; c < C; ++c) {
          const int64_t off = (int64_t(n) * C + c) * hw;
          for (int64_t i = 0; i < hw; ++i) gx[off + i] += g[off + i] * mn[i];
        }
      }
    };
  }
  return out;
}

Tensor saturation_adjust(const Tensor& x, const std::vector<real>& f) {
  check(x.ndim() == 4 && x.dim(1) == 3, "saturation_adjust: expects [N,3,H,W]");
  const int N = x.dim(0);
  check(int(f.size()) == N, "saturation_adjust: factor count");
  const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
  Tensor out = new_op(x.shape(), {x});
  const real* px = x.data();
  real* po = out.data();
  const real w[3] = {real(kLumaR), real(kLumaG), real(kLumaB)};
  for (int n = 0; n < N; ++n) {
    const real* r = px + (n * 3 + 0) * hw;
    const real* g = px + (n * 3 + 1) * hw;
    const real* b = px + (n * 3 + 2) * hw;
    const real fn = f[n];
    for (int64_t i = 0; i < hw; ++i) {
      const real gray = w[0] * r[i] + w[1] * g[i] + w[2] * b[i];
      for (int c = 0; c < 3; ++c)
        po[(n * 3 + c) * hw + i] = fn * px[(n * 3 + c) * hw + i] + (real(1) - fn) * gray;
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, f, N, hw, w0 = real(kLumaR), w1 = real(kLumaG),
                               w2 = real(kLumaB)]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      const real w[3] = {w0, w1, w2};
      for (int n = 0; n < N; ++n) {
        const real fn = f[n];
        for (int64_t i = 0; i < hw; ++i) {
          real gsum = 0;
          for (int c = 0; c < 3; ++c) gsum += g[(n * 3 + c) * hw + i];
          for (int c = 0; c < 3; ++c)
            gx[(n * 3 + c) * hw + i] += fn * g[(n * 3 + c) * hw + i] + (real(1) - fn) * w[c] * gsum;
        }
      }
    };
  }
  return out;
}

// ---- shape -----------------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  check(n == x.numel(), "reshape: numel mismatch " + shape_str(x.shape()) + " -> " +
                            shape_str(shape));
  Tensor out = new_op(std::move(shape), {x});
  std::memcpy(out.data(), x.data(), sizeof(real) * size_t(n));
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
    };
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "concat_channels: empty input");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int C = 0;
  for (const auto& x : xs) {
    check(x.ndim() == 4 && x.dim(0) == N && x.dim(2) == H && x.dim(3) == W,
          "concat_channels: incompatible shapes");
    C += x.dim(1);
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = {N, C, H, W};
  n->value.resize(size_t(n->numel()));
  bool rg = false;
  if (grad_enabled())
    for (const auto& x : xs) rg = rg || x.requires_grad();
  n->requires_grad = rg;
  if (rg)
    for (const auto& x : xs) n->parents.push_back(x.node());
  Tensor out(n);

  const int64_t hw = int64_t(H) * W;
  real* po = out.data();
  for (int b = 0; b < N; ++b) {
    int64_t coff = 0;
    for (const auto& x : xs) {
      const int ci = x.dim(1);
      std::memcpy(po + (int64_t(b) * C + coff) * hw, x.data() + int64_t(b) * ci * hw,
                  sizeof(real) * size_t(ci * hw));
      coff += ci;
    }
  }
  if (rg) {
    std::vector<NodePtr> parts;
    for (const auto& x : xs) parts.push_back(x.node());
    auto on = out.node();
    out.node()->backward_fn = [parts, on, N, C, hw]() {
      const real* g = on->grad.data();
      for (int b = 0; b < N; ++b) {
        int64_t coff = 0;
        for (const auto& p : parts) {
          const int ci = p->shape[1];
          if (p->requires_grad) {
            p->ensure_grad();
            real* gp = p->grad.data() + int64_t(b) * ci * hw;
            const real* gs = g + (int64_t(b) * C + coff) * hw;
            for (int64_t i = 0; i < ci * hw; ++i) gp[i] += gs[i];
          }
          coff += ci;
        }
      }
    };
  }
  return out;
}

Tensor index_select_n(const Tensor& x, const std::vector<int>& idx) {
  const int N = x.dim(0);
  std::vector<int> oshape = x.shape();
  oshape[0] = int(idx.size());
  Tensor out = new_op(std::move(oshape), {x});
  const int64_t per = x.numel() / N;
  real* po = out.data();
  const real* px = x.data();
  for (size_t k = 0; k < idx.size(); ++k) {
    check(idx[k] >= 0 && idx[k] < N, "index_select_n: index out of range");
    std::memcpy(po + k * per, px + int64_t(idx[k]) * per, sizeof(real) * size_t(per));
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, idx, per]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (size_t k = 0; k < idx.size(); ++k) {
        real* dst = gx + int64_t(idx[k]) * per;
        const real* src = g + k * per;
        for (int64_t i = 0; i < per; ++i) dst[i] += src[i];
      }
    };
  }
  return out;
}

// ---- dense / conv ----------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.ndim() == 2 && w.ndim() == 2, "linear: expects [N,Fin] x [Fout,Fin]");
  const int N = x.dim(0), fin = x.dim(1), fout = w.dim(0);
  check(w.dim(1) == fin, "linear: weight shape " + shape_str(w.shape()) +
                             " incompatible with input " + shape_str(x.shape()));
  const bool has_b = b.defined();
  if (has_b) check(b.ndim() == 1 && b.dim(0) == fout, "linear: bias shape");

  Tensor out = has_b ? new_op({N, fout}, {x, w, b}) : new_op({N, fout}, {x, w});
  {
    CMapRM X(x.data(), N, fin), W(w.data(), fout, fin);
    MapRM Y(out.data(), N, fout);
    Y.noalias() = X * W.transpose();
    if (has_b) {
      const real* pb = b.data();
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < fout; ++j) out.data()[i * fout + j] += pb[j];
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bn = has_b ? b.node() : nullptr;
    out.node()->backward_fn = [xn, wn, bn, on, N, fin, fout]() {
      CMapRM G(on->grad.data(), N, fout);
      if (xn->requires_grad) {
        xn->ensure_grad();
        MapRM GX(xn->grad.data(), N, fin);
        CMapRM W(wn->value.data(), fout, fin);
        GX.noalias() += G * W;
      }
      if (wn->requires_grad) {
        wn->ensure_grad();
        MapRM GW(wn->grad.data(), fout, fin);
        CMapRM X(xn->value.data(), N, fin);
        GW.noalias() += G.transpose() * X;
      }
      if (bn && bn->requires_grad) {
        bn->ensure_grad();
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < fout; ++j) bn->grad[j] += on->grad[i * fout + j];
      }
    };
  }
  return out;
}

namespace {

// im2col for one sample; cols is [C*kh*kw][Ho*Wo] row-major.
void im2col(const real* x, int C, int H, int W, int kh, int kw, int stride, int pad, int Ho,
            int Wo, real* cols) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        real* row = cols + ((int64_t(c) * kh + ky) * kw + kx) * (int64_t(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          real* dst = row + int64_t(oy) * Wo;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + Wo, real(0));
            continue;
          }
          const real* src = x + (int64_t(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < W) ? src[ix] : real(0);
          }
        }
      }
    }
  }
}

void col2im_add(const real* cols, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, real* gx) {
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const real* row = cols + ((int64_t(c) * kh + ky) * kw + kx) * (int64_t(Ho) * Wo);
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= H) continue;
          real* dst = gx + (int64_t(c) * H + iy) * W;
          const real* src = row + int64_t(oy) * Wo;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < W) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  check(x.ndim() == 4 && w.ndim() == 4, "conv2d: expects NCHW input and FCHW weight");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  check(w.dim(1) == C, "conv2d: weight channels " + std::to_string(w.dim(1)) +
                           " != input channels " + std::to_string(C));
  const int Ho = (H + 2 * pad - kh) / stride + 1;
  const int Wo = (W + 2 * pad - kw) / stride + 1;
  check(Ho >= 1 && Wo >= 1, "conv2d: output would be empty");
  const bool has_b = b.defined();
  if (has_b) check(b.ndim() == 1 && b.dim(0) == F, "conv2d: bias shape");

  Tensor out = has_b ? new_op({N, F, Ho, Wo}, {x, w, b}) : new_op({N, F, Ho, Wo}, {x, w});
  const int64_t K = int64_t(C) * kh * kw;
  const int64_t M = int64_t(Ho) * Wo;
  std::vector<real> cols(size_t(K * M));
  CMapRM Wm(w.data(), F, K);
  for (int n = 0; n < N; ++n) {
    im2col(x.data() + int64_t(n) * C * H * W, C, H, W, kh, kw, stride, pad, Ho, Wo,
           cols.data());
    CMapRM Cm(cols.data(), K, M);
    MapRM Ym(out.data() + int64_t(n) * F * M, F, M);
    Ym.noalias() = Wm * Cm;
    if (has_b) {
      const real* pb = b.data();
      real* py = out.data() + int64_t(n) * F * M;
      for (int f = 0; f < F; ++f) {
        const real bv = pb[f];
        for (int64_t i = 0; i < M; ++i) py[f * M + i] += bv;
      }
    }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), wn = w.node(), on = out.node();
    auto bn = has_b ? b.node() : nullptr;
    out.node()->backward_fn = [xn, wn, bn, on, N, C, H, W, F, kh, kw, stride, pad, Ho, Wo, K,
                               M]() {
      std::vector<real> cols(size_t(K * M));
      std::vector<real> dcols(size_t(K * M));
      CMapRM Wm(wn->value.data(), F, K);
      if (xn->requires_grad) xn->ensure_grad();
      if (wn->requires_grad) wn->ensure_grad();
      if (bn && bn->requires_grad) bn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        CMapRM Gm(on->grad.data() + int64_t(n) * F * M, F, M);
        if (wn->requires_grad) {
          im2col(xn->value.data() + int64_t(n) * C * H * W, C, H, W, kh, kw, stride, pad, Ho,
                 Wo, cols.data());
          MapRM GW(wn->grad.data(), F, K);
          CMapRM Cm(cols.data(), K, M);
          GW.noalias() += Gm * Cm.transpose();
        }
        if (xn->requires_grad) {
          MapRM DC(dcols.data(), K, M);
          DC.noalias() = Wm.transpose() * Gm;
          col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                     xn->grad.data() + int64_t(n) * C * H * W);
        }
        if (bn && bn->requires_grad) {
          const real* g = on->grad.data() + int64_t(n) * F * M;
          for (int f = 0; f < F; ++f) {
            double s = 0;
            for (int64_t i = 0; i < M; ++i) s += g[f * M + i];
            bn->grad[f] += real(s);
          }
        }
      }
    };
  }
  return out;
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, int groups,
                  real eps) {
  check(x.ndim() == 4, "group_norm: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(C % groups == 0, "group_norm: channels " + std::to_string(C) +
                             " not divisible by groups " + std::to_string(groups));
  check(gamma.numel() == C && beta.numel() == C, "group_norm: affine parameter shape");
  const int cg = C / groups;
  const int64_t hw = int64_t(H) * W;
  const int64_t m = int64_t(cg) * hw;

  Tensor out = new_op(x.shape(), {x, gamma, beta});
  std::vector<real> mean(size_t(N) * groups), istd(size_t(N) * groups);
  const real* px = x.data();
  const real* pg = gamma.data();
  const real* pb = beta.data();
  real* po = out.data();
  for (int n = 0; n < N; ++n) {
    for (int g = 0; g < groups; ++g) {
      const real* xg = px + (int64_t(n) * C + int64_t(g) * cg) * hw;
      double s = 0, s2 = 0;
      for (int64_t i = 0; i < m; ++i) {
        s += xg[i];
        s2 += double(xg[i]) * xg[i];
      }
      const double mu = s / double(m);
      const double var = std::max(0.0, s2 / double(m) - mu * mu);
      const real is = real(1.0 / std::sqrt(var + double(eps)));
      mean[n * groups + g] = real(mu);
      istd[n * groups + g] = is;
      for (int c = 0; c < cg; ++c) {
        const int ch = g * cg + c;
        const real* xi = px + (int64_t(n) * C + ch) * hw;
        real* oi = po + (int64_t(n) * C + ch) * hw;
        const real gm = pg[ch], bt = pb[ch], mu_r = real(mu);
        for (int64_t i = 0; i < hw; ++i) oi[i] = gm * (xi[i] - mu_r) * is + bt;
      }
    }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), gn = gamma.node(), btn = beta.node(), on = out.node();
    out.node()->backward_fn = [xn, gn, btn, on, mean = std::move(mean), istd = std::move(istd),
                               N, C, groups, cg, hw, m]() {
      const real* g = on->grad.data();
      const real* px = xn->value.data();
      const real* pg = gn->value.data();
      if (xn->requires_grad) xn->ensure_grad();
      if (gn->requires_grad) gn->ensure_grad();
      if (btn->requires_grad) btn->ensure_grad();
      for (int n = 0; n < N; ++n) {
        for (int gi = 0; gi < groups; ++gi) {
          const real mu = mean[n * groups + gi];
          const real is = istd[n * groups + gi];
          // reductions over the group
          double s1 = 0, s2 = 0;
          for (int c = 0; c < cg; ++c) {
            const int ch = gi * cg + c;
            const real* xi = px + (int64_t(n) * C + ch) * hw;
            const real* gy = g + (int64_t(n) * C + ch) * hw;
            const real gm = pg[ch];
            for (int64_t i = 0; i < hw; ++i) {
              const real xh = (xi[i] - mu) * is;
              s1 += double(gy[i]) * gm;
              s2 += double(gy[i]) * gm * xh;
            }
          }
          const real a1 = real(s1 / double(m));
          const real a2 = real(s2 / double(m));
          for (int c = 0; c < cg; ++c) {
            const int ch = gi * cg + c;
            const real* xi = px + (int64_t(n) * C + ch) * hw;
            const real* gy = g + (int64_t(n) * C + ch) * hw;
            const real gm = pg[ch];
            if (xn->requires_grad) {
              real* gx = xn->grad.data() + (int64_t(n) * C + ch) * hw;
              for (int64_t i = 0; i < hw; ++i) {
                const real xh = (xi[i] - mu) * is;
                gx[i] += is * (gy[i] * gm - a1 - xh * a2);
              }
            }
            if (gn->requires_grad || btn->requires_grad) {
              double dg = 0, db = 0;
              for (int64_t i = 0; i < hw; ++i) {
                const real xh = (xi[i] - mu) * is;
                dg += double(gy[i]) * xh;
                db += gy[i];
              }
              if (gn->requires_grad) gn->grad[ch] += real(dg);
              if (btn->requires_grad) btn->grad[ch] += real(db);
            }
          }
        }
      }
    };
  }
  return out;
}

// ---- resampling ------------------------------------------------------------

Tensor upsample_nearest2(const Tensor& x) {
  check(x.ndim() == 4, "upsample_nearest2: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = new_op({N, C, 2 * H, 2 * W}, {x});
  const real* px = x.data();
  real* po = out.data();
  for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
    const real* xi = px + nc * H * W;
    real* oi = po + nc * 4 * H * W;
    for (int y = 0; y < H; ++y) {
      real* r0 = oi + int64_t(2 * y) * 2 * W;
      real* r1 = r0 + 2 * W;
      for (int xcol = 0; xcol < W; ++xcol) {
        const real v = xi[y * W + xcol];
        r0[2 * xcol] = v;
        r0[2 * xcol + 1] = v;
        r1[2 * xcol] = v;
        r1[2 * xcol + 1] = v;
      }
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, N, C, H, W]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        const real* gi = g + nc * 4 * H * W;
        real* go = gx + nc * H * W;
        for (int y = 0; y < H; ++y) {
          const real* r0 = gi + int64_t(2 * y) * 2 * W;
          const real* r1 = r0 + 2 * W;
          for (int xcol = 0; xcol < W; ++xcol)
            go[y * W + xcol] += r0[2 * xcol] + r0[2 * xcol + 1] + r1[2 * xcol] + r1[2 * xcol + 1];
        }
      }
    };
  }
  return out;
}

namespace {
struct LerpAxis {
  std::vector<int> i0, i1;
  std::vector<real> f;
};
LerpAxis make_lerp(int in, int out) {
  LerpAxis a;
  a.i0.resize(out);
  a.i1.resize(out);
  a.f.resize(out);
  const double scale = double(in) / double(out);
  for (int o = 0; o < out; ++o) {
    double s = (o + 0.5) * scale - 0.5;
    if (s < 0) s = 0;
    if (s > in - 1) s = in - 1;
    int i0 = int(std::floor(s));
    if (i0 > in - 1) i0 = in - 1;
    a.i0[o] = i0;
    a.i1[o] = std::min(i0 + 1, in - 1);
    a.f[o] = real(s - i0);
  }
  return a;
}
}  // namespace

Tensor resize_bilinear(const Tensor& x, int oh, int ow) {
  check(x.ndim() == 4, "resize_bilinear: expects NCHW");
  check(oh >= 1 && ow >= 1, "resize_bilinear: non-positive output size");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = new_op({N, C, oh, ow}, {x});
  const LerpAxis ay = make_lerp(H, oh), ax = make_lerp(W, ow);
  const real* px = x.data();
  real* po = out.data();
  for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
    const real* xi = px + nc * H * W;
    real* oi = po + nc * int64_t(oh) * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const real* r0 = xi + int64_t(ay.i0[oy]) * W;
      const real* r1 = xi + int64_t(ay.i1[oy]) * W;
      const real fy = ay.f[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const real fx = ax.f[ox];
        const real v0 = r0[ax.i0[ox]] * (1 - fx) + r0[ax.i1[ox]] * fx;
        const real v1 = r1[ax.i0[ox]] * (1 - fx) + r1[ax.i1[ox]] * fx;
        oi[int64_t(oy) * ow + ox] = v0 * (1 - fy) + v1 * fy;
      }
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, ay, ax, N, C, H, W, oh, ow]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        real* gi = gx + nc * H * W;
        const real* go = g + nc * int64_t(oh) * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const real fy = ay.f[oy];
          real* r0 = gi + int64_t(ay.i0[oy]) * W;
          real* r1 = gi + int64_t(ay.i1[oy]) * W;
          for (int ox = 0; ox < ow; ++ox) {
            const real fx = ax.f[ox];
            const real gv = go[int64_t(oy) * ow + ox];
            r0[ax.i0[ox]] += gv * (1 - fy) * (1 - fx);
            r0[ax.i1[ox]] += gv * (1 - fy) * fx;
            r1[ax.i0[ox]] += gv * fy * (1 - fx);
            r1[ax.i1[ox]] += gv * fy * fx;
          }
        }
      }
    };
  }
  return out;
}

Tensor hflip(const Tensor& x) {
  check(x.ndim() == 4, "hflip: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor out = new_op(x.shape(), {x});
  const real* px = x.data();
  real* po = out.data();
  for (int64_t nch = 0; nch < int64_t(N) * C * H; ++nch) {
    const real* src = px + nch * W;
    real* dst = po + nch * W;
    for (int i = 0; i < W; ++i) dst[i] = src[W - 1 - i];
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, N, C, H, W]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nch = 0; nch < int64_t(N) * C * H; ++nch) {
        real* dst = gx + nch * W;
        const real* src = g + nch * W;
        for (int i = 0; i < W; ++i) dst[W - 1 - i] += src[i];
      }
    };
  }
  return out;
}

Tensor rot90k(const Tensor& x, int k) {
  check(x.ndim() == 4, "rot90k: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(H == W, "rot90k: requires square spatial dims");
  k = ((k % 4) + 4) % 4;
  Tensor out = new_op(x.shape(), {x});
  const real* px = x.data();
  real* po = out.data();
  const int S = H;
  // k=1 turns the content counter-clockwise on screen (np.rot90 sense), the
  // same direction as a +90° continuous rotation.
  auto src_index = [S, k](int oy, int ox, int& iy, int& ix) {
    switch (k) {
      case 0: iy = oy; ix = ox; break;
      case 1: iy = ox; ix = S - 1 - oy; break;
      case 2: iy = S - 1 - oy; ix = S - 1 - ox; break;
      default: iy = S - 1 - ox; ix = oy; break;
    }
  };
  for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
    const real* xi = px + nc * S * S;
    real* oi = po + nc * S * S;
    for (int oy = 0; oy < S; ++oy)
      for (int ox = 0; ox < S; ++ox) {
        int iy, ix;
        src_index(oy, ox, iy, ix);
        oi[oy * S + ox] = xi[iy * S + ix];
      }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, N, C, S, src_index]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        real* gi = gx + nc * S * S;
        const real* go = g + nc * S * S;
        for (int oy = 0; oy < S; ++oy)
          for (int ox = 0; ox < S; ++ox) {
            int iy, ix;
            src_index(oy, ox, iy, ix);
            gi[iy * S + ix] += go[oy * S + ox];
          }
      }
    };
  }
  return out;
}

Tensor warp_homography(const Tensor& x, const std::vector<std::array<double, 9>>& inv_maps,
                       bool bilinear) {
  check(x.ndim() == 4, "warp_homography: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(int(inv_maps.size()) == N, "warp_homography: one inverse map per sample");
  Tensor out = new_op(x.shape(), {x});
  const real* px = x.data();
  real* po = out.data();

  // Per output pixel: up to four source taps with bilinear weights, saved for
  // the backward scatter. Out-of-bounds taps read zero and carry no gradient.
  struct Tap {
    int32_t n, sy, sx;
    real w;
  };
  std::vector<std::vector<Tap>> taps;
  const bool want_grad = out.requires_grad() && bilinear;
  if (want_grad) taps.assign(size_t(N) * H * W, {});

  for (int n = 0; n < N; ++n) {
    const auto& Mv = inv_maps[n];
    for (int oy = 0; oy < H; ++oy) {
      for (int ox = 0; ox < W; ++ox) {
        const double d = Mv[6] * ox + Mv[7] * oy + Mv[8];
        const double sx = (Mv[0] * ox + Mv[1] * oy + Mv[2]) / d;
        const double sy = (Mv[3] * ox + Mv[4] * oy + Mv[5]) / d;
        const int64_t opix = int64_t(oy) * W + ox;
        const int64_t obase = int64_t(n) * C * H * W + opix;
        if (!bilinear) {
          const int ix = int(std::lround(sx));
          const int iy = int(std::lround(sy));
          const bool in = ix >= 0 && ix < W && iy >= 0 && iy < H;
          for (int c = 0; c < C; ++c)
            po[obase + int64_t(c) * H * W] =
                in ? px[(int64_t(n) * C + c) * H * W + int64_t(iy) * W + ix] : real(0);
          continue;
        }
        const int x0 = int(std::floor(sx));
        const int y0 = int(std::floor(sy));
        const real fx = real(sx - x0);
        const real fy = real(sy - y0);
        const int xs[2] = {x0, x0 + 1};
        const int ys[2] = {y0, y0 + 1};
        const real wx[2] = {1 - fx, fx};
        const real wy[2] = {1 - fy, fy};
        real acc_w[4];
        int acc_y[4], acc_x[4];
        int cnt = 0;
        for (int j = 0; j < 2; ++j)
          for (int i = 0; i < 2; ++i) {
            const real w = wy[j] * wx[i];
            if (w == 0) continue;
            if (ys[j] < 0 || ys[j] >= H || xs[i] < 0 || xs[i] >= W) continue;
            acc_y[cnt] = ys[j];
            acc_x[cnt] = xs[i];
            acc_w[cnt] = w;
            ++cnt;
          }
        for (int c = 0; c < C; ++c) {
          const real* xi = px + (int64_t(n) * C + c) * H * W;
          real v = 0;
          for (int t = 0; t < cnt; ++t) v += acc_w[t] * xi[int64_t(acc_y[t]) * W + acc_x[t]];
          po[obase + int64_t(c) * H * W] = v;
        }
        if (want_grad) {
          auto& tp = taps[size_t(n) * H * W + opix];
          tp.reserve(cnt);
          for (int t = 0; t < cnt; ++t)
            tp.push_back({int32_t(n), int32_t(acc_y[t]), int32_t(acc_x[t]), acc_w[t]});
        }
      }
    }
  }

  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    if (!bilinear) {
      // nearest mode is used for binary masks only; it carries no gradient
      out.node()->backward_fn = []() {};
    } else {
      out.node()->backward_fn = [xn, on, taps = std::move(taps), N, C, H, W]() {
        xn->ensure_grad();
        real* gx = xn->grad.data();
        const real* g = on->grad.data();
        const int64_t hw = int64_t(H) * W;
        for (int64_t pix = 0; pix < int64_t(N) * hw; ++pix) {
          for (const auto& t : taps[size_t(pix)]) {
            const int64_t src = int64_t(t.sy) * W + t.sx;
            const int64_t nb = (pix / hw) * C * hw;
            const int64_t op = pix % hw;
            for (int c = 0; c < C; ++c)
              gx[nb + int64_t(c) * hw + src] += t.w * g[nb + int64_t(c) * hw + op];
          }
        }
      };
    }
  }
  return out;
}

Tensor pad_reflect(const Tensor& x, int ph, int pw) {
  check(x.ndim() == 4, "pad_reflect: expects NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  check(ph >= 0 && pw >= 0, "pad_reflect: negative padding");
  check(ph < H && pw < W, "pad_reflect: padding must be smaller than the image");
  const int Ho = H + 2 * ph, Wo = W + 2 * pw;
  auto refl = [](int i, int n) {
    // reflect without repeating the border sample (..., 2, 1, 0, 1, 2, ...)
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
    return i;
  };
  std::vector<int> ym(Ho), xm(Wo);
  for (int y = 0; y < Ho; ++y) ym[y] = refl(y - ph, H);
  for (int xx = 0; xx < Wo; ++xx) xm[xx] = refl(xx - pw, W);

  Tensor out = new_op({N, C, Ho, Wo}, {x});
  const real* px = x.data();
  real* po = out.data();
  for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
    const real* xi = px + nc * H * W;
    real* oi = po + nc * int64_t(Ho) * Wo;
    for (int y = 0; y < Ho; ++y) {
      const real* src = xi + int64_t(ym[y]) * W;
      real* dst = oi + int64_t(y) * Wo;
      for (int xx = 0; xx < Wo; ++xx) dst[xx] = src[xm[xx]];
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, ym, xm, N, C, H, W, Ho, Wo]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        real* gi = gx + nc * H * W;
        const real* go = g + nc * int64_t(Ho) * Wo;
        for (int y = 0; y < Ho; ++y) {
          real* dst = gi + int64_t(ym[y]) * W;
          const real* src = go + int64_t(y) * Wo;
          for (int xx = 0; xx < Wo; ++xx) dst[xm[xx]] += src[xx];
        }
      }
    };
  }
  return out;
}

Tensor conv1d_axis(const Tensor& x, const std::vector<real>& kernel, int axis) {
  check(x.ndim() == 4, "conv1d_axis: expects NCHW");
  check(axis == 2 || axis == 3, "conv1d_axis: axis must be 2 (height) or 3 (width)");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int K = int(kernel.size());
  check(K >= 1, "conv1d_axis: empty kernel");
  const int Ho = axis == 2 ? H - K + 1 : H;
  const int Wo = axis == 3 ? W - K + 1 : W;
  check(Ho >= 1 && Wo >= 1, "conv1d_axis: kernel larger than input");

  Tensor out = new_op({N, C, Ho, Wo}, {x});
  const real* px = x.data();
  real* po = out.data();
  for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
    const real* xi = px + nc * H * W;
    real* oi = po + nc * int64_t(Ho) * Wo;
    if (axis == 3) {
      for (int y = 0; y < Ho; ++y) {
        const real* row = xi + int64_t(y) * W;
        real* orow = oi + int64_t(y) * Wo;
        for (int xx = 0; xx < Wo; ++xx) {
          real s = 0;
          for (int k = 0; k < K; ++k) s += kernel[k] * row[xx + k];
          orow[xx] = s;
        }
      }
    } else {
      for (int y = 0; y < Ho; ++y) {
        real* orow = oi + int64_t(y) * Wo;
        for (int xx = 0; xx < Wo; ++xx) {
          real s = 0;
          for (int k = 0; k < K; ++k) s += kernel[k] * xi[int64_t(y + k) * W + xx];
          orow[xx] = s;
        }
      }
    }
  }
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, kernel, axis, N, C, H, W, Ho, Wo, K]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t nc = 0; nc < int64_t(N) * C; ++nc) {
        real* gi = gx + nc * H * W;
        const real* go = g + nc * int64_t(Ho) * Wo;
        if (axis == 3) {
          for (int y = 0; y < Ho; ++y) {
            real* row = gi + int64_t(y) * W;
            const real* grow = go + int64_t(y) * Wo;
            for (int xx = 0; xx < Wo; ++xx)
              for (int k = 0; k < K; ++k) row[xx + k] += kernel[k] * grow[xx];
          }
        } else {
          for (int y = 0; y < Ho; ++y) {
            const real* grow = go + int64_t(y) * Wo;
            for (int xx = 0; xx < Wo; ++xx)
              for (int k = 0; k < K; ++k) gi[int64_t(y + k) * W + xx] += kernel[k] * grow[xx];
          }
        }
      }
    };
  }
  return out;
}

// ---- reductions / losses ---------------------------------------------------

Tensor mean_all(const Tensor& x) {
  Tensor out = new_op({1}, {x});
  const int64_t n = x.numel();
  double s = 0;
  const real* px = x.data();
  for (int64_t i = 0; i < n; ++i) s += px[i];
  out.data()[0] = real(s / double(n));
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    out.node()->backward_fn = [xn, on, n]() {
      xn->ensure_grad();
      const real g = on->grad[0] / real(n);
      real* gx = xn->grad.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g;
    };
  }
  return out;
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
  check(same_shape(a, b), "mse_loss: shape mismatch " + shape_str(a.shape()) + " vs " +
                              shape_str(b.shape()));
  Tensor out = new_op({1}, {a, b});
  const int64_t n = a.numel();
  const real* pa = a.data();
  const real* pb = b.data();
  double s = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = double(pa[i]) - double(pb[i]);
    s += d * d;
  }
  out.data()[0] = real(s / double(n));
  if (out.requires_grad()) {
    auto an = a.node(), bn = b.node(), on = out.node();
    out.node()->backward_fn = [an, bn, on, n]() {
      const real g = on->grad[0] * real(2) / real(n);
      const real* pa = an->value.data();
      const real* pb = bn->value.data();
      if (an->requires_grad) {
        an->ensure_grad();
        real* ga = an->grad.data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g * (pa[i] - pb[i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        real* gb = bn->grad.data();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g * (pa[i] - pb[i]);
      }
    };
  }
  return out;
}

// ---- gradient control ------------------------------------------------------

Tensor straight_through(const Tensor& x, std::vector<real> value) {
  check(int64_t(value.size()) == x.numel(), "straight_through: value size mismatch");
  Tensor out = new_op(x.shape(), {x});
  std::copy(value.begin(), value.end(), out.data());
  if (out.requires_grad()) {
    auto xn = x.node(), on = out.node();
    const int64_t n = x.numel();
    out.node()->backward_fn = [xn, on, n]() {
      xn->ensure_grad();
      real* gx = xn->grad.data();
      const real* g = on->grad.data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
    };
  }
  return out;
}

}  // namespace maskmark
