#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mtlab/tensor.hpp"

// Forward/backward kernels for the graph primitives. All loops are plain
// row-major C++; conv goes through im2col so the hot loop is a rank-1 GEMM
// update the compiler can vectorize.

namespace mtlab::kernels {

// --------------------------------------------------------------- conv2d ---

struct ConvDims {
  int64_t cin, h, w;      // input
  int64_t cout, kh, kw;   // kernel
  int64_t ho, wo;         // output
  int stride, pad;
};

inline ConvDims conv_dims(const Shape& x, const Shape& k, int stride, int pad) {
  ConvDims d{x[0], x[1], x[2], k[0], k[2], k[3], 0, 0, stride, pad};
  d.ho = (d.h + 2 * pad - d.kh) / stride + 1;
  d.wo = (d.w + 2 * pad - d.kw) / stride + 1;
  return d;
}

template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
  const int64_t plane = d.ho * d.wo;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        T* dst = col + ((ci * d.kh + ky) * d.kw + kx) * plane;
        for (int64_t oy = 0; oy < d.ho; ++oy) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) {
            std::fill(dst, dst + d.wo, T(0));
            dst += d.wo;
            continue;
          }
          const T* src = x + (ci * d.h + iy) * d.w;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            *dst++ = (ix >= 0 && ix < d.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
  const int64_t plane = d.ho * d.wo;
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        const T* src = col + ((ci * d.kh + ky) * d.kw + kx) * plane;
        for (int64_t oy = 0; oy < d.ho; ++oy, src += d.wo) {
          const int64_t iy = oy * d.stride - d.pad + ky;
          if (iy < 0 || iy >= d.h) continue;
          T* dst = dx + (ci * d.h + iy) * d.w;
          for (int64_t ox = 0; ox < d.wo; ++ox) {
            const int64_t ix = ox * d.stride - d.pad + kx;
            if (ix >= 0 && ix < d.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void conv2d_forward(const T* x, const T* k, const T* b, T* out, const ConvDims& d,
                    std::vector<T>& col_scratch) {
  const int64_t q = d.cin * d.kh * d.kw;
  const int64_t plane = d.ho * d.wo;
  col_scratch.resize(static_cast<size_t>(q * plane));
  im2col(x, d, col_scratch.data());
  for (int64_t co = 0; co < d.cout; ++co) {
    T* o = out + co * plane;
    std::fill(o, o + plane, b[co]);
    const T* krow = k + co * q;
    for (int64_t qi = 0; qi < q; ++qi) {
      const T kv = krow[qi];
      if (kv == T(0)) continue;
      const T* c = col_scratch.data() + qi * plane;
      for (int64_t p = 0; p < plane; ++p) o[p] += kv * c[p];
    }
  }
}

/// Accumulates into dx, dk, db (callers pass zeroed or running buffers).
template <typename T>
void conv2d_backward(const T* x, const T* k, const T* gout, T* dx, T* dk, T* db,
                     const ConvDims& d, std::vector<T>& col_scratch, std::vector<T>& dcol_scratch) {
  const int64_t q = d.cin * d.kh * d.kw;
  const int64_t plane = d.ho * d.wo;
  col_scratch.resize(static_cast<size_t>(q * plane));
  im2col(x, d, col_scratch.data());

  // dK[co][qi] += sum_p gout[co][p] * col[qi][p];  db[co] += sum_p gout[co][p]
  for (int64_t co = 0; co < d.cout; ++co) {
    const T* g = gout + co * plane;
    T bacc = T(0);
    for (int64_t p = 0; p < plane; ++p) bacc += g[p];
    db[co] += bacc;
    T* krow = dk + co * q;
    for (int64_t qi = 0; qi < q; ++qi) {
      const T* c = col_scratch.data() + qi * plane;
      T acc = T(0);
      for (int64_t p = 0; p < plane; ++p) acc += g[p] * c[p];
      krow[qi] += acc;
    }
  }

  // dcol[qi][p] = sum_co K[co][qi] * gout[co][p], then scatter back to dx.
  dcol_scratch.assign(static_cast<size_t>(q * plane), T(0));
  for (int64_t co = 0; co < d.cout; ++co) {
    const T* g = gout + co * plane;
    const T* krow = k + co * q;
    for (int64_t qi = 0; qi < q; ++qi) {
      const T kv = krow[qi];
      if (kv == T(0)) continue;
      T* c = dcol_scratch.data() + qi * plane;
      for (int64_t p = 0; p < plane; ++p) c[p] += kv * g[p];
    }
  }
  col2im_add(dcol_scratch.data(), d, dx);
}

// ------------------------------------------------------------- max pool ---

/// argmax_out records the flat input index per output element (first in
/// row-major window order wins ties).
template <typename T>
void max_pool_forward(const T* x, int64_t c, int64_t h, int64_t w, T* out, int32_t* argmax_out) {
  const int64_t ho = h / 2, wo = w / 2;
  for (int64_t ci = 0; ci < c; ++ci) {
    const T* plane = x + ci * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      for (int64_t ox = 0; ox < wo; ++ox) {
        const int64_t base = (2 * oy) * w + 2 * ox;
        int64_t best = base;
        T bv = plane[base];
        const int64_t cands[3] = {base + 1, base + w, base + w + 1};
        for (int64_t cand : cands) {
          if (plane[cand] > bv) {
            bv = plane[cand];
            best = cand;
          }
        }
        const int64_t oidx = (ci * ho + oy) * wo + ox;
        out[oidx] = bv;
        argmax_out[oidx] = static_cast<int32_t>(ci * h * w + best);
      }
    }
  }
}

template <typename T>
void max_pool_backward(const T* gout, const int32_t* argmax, int64_t n_out, T* dx) {
  for (int64_t i = 0; i < n_out; ++i) dx[argmax[i]] += gout[i];
}

// ------------------------------------------------------ bilinear resize ---

struct LerpTap {
  int64_t i0, i1;
  double w1;  // weight of i1; i0 takes (1 - w1)
};

/// align_corners=false source mapping: src = (dst + 0.5)/f - 0.5, clamped.
inline std::vector<LerpTap> upsample_taps(int64_t in_size, int factor) {
  std::vector<LerpTap> taps(static_cast<size_t>(in_size * factor));
  for (int64_t o = 0; o < in_size * factor; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    if (src > static_cast<double>(in_size - 1)) src = static_cast<double>(in_size - 1);
    const int64_t i0 = static_cast<int64_t>(std::floor(src));
    const int64_t i1 = std::min(i0 + 1, in_size - 1);
    taps[static_cast<size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

template <typename T>
void bilinear_up_forward(const T* x, int64_t c, int64_t h, int64_t w, int factor, T* out) {
  const auto ty = upsample_taps(h, factor);
  const auto tx = upsample_taps(w, factor);
  const int64_t ho = h * factor, wo = w * factor;
  for (int64_t ci = 0; ci < c; ++ci) {
    const T* plane = x + ci * h * w;
    T* oplane = out + ci * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const LerpTap& ry = ty[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < wo; ++ox) {
        const LerpTap& rx = tx[static_cast<size_t>(ox)];
        const double v00 = static_cast<double>(plane[ry.i0 * w + rx.i0]);
        const double v01 = static_cast<double>(plane[ry.i0 * w + rx.i1]);
        const double v10 = static_cast<double>(plane[ry.i1 * w + rx.i0]);
        const double v11 = static_cast<double>(plane[ry.i1 * w + rx.i1]);
        const double top = v00 + (v01 - v00) * rx.w1;
        const double bot = v10 + (v11 - v10) * rx.w1;
        oplane[oy * wo + ox] = static_cast<T>(top + (bot - top) * ry.w1);
      }
    }
  }
}

template <typename T>
void bilinear_up_backward(const T* gout, int64_t c, int64_t h, int64_t w, int factor, T* dx) {
  const auto ty = upsample_taps(h, factor);
  const auto tx = upsample_taps(w, factor);
  const int64_t ho = h * factor, wo = w * factor;
  for (int64_t ci = 0; ci < c; ++ci) {
    const T* gplane = gout + ci * ho * wo;
    T* dplane = dx + ci * h * w;
    for (int64_t oy = 0; oy < ho; ++oy) {
      const LerpTap& ry = ty[static_cast<size_t>(oy)];
      for (int64_t ox = 0; ox < wo; ++ox) {
        const LerpTap& rx = tx[static_cast<size_t>(ox)];
        const double g = static_cast<double>(gplane[oy * wo + ox]);
        dplane[ry.i0 * w + rx.i0] += static_cast<T>(g * (1 - ry.w1) * (1 - rx.w1));
        dplane[ry.i0 * w + rx.i1] += static_cast<T>(g * (1 - ry.w1) * rx.w1);
        dplane[ry.i1 * w + rx.i0] += static_cast<T>(g * ry.w1 * (1 - rx.w1));
        dplane[ry.i1 * w + rx.i1] += static_cast<T>(g * ry.w1 * rx.w1);
      }
    }
  }
}

// --------------------------------------------------------------- softmax ---

template <typename T>
void softmax_channels_forward(const T* x, int64_t c, int64_t hw, T* out) {
  for (int64_t p = 0; p < hw; ++p) {
    T mx = x[p];
    for (int64_t ci = 1; ci < c; ++ci) mx = std::max(mx, x[ci * hw + p]);
    double denom = 0;
    for (int64_t ci = 0; ci < c; ++ci) denom += std::exp(static_cast<double>(x[ci * hw + p] - mx));
    for (int64_t ci = 0; ci < c; ++ci)
      out[ci * hw + p] = static_cast<T>(std::exp(static_cast<double>(x[ci * hw + p] - mx)) / denom);
  }
}

/// dL/dx_c = s_c * (g_c - sum_k g_k s_k), per pixel.
template <typename T>
void softmax_channels_backward(const T* s, const T* gout, int64_t c, int64_t hw, T* dx) {
  for (int64_t p = 0; p < hw; ++p) {
    double dot = 0;
    for (int64_t ci = 0; ci < c; ++ci)
      dot += static_cast<double>(gout[ci * hw + p]) * static_cast<double>(s[ci * hw + p]);
    for (int64_t ci = 0; ci < c; ++ci)
      dx[ci * hw + p] += static_cast<T>(static_cast<double>(s[ci * hw + p]) *
                                        (static_cast<double>(gout[ci * hw + p]) - dot));
  }
}

// ----------------------------------------------------------- fused losses ---

/// Mean over non-ignored pixels of -log softmax(logits)[target].
/// Returns the count of non-ignored pixels through n_valid.
template <typename T>
T softmax_xent_forward(const T* logits, const T* target, int64_t c, int64_t hw, int ignore_id,
                       int64_t* n_valid) {
  double total = 0;
  int64_t n = 0;
  for (int64_t p = 0; p < hw; ++p) {
    const double tid_f = static_cast<double>(target[p]);
    const int64_t tid = static_cast<int64_t>(std::llround(tid_f));
    if (ignore_id >= 0 && tid == ignore_id) continue;
    if (tid < 0 || tid >= c || tid_f != static_cast<double>(tid))
      throw std::invalid_argument("softmax_cross_entropy: target id " + std::to_string(tid_f) +
                                  " out of range for " + std::to_string(c) + " classes");
    T mx = logits[p];
    for (int64_t ci = 1; ci < c; ++ci) mx = std::max(mx, logits[ci * hw + p]);
    double denom = 0;
    for (int64_t ci = 0; ci < c; ++ci) denom += std::exp(static_cast<double>(logits[ci * hw + p] - mx));
    total += std::log(denom) + static_cast<double>(mx) - static_cast<double>(logits[tid * hw + p]);
    ++n;
  }
  *n_valid = n;
  if (n == 0) return T(0);
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
void softmax_xent_backward(const T* logits, const T* target, int64_t c, int64_t hw, int ignore_id,
                           int64_t n_valid, T gout, T* dlogits) {
  if (n_valid == 0) return;
  const double scale = static_cast<double>(gout) / static_cast<double>(n_valid);
  for (int64_t p = 0; p < hw; ++p) {
    const int64_t tid = static_cast<int64_t>(std::llround(static_cast<double>(target[p])));
    if (ignore_id >= 0 && tid == ignore_id) continue;
    T mx = logits[p];
    for (int64_t ci = 1; ci < c; ++ci) mx = std::max(mx, logits[ci * hw + p]);
    double denom = 0;
    for (int64_t ci = 0; ci < c; ++ci) denom += std::exp(static_cast<double>(logits[ci * hw + p] - mx));
    for (int64_t ci = 0; ci < c; ++ci) {
      const double s = std::exp(static_cast<double>(logits[ci * hw + p] - mx)) / denom;
      dlogits[ci * hw + p] += static_cast<T>(scale * (s - (ci == tid ? 1.0 : 0.0)));
    }
  }
}

/// Mean over elements of 0.5 e^2 (|e| <= delta) else delta(|e| - 0.5 delta).
template <typename T>
T huber_mean_forward(const T* pred, const T* target, int64_t n, double delta) {
  double total = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double a = std::abs(e);
    total += (a <= delta) ? 0.5 * e * e : delta * (a - 0.5 * delta);
  }
  return static_cast<T>(total / static_cast<double>(n));
}

template <typename T>
void huber_mean_backward(const T* pred, const T* target, int64_t n, double delta, T gout, T* dpred,
                         T* dtarget) {
  const double scale = static_cast<double>(gout) / static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    const double d = scale * std::clamp(e, -delta, delta);
    dpred[i] += static_cast<T>(d);
    if (dtarget) dtarget[i] -= static_cast<T>(d);
  }
}

}  // namespace mtlab::kernels
