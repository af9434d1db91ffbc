#pragma once

// Plain-loop reference implementations. Nothing here calls into the library's
// kernels; only raw data() spans are read.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ssattn/attention.hpp"
#include "ssattn/rng.hpp"
#include "ssattn/tensor.hpp"

namespace oracle {

using ssattn::Tensor;

inline std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Tensor random_tensor(ssattn::Shape shape, ssattn::Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ssattn::numel_of(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

// Zero-padded, stride 1, same-size convolution.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& k, std::size_t cout, std::size_t ks,
                                  const std::vector<double>& bias) {
  std::vector<double> out(cout * h * w, 0.0);
  const long r = static_cast<long>(ks / 2);
  for (std::size_t o = 0; o < cout; ++o)
    for (long y = 0; y < static_cast<long>(h); ++y)
      for (long xx = 0; xx < static_cast<long>(w); ++xx) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < cin; ++c)
          for (long dy = -r; dy <= r; ++dy)
            for (long dx = -r; dx <= r; ++dx) {
              const long yy = y + dy, xs = xx + dx;
              if (yy < 0 || xs < 0 || yy >= static_cast<long>(h) || xs >= static_cast<long>(w)) continue;
              s += k[((o * cin + c) * ks + (dy + r)) * ks + (dx + r)] * x[(c * h + yy) * w + xs];
            }
        out[(o * h + y) * w + xx] = s;
      }
  return out;
}

// y = W x + b on one token.
inline std::vector<double> linear(const ssattn::nn::Linear& l, const std::vector<double>& x) {
  const std::size_t out = l.weight.dim(0), in = l.weight.dim(1);
  std::vector<double> y(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = l.bias.data()[o];
    for (std::size_t i = 0; i < in; ++i) s += l.weight.data()[o * in + i] * x[i];
    y[o] = s;
  }
  return y;
}

// Multi-head windowed self-attention over x [C,H,W], Swin-style relative
// position bias, optional per-window multiplicative modulation of the scaled
// logits (mod(window, i, j)). Returns proj(attention), no residual.
inline Tensor window_attention(const Tensor& x, const ssattn::attention::AttentionWeights& wts, std::size_t heads,
                               std::size_t ws,
                               const std::function<double(std::size_t, std::size_t, std::size_t)>& mod = {}) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), d = c / heads, n = ws * ws;
  const std::size_t side = 2 * ws - 1;
  const auto xd = x.data();
  std::vector<double> out(c * h * w, 0.0);
  std::size_t win = 0;
  for (std::size_t wy = 0; wy < h / ws; ++wy) {
    for (std::size_t wx = 0; wx < w / ws; ++wx, ++win) {
      std::vector<std::vector<double>> q(n), k(n), v(n);
      auto pix = [&](std::size_t t) { return std::pair{wy * ws + t / ws, wx * ws + t % ws}; };
      for (std::size_t t = 0; t < n; ++t) {
        const auto [py, px] = pix(t);
        std::vector<double> tok(c);
        for (std::size_t ch = 0; ch < c; ++ch) tok[ch] = xd[(ch * h + py) * w + px];
        q[t] = linear(wts.q, tok);
        k[t] = linear(wts.k, tok);
        v[t] = linear(wts.v, tok);
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> o(c, 0.0);
        for (std::size_t hd = 0; hd < heads; ++hd) {
          std::vector<double> logit(n);
          for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t e = 0; e < d; ++e) s += q[i][hd * d + e] * k[j][hd * d + e];
            s /= std::sqrt(static_cast<double>(d));
            if (mod) s *= mod(win, i, j);
            const std::size_t dy = i / ws + ws - 1 - j / ws, dx = i % ws + ws - 1 - j % ws;
            s += wts.position_table.data()[(dy * side + dx) * heads + hd];
            logit[j] = s;
          }
          const double mx = *std::max_element(logit.begin(), logit.end());
          double z = 0.0;
          for (auto& l : logit) z += (l = std::exp(l - mx));
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t e = 0; e < d; ++e) o[hd * d + e] += logit[j] / z * v[j][hd * d + e];
        }
        const auto y = linear(wts.proj, o);
        const auto [py, px] = pix(i);
        for (std::size_t ch = 0; ch < c; ++ch) out[(ch * h + py) * w + px] = y[ch];
      }
    }
  }
  return Tensor({c, h, w}, std::move(out));
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = s / static_cast<double>(a.size());
  return mse == 0.0 ? 100.0 : std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

// Direct 2-D Gaussian-window SSIM over the valid region.
inline double ssim(const std::vector<double>& a, const std::vector<double>& b, std::size_t h, std::size_t w) {
  const int r = 5;
  double g[11][11], gs = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) gs += g[i + r][j + r] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y = r; y + r < h; ++y) {
    for (std::size_t x = r; x + r < w; ++x) {
      double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const double wt = g[i + r][j + r] / gs;
          const double va = a[(y + i) * w + x + j], vb = b[(y + i) * w + x + j];
          ma += wt * va;
          mb += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// Pivoted Cholesky on a symmetric n x n matrix. False if a pivot below
// -tol appears before the remaining diagonal is exhausted.
inline bool psd_by_pivoted_cholesky(std::vector<double> a, std::size_t n, double tol) {
  std::vector<bool> done(n, false);
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t p = n;
    double best = -INFINITY;
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i] && a[i * n + i] > best) best = a[(p = i) * n + i];
    if (best < -tol) return false;
    if (best <= tol) {
      for (std::size_t i = 0; i < n; ++i)
        if (!done[i] && a[i * n + i] < -tol) return false;
      return true;
    }
    done[p] = true;
    const double piv = std::sqrt(best);
    std::vector<double> l(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      if (!done[i]) l[i] = a[i * n + p] / piv;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (!done[i] && !done[j]) a[i * n + j] -= l[i] * l[j];
  }
  return true;
}

inline double golden_section_min(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi, c = b - g * (b - a), d = a + g * (b - a);
  while (b - a > tol) {
    if (f(c) < f(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - g * (b - a);
    d = a + g * (b - a);
  }
  return 0.5 * (a + b);
}

}  // namespace oracle
