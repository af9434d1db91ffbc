#include <algorithm>
#include <cmath>
#include <memory>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"
#include "kernels.hpp"

namespace ssattn {

namespace {

// Coordinates this close to a pixel center snap onto it, which keeps
// identity grids exact under the normalize/denormalize round trip.
constexpr double kSnap = 1e-10;

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (x.rank() != 3 || w.rank() != 4) {
    throw ShapeError("conv2d expects x [C,H,W] and w [Co,Ci,kh,kw]");
  }
  const std::size_t ci = x.dim(0), H = x.dim(1), W = x.dim(2);
  const std::size_t co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci) throw ShapeError("conv2d channel mismatch " + to_string(x.shape()) + " vs " + to_string(w.shape()));
  if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("conv2d kernel extents must be odd");
  if (bias.defined() && bias.numel() != co) throw ShapeError("conv2d bias must have C_out entries");
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const auto in = x.data();
  const auto wt = w.data();
  std::vector<double> out(co * H * W, 0.0);
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t o = 0; o < co; ++o) std::fill_n(out.data() + o * H * W, H * W, bv[o]);
  }
  const long LH = static_cast<long>(H), LW = static_cast<long>(W);
  for (std::size_t o = 0; o < co; ++o) {
    double* dst = out.data() + o * H * W;
    for (std::size_t c = 0; c < ci; ++c) {
      const double* src = in.data() + c * H * W;
      for (std::size_t ky = 0; ky < kh; ++ky) {
        const long dy = static_cast<long>(ky) - ph;
        for (std::size_t kx = 0; kx < kw; ++kx) {
          const double wv = wt[((o * ci + c) * kh + ky) * kw + kx];
          const long dx = static_cast<long>(kx) - pw;
          const long x0 = std::max(0L, -dx), x1 = std::min(LW, LW - dx);
          const long y0 = std::max(0L, -dy), y1 = std::min(LH, LH - dy);
          for (long y = y0; y < y1; ++y) {
            double* drow = dst + y * LW;
            const double* srow = src + (y + dy) * LW + dx;
            for (long xx = x0; xx < x1; ++xx) drow[xx] += wv * srow[xx];
          }
        }
      }
    }
  }
  return Tensor::make_result(
      "conv2d", {co, H, W}, std::move(out), {&x, &w, &bias},
      [ci, co, LH, LW, kh, kw, ph, pw](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw_ = *self.parents[1];
        detail::Node* pb = self.parents[2].get();
        const auto& g = self.grad;
        const std::size_t plane = static_cast<std::size_t>(LH * LW);
        if (px.requires_grad) px.ensure_grad();
        if (pw_.requires_grad) pw_.ensure_grad();
        if (pb && pb->requires_grad) {
          pb->ensure_grad();
          for (std::size_t o = 0; o < co; ++o) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += g[o * plane + i];
            pb->grad[o] += s;
          }
        }
        for (std::size_t o = 0; o < co; ++o) {
          const double* gp = g.data() + o * plane;
          for (std::size_t c = 0; c < ci; ++c) {
            const double* src = px.data.data() + c * plane;
            for (std::size_t ky = 0; ky < kh; ++ky) {
              const long dy = static_cast<long>(ky) - ph;
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const std::size_t wi = ((o * ci + c) * kh + ky) * kw + kx;
                const long dx = static_cast<long>(kx) - pw;
                const long x0 = std::max(0L, -dx), x1 = std::min(LW, LW - dx);
                const long y0 = std::max(0L, -dy), y1 = std::min(LH, LH - dy);
                if (pw_.requires_grad) {
                  double s = 0.0;
                  const auto len = static_cast<std::size_t>(x1 - x0);
                  for (long y = y0; y < y1; ++y) s += detail::dot(gp + y * LW + x0, src + (y + dy) * LW + dx + x0, len);
                  pw_.grad[wi] += s;
                }
                if (px.requires_grad) {
                  const double wv = pw_.data[wi];
                  double* gsrc = px.grad.data() + c * plane;
                  for (long y = y0; y < y1; ++y) {
                    const double* grow = gp + y * LW;
                    double* drow = gsrc + (y + dy) * LW + dx;
                    for (long xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
                  }
                }
              }
            }
          }
        }
      });
}

Tensor global_avgpool(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("global_avgpool expects [C,H,W]");
  const std::size_t c = x.dim(0), plane = x.dim(1) * x.dim(2);
  const auto in = x.data();
  std::vector<double> out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += in[ch * plane + i];
    out[ch] = s / static_cast<double>(plane);
  }
  return Tensor::make_result("global_avgpool", {c, 1, 1}, std::move(out), {&x},
                             [c, plane](detail::Node& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                 const double g = self.grad[ch] / static_cast<double>(plane);
                                 for (std::size_t i = 0; i < plane; ++i) p.grad[ch * plane + i] += g;
                               }
                             });
}

Tensor avg_pool2(const Tensor& x) {
  if (x.rank() != 3) throw ShapeError("avg_pool2 expects [C,H,W]");
  const std::size_t c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (H % 2 || W % 2) throw ShapeError("avg_pool2 needs even extents, got " + to_string(x.shape()));
  const std::size_t oh = H / 2, ow = W / 2;
  const auto in = x.data();
  std::vector<double> out(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const double* s = in.data() + (ch * H + 2 * y) * W + 2 * xx;
        out[(ch * oh + y) * ow + xx] = 0.25 * (s[0] + s[1] + s[W] + s[W + 1]);
      }
    }
  }
  return Tensor::make_result("avg_pool2", {c, oh, ow}, std::move(out), {&x},
                             [c, H, W, oh, ow](detail::Node& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               for (std::size_t ch = 0; ch < c; ++ch) {
                                 for (std::size_t y = 0; y < oh; ++y) {
                                   for (std::size_t xx = 0; xx < ow; ++xx) {
                                     const double g = 0.25 * self.grad[(ch * oh + y) * ow + xx];
                                     double* d = p.grad.data() + (ch * H + 2 * y) * W + 2 * xx;
                                     d[0] += g;
                                     d[1] += g;
                                     d[W] += g;
                                     d[W + 1] += g;
                                   }
                                 }
                               }
                             });
}

namespace {

// Pixel-space sampling position along one axis with border clamp.
struct AxisSample {
  std::size_t i0, i1;
  double t;
  double dpos;  // d(pixel position)/d(normalized coordinate); 0 when clamped
};

AxisSample axis_sample(double norm, std::size_t n) {
  if (n == 1) return {0, 0, 0.0, 0.0};
  const double half = 0.5 * static_cast<double>(n - 1);
  double pos = (norm + 1.0) * half;
  double dpos = half;
  const double hi = static_cast<double>(n - 1);
  if (pos <= 0.0) {
    dpos = pos < 0.0 ? 0.0 : dpos;
    pos = 0.0;
  } else if (pos >= hi) {
    dpos = pos > hi ? 0.0 : dpos;
    pos = hi;
  }
  const double r = std::round(pos);
  if (std::abs(pos - r) < kSnap) pos = r;
  auto i0 = static_cast<std::size_t>(std::floor(pos));
  if (i0 >= n - 1) i0 = n - 2;
  return {i0, i0 + 1, pos - static_cast<double>(i0), dpos};
}

}  // namespace

Tensor grid_sample_grouped(const Tensor& x, const Tensor& coords) {
  if (x.rank() != 4) throw ShapeError("grid_sample_grouped expects x [G,C,H,W]");
  const std::size_t G = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto& cs = coords.shape();
  if (cs.size() < 2 || cs.back() != 2 || cs[0] != G) {
    throw ShapeError("grid_sample coords must be [G, ..., 2], got " + to_string(cs));
  }
  const auto cd = coords.data();
  for (double v : cd) {
    if (std::isnan(v)) throw DomainError("grid_sample: NaN coordinate");
  }
  const std::size_t P = coords.numel() / (2 * G);
  const auto in = x.data();
  std::vector<double> out(G * C * P);
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t p = 0; p < P; ++p) {
      const auto sx = axis_sample(cd[(g * P + p) * 2], W);
      const auto sy = axis_sample(cd[(g * P + p) * 2 + 1], H);
      for (std::size_t c = 0; c < C; ++c) {
        const double* img = in.data() + (g * C + c) * H * W;
        const double v00 = img[sy.i0 * W + sx.i0];
        double value = v00;
        if (W > 1 && H > 1) {
          const double v01 = img[sy.i0 * W + sx.i1];
          const double v10 = img[sy.i1 * W + sx.i0];
          const double v11 = img[sy.i1 * W + sx.i1];
          value = (1 - sx.t) * (1 - sy.t) * v00 + sx.t * (1 - sy.t) * v01 + (1 - sx.t) * sy.t * v10 +
                  sx.t * sy.t * v11;
        } else if (W > 1) {
          value = (1 - sx.t) * v00 + sx.t * img[sx.i1];
        } else if (H > 1) {
          value = (1 - sy.t) * v00 + sy.t * img[sy.i1 * W];
        }
        out[(g * C + c) * P + p] = value;
      }
    }
  }
  Shape out_shape{G, C};
  out_shape.insert(out_shape.end(), cs.begin() + 1, cs.end() - 1);
  return Tensor::make_result(
      "grid_sample", std::move(out_shape), std::move(out), {&x, &coords},
      [G, C, H, W, P](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pc = *self.parents[1];
        if (px.requires_grad) px.ensure_grad();
        if (pc.requires_grad) pc.ensure_grad();
        const auto& cd = pc.data;
        for (std::size_t g = 0; g < G; ++g) {
          for (std::size_t p = 0; p < P; ++p) {
            const auto sx = axis_sample(cd[(g * P + p) * 2], W);
            const auto sy = axis_sample(cd[(g * P + p) * 2 + 1], H);
            // Degenerate 1-pixel axes collapse onto index 0 with zero weight on i1.
            const std::size_t x1 = W > 1 ? sx.i1 : 0;
            const std::size_t y1 = H > 1 ? sy.i1 : 0;
            double dtx = 0.0, dty = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
              const double go = self.grad[(g * C + c) * P + p];
              if (go == 0.0) continue;
              const std::size_t base = (g * C + c) * H * W;
              const double* img = px.data.data() + base;
              const double v00 = img[sy.i0 * W + sx.i0];
              const double v01 = img[sy.i0 * W + x1];
              const double v10 = img[y1 * W + sx.i0];
              const double v11 = img[y1 * W + x1];
              if (px.requires_grad) {
                double* gi = px.grad.data() + base;
                gi[sy.i0 * W + sx.i0] += go * (1 - sx.t) * (1 - sy.t);
                gi[sy.i0 * W + x1] += go * sx.t * (1 - sy.t);
                gi[y1 * W + sx.i0] += go * (1 - sx.t) * sy.t;
                gi[y1 * W + x1] += go * sx.t * sy.t;
              }
              dtx += go * ((1 - sy.t) * (v01 - v00) + sy.t * (v11 - v10));
              dty += go * ((1 - sx.t) * (v10 - v00) + sx.t * (v11 - v01));
            }
            if (pc.requires_grad) {
              pc.grad[(g * P + p) * 2] += dtx * sx.dpos;
              pc.grad[(g * P + p) * 2 + 1] += dty * sy.dpos;
            }
          }
        }
      });
}

Tensor grid_sample_bilinear(const Tensor& x, const Tensor& coords) {
  if (x.rank() != 3) throw ShapeError("grid_sample_bilinear expects x [C,H,W]");
  if (coords.rank() < 1 || coords.shape().back() != 2) {
    throw ShapeError("grid_sample coords must end in extent 2");
  }
  Shape xs{1, x.dim(0), x.dim(1), x.dim(2)};
  Shape gs{1};
  gs.insert(gs.end(), coords.shape().begin(), coords.shape().end());
  auto out = grid_sample_grouped(reshape(x, xs), reshape(coords, gs));
  Shape os(out.shape().begin() + 1, out.shape().end());
  return reshape(out, os);
}

}  // namespace ssattn
