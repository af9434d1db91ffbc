#include "ssattn/metrics.hpp"

#include <cmath>

#include "ssattn/errors.hpp"

namespace ssattn::metrics {

Tensor rgb_to_y(const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3) throw ShapeError("rgb_to_y expects [3,H,W], got " + to_string(img.shape()));
  const std::size_t plane = img.dim(1) * img.dim(2);
  const auto d = img.data();
  std::vector<double> y(plane);
  for (std::size_t i = 0; i < plane; ++i) y[i] = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  return Tensor({1, img.dim(1), img.dim(2)}, std::move(y));
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  if (a.shape() != b.shape()) throw ShapeError("psnr: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto x = a.data(), y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double mse = s / static_cast<double>(x.size());
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

namespace {

constexpr int kWin = 11;

std::vector<double> gaussian_window() {
  std::vector<double> g(kWin);
  double s = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    s += g[i];
  }
  for (auto& v : g) v /= s;
  return g;
}

// Valid-region separable filtering of an h x w plane.
std::vector<double> filter(const std::vector<double>& in, std::size_t h, std::size_t w, const std::vector<double>& g) {
  const std::size_t ow = w - kWin + 1, oh = h - kWin + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * in[y * w + x + k];
      rows[y * ow + x] = s;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWin; ++k) s += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3 || a.dim(0) != 1) throw ShapeError("ssim expects two [1,H,W] images");
  const std::size_t h = a.dim(1), w = a.dim(2);
  if (h < kWin || w < kWin) throw ShapeError("ssim: image smaller than the 11x11 window");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto g = gaussian_window();
  std::vector<double> x(a.data().begin(), a.data().end()), y(b.data().begin(), b.data().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter(x, h, w, g), my = filter(y, h, w, g);
  const auto sxx = filter(xx, h, w, g), syy = filter(yy, h, w, g), sxy = filter(xy, h, w, g);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cxy = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

void MetricReport::finalize() {
  mean_psnr_db = mean_ssim = mean_baseline_psnr_db = mean_baseline_ssim = 0.0;
  if (images.empty()) return;
  for (const auto& s : images) {
    mean_psnr_db += s.psnr_db;
    mean_ssim += s.ssim;
    mean_baseline_psnr_db += s.baseline_psnr_db;
    mean_baseline_ssim += s.baseline_ssim;
  }
  const double n = static_cast<double>(images.size());
  mean_psnr_db /= n;
  mean_ssim /= n;
  mean_baseline_psnr_db /= n;
  mean_baseline_ssim /= n;
}

ImageScore score_image(const std::string& name, const Tensor& restored, const Tensor& degraded, const Tensor& gt) {
  const auto yg = rgb_to_y(gt), yr = rgb_to_y(restored), yd = rgb_to_y(degraded);
  return {name, psnr(yr, yg), ssim(yr, yg), psnr(yd, yg), ssim(yd, yg)};
}

}  // namespace ssattn::metrics
