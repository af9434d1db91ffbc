#include "ssattn/visualize.hpp"

#include <algorithm>
#include <cmath>

#include "ssattn/errors.hpp"

namespace ssattn::visualize {

namespace {

constexpr std::array<std::array<double, 3>, 5> kStops{{
    {0.267, 0.005, 0.329},
    {0.230, 0.322, 0.546},
    {0.128, 0.567, 0.551},
    {0.369, 0.789, 0.383},
    {0.993, 0.906, 0.144},
}};

constexpr std::array<std::array<double, 3>, 8> kHeadColors{{
    {1.0, 0.1, 0.1},
    {0.1, 0.9, 1.0},
    {1.0, 0.2, 1.0},
    {0.2, 1.0, 0.2},
    {0.2, 0.4, 1.0},
    {1.0, 0.6, 0.0},
    {1.0, 1.0, 1.0},
    {0.0, 0.0, 0.0},
}};

class Canvas {
 public:
  Canvas(std::size_t h, std::size_t w) : h_(h), w_(w), px_(3 * h * w, 0.0) {}

  void set(long y, long x, const std::array<double, 3>& c) {
    if (y < 0 || x < 0 || y >= static_cast<long>(h_) || x >= static_cast<long>(w_)) return;
    for (std::size_t ch = 0; ch < 3; ++ch) px_[(ch * h_ + y) * w_ + x] = c[ch];
  }
  Tensor tensor() && { return Tensor({3, h_, w_}, std::move(px_)); }
  std::vector<double>& data() { return px_; }

 private:
  std::size_t h_, w_;
  std::vector<double> px_;
};

}  // namespace

std::array<double, 3> colormap(double t) {
  t = std::clamp(t, 0.0, 1.0) * static_cast<double>(kStops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(t), kStops.size() - 2);
  const double f = t - static_cast<double>(i);
  std::array<double, 3> c{};
  for (std::size_t k = 0; k < 3; ++k) c[k] = kStops[i][k] + f * (kStops[i + 1][k] - kStops[i][k]);
  return c;
}

Tensor sigma_heatmap(const Tensor& log_sigma) {
  if (log_sigma.rank() != 3 || log_sigma.dim(0) != 1) {
    throw ShapeError("sigma_heatmap expects [1,H,W], got " + to_string(log_sigma.shape()));
  }
  const std::size_t h = log_sigma.dim(1), w = log_sigma.dim(2), n = h * w;
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = std::exp(log_sigma.data()[i]);
  const auto [lo, hi] = std::minmax_element(s.begin(), s.end());
  const double a = *lo, span = *hi - *lo;
  std::vector<double> out(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = colormap(span > 0.0 ? (s[i] - a) / span : 0.0);
    for (std::size_t ch = 0; ch < 3; ++ch) out[ch * n + i] = c[ch];
  }
  return Tensor({3, h, w}, std::move(out));
}

SamplingOverlay sampling_overlay(const Tensor& input, const model::StageTrace& stage, std::size_t block,
                                 std::size_t window, std::size_t window_side, std::size_t factor) {
  if (input.rank() != 3 || input.dim(0) != 3) throw ShapeError("sampling_overlay expects a [3,H,W] image");
  if (block >= stage.blocks.size()) {
    throw ConfigError("block " + std::to_string(block) + " out of range: stage has " +
                      std::to_string(stage.blocks.size()) + " blocks");
  }
  const Tensor& coords = stage.blocks[block].coords;
  if (!coords.defined()) throw ConfigError("block " + std::to_string(block) + " is not a sparse sampling block");
  const std::size_t w = window_side;
  const std::size_t mw = stage.width / w, m = coords.dim(0), heads = coords.dim(1);
  if (window >= m) {
    throw ConfigError("window " + std::to_string(window) + " out of range: level " + std::to_string(stage.level) +
                      " has " + std::to_string(m) + " windows");
  }
  const double s = std::ldexp(1.0, static_cast<int>(stage.level));
  SamplingOverlay ov;
  ov.level = stage.level;
  ov.window = window;
  ov.x0 = static_cast<double>((window % mw) * w) * s;
  ov.y0 = static_cast<double>((window / mw) * w) * s;
  ov.x1 = ov.x0 + static_cast<double>(w) * s;
  ov.y1 = ov.y0 + static_cast<double>(w) * s;

  // Normalized feature coordinates -> feature pixels -> input pixels.
  const double fw = static_cast<double>(stage.width - 1), fh = static_cast<double>(stage.height - 1);
  const auto c = coords.data();
  for (std::size_t hd = 0; hd < heads; ++hd) {
    std::vector<std::array<double, 2>> pts;
    const std::size_t base = (window * heads + hd) * w * w * 2;
    for (std::size_t t = 0; t < w * w; ++t) {
      const double px = (c[base + 2 * t] + 1.0) * 0.5 * fw;
      const double py = (c[base + 2 * t + 1] + 1.0) * 0.5 * fh;
      pts.push_back({(px + 0.5) * s - 0.5, (py + 0.5) * s - 0.5});
    }
    ov.points.push_back(std::move(pts));
  }

  const std::size_t h = input.dim(1), wd = input.dim(2);
  Canvas canvas(h * factor, wd * factor);
  auto& px = canvas.data();
  const std::size_t ch_stride = h * factor * wd * factor;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    for (std::size_t y = 0; y < h * factor; ++y) {
      for (std::size_t x = 0; x < wd * factor; ++x) {
        px[ch * ch_stride + y * wd * factor + x] = input.data()[(ch * h + y / factor) * wd + x / factor];
      }
    }
  }
  const double f = static_cast<double>(factor);
  const std::array<double, 3> outline{1.0, 1.0, 0.0};
  const long ax = std::lround(ov.x0 * f), ay = std::lround(ov.y0 * f);
  const long bx = std::lround(ov.x1 * f) - 1, by = std::lround(ov.y1 * f) - 1;
  for (long x = ax; x <= bx; ++x) {
    canvas.set(ay, x, outline);
    canvas.set(by, x, outline);
  }
  for (long y = ay; y <= by; ++y) {
    canvas.set(y, ax, outline);
    canvas.set(y, bx, outline);
  }
  for (std::size_t hd = 0; hd < heads; ++hd) {
    const auto& color = kHeadColors[hd % kHeadColors.size()];
    for (const auto& p : ov.points[hd]) {
      const long cx = std::lround((p[0] + 0.5) * f - 0.5), cy = std::lround((p[1] + 0.5) * f - 0.5);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) canvas.set(cy + dy, cx + dx, color);
      }
    }
  }
  ov.image = std::move(canvas).tensor();
  return ov;
}

}  // namespace ssattn::visualize
