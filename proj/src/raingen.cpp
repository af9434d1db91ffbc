#include "ssattn/raingen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ssattn/errors.hpp"

namespace ssattn::raingen {

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::RS: return "rs";
    case Mode::RD: return "rd";
    case Mode::RDS: return "rds";
  }
  return "rds";
}

Mode parse_mode(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "rs") return Mode::RS;
  if (s == "rd") return Mode::RD;
  if (s == "rds") return Mode::RDS;
  throw ConfigError("unknown rain mode '" + name + "' (expected rs|rd|rds)");
}

namespace {

void check_range(const Range& r, const char* name, double min_lo) {
  if (!(r.lo <= r.hi) || r.lo < min_lo || !std::isfinite(r.hi)) {
    throw ConfigError(std::string("invalid range for ") + name);
  }
}

std::size_t draw_count(const Range& r, Rng& rng) {
  return static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(std::llround(r.lo)),
                                              static_cast<std::int64_t>(std::llround(r.hi))));
}

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void GenConfig::validate() const {
  if (height == 0 || width == 0) throw ConfigError("image size must be positive");
  check_range(shape_count, "shape_count", 0);
  check_range(streak_count, "streak_count", 0);
  check_range(angle_deg, "angle_deg", -90);
  check_range(streak_length, "streak_length", 0);
  check_range(streak_intensity, "streak_intensity", 0);
  check_range(drop_count, "drop_count", 0);
  check_range(drop_radius, "drop_radius", 0);
  check_range(eta, "eta", 0);
  if (eta.hi > 1.0) throw ConfigError("eta must lie in [0,1]");
  if (!(noise_amplitude >= 0.0 && noise_amplitude <= 0.05)) throw ConfigError("noise_amplitude must lie in [0,0.05]");
  if (!(angle_jitter_deg >= 0.0 && angle_jitter_deg <= 10.0)) throw ConfigError("angle_jitter_deg must lie in [0,10]");
  if (!(streak_width >= 1.0)) throw ConfigError("streak_width must be >= 1");
}

Tensor gen_background(const GenConfig& cfg, Rng& rng) {
  const std::size_t h = cfg.height, w = cfg.width, plane = h * w;
  std::vector<double> img(3 * plane);

  double c0[3], c1[3];
  for (int c = 0; c < 3; ++c) {
    c0[c] = rng.uniform(0.1, 0.9);
    c1[c] = rng.uniform(0.1, 0.9);
  }
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double ux = std::cos(theta), uy = std::sin(theta);
  double pmin = 0.0, pmax = 0.0;
  for (double cy : {0.0, static_cast<double>(h - 1)}) {
    for (double cx : {0.0, static_cast<double>(w - 1)}) {
      const double p = cx * ux + cy * uy;
      pmin = std::min(pmin, p);
      pmax = std::max(pmax, p);
    }
  }
  const double span = pmax > pmin ? pmax - pmin : 1.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double t = (static_cast<double>(x) * ux + static_cast<double>(y) * uy - pmin) / span;
      for (int c = 0; c < 3; ++c) img[c * plane + y * w + x] = c0[c] + (c1[c] - c0[c]) * t;
    }
  }

  const std::size_t shapes = draw_count(cfg.shape_count, rng);
  const double extent = static_cast<double>(std::min(h, w));
  for (std::size_t s = 0; s < shapes; ++s) {
    const bool disc = rng.uniform() < 0.5;
    const double cx = rng.uniform(0.0, static_cast<double>(w));
    const double cy = rng.uniform(0.0, static_cast<double>(h));
    const double sx = rng.uniform(0.08, 0.3) * extent;
    const double sy = disc ? sx : rng.uniform(0.08, 0.3) * extent;
    double color[3];
    for (auto& c : color) c = rng.uniform(0.05, 0.95);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
        const bool inside = disc ? dx * dx + dy * dy <= sx * sx : std::abs(dx) <= sx && std::abs(dy) <= sy;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) img[c * plane + y * w + x] = color[c];
      }
    }
  }

  // Value noise: a coarse random lattice, bilinearly upsampled.
  constexpr std::size_t kLattice = 6;
  std::vector<double> lattice(kLattice * kLattice);
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  if (cfg.noise_amplitude > 0.0) {
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = h > 1 ? static_cast<double>(y) * (kLattice - 1) / static_cast<double>(h - 1) : 0.0;
      const std::size_t y0 = std::min<std::size_t>(static_cast<std::size_t>(fy), kLattice - 2);
      const double ty = fy - static_cast<double>(y0);
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = w > 1 ? static_cast<double>(x) * (kLattice - 1) / static_cast<double>(w - 1) : 0.0;
        const std::size_t x0 = std::min<std::size_t>(static_cast<std::size_t>(fx), kLattice - 2);
        const double tx = fx - static_cast<double>(x0);
        const double v = (1 - ty) * ((1 - tx) * lattice[y0 * kLattice + x0] + tx * lattice[y0 * kLattice + x0 + 1]) +
                         ty * ((1 - tx) * lattice[(y0 + 1) * kLattice + x0] + tx * lattice[(y0 + 1) * kLattice + x0 + 1]);
        for (int c = 0; c < 3; ++c) img[c * plane + y * w + x] += cfg.noise_amplitude * v;
      }
    }
  }
  for (auto& v : img) v = std::clamp(v, 0.0, 1.0);
  return Tensor({3, h, w}, std::move(img));
}

Tensor render_streaks(const std::vector<StreakSpec>& streaks, std::size_t height, std::size_t width,
                      std::size_t blur) {
  const std::size_t plane = height * width;
  const long lh = static_cast<long>(height), lw = static_cast<long>(width);
  std::vector<double> out(plane, 0.0), splat(plane), blurred(plane);
  auto sample = [&](double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
    const double tx = x - fx, ty = y - fy;
    double v = 0.0;
    auto at = [&](long yy, long xx, double wgt) {
      if (wgt != 0.0 && yy >= 0 && yy < lh && xx >= 0 && xx < lw) v += wgt * splat[yy * lw + xx];
    };
    at(y0, x0, (1 - tx) * (1 - ty));
    at(y0, x0 + 1, tx * (1 - ty));
    at(y0 + 1, x0, (1 - tx) * ty);
    at(y0 + 1, x0 + 1, tx * ty);
    return v;
  };
  constexpr double kStep = 0.25;
  for (const auto& s : streaks) {
    std::fill(splat.begin(), splat.end(), 0.0);
    const double dx = std::sin(s.angle), dy = std::cos(s.angle);
    const std::size_t samples = static_cast<std::size_t>(std::floor(s.length / kStep)) + 1;
    for (std::size_t i = 0; i < samples; ++i) {
      const double t = static_cast<double>(i) * kStep;
      const double x = s.x + t * dx, y = s.y + t * dy;
      const double fx = std::floor(x), fy = std::floor(y);
      const long x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double tx = x - fx, ty = y - fy;
      auto put = [&](long yy, long xx, double wgt) {
        if (wgt != 0.0 && yy >= 0 && yy < lh && xx >= 0 && xx < lw) splat[yy * lw + xx] += wgt * s.intensity * kStep;
      };
      put(y0, x0, (1 - tx) * (1 - ty));
      put(y0, x0 + 1, tx * (1 - ty));
      put(y0 + 1, x0, (1 - tx) * ty);
      put(y0 + 1, x0 + 1, tx * ty);
    }
    if (blur == 0) {
      for (std::size_t i = 0; i < plane; ++i) out[i] += splat[i];
      continue;
    }
    const double taps = static_cast<double>(2 * blur + 1);
    for (long y = 0; y < lh; ++y) {
      for (long x = 0; x < lw; ++x) {
        double acc = 0.0;
        for (long k = -static_cast<long>(blur); k <= static_cast<long>(blur); ++k) {
          acc += sample(static_cast<double>(x) + static_cast<double>(k) * dx, static_cast<double>(y) + static_cast<double>(k) * dy);
        }
        blurred[y * lw + x] = acc / taps;
      }
    }
    for (std::size_t i = 0; i < plane; ++i) out[i] += blurred[i];
  }
  return Tensor({1, height, width}, std::move(out));
}

Tensor gen_streaks(const GenConfig& cfg, Rng& rng) {
  const std::size_t count = draw_count(cfg.streak_count, rng);
  const double base = rng.uniform(cfg.angle_deg.lo, cfg.angle_deg.hi) * kDeg;
  const auto lines = static_cast<std::size_t>(std::lround(cfg.streak_width));
  std::vector<StreakSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    StreakSpec s;
    s.angle = base + rng.uniform(-cfg.angle_jitter_deg, cfg.angle_jitter_deg) * kDeg;
    s.length = rng.uniform(cfg.streak_length.lo, cfg.streak_length.hi);
    s.intensity = rng.uniform(cfg.streak_intensity.lo, cfg.streak_intensity.hi);
    s.x = rng.uniform(-0.5 * s.length, static_cast<double>(cfg.width) + 0.5 * s.length);
    s.y = rng.uniform(-s.length, static_cast<double>(cfg.height));
    // Wider streaks: parallel copies one pixel apart across the direction.
    for (std::size_t k = 0; k < lines; ++k) {
      StreakSpec c = s;
      const double off = static_cast<double>(k) - 0.5 * static_cast<double>(lines - 1);
      c.x += off * std::cos(s.angle);
      c.y -= off * std::sin(s.angle);
      specs.push_back(c);
    }
  }
  auto single = render_streaks(specs, cfg.height, cfg.width, cfg.streak_blur);
  const std::size_t plane = cfg.height * cfg.width;
  std::vector<double> out(3 * plane);
  for (std::size_t c = 0; c < 3; ++c) std::copy(single.data().begin(), single.data().end(), out.begin() + c * plane);
  return Tensor({3, cfg.height, cfg.width}, std::move(out));
}

Tensor render_drop_mask(const std::vector<DropSpec>& drops, std::size_t height, std::size_t width) {
  std::vector<double> mask(height * width, 0.0);
  for (const auto& d : drops) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const double ex = (static_cast<double>(x) - d.cx) / d.rx;
        const double ey = (static_cast<double>(y) - d.cy) / d.ry;
        if (ex * ex + ey * ey <= 1.0) mask[y * width + x] = 1.0;
      }
    }
  }
  return Tensor({1, height, width}, std::move(mask));
}

namespace {

// Separable box blur with edge clamping, per channel.
std::vector<double> box_blur(std::span<const double> in, std::size_t c, std::size_t h, std::size_t w, std::size_t r) {
  std::vector<double> tmp(in.begin(), in.end()), out(in.size());
  const long lr = static_cast<long>(r), lh = static_cast<long>(h), lw = static_cast<long>(w);
  const double norm = 1.0 / static_cast<double>(2 * r + 1);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* src = in.data() + ch * h * w;
    double* mid = tmp.data() + ch * h * w;
    for (long y = 0; y < lh; ++y) {
      for (long x = 0; x < lw; ++x) {
        double s = 0.0;
        for (long k = -lr; k <= lr; ++k) s += src[y * lw + std::clamp(x + k, 0L, lw - 1)];
        mid[y * lw + x] = s * norm;
      }
    }
    double* dst = out.data() + ch * h * w;
    for (long y = 0; y < lh; ++y) {
      for (long x = 0; x < lw; ++x) {
        double s = 0.0;
        for (long k = -lr; k <= lr; ++k) s += mid[std::clamp(y + k, 0L, lh - 1) * lw + x];
        dst[y * lw + x] = s * norm;
      }
    }
  }
  return out;
}

}  // namespace

Drops gen_drops(const GenConfig& cfg, const Tensor& background, Rng& rng) {
  const std::size_t h = cfg.height, w = cfg.width, plane = h * w;
  const std::size_t count = draw_count(cfg.drop_count, rng);
  std::vector<DropSpec> specs;
  for (std::size_t i = 0; i < count; ++i) {
    DropSpec d;
    d.cx = rng.uniform(0.0, static_cast<double>(w - 1));
    d.cy = rng.uniform(0.0, static_cast<double>(h - 1));
    d.rx = rng.uniform(cfg.drop_radius.lo, cfg.drop_radius.hi);
    d.ry = d.rx * rng.uniform(0.75, 1.3);
    specs.push_back(d);
  }
  Drops drops;
  drops.mask = render_drop_mask(specs, h, w);
  const auto blurred = box_blur(background.data(), 3, h, w, cfg.drop_blur);
  const auto m = drops.mask.data();
  std::vector<double> layer(3 * plane, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      if (m[i] != 0.0) layer[c * plane + i] = std::clamp(0.8 * blurred[c * plane + i] + 0.2, 0.0, 1.0);
    }
  }
  drops.layer = Tensor({3, h, w}, std::move(layer));
  return drops;
}

RainScene compose(const Tensor& background, const Tensor& streaks, const Tensor& drop_mask, const Tensor& drop_layer,
                  double eta) {
  const Shape& s = background.shape();
  if (s.size() != 3 || streaks.shape() != s || drop_layer.shape() != s ||
      drop_mask.shape() != Shape{1, s[1], s[2]}) {
    throw ShapeError("compose: inconsistent scene shapes");
  }
  const std::size_t plane = s[1] * s[2];
  const auto b = background.data(), st = streaks.data(), m = drop_mask.data(), d = drop_layer.data();
  std::vector<double> r(b.size());
  for (std::size_t c = 0; c < s[0]; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      r[k] = (1.0 - m[i]) * (b[k] + st[k]) + eta * d[k];
    }
  }
  return {background, streaks, drop_mask, drop_layer, eta, Tensor(s, std::move(r))};
}

RainScene generate(const GenConfig& cfg, std::uint64_t index) {
  cfg.validate();
  Rng rng(cfg.seed, index);
  const std::size_t h = cfg.height, w = cfg.width;
  auto background = gen_background(cfg, rng);
  auto streaks = cfg.has_streaks() ? gen_streaks(cfg, rng) : Tensor::zeros({3, h, w});
  Drops drops{Tensor::zeros({1, h, w}), Tensor::zeros({3, h, w})};
  if (cfg.has_drops()) drops = gen_drops(cfg, background, rng);
  const double eta = rng.uniform(cfg.eta.lo, cfg.eta.hi);
  return compose(background, streaks, drops.mask, drops.layer, eta);
}

}  // namespace ssattn::raingen
