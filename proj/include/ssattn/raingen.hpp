#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssattn/rng.hpp"
#include "ssattn/tensor.hpp"

namespace ssattn::raingen {

enum class Mode { RS, RD, RDS };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& name);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct GenConfig {
  Mode mode = Mode::RDS;
  std::size_t height = 64;
  std::size_t width = 64;

  // background
  Range shape_count{3, 8};
  double noise_amplitude = 0.03;

  // streaks
  Range streak_count{12, 24};
  Range angle_deg{-25, 25};  // shared direction, measured from vertical
  double angle_jitter_deg = 10.0;
  Range streak_length{8, 20};
  double streak_width = 1.0;
  Range streak_intensity{0.35, 0.7};
  std::size_t streak_blur = 2;  // half-length of the directional box blur

  // drops
  Range drop_count{1, 3};
  Range drop_radius{2.5, 5.0};
  std::size_t drop_blur = 2;
  Range eta{0.7, 1.0};

  std::uint64_t seed = 0;

  void validate() const;
  bool has_streaks() const { return mode != Mode::RD; }
  bool has_drops() const { return mode != Mode::RS; }
};

struct RainScene {
  Tensor background;  // B  [3,H,W]
  Tensor streaks;     // S  [3,H,W]
  Tensor drop_mask;   // M_r [1,H,W]
  Tensor drop_layer;  // D  [3,H,W]
  double eta = 0.0;
  Tensor degraded;    // R  [3,H,W], not clamped
};

struct StreakSpec {
  double x = 0.0, y = 0.0;  // start, pixel units
  double angle = 0.0;       // radians; 0 is straight down, positive leans right
  double length = 0.0;
  double intensity = 0.0;
};

struct DropSpec {
  double cx = 0.0, cy = 0.0;
  double rx = 0.0, ry = 0.0;
};

Tensor gen_background(const GenConfig& cfg, Rng& rng);
Tensor gen_streaks(const GenConfig& cfg, Rng& rng);
struct Drops {
  Tensor mask;   // [1,H,W] in {0,1}
  Tensor layer;  // [3,H,W]
};
Drops gen_drops(const GenConfig& cfg, const Tensor& background, Rng& rng);

// Single-channel streak map: anti-aliased splats of every segment, then a box
// blur of half-length `blur` along each streak's own direction. [1,H,W].
Tensor render_streaks(const std::vector<StreakSpec>& streaks, std::size_t height, std::size_t width,
                      std::size_t blur);
// Union of filled ellipses, [1,H,W] in {0,1}.
Tensor render_drop_mask(const std::vector<DropSpec>& drops, std::size_t height, std::size_t width);

// R = (1 - M) * (B + S) + eta * D
RainScene compose(const Tensor& background, const Tensor& streaks, const Tensor& drop_mask,
                  const Tensor& drop_layer, double eta);

// The scene for sample `index`; a pure function of (cfg, index).
RainScene generate(const GenConfig& cfg, std::uint64_t index);

}  // namespace ssattn::raingen
