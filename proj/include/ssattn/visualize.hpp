#pragma once

#include <array>
#include <vector>

#include "ssattn/model.hpp"

namespace ssattn::visualize {

// Fixed five-stop perceptual colormap, t clamped to [0,1].
std::array<double, 3> colormap(double t);

// sigma = exp(log_sigma) rescaled to [0,1] over the image (a constant map
// becomes 0), then colored. [1,H,W] -> [3,H,W].
Tensor sigma_heatmap(const Tensor& log_sigma);

struct SamplingOverlay {
  std::size_t level = 0;
  std::size_t window = 0;
  // Window extent in input pixel edges: [x0, x1) x [y0, y1).
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  // Per head, sampled positions in input pixel-center coordinates (x, y).
  std::vector<std::vector<std::array<double, 2>>> points;
  Tensor image;  // input upscaled by `factor`, outline and points drawn
};

// Sampled coordinates of one SSA block of a traced stage, for window index
// `window` (row-major over the stage's window grid). ConfigError when the
// block is not an SSA block or the window index is out of range.
SamplingOverlay sampling_overlay(const Tensor& input, const model::StageTrace& stage, std::size_t block,
                                 std::size_t window, std::size_t window_side, std::size_t factor = 4);

}  // namespace ssattn::visualize
