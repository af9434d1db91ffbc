#pragma once

#include <string>
#include <vector>

#include "ssattn/tensor.hpp"

namespace ssattn::metrics {

// Full-range BT.601 luma of a [3,H,W] image: [1,H,W].
Tensor rgb_to_y(const Tensor& img);

// 10 log10(peak^2 / MSE), capped at 100 dB.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean SSIM over the valid region, 11x11 Gaussian window (sigma 1.5),
// K1 = 0.01, K2 = 0.03, dynamic range 1. Inputs [1,H,W] with H, W >= 11.
double ssim(const Tensor& a, const Tensor& b);

struct ImageScore {
  std::string name;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double baseline_psnr_db = 0.0;
  double baseline_ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageScore> images;
  double mean_psnr_db = 0.0;
  double mean_ssim = 0.0;
  double mean_baseline_psnr_db = 0.0;
  double mean_baseline_ssim = 0.0;

  void finalize();
};

// Y-channel scores of a restored image and the degraded input against gt.
ImageScore score_image(const std::string& name, const Tensor& restored, const Tensor& degraded, const Tensor& gt);

}  // namespace ssattn::metrics
