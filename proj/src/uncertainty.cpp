#include "ssattn/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

namespace ssattn::uncertainty {

namespace {

void require_finite(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " contains non-finite values");
  }
}

// k-th largest (1-based) of a copy of `values`.
double kth_largest(std::vector<double> values, std::size_t k) {
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end(),
                   std::greater<>());
  return values[k - 1];
}

}  // namespace

UncertaintyMap UncertaintyMap::from_log_sigma(const Tensor& log_sigma) {
  require_finite(log_sigma, "log_sigma");
  return {log_sigma, exp(log_sigma.detach())};
}

UncertaintyMap UncertaintyMap::neutral(std::size_t channels, std::size_t height, std::size_t width) {
  return {Tensor::zeros({channels, height, width}), Tensor::full({channels, height, width}, 1.0)};
}

std::size_t rank_count(double fraction, std::size_t n) {
  const double raw = std::ceil(fraction * static_cast<double>(n) - 1e-9);
  const auto count = static_cast<std::size_t>(std::max(raw, 1.0));
  return std::min(count, n);
}

Tensor udl_loss(const Tensor& pred, const Tensor& gt, const Tensor& log_sigma) {
  if (pred.shape() != gt.shape() || pred.rank() != 3) {
    throw ShapeError("udl_loss: pred/gt shape mismatch " + to_string(pred.shape()) + " vs " +
                     to_string(gt.shape()));
  }
  if (log_sigma.rank() != 3 || log_sigma.dim(0) != 1 || log_sigma.dim(1) != pred.dim(1) ||
      log_sigma.dim(2) != pred.dim(2)) {
    throw ShapeError("udl_loss: log_sigma must be [1,H,W], got " + to_string(log_sigma.shape()));
  }
  require_finite(pred, "udl_loss pred");
  require_finite(gt, "udl_loss gt");
  require_finite(log_sigma, "udl_loss log_sigma");
  const Tensor residual = sum_axis(abs(pred - gt), 0);  // [1,H,W]
  return mean(residual * exp(neg(log_sigma)) + log_sigma);
}

ConstraintMatrix constraint_matrix(const Tensor& sigma, double gamma, double beta) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("constraint_matrix: gamma must lie in [0,1)");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("constraint_matrix: beta must lie in (0,1]");
  if (sigma.rank() != 3) throw ShapeError("constraint_matrix expects [C,H,W]");
  const std::size_t c = sigma.dim(0), plane = sigma.dim(1) * sigma.dim(2);
  const std::size_t count = rank_count(1.0 - gamma, plane);
  const auto in = sigma.data();
  std::vector<double> out(in.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto first = in.begin() + static_cast<std::ptrdiff_t>(ch * plane);
    const double threshold = kth_largest({first, first + static_cast<std::ptrdiff_t>(plane)}, count);
    for (std::size_t i = 0; i < plane; ++i) {
      out[ch * plane + i] = in[ch * plane + i] >= threshold ? 1.0 : beta;
    }
  }
  return {Tensor(sigma.shape(), std::move(out)), beta};
}

ConstraintMatrix constraint_matrix(const UncertaintyMap& u, double gamma, double beta) {
  return constraint_matrix(u.sigma, gamma, beta);
}

CorrelationMap correlation_map(const Tensor& u_patch) {
  const bool batched = u_patch.rank() == 4;
  if (!batched && u_patch.rank() != 3) throw ShapeError("correlation_map expects [C,w,w] or [M,C,w,w]");
  const std::size_t m = batched ? u_patch.dim(0) : 1;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t c = u_patch.dim(off);
  const std::size_t n = u_patch.dim(off + 1) * u_patch.dim(off + 2);
  const auto in = u_patch.data();
  std::vector<double> out(m * n * n, 0.0);
  for (std::size_t b = 0; b < m; ++b) {
    const double* a = in.data() + b * c * n;  // [C, N]: token i is column i
    double* cr = out.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch) s += a[ch * n + i] * a[ch * n + j];
        cr[i * n + j] = s;
        cr[j * n + i] = s;
      }
    }
  }
  Shape shape = batched ? Shape{m, n, n} : Shape{n, n};
  return {Tensor(std::move(shape), std::move(out))};
}

Tensor topk_row_mask(const CorrelationMap& cr, double k_fraction) {
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw ConfigError("topk_row_mask: k must lie in (0,1]");
  const auto& s = cr.values.shape();
  if (s.size() < 2) throw ShapeError("topk_row_mask expects [..., N, N]");
  const std::size_t n = s.back();
  const std::size_t rows = cr.values.numel() / n;
  const std::size_t keep = rank_count(k_fraction, n);
  const auto in = cr.values.data();
  std::vector<double> out(in.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto first = in.begin() + static_cast<std::ptrdiff_t>(r * n);
    const double threshold = kth_largest({first, first + static_cast<std::ptrdiff_t>(n)}, keep);
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = in[r * n + j] >= threshold ? 1.0 : 0.0;
  }
  return Tensor(s, std::move(out));
}

Tensor modulation_matrix(const Tensor& mask, double alpha) {
  if (alpha < 0.0) throw ConfigError("modulation_matrix: alpha must be >= 0");
  std::vector<double> out(mask.numel());
  const auto in = mask.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    // Binary entries map to exactly 1 and 1 + alpha.
    if (in[i] == 1.0) {
      out[i] = 1.0;
    } else if (in[i] == 0.0) {
      out[i] = 1.0 + alpha;
    } else {
      out[i] = -alpha * in[i] + (1.0 + alpha);
    }
  }
  return Tensor(mask.shape(), std::move(out));
}

Tensor channel_max_scaled(const Tensor& sigma) {
  if (sigma.rank() != 3) throw ShapeError("channel_max_scaled expects [C,H,W]");
  const std::size_t c = sigma.dim(0), plane = sigma.dim(1) * sigma.dim(2);
  const auto in = sigma.data();
  std::vector<double> out(in.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto first = in.begin() + static_cast<std::ptrdiff_t>(ch * plane);
    const double mx = *std::max_element(first, first + static_cast<std::ptrdiff_t>(plane));
    for (std::size_t i = 0; i < plane; ++i) out[ch * plane + i] = in[ch * plane + i] / mx;
  }
  return Tensor(sigma.shape(), std::move(out));
}

Tensor row_max_scaled(const CorrelationMap& cr) {
  const auto& s = cr.values.shape();
  const std::size_t n = s.back();
  const std::size_t rows = cr.values.numel() / n;
  const auto in = cr.values.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const auto first = in.begin() + static_cast<std::ptrdiff_t>(r * n);
    const double mx = *std::max_element(first, first + static_cast<std::ptrdiff_t>(n));
    for (std::size_t j = 0; j < n; ++j) out[r * n + j] = mx > 0.0 ? in[r * n + j] / mx : 1.0;
  }
  return Tensor(s, std::move(out));
}

}  // namespace ssattn::uncertainty
