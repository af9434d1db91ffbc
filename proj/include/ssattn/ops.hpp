#pragma once

#include <cstdint>
#include <vector>

#include "ssattn/tensor.hpp"

namespace ssattn {

// ---- elementwise -----------------------------------------------------------

enum class ElementwiseKind { Add, Sub, Mul, Div, Abs, Exp, Ln, Relu, Gelu, ScalarMul };

// Binary kinds broadcast `b` against `a` with the trailing-dimension rule.
// Unary kinds ignore `b`; ScalarMul reads its factor from a one-element `b`.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b);

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws DomainError if any |b| < 1e-12.
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws DomainError if any element <= 0.
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor square(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = true);

// ---- linear algebra --------------------------------------------------------

// Batched product over leading dims (broadcast); rank >= 2 for both inputs.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);

Tensor softmax(const Tensor& x, std::size_t axis);

// Per-column standardization of a [C, ...] tensor over axis 0 (no affine).
Tensor normalize_channels(const Tensor& x, double eps = 1e-5);

// ---- layout ----------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape);
// out[i] = a[index[i]]; gradient scatters back with accumulation.
Tensor gather(const Tensor& a, std::vector<std::uint32_t> index, Shape out_shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
// [C,H,W] mirror padding (edge pixel not repeated).
Tensor pad_reflect(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right);
Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);
Tensor upsample_nearest2(const Tensor& x);
Tensor flip_horizontal(const Tensor& x);
// Quarter turns counter-clockwise of a [C,H,W] tensor.
Tensor rot90(const Tensor& x, int quarter_turns);

// ---- spatial ---------------------------------------------------------------

// x [C_in,H,W], w [C_out,C_in,kh,kw], bias [C_out] or undefined. Stride 1,
// zero padding (k-1)/2, odd kernels only (ConfigError otherwise).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor global_avgpool(const Tensor& x);
// 2x2 area average; extents must be even.
Tensor avg_pool2(const Tensor& x);

// x [C,H,W], coords [..., 2] holding (x, y) in [-1, 1] with the align-corners
// convention. Out-of-range coordinates clamp to the border. Returns [C, ...].
Tensor grid_sample_bilinear(const Tensor& x, const Tensor& coords);
// Grouped form: x [G,C,H,W], coords [G, ..., 2] -> [G, C, ...].
Tensor grid_sample_grouped(const Tensor& x, const Tensor& coords);

}  // namespace ssattn
