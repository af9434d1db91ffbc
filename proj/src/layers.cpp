#include "ssattn/layers.hpp"

#include <cmath>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

namespace ssattn::nn {

Tensor parameter(Shape shape, double value) { return Tensor::full(std::move(shape), value, true); }

Tensor truncated_normal_parameter(Shape shape, double stddev, Rng& rng) {
  std::vector<double> data(numel_of(shape));
  for (auto& v : data) v = rng.truncated_normal(stddev);
  return Tensor(std::move(shape), std::move(data), true);
}

Linear Linear::make(std::size_t in, std::size_t out, double stddev, Rng& rng) {
  return {truncated_normal_parameter({out, in}, stddev, rng), parameter({out, 1})};
}

Linear Linear::zeros(std::size_t in, std::size_t out) { return {parameter({out, in}), parameter({out, 1})}; }

Tensor Linear::operator()(const Tensor& tokens) const {
  if (tokens.rank() != 2 || tokens.dim(0) != weight.dim(1)) {
    throw ShapeError("linear: expected [" + std::to_string(weight.dim(1)) + ", P], got " +
                     to_string(tokens.shape()));
  }
  return add(matmul(weight, tokens), bias);
}

Tensor Linear::apply_map(const Tensor& map) const {
  if (map.rank() != 3) throw ShapeError("linear apply_map expects [C,H,W]");
  const std::size_t h = map.dim(1), w = map.dim(2);
  auto out = (*this)(reshape(map, {map.dim(0), h * w}));
  return reshape(out, {weight.dim(0), h, w});
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

Conv2d Conv2d::make(std::size_t in, std::size_t out, std::size_t k, Rng& rng, double gain) {
  const double stddev = gain * std::sqrt(2.0 / static_cast<double>(in * k * k));
  return {truncated_normal_parameter({out, in, k, k}, stddev, rng), parameter({out})};
}

Tensor Conv2d::operator()(const Tensor& x) const { return conv2d(x, weight, bias); }

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

ChannelNorm ChannelNorm::make(std::size_t channels) {
  return {parameter({channels, 1}, 1.0), parameter({channels, 1}, 0.0)};
}

Tensor ChannelNorm::operator()(const Tensor& x) const {
  const Shape shape = x.shape();
  const std::size_t c = shape[0];
  auto flat = reshape(x, {c, x.numel() / c});
  auto y = add(mul(normalize_channels(flat), gamma), beta);
  return reshape(y, shape);
}

void ChannelNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

}  // namespace ssattn::nn
