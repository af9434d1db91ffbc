#pragma once

#include <string>
#include <vector>

#include "ssattn/rng.hpp"
#include "ssattn/tensor.hpp"

namespace ssattn::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

Tensor parameter(Shape shape, double value = 0.0);
Tensor truncated_normal_parameter(Shape shape, double stddev, Rng& rng);

// Per-token linear map on channel-first tokens: [in, P] -> [out, P].
struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out, 1]

  static Linear make(std::size_t in, std::size_t out, double stddev, Rng& rng);
  static Linear zeros(std::size_t in, std::size_t out);
  Tensor operator()(const Tensor& tokens) const;
  // [in, H, W] -> [out, H, W]
  Tensor apply_map(const Tensor& map) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
  Tensor weight;  // [out, in, k, k]
  Tensor bias;    // [out]

  // He-normal initialization scaled by `gain`.
  static Conv2d make(std::size_t in, std::size_t out, std::size_t k, Rng& rng, double gain = 1.0);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Layer norm over the channel axis of a [C, ...] tensor, with affine.
struct ChannelNorm {
  Tensor gamma;  // [C, 1]
  Tensor beta;   // [C, 1]

  static ChannelNorm make(std::size_t channels);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace ssattn::nn
