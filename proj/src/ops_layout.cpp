#include <memory>
#include <numeric>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

namespace ssattn {

namespace {

std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < n ? r : period - r);
}

void require_chw(const Tensor& x, const char* what) {
  if (x.rank() != 3) throw ShapeError(std::string(what) + " expects [C,H,W], got " + to_string(x.shape()));
}

}  // namespace

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape " + to_string(a.shape()) + " -> " + to_string(shape));
  }
  const auto in = a.data();
  return Tensor::make_result(
      "reshape", std::move(shape), std::vector<double>(in.begin(), in.end()), {&a},
      [](detail::Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
      });
}

Tensor gather(const Tensor& a, std::vector<std::uint32_t> index, Shape out_shape) {
  if (numel_of(out_shape) != index.size()) throw ShapeError("gather: index count != output size");
  const auto in = a.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= in.size()) throw ShapeError("gather: index out of range");
    out[i] = in[index[i]];
  }
  auto idx = std::make_shared<std::vector<std::uint32_t>>(std::move(index));
  return Tensor::make_result("gather", std::move(out_shape), std::move(out), {&a},
                             [idx](detail::Node& self) {
                               auto& p = *self.parents[0];
                               p.ensure_grad();
                               const auto& ix = *idx;
                               for (std::size_t i = 0; i < ix.size(); ++i) {
                                 p.grad[ix[i]] += self.grad[i];
                               }
                             });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes) {
  const auto& s = a.shape();
  const std::size_t r = s.size();
  if (axes.size() != r) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> used(r, false);
  for (auto ax : axes) {
    if (ax >= r || used[ax]) throw ShapeError("permute: invalid axes");
    used[ax] = true;
  }
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * s[i + 1];
  Shape out_shape(r);
  std::vector<std::size_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  const std::size_t n = a.numel();
  std::vector<std::uint32_t> index(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = static_cast<std::uint32_t>(off);
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      off += strides[d];
      if (counter[d] < out_shape[d]) break;
      off -= strides[d] * counter[d];
      counter[d] = 0;
    }
  }
  return gather(a, std::move(index), std::move(out_shape));
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) throw ShapeError("concat: extent mismatch");
    }
    lens.push_back(s[axis]);
    out_shape[axis] += s[axis];
  }
  const std::size_t total = out_shape[axis];
  std::vector<double> out(outer * total * inner);
  std::size_t start = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto in = parts[k].data();
    const std::size_t chunk = lens[k] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(in.data() + o * chunk, chunk, out.data() + (o * total + start) * inner);
    }
    start += lens[k];
  }
  return Tensor::make_result(
      "concat", std::move(out_shape), std::move(out), parts,
      [outer, inner, total, lens](detail::Node& self) {
        std::size_t start = 0;
        for (std::size_t k = 0; k < lens.size(); ++k) {
          auto& p = *self.parents[k];
          const std::size_t chunk = lens[k] * inner;
          if (p.requires_grad) {
            p.ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
              const double* g = self.grad.data() + (o * total + start) * inner;
              double* dst = p.grad.data() + o * chunk;
              for (std::size_t i = 0; i < chunk; ++i) dst[i] += g[i];
            }
          }
          start += lens[k];
        }
      });
}

Tensor pad_reflect(const Tensor& x, std::size_t top, std::size_t bottom, std::size_t left,
                   std::size_t right) {
  require_chw(x, "pad_reflect");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = h + top + bottom, ow = w + left + right;
  std::vector<std::uint32_t> index(c * oh * ow);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      const auto sy = reflect_index(static_cast<long>(y) - static_cast<long>(top), static_cast<long>(h));
      for (std::size_t xx = 0; xx < ow; ++xx) {
        const auto sx =
            reflect_index(static_cast<long>(xx) - static_cast<long>(left), static_cast<long>(w));
        index[(ch * oh + y) * ow + xx] = static_cast<std::uint32_t>((ch * h + sy) * w + sx);
      }
    }
  }
  return gather(x, std::move(index), {c, oh, ow});
}

Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  require_chw(x, "crop");
  const std::size_t c = x.dim(0), H = x.dim(1), W = x.dim(2);
  if (y0 + h > H || x0 + w > W) throw ShapeError("crop window exceeds input " + to_string(x.shape()));
  std::vector<std::uint32_t> index(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        index[(ch * h + y) * w + xx] = static_cast<std::uint32_t>((ch * H + y0 + y) * W + x0 + xx);
      }
    }
  }
  return gather(x, std::move(index), {c, h, w});
}

Tensor upsample_nearest2(const Tensor& x) {
  require_chw(x, "upsample_nearest2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<std::uint32_t> index(c * 4 * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        index[(ch * 2 * h + y) * 2 * w + xx] = static_cast<std::uint32_t>((ch * h + y / 2) * w + xx / 2);
      }
    }
  }
  return gather(x, std::move(index), {c, 2 * h, 2 * w});
}

Tensor flip_horizontal(const Tensor& x) {
  require_chw(x, "flip_horizontal");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<std::uint32_t> index(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        index[(ch * h + y) * w + xx] = static_cast<std::uint32_t>((ch * h + y) * w + (w - 1 - xx));
      }
    }
  }
  return gather(x, std::move(index), {c, h, w});
}

Tensor rot90(const Tensor& x, int quarter_turns) {
  require_chw(x, "rot90");
  const int turns = ((quarter_turns % 4) + 4) % 4;
  if (turns == 0) return reshape(x, x.shape());
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t oh = turns % 2 ? w : h;
  const std::size_t ow = turns % 2 ? h : w;
  std::vector<std::uint32_t> index(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx) {
        std::size_t sy = 0, sx = 0;
        // Counter-clockwise: output (y, x) reads input at the rotated position.
        switch (turns) {
          case 1: sy = xx; sx = w - 1 - y; break;
          case 2: sy = h - 1 - y; sx = w - 1 - xx; break;
          default: sy = h - 1 - xx; sx = y; break;
        }
        index[(ch * oh + y) * ow + xx] = static_cast<std::uint32_t>((ch * h + sy) * w + sx);
      }
    }
  }
  return gather(x, std::move(index), {c, oh, ow});
}

}  // namespace ssattn
