#include <algorithm>
#include <cmath>
#include <memory>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"
#include "kernels.hpp"

namespace ssattn {

namespace {

// Leading-dimension broadcast for batched matmul: per output batch, the
// offsets (in matrices) into a and b.
struct BatchPlan {
  Shape batch;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BatchPlan plan_batches(const Shape& a, const Shape& b) {
  Shape ba(a.begin(), a.end() - 2);
  Shape bb(b.begin(), b.end() - 2);
  BatchPlan plan;
  plan.batch = ba.empty() && bb.empty() ? Shape{} : broadcast_shape(ba.empty() ? Shape{1} : ba,
                                                                    bb.empty() ? Shape{1} : bb);
  if (ba.empty() && bb.empty()) {
    plan.a_index = {0};
    plan.b_index = {0};
    return plan;
  }
  const std::size_t r = plan.batch.size();
  auto strides = [&](const Shape& s) {
    std::vector<std::size_t> st(r, 0);
    std::size_t stride = 1;
    const std::size_t off = r - s.size();
    for (std::size_t i = s.size(); i-- > 0;) {
      st[i + off] = s[i] == 1 ? 0 : stride;
      stride *= s[i];
    }
    return st;
  };
  const auto sa = strides(ba);
  const auto sb = strides(bb);
  const std::size_t n = numel_of(plan.batch);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rem = i;
    std::size_t oa = 0;
    std::size_t ob = 0;
    for (std::size_t d = r; d-- > 0;) {
      const std::size_t c = rem % plan.batch[d];
      rem /= plan.batch[d];
      oa += c * sa[d];
      ob += c * sb[d];
    }
    plan.a_index[i] = oa;
    plan.b_index[i] = ob;
  }
  return plan;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) throw ShapeError("matmul needs rank >= 2 operands");
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) {
    throw ShapeError("matmul inner extents differ: " + to_string(sa) + " x " + to_string(sb));
  }
  auto plan = std::make_shared<BatchPlan>(plan_batches(sa, sb));
  const std::size_t batches = plan->a_index.size();
  std::vector<double> out(batches * m * n, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    const double* A = x.data() + plan->a_index[bi] * m * k;
    const double* B = y.data() + plan->b_index[bi] * k * n;
    double* C = out.data() + bi * m * n;
    // i-k-j order: each C[i][j] still accumulates over k in ascending order.
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double av = A[i * k + kk];
        const double* brow = B + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  Shape out_shape = plan->batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  return Tensor::make_result(
      "matmul", std::move(out_shape), std::move(out), {&a, &b}, [plan, m, k, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const std::size_t batches = plan->a_index.size();
        if (pa.requires_grad) pa.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t bi = 0; bi < batches; ++bi) {
          const double* G = self.grad.data() + bi * m * n;
          const double* A = pa.data.data() + plan->a_index[bi] * m * k;
          const double* B = pb.data.data() + plan->b_index[bi] * k * n;
          if (pa.requires_grad) {
            double* GA = pa.grad.data() + plan->a_index[bi] * m * k;
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t kk = 0; kk < k; ++kk) {
                GA[i * k + kk] += detail::dot(G + i * n, B + kk * n, n);
              }
            }
          }
          if (pb.requires_grad) {
            double* GB = pb.grad.data() + plan->b_index[bi] * k * n;
            for (std::size_t i = 0; i < m; ++i) {
              const double* grow = G + i * n;
              for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = A[i * k + kk];
                double* gbrow = GB + kk * n;
                for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
              }
            }
          }
        }
      });
}

Tensor transpose_last2(const Tensor& a) {
  const auto& s = a.shape();
  if (s.size() < 2) throw ShapeError("transpose_last2 needs rank >= 2");
  std::vector<std::size_t> axes(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) axes[i] = i;
  std::swap(axes[s.size() - 1], axes[s.size() - 2]);
  return permute(a, axes);
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const auto& s = x.shape();
  if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + to_string(s));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = in[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, in[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(in[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return Tensor::make_result(
      "softmax", s, std::move(out), {&x}, [outer, inner, len](detail::Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = o * len * inner + i;
            double dot = 0.0;
            for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
            for (std::size_t k = 0; k < len; ++k) {
              const std::size_t j = base + k * inner;
              p.grad[j] += y[j] * (g[j] - dot);
            }
          }
        }
      });
}

Tensor normalize_channels(const Tensor& x, double eps) {
  const auto& s = x.shape();
  const std::size_t c = s[0];
  const std::size_t cols = x.numel() / c;
  const auto in = x.data();
  std::vector<double> out(in.size());
  auto inv_std = std::make_shared<std::vector<double>>(cols);
  std::vector<double> mu(cols, 0.0);
  std::vector<double> var(cols, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < cols; ++p) mu[p] += in[ch * cols + p];
  }
  for (std::size_t p = 0; p < cols; ++p) mu[p] /= static_cast<double>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < cols; ++p) {
      const double d = in[ch * cols + p] - mu[p];
      var[p] += d * d;
    }
  }
  for (std::size_t p = 0; p < cols; ++p) {
    (*inv_std)[p] = 1.0 / std::sqrt(var[p] / static_cast<double>(c) + eps);
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t p = 0; p < cols; ++p) {
      out[ch * cols + p] = (in[ch * cols + p] - mu[p]) * (*inv_std)[p];
    }
  }
  return Tensor::make_result(
      "normalize_channels", s, std::move(out), {&x}, [c, cols, inv_std](detail::Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        const auto& y = self.data;
        const auto& g = self.grad;
        std::vector<double> gmean(cols, 0.0);
        std::vector<double> gymean(cols, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t q = 0; q < cols; ++q) {
            gmean[q] += g[ch * cols + q];
            gymean[q] += g[ch * cols + q] * y[ch * cols + q];
          }
        }
        const double inv_c = 1.0 / static_cast<double>(c);
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t q = 0; q < cols; ++q) {
            const std::size_t j = ch * cols + q;
            p.grad[j] += (*inv_std)[q] * (g[j] - gmean[q] * inv_c - y[j] * gymean[q] * inv_c);
          }
        }
      });
}

}  // namespace ssattn
