#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

namespace ssattn {

namespace {

constexpr double kDivFloor = 1e-12;

struct BroadcastPlan {
  Shape out;
  bool same = false;
  bool b_scalar = false;
  bool a_scalar = false;
  std::vector<std::uint32_t> ia;
  std::vector<std::uint32_t> ib;
};

std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - s.size();
  for (std::size_t i = s.size(); i-- > 0;) {
    strides[i + offset] = s[i] == 1 ? 0 : stride;
    stride *= s[i];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shape(a, b);
  if (a == b) {
    plan.same = true;
    return plan;
  }
  if (numel_of(b) == 1 && plan.out == a) {
    plan.b_scalar = true;
    return plan;
  }
  if (numel_of(a) == 1 && plan.out == b) {
    plan.a_scalar = true;
    return plan;
  }
  const auto sa = broadcast_strides(a, plan.out);
  const auto sb = broadcast_strides(b, plan.out);
  const std::size_t n = numel_of(plan.out);
  const std::size_t r = plan.out.size();
  plan.ia.resize(n);
  plan.ib.resize(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t oa = 0;
  std::size_t ob = 0;
  for (std::size_t i = 0; i < n; ++i) {
    plan.ia[i] = static_cast<std::uint32_t>(oa);
    plan.ib[i] = static_cast<std::uint32_t>(ob);
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      oa += sa[d];
      ob += sb[d];
      if (counter[d] < plan.out[d]) break;
      oa -= sa[d] * counter[d];
      ob -= sb[d] * counter[d];
      counter[d] = 0;
    }
  }
  return plan;
}

// Forward f(x, y); backward partials da(x, y, out) and db(x, y, out).
template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  const auto x = a.data();
  const auto y = b.data();
  const std::size_t n = numel_of(plan->out);
  std::vector<double> out(n);
  if (plan->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], y[i]);
  } else if (plan->b_scalar) {
    const double yv = y[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i], yv);
  } else if (plan->a_scalar) {
    const double xv = x[0];
    for (std::size_t i = 0; i < n; ++i) out[i] = f(xv, y[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(x[plan->ia[i]], y[plan->ib[i]]);
  }
  return Tensor::make_result(
      name, plan->out, std::move(out), {&a, &b}, [plan, da, db](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const auto& g = self.grad;
        const auto& o = self.data;
        const auto& xa = pa.data;
        const auto& yb = pb.data;
        const std::size_t count = g.size();
        auto ia = [&](std::size_t i) -> std::size_t {
          if (plan->same || plan->b_scalar) return i;
          if (plan->a_scalar) return 0;
          return plan->ia[i];
        };
        auto ib = [&](std::size_t i) -> std::size_t {
          if (plan->same || plan->a_scalar) return i;
          if (plan->b_scalar) return 0;
          return plan->ib[i];
        };
        if (pa.requires_grad) {
          pa.ensure_grad();
          for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = ia(i);
            const std::size_t k = ib(i);
            pa.grad[j] += g[i] * da(xa[j], yb[k], o[i]);
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          for (std::size_t i = 0; i < count; ++i) {
            const std::size_t j = ia(i);
            const std::size_t k = ib(i);
            pb.grad[k] += g[i] * db(xa[j], yb[k], o[i]);
          }
        }
      });
}

// Forward f(x); backward partial d(x, out).
template <class F, class D>
Tensor unary_op(const char* name, const Tensor& a, F f, D d) {
  const auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return Tensor::make_result(name, a.shape(), std::move(out), {&a}, [d](detail::Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * d(p.data[i], self.data[i]);
    }
  });
}

double gelu_value(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[i] = std::max(ea, eb);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (!(std::abs(v) >= kDivFloor)) throw DomainError("div: divisor magnitude below 1e-12");
  }
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(
      "scalar_mul", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor abs(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("ln: argument must be positive");
  }
  return unary_op(
      "ln", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  return unary_op("gelu", a, gelu_value, [](double x, double) { return gelu_grad(x); });
}

Tensor square(const Tensor& a) {
  return unary_op(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseKind::Add: return add(a, b);
    case ElementwiseKind::Sub: return sub(a, b);
    case ElementwiseKind::Mul: return mul(a, b);
    case ElementwiseKind::Div: return div(a, b);
    case ElementwiseKind::Abs: return abs(a);
    case ElementwiseKind::Exp: return exp(a);
    case ElementwiseKind::Ln: return log(a);
    case ElementwiseKind::Relu: return relu(a);
    case ElementwiseKind::Gelu: return gelu(a);
    case ElementwiseKind::ScalarMul:
      if (!b.defined() || b.numel() != 1) throw ShapeError("scalar-mul needs a one-element factor");
      return scale(a, b.item());
  }
  throw ConfigError("unknown elementwise kind");
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result("sum", {1}, {s}, {&a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad[0];
    for (auto& v : p.grad) v += g;
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.data()) s += v;
  return Tensor::make_result("mean", {1}, {s / n}, {&a}, [n](detail::Node& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad[0] / n;
    for (auto& v : p.grad) v += g;
  });
}

Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto& s = a.shape();
  if (axis >= s.size()) throw ShapeError("sum_axis: axis out of range for " + to_string(s));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto x = a.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t k = 0; k < len; ++k) {
      const double* row = x.data() + (o * len + k) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += row[i];
    }
  }
  Shape out_shape = s;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
  }
  return Tensor::make_result(
      "sum_axis", out_shape, std::move(out), {&a}, [outer, inner, len](detail::Node& self) {
        auto& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o) {
          const double* g = self.grad.data() + o * inner;
          for (std::size_t k = 0; k < len; ++k) {
            double* dst = p.grad.data() + (o * len + k) * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += g[i];
          }
        }
      });
}

}  // namespace ssattn
