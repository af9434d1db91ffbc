#include "ssattn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ssattn/errors.hpp"

namespace ssattn {

namespace {

double scalar_value(const Tensor& t) {
  if (t.numel() != 1) throw ShapeError("gradcheck: function must be scalar-valued, got " + to_string(t.shape()));
  return t.item();
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double epsilon) {
  Tensor leaf = x.detach();
  leaf.set_requires_grad(true);
  return finite_difference_check([&] { return f(leaf); }, {leaf}, epsilon);
}

double finite_difference_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                               double epsilon) {
  for (auto& t : inputs) {
    if (!t.is_leaf()) throw ShapeError("gradcheck inputs must be leaf tensors");
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor loss = f();
  scalar_value(loss);
  backward(loss);

  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    auto data = t.data_mut();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + epsilon;
      const double up = scalar_value(f());
      data[i] = saved - epsilon;
      const double down = scalar_value(f());
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) return INFINITY;
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    t.zero_grad();
  }
  return worst;
}

std::vector<GradcheckRow> run_gradcheck_suite(const std::vector<GradcheckCase>& cases,
                                              const std::string& filter, unsigned seeds,
                                              double tolerance) {
  std::vector<GradcheckRow> rows;
  for (const auto& c : cases) {
    if (!filter.empty() && c.name != filter) continue;
    GradcheckRow row{c.name, 0.0, true};
    for (unsigned s = 0; s < seeds; ++s) row.max_rel_error = std::max(row.max_rel_error, c.run(s));
    row.passed = row.max_rel_error < tolerance;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace ssattn
