#include <cmath>

#include "ssattn/attention.hpp"
#include "ssattn/gradcheck.hpp"
#include "ssattn/ops.hpp"
#include "ssattn/rng.hpp"
#include "ssattn/uncertainty.hpp"

namespace ssattn {

namespace {

// Values bounded away from zero so abs/relu kinks are never straddled.
Tensor random_leaf(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, double min_abs = 0.1) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) {
    do {
      x = rng.uniform(lo, hi);
    } while (std::abs(x) < min_abs);
  }
  return Tensor(std::move(shape), std::move(v), true);
}

// Scalar probe: sum(out * r) for a fixed random r.
Tensor probe(const Tensor& out, const Tensor& r) { return sum(mul(out, r)); }

Tensor weights_like(const Shape& s, Rng& rng) {
  std::vector<double> v(numel_of(s));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(s, std::move(v));
}

using Build = std::function<double(Rng&)>;

GradcheckCase make_case(std::string name, Build build) {
  return {std::move(name), [build](unsigned seed) {
            Rng rng(seed, 0x6772616463ULL);
            return build(rng);
          }};
}

GradcheckCase unary(std::string name, Tensor (*op)(const Tensor&), double lo, double hi) {
  return make_case(std::move(name), [op, lo, hi](Rng& rng) {
    auto x = random_leaf({3, 4}, rng, lo, hi);
    auto r = weights_like(x.shape(), rng);
    return finite_difference_check([&] { return probe(op(x), r); }, {x});
  });
}

GradcheckCase binary(std::string name, Tensor (*op)(const Tensor&, const Tensor&), Shape sa, Shape sb,
                     double blo = -1.0) {
  return make_case(std::move(name), [op, sa, sb, blo](Rng& rng) {
    auto a = random_leaf(sa, rng);
    auto b = random_leaf(sb, rng, blo, 1.0, 0.3);
    auto r = weights_like(broadcast_shape(sa, sb), rng);
    return finite_difference_check([&] { return probe(op(a, b), r); }, {a, b});
  });
}

// Fills every parameter of an IRM block with random values. For SSA blocks
// (one window per map) the bias head's constant term is then solved so that
// every sampling position sits in the middle band of a bilinear cell, which
// keeps the probe smooth in all inputs.
void randomize_block(attention::IrmBlock& block, const Tensor& x, const uncertainty::UncertaintyMap& um,
                     Rng& rng) {
  nn::ParamList params;
  block.collect("b", params);
  for (auto& p : params) {
    for (auto& v : p.tensor.data_mut()) v = rng.uniform(-1.0, 1.0);
  }
  if (!block.offsets.conv.weight.defined()) return;
  const auto& cfg = block.config();
  const std::size_t h = x.dim(1), w = x.dim(2);
  for (auto& v : block.offsets.scale_head.weight.data_mut()) v = rng.uniform(-0.2, 0.2);
  for (auto& v : block.offsets.scale_head.bias.data_mut()) v = rng.uniform(0.8, 1.2);
  for (auto& v : block.offsets.bias_head.weight.data_mut()) v = rng.uniform(-1.0, 1.0);
  auto bias = block.offsets.bias_head.bias.data_mut();
  std::fill(bias.begin(), bias.end(), 0.0);
  auto field = block.offsets.learn(block.norm1(x), block.constraint_for(um.sigma), cfg);
  const Tensor positions = attention::sampling_positions(field.scale, field.bias, cfg.window_side, h, w);
  const auto pos = positions.data();
  for (std::size_t i = 0; i < bias.size(); ++i) {
    const std::size_t extent = i % 2 == 0 ? w : h;
    const double target = static_cast<double>(rng.integer(0, static_cast<std::int64_t>(extent) - 2)) + rng.uniform(0.3, 0.7);
    bias[i] = target - pos[i];
  }
}

double irm_case(attention::BlockKind kind, Rng& rng) {
  attention::AttentionBlockConfig cfg;
  cfg.channels = 4;
  cfg.heads = 2;
  cfg.window_side = 4;
  cfg.gamma = 0.5;
  cfg.k_fraction = 0.5;
  attention::IrmBlock block(kind, cfg, rng);
  auto x = random_leaf({4, 4, 4}, rng);
  std::vector<double> s(16);
  for (auto& v : s) v = rng.uniform(-1.0, 1.0);
  auto um = uncertainty::UncertaintyMap::from_log_sigma(Tensor({1, 4, 4}, s));
  randomize_block(block, x, um, rng);
  auto r = weights_like(x.shape(), rng);
  nn::ParamList params;
  block.collect("b", params);
  std::vector<Tensor> inputs{x};
  for (auto& p : params) {
    // The key bias shifts every logit of a row equally: its gradient is
    // identically zero and only roundoff would be compared.
    if (p.name != "b.attn.k.bias") inputs.push_back(p.tensor);
  }
  // Probing the block increment keeps the residual passthrough out of the
  // roundoff budget.
  return finite_difference_check([&] { return probe(sub(block.forward(x, um), x), r); }, inputs);
}

}  // namespace

std::vector<GradcheckCase> default_gradcheck_suite() {
  std::vector<GradcheckCase> cases;
  cases.push_back(binary("add", &add, {3, 4}, {4}));
  cases.push_back(binary("sub", &sub, {2, 3, 4}, {3, 1}));
  cases.push_back(binary("mul", &mul, {3, 4}, {3, 4}));
  cases.push_back(binary("div", &div, {3, 4}, {1, 4}));
  cases.push_back(unary("abs", &abs, -1.0, 1.0));
  cases.push_back(unary("exp", &exp, -1.0, 1.0));
  cases.push_back(unary("ln", &log, 0.2, 2.0));
  cases.push_back(unary("relu", &relu, -1.0, 1.0));
  cases.push_back(unary("gelu", &gelu, -2.0, 2.0));
  cases.push_back(make_case("scalar_mul", [](Rng& rng) {
    auto x = random_leaf({3, 4}, rng);
    auto r = weights_like(x.shape(), rng);
    const double s = rng.uniform(-2.0, 2.0);
    return finite_difference_check([&] { return probe(scale(x, s), r); }, {x});
  }));
  cases.push_back(make_case("sum_axis", [](Rng& rng) {
    auto x = random_leaf({3, 4, 2}, rng);
    auto r = weights_like({3, 1, 2}, rng);
    return finite_difference_check([&] { return probe(sum_axis(x, 1), r); }, {x});
  }));
  cases.push_back(make_case("matmul", [](Rng& rng) {
    auto a = random_leaf({2, 3, 4}, rng);
    auto b = random_leaf({4, 5}, rng);
    auto r = weights_like({2, 3, 5}, rng);
    return finite_difference_check([&] { return probe(matmul(a, b), r); }, {a, b});
  }));
  cases.push_back(make_case("softmax", [](Rng& rng) {
    auto x = random_leaf({3, 5}, rng, -2.0, 2.0);
    auto r = weights_like(x.shape(), rng);
    return finite_difference_check([&] { return probe(softmax(x, 1), r); }, {x});
  }));
  cases.push_back(make_case("normalize_channels", [](Rng& rng) {
    auto x = random_leaf({4, 6}, rng);
    auto r = weights_like(x.shape(), rng);
    return finite_difference_check([&] { return probe(normalize_channels(x), r); }, {x});
  }));
  cases.push_back(make_case("conv2d", [](Rng& rng) {
    auto x = random_leaf({2, 5, 4}, rng);
    auto w = random_leaf({3, 2, 3, 3}, rng);
    auto b = random_leaf({3}, rng);
    auto r = weights_like({3, 5, 4}, rng);
    return finite_difference_check([&] { return probe(conv2d(x, w, b), r); }, {x, w, b});
  }));
  cases.push_back(make_case("global_avgpool", [](Rng& rng) {
    auto x = random_leaf({3, 4, 5}, rng);
    auto r = weights_like({3, 1, 1}, rng);
    return finite_difference_check([&] { return probe(global_avgpool(x), r); }, {x});
  }));
  cases.push_back(make_case("avg_pool2", [](Rng& rng) {
    auto x = random_leaf({2, 4, 6}, rng);
    auto r = weights_like({2, 2, 3}, rng);
    return finite_difference_check([&] { return probe(avg_pool2(x), r); }, {x});
  }));
  cases.push_back(make_case("layout", [](Rng& rng) {
    auto x = random_leaf({2, 4, 4}, rng);
    auto r = weights_like({2, 12, 8}, rng);
    return finite_difference_check(
        [&] {
          auto p = pad_reflect(x, 1, 1, 2, 0);                                 // [2,6,6]
          auto u = upsample_nearest2(crop(rot90(flip_horizontal(p), 1), 0, 1, 6, 4));  // [2,12,8]
          return probe(permute(permute(u, {1, 2, 0}), {2, 0, 1}), r);
        },
        {x});
  }));
  cases.push_back(make_case("concat", [](Rng& rng) {
    auto a = random_leaf({2, 3}, rng);
    auto b = random_leaf({1, 3}, rng);
    auto r = weights_like({3, 3}, rng);
    return finite_difference_check([&] { return probe(concat({a, b}, 0), r); }, {a, b});
  }));
  cases.push_back(make_case("grid_sample", [](Rng& rng) {
    const std::size_t h = 5, w = 6;
    auto x = random_leaf({2, h, w}, rng);
    // Pixel positions in cell interiors, then normalized.
    std::vector<double> c(3 * 4 * 2);
    for (std::size_t i = 0; i < c.size(); i += 2) {
      const double px = static_cast<double>(rng.integer(0, w - 2)) + rng.uniform(0.2, 0.8);
      const double py = static_cast<double>(rng.integer(0, h - 2)) + rng.uniform(0.2, 0.8);
      c[i] = px * 2.0 / (w - 1) - 1.0;
      c[i + 1] = py * 2.0 / (h - 1) - 1.0;
    }
    Tensor coords({3, 4, 2}, c, true);
    auto r = weights_like({2, 3, 4}, rng);
    return finite_difference_check([&] { return probe(grid_sample_bilinear(x, coords), r); }, {x, coords});
  }));
  cases.push_back(make_case("udl_loss", [](Rng& rng) {
    auto pred = random_leaf({3, 4, 4}, rng);
    std::vector<double> g(pred.data().begin(), pred.data().end());
    for (auto& v : g) v += (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 0.5);
    Tensor gt({3, 4, 4}, g);
    auto ls = random_leaf({1, 4, 4}, rng);
    return finite_difference_check([&] { return uncertainty::udl_loss(pred, gt, ls); }, {pred, ls});
  }));
  cases.push_back(make_case("irm_block_ssa", [](Rng& rng) { return irm_case(attention::BlockKind::SSA, rng); }));
  cases.push_back(make_case("irm_block_lr", [](Rng& rng) { return irm_case(attention::BlockKind::LR, rng); }));
  return cases;
}

GradcheckCase faulty_gradcheck_case() {
  return make_case("faulty_square", [](Rng& rng) {
    auto x = random_leaf({3, 4}, rng);
    return finite_difference_check(
        [&] {
          // Forward x^2, backward claims 3x.
          std::vector<double> out(x.numel());
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * x.data()[i];
          auto y = Tensor::make_result("faulty_square", x.shape(), std::move(out), {&x}, [](detail::Node& self) {
            auto& p = *self.parents[0];
            p.ensure_grad();
            for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += 3.0 * p.data[i] * self.grad[i];
          });
          return sum(y);
        },
        {x});
  });
}

}  // namespace ssattn
