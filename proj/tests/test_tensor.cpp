#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/gradcheck.hpp"
#include "ssattn/ops.hpp"

using namespace ssattn;
using oracle::vec;

TEST_CASE("elementwise examples") {
  CHECK(vec(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}))) == std::vector<double>{4, 6});
  CHECK(vec(scale(Tensor({2}, {2, 3}), 0.0)) == std::vector<double>{0, 0});
  CHECK(vec(abs(Tensor({2}, {-1.5, 2.0}))) == std::vector<double>{1.5, 2.0});
}

TEST_CASE("broadcast follows trailing dimensions") {
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3}, {10, 20, 30});
  CHECK(vec(add(a, b)) == std::vector<double>{11, 22, 33, 14, 25, 36});
  Tensor col({2, 1}, {1, -1});
  CHECK(vec(mul(a, col)) == std::vector<double>{1, 2, 3, -4, -5, -6});
  CHECK_THROWS_AS(add(a, Tensor({2}, {1, 2})), ShapeError);
}

TEST_CASE("domain guards") {
  CHECK_THROWS_AS(div(Tensor({2}, {1, 1}), Tensor({2}, {1, 1e-13})), DomainError);
  CHECK_THROWS_AS(log(Tensor({2}, {1, 0})), DomainError);
  CHECK_THROWS_AS(log(Tensor({1}, {-2})), DomainError);
}

TEST_CASE("matmul examples and oracle") {
  Tensor id({2, 2}, {1, 0, 0, 1});
  Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(vec(matmul(id, m)) == vec(m));
  CHECK(vec(matmul(Tensor({1, 2}, {1, 0}), Tensor({2, 1}, {5, 7}))) == std::vector<double>{5});
  CHECK(vec(matmul(m, Tensor({2, 2}, {5, 6, 7, 8}))) == std::vector<double>{19, 22, 43, 50});
  CHECK_THROWS_AS(matmul(m, Tensor({3, 1}, {1, 2, 3})), ShapeError);

  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto a = oracle::random_tensor({3, 3}, rng), b = oracle::random_tensor({3, 3}, rng);
    const auto ref = oracle::matmul(vec(a), vec(b), 3, 3, 3);
    const auto got = vec(matmul(a, b));
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("batched matmul broadcasts the leading dimension") {
  Rng rng(4);
  auto a = oracle::random_tensor({2, 3, 4}, rng), b = oracle::random_tensor({4, 2}, rng);
  const auto got = vec(matmul(a, b));
  const auto av = vec(a);
  for (std::size_t batch = 0; batch < 2; ++batch) {
    std::vector<double> slice(av.begin() + batch * 12, av.begin() + (batch + 1) * 12);
    const auto ref = oracle::matmul(slice, vec(b), 3, 4, 2);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(got[batch * 6 + i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("softmax examples") {
  auto s = vec(softmax(Tensor({3}, {0, 0, 0}), 0));
  for (double v : s) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  s = vec(softmax(Tensor({3}, {1000, 0, 0}), 0));
  CHECK(std::abs(s[0] - 1.0) <= 1e-12);
  CHECK(s[1] <= 1e-12);
  s = vec(softmax(Tensor({3}, {0, 1, 2}), 0));
  const double z = 1 + std::exp(1.0) + std::exp(2.0);
  const double ref[3] = {1 / z, std::exp(1.0) / z, std::exp(2.0) / z};
  CHECK(std::abs(ref[0] - 0.09003057) < 1e-8);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s[i] - ref[i]) < 1e-8);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto x = oracle::random_tensor({4, 7}, rng, -30, 30);
    const auto s = vec(softmax(x, 1));
    for (std::size_t r = 0; r < 4; ++r) {
      double sum = 0;
      for (std::size_t c = 0; c < 7; ++c) sum += s[r * 7 + c];
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("conv2d examples") {
  Rng rng(6);
  auto x = oracle::random_tensor({1, 4, 4}, rng);
  CHECK(vec(conv2d(x, Tensor({1, 1, 1, 1}, {1}), Tensor({1}, {0}))) == vec(x));

  Tensor box({1, 1, 3, 3}, std::vector<double>(9, 1.0 / 9));
  auto c = vec(conv2d(Tensor::full({1, 4, 4}, 5.0), box, Tensor({1}, {0})));
  CHECK(c[5] == doctest::Approx(5.0));
  CHECK(c[0] == doctest::Approx(5.0 * 4 / 9));
  CHECK(c[1] == doctest::Approx(5.0 * 6 / 9));

  std::vector<double> ramp(16);
  for (std::size_t i = 0; i < 16; ++i) ramp[i] = static_cast<double>(i);
  const auto got = vec(conv2d(Tensor({1, 4, 4}, ramp), box, Tensor({1}, {0})));
  const auto ref = oracle::conv2d(ramp, 1, 4, 4, std::vector<double>(9, 1.0 / 9), 1, 3, {0.0});
  for (std::size_t i = 0; i < 16; ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-12);

  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({1, 1, 2, 2}), Tensor({1}, {0})), ConfigError);
}

TEST_CASE("conv2d multi-channel oracle") {
  Rng rng(7);
  auto x = oracle::random_tensor({3, 5, 6}, rng);
  auto w = oracle::random_tensor({2, 3, 3, 3}, rng);
  auto b = oracle::random_tensor({2}, rng);
  const auto got = vec(conv2d(x, w, b));
  const auto ref = oracle::conv2d(vec(x), 3, 5, 6, vec(w), 2, 3, vec(b));
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - ref[i]) <= 1e-12);
}

TEST_CASE("global_avgpool") {
  CHECK(global_avgpool(Tensor::full({1, 3, 2}, 1.5)).item() == 1.5);
  Tensor x({1, 2, 2}, {1, 2, 3, 4}, true);
  auto y = global_avgpool(x);
  CHECK(y.item() == 2.5);
  backward(sum(y));
  for (double g : x.grad()) CHECK(g == 0.25);
}

TEST_CASE("grid_sample_bilinear") {
  Rng rng(8);
  const std::size_t h = 5, w = 7;
  auto x = oracle::random_tensor({2, h, w}, rng);
  std::vector<double> c;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      c.push_back(2.0 * j / (w - 1) - 1.0);
      c.push_back(2.0 * i / (h - 1) - 1.0);
    }
  CHECK(vec(grid_sample_bilinear(x, Tensor({h, w, 2}, c))) == vec(x));

  Tensor sq({1, 2, 2}, {1, 2, 3, 4});
  CHECK(grid_sample_bilinear(sq, Tensor({1, 1, 2}, {0, 0})).item() == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(grid_sample_bilinear(sq, Tensor({1, 1, 2}, {-5, -5})).item() == 1.0);
  CHECK(grid_sample_bilinear(sq, Tensor({1, 1, 2}, {9, 9})).item() == 4.0);
  CHECK_THROWS_AS(grid_sample_bilinear(sq, Tensor({1, 1, 2}, {NAN, 0})), DomainError);
}

TEST_CASE("backward examples") {
  Tensor x({3}, {1, -2, 3}, true);
  backward(sum(mul(x, x)));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, -4, 6});

  Tensor y({3}, {1, 2, 3}, true);
  Tensor c({3}, {4, 5, 6});
  backward(sum(mul(c, y)));
  CHECK(!c.has_grad());
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == vec(c));

  Tensor z({4}, {0.3, -1, 2, 0.5}, true);
  backward(sum(softmax(z, 0)));
  for (double g : z.grad()) CHECK(std::abs(g) < 1e-15);

  CHECK_THROWS_AS(backward(mul(z, z)), ShapeError);
}

TEST_CASE("fan-out gradients sum") {
  Tensor a({3}, {1, 2, 3}, true), b({3}, {1, 2, 3}, true);
  backward(sum(add(a, a)));
  backward(sum(scale(b, 2.0)));
  CHECK(std::vector<double>(a.grad().begin(), a.grad().end()) ==
        std::vector<double>(b.grad().begin(), b.grad().end()));
}

TEST_CASE("tape order is topological and visits once") {
  Tensor x({2}, {1, 2}, true);
  auto y = mul(x, x);
  auto z = add(y, y);
  Tape tape(sum(z));
  const auto& nodes = tape.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& p : nodes[i]->parents) {
      if (!p) continue;
      const auto it = std::find(nodes.begin(), nodes.end(), p.get());
      if (it != nodes.end()) CHECK(it - nodes.begin() < static_cast<long>(i));
    }
  CHECK(std::set<detail::Node*>(nodes.begin(), nodes.end()).size() == nodes.size());
}

TEST_CASE("finite_difference_check examples") {
  CHECK(finite_difference_check([](const Tensor& t) { return sum(mul(t, t)); }, Tensor({2}, {1, 2}, true)) < 1e-7);
  CHECK(finite_difference_check([](const Tensor&) { return Tensor::scalar(3.0); }, Tensor({2}, {1, 2}, true)) == 0.0);
  CHECK_THROWS_AS(finite_difference_check([](const Tensor& t) { return mul(t, t); }, Tensor({2}, {1, 2}, true)),
                  ShapeError);
}

TEST_CASE("gradcheck suite passes and the faulty op is caught") {
  const auto rows = run_gradcheck_suite(default_gradcheck_suite(), "", 10, 1e-4);
  CHECK(rows.size() >= 20);
  for (const auto& r : rows) {
    INFO(r.name << " " << r.max_rel_error);
    CHECK(r.passed);
  }
  const auto bad = run_gradcheck_suite({faulty_gradcheck_case()}, "", 3, 1e-4);
  CHECK_FALSE(bad[0].passed);
  CHECK(run_gradcheck_suite(default_gradcheck_suite(), "grid_sample", 2, 1e-4).size() == 1);
}

TEST_CASE("layout ops") {
  Tensor x({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(vec(flip_horizontal(x)) == std::vector<double>{3, 2, 1, 6, 5, 4});
  CHECK(vec(rot90(rot90(rot90(rot90(x, 1), 1), 1), 1)) == vec(x));
  CHECK(vec(crop(x, 1, 1, 1, 2)) == std::vector<double>{5, 6});
  CHECK(vec(pad_reflect(x, 0, 1, 0, 1)) == std::vector<double>{1, 2, 3, 2, 4, 5, 6, 5, 1, 2, 3, 2});
  CHECK(vec(avg_pool2(Tensor({1, 2, 2}, {1, 2, 3, 4}))) == std::vector<double>{2.5});
  CHECK(upsample_nearest2(x).shape() == Shape{1, 4, 6});
}
