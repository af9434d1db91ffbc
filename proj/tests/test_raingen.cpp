#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/metrics.hpp"
#include "ssattn/raingen.hpp"

using namespace ssattn;
using namespace ssattn::raingen;
using oracle::vec;

namespace {

double eq1_residual(const RainScene& s) {
  const std::size_t plane = s.background.dim(1) * s.background.dim(2);
  const auto b = vec(s.background), st = vec(s.streaks), m = vec(s.drop_mask), d = vec(s.drop_layer),
             r = vec(s.degraded);
  double worst = 0.0;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = c * plane + i;
      worst = std::max(worst, std::abs(r[k] - ((1.0 - m[i]) * (b[k] + st[k]) + s.eta * d[k])));
    }
  return worst;
}

double total(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v;
  return s;
}

}  // namespace

TEST_CASE("background") {
  GenConfig cfg;
  Rng a(1), b(1);
  auto x = gen_background(cfg, a);
  CHECK(vec(x) == vec(gen_background(cfg, b)));
  for (double v : vec(x)) CHECK((v >= 0.0 && v <= 1.0));

  cfg.noise_amplitude = 0.0;
  cfg.shape_count = {0, 0};
  Rng c(2);
  auto g = vec(gen_background(cfg, c));
  // A pure linear gradient: second differences vanish along both axes.
  const std::size_t h = cfg.height, w = cfg.width;
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 1; xx + 1 < w; ++xx) {
        const double* row = &g[(ch * h + y) * w];
        CHECK(std::abs(row[xx - 1] - 2 * row[xx] + row[xx + 1]) < 1e-12);
      }
}

TEST_CASE("streaks") {
  GenConfig cfg;
  cfg.streak_count = {0, 0};
  Rng r0(3);
  CHECK(total(gen_streaks(cfg, r0)) == 0.0);

  cfg = GenConfig{};
  Rng a(4), b(4);
  auto s = gen_streaks(cfg, a);
  CHECK(vec(s) == vec(gen_streaks(cfg, b)));
  for (double v : vec(s)) CHECK(v >= 0.0);

  const std::size_t h = 24, w = 32, r = 11;
  StreakSpec horiz{4.0, static_cast<double>(r), std::numbers::pi / 2, 20.0, 0.5};
  auto map = vec(render_streaks({horiz}, h, w, 2));
  double inside = 0.0;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = map[y * w + x];
      if (y + 1 < r || y > r + 1) CHECK(v == 0.0);
      inside += v;
    }
  CHECK(inside > 0.0);
}

TEST_CASE("drops") {
  GenConfig cfg;
  cfg.drop_count = {0, 0};
  Rng r0(5);
  auto bg = gen_background(cfg, r0);
  auto none = gen_drops(cfg, bg, r0);
  CHECK(total(none.mask) == 0.0);
  CHECK(total(none.layer) == 0.0);

  for (double rho : {2.5, 4.0, 7.3}) {
    const std::size_t n = 32;
    const double c = 15.5;
    auto mask = vec(render_drop_mask({{c, c, rho, rho}}, n, n));
    double oracle_count = 0;
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x)
        oracle_count += (x - c) * (x - c) + (y - c) * (y - c) <= rho * rho;
    double got = 0;
    for (double v : mask) {
      CHECK((v == 0.0 || v == 1.0));
      got += v;
    }
    CHECK(got == oracle_count);
    CHECK(std::abs(got - std::numbers::pi * rho * rho) <= rho * 2 * std::numbers::pi);
  }

  cfg = GenConfig{};
  Rng r1(6);
  auto bg2 = gen_background(cfg, r1);
  auto d = gen_drops(cfg, bg2, r1);
  const auto m = vec(d.mask), l = vec(d.layer);
  const std::size_t plane = cfg.height * cfg.width;
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      if (m[i] == 0.0) CHECK(l[c * plane + i] == 0.0);
}

TEST_CASE("compose examples") {
  Rng rng(7);
  auto b = oracle::random_tensor({3, 2, 2}, rng, 0, 1);
  auto z3 = Tensor::zeros({3, 2, 2});
  CHECK(vec(compose(b, z3, Tensor::zeros({1, 2, 2}), z3, 0.0).degraded) == vec(b));
  auto d = oracle::random_tensor({3, 2, 2}, rng, 0, 1);
  auto s = oracle::random_tensor({3, 2, 2}, rng, 0, 1);
  auto all = vec(compose(b, s, Tensor::full({1, 2, 2}, 1.0), d, 0.7).degraded);
  for (std::size_t i = 0; i < 12; ++i) CHECK(all[i] == 0.7 * d.data()[i]);

  std::vector<double> B{0.2, 0.4, 0.6, 0.8, 0.1, 0.3, 0.5, 0.7, 0.9, 0.0, 0.25, 0.75};
  std::vector<double> S{0.1, 0.0, 0.2, 0.0, 0.0, 0.3, 0.0, 0.1, 0.05, 0.05, 0.0, 0.0};
  std::vector<double> M{0, 1, 0, 1};
  std::vector<double> D{0, 0.9, 0, 0.6, 0, 0.5, 0, 0.4, 0, 0.8, 0, 0.2};
  auto r = vec(compose(Tensor({3, 2, 2}, B), Tensor({3, 2, 2}, S), Tensor({1, 2, 2}, M), Tensor({3, 2, 2}, D), 0.5)
                   .degraded);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 4; ++i) {
      const std::size_t k = c * 4 + i;
      CHECK(r[k] == (1.0 - M[i]) * (B[k] + S[k]) + 0.5 * D[k]);
    }
  CHECK_THROWS_AS(compose(b, z3, Tensor::zeros({1, 3, 2}), z3, 0.5), ShapeError);
}

TEST_CASE("generated scenes satisfy the imaging identity and mode contract") {
  for (auto mode : {Mode::RS, Mode::RD, Mode::RDS}) {
    GenConfig cfg;
    cfg.mode = mode;
    cfg.seed = 21;
    for (std::uint64_t i = 0; i < 10; ++i) {
      auto s = generate(cfg, i);
      CHECK(eq1_residual(s) == 0.0);
      if (mode == Mode::RS) CHECK(total(s.drop_mask) == 0.0);
      if (mode == Mode::RD) CHECK(total(s.streaks) == 0.0);
      if (mode == Mode::RDS) {
        CHECK(total(s.drop_mask) > 0.0);
        CHECK(total(s.streaks) > 0.0);
      }
    }
  }
}

TEST_CASE("generation is a pure function of config and index") {
  GenConfig cfg;
  cfg.seed = 5;
  auto a = generate(cfg, 3), b = generate(cfg, 3), c = generate(cfg, 4);
  CHECK(vec(a.degraded) == vec(b.degraded));
  CHECK(vec(a.degraded) != vec(c.degraded));
  cfg.seed = 6;
  CHECK(vec(generate(cfg, 3).degraded) != vec(a.degraded));
}

TEST_CASE("degraded PSNR on the default config stays in the fence") {
  GenConfig cfg;
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    cfg.seed = seed;
    auto s = generate(cfg, 0);
    auto r = vec(s.degraded);
    for (auto& v : r) v = std::clamp(v, 0.0, 1.0);
    sum += metrics::psnr(Tensor(s.degraded.shape(), r), s.background);
  }
  const double mean = sum / 100.0;
  CHECK(mean >= 12.0);
  CHECK(mean <= 30.0);
}

TEST_CASE("generator config validation") {
  GenConfig cfg;
  cfg.streak_count = {5, 2};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.eta = {0.5, 1.5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = GenConfig{};
  cfg.angle_jitter_deg = 20;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(parse_mode("rds") == Mode::RDS);
  CHECK_THROWS_AS(parse_mode("snow"), ConfigError);
}
