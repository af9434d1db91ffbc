#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ssattn/config.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/metrics.hpp"
#include "ssattn/report.hpp"

using namespace ssattn;
using namespace ssattn::metrics;
using oracle::vec;

TEST_CASE("rgb_to_y") {
  CHECK(rgb_to_y(Tensor::full({3, 1, 1}, 1.0)).item() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(rgb_to_y(Tensor::zeros({3, 1, 1})).item() == 0.0);
  CHECK(rgb_to_y(Tensor({3, 1, 1}, {1, 0, 0})).item() == 0.299);
  CHECK(rgb_to_y(Tensor({3, 1, 1}, {0, 1, 0})).item() == 0.587);
}

TEST_CASE("psnr examples") {
  Rng rng(1);
  auto a = oracle::random_tensor({1, 8, 8}, rng, 0, 1);
  CHECK(psnr(a, a) == 100.0);
  CHECK(std::abs(psnr(Tensor::full({1, 4, 4}, 1.0), Tensor::zeros({1, 4, 4}))) < 1e-12);
  CHECK(psnr(Tensor::full({1, 4, 4}, 0.6), Tensor::full({1, 4, 4}, 0.5)) == doctest::Approx(20.0));
  CHECK_THROWS_AS(psnr(a, Tensor::zeros({1, 8, 7})), ShapeError);
}

TEST_CASE("psnr decreases as noise grows") {
  Rng rng(2);
  auto a = oracle::random_tensor({1, 16, 16}, rng, 0, 1);
  auto n = oracle::random_tensor({1, 16, 16}, rng, -1, 1);
  double prev = 1e9;
  for (double s : {0.001, 0.01, 0.05, 0.1, 0.3}) {
    std::vector<double> b(256);
    for (std::size_t i = 0; i < 256; ++i) b[i] = a.data()[i] + s * n.data()[i];
    const double p = psnr(a, Tensor({1, 16, 16}, b));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("ssim examples") {
  Rng rng(3);
  auto a = oracle::random_tensor({1, 16, 16}, rng, 0, 1);
  CHECK(std::abs(ssim(a, a) - 1.0) <= 1e-12);
  const double ref = oracle::ssim(std::vector<double>(256, 0.0), std::vector<double>(256, 1.0), 16, 16);
  const double c1 = 1e-4;
  CHECK(std::abs(ref - c1 / (1.0 + c1)) < 1e-12);
  CHECK(std::abs(ssim(Tensor::zeros({1, 16, 16}), Tensor::full({1, 16, 16}, 1.0)) - ref) < 1e-12);

  std::vector<double> b(256);
  for (std::size_t i = 0; i < 256; ++i) b[i] = a.data()[i] + rng.normal(0.0, 1e-4);
  CHECK(ssim(a, Tensor({1, 16, 16}, b)) > 0.999);
  CHECK_THROWS_AS(ssim(Tensor::zeros({1, 10, 16}), Tensor::zeros({1, 10, 16})), ShapeError);
}

TEST_CASE("metrics match the direct-formula oracle") {
  Rng rng(4);
  for (int pair = 0; pair < 5; ++pair) {
    const std::size_t h = 12 + 5 * pair, w = 20 + 3 * pair;
    auto a = oracle::random_tensor({1, h, w}, rng, 0, 1);
    std::vector<double> b(h * w);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::clamp(a.data()[i] + rng.uniform(-0.2, 0.2), 0.0, 1.0);
    Tensor bt({1, h, w}, b);
    CHECK(std::abs(psnr(a, bt) - oracle::psnr(vec(a), b)) < 1e-9);
    CHECK(std::abs(ssim(a, bt) - oracle::ssim(vec(a), b, h, w)) < 1e-9);
    CHECK(std::abs(ssim(a, bt) - ssim(bt, a)) <= 1e-12);
  }
}

TEST_CASE("score_image uses the Y channel") {
  Rng rng(5);
  auto gt = oracle::random_tensor({3, 16, 16}, rng, 0, 1);
  auto deg = oracle::random_tensor({3, 16, 16}, rng, 0, 1);
  auto s = score_image("x", gt, deg, gt);
  CHECK(s.psnr_db == 100.0);
  CHECK(s.baseline_psnr_db == psnr(rgb_to_y(deg), rgb_to_y(gt)));
  CHECK(s.baseline_ssim == ssim(rgb_to_y(deg), rgb_to_y(gt)));
}

TEST_CASE("report schema roundtrip") {
  MetricReport r;
  r.images.push_back({"0000", 30.5, 0.91, 25.0, 0.8});
  r.images.push_back({"0001", 28.5, 0.89, 24.0, 0.7});
  r.finalize();
  auto j = report::to_json(r);
  report::validate(j);
  auto back = report::from_json(config::Json::parse(j.dump()));
  CHECK(back.images.size() == 2);
  CHECK(back.mean_psnr_db == r.mean_psnr_db);
  CHECK(report::to_json(back).dump() == j.dump());

  auto bad = j;
  bad["mean"]["psnr_db"] = 99.0;
  CHECK_THROWS_AS(report::validate(bad), ConfigError);
  bad = j;
  bad["count"] = 3;
  CHECK_THROWS_AS(report::validate(bad), ConfigError);
  bad = j;
  bad["images"][0]["ssim"] = 1.5;
  CHECK_THROWS_AS(report::validate(bad), ConfigError);
  bad = j;
  bad["extra"] = 1;
  CHECK_THROWS_AS(report::validate(bad), ConfigError);
}
