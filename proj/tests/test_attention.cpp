#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "ssattn/attention.hpp"
#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

using namespace ssattn;
using namespace ssattn::attention;
using oracle::vec;

namespace {

void fill(Tensor& t, Rng& rng, double lo = -0.5, double hi = 0.5) {
  for (auto& v : t.data_mut()) v = rng.uniform(lo, hi);
}

AttentionWeights random_weights(const AttentionBlockConfig& cfg, Rng& rng) {
  auto w = AttentionWeights::make(cfg, rng);
  for (auto* l : {&w.q, &w.k, &w.v, &w.proj}) {
    fill(l->weight, rng);
    fill(l->bias, rng);
  }
  fill(w.position_table, rng);
  return w;
}

AttentionBlockConfig small_config(std::size_t c, std::size_t heads, std::size_t w) {
  AttentionBlockConfig cfg;
  cfg.channels = c;
  cfg.heads = heads;
  cfg.window_side = w;
  return cfg;
}

SamplingField identity_field(const Tensor& xn, const AttentionBlockConfig& cfg, Rng& rng) {
  auto learner = OffsetLearner::make(cfg, rng);
  return learner.learn(xn, Tensor::full({1, xn.dim(1), xn.dim(2)}, 1.0), cfg);
}

}  // namespace

TEST_CASE("window_partition tiles row-major") {
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 0.0);
  auto p = vec(window_partition(Tensor({1, 4, 4}, v), 2));
  CHECK(p == std::vector<double>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
  Tensor one({2, 3, 3}, std::vector<double>(18, 1.5));
  CHECK(window_partition(one, 3).shape() == Shape{1, 2, 3, 3});
  CHECK(vec(window_partition(one, 3)) == vec(one));
  CHECK_THROWS_AS(window_partition(Tensor::zeros({1, 5, 4}), 2), ShapeError);
  CHECK_THROWS_AS(window_merge(Tensor::zeros({3, 1, 2, 2}), 4, 4), ShapeError);
}

TEST_CASE("window partition and merge roundtrip bitwise") {
  Rng rng(1);
  for (auto [c, h, w, ws] : std::vector<std::array<std::size_t, 4>>{{1, 4, 4, 2}, {3, 8, 12, 4}, {2, 6, 9, 3}, {4, 5, 5, 5}}) {
    auto x = oracle::random_tensor({c, h, w}, rng);
    CHECK(vec(window_merge(window_partition(x, ws), h, w)) == vec(x));
  }
  auto x = oracle::random_tensor({1, 4, 4}, rng);
  auto parts = window_partition(x, 2);
  std::vector<std::uint32_t> order{4, 5, 6, 7, 0, 1, 2, 3, 8, 9, 10, 11, 12, 13, 14, 15};
  auto permuted = gather(reshape(parts, {16}), order, {4, 1, 2, 2});
  CHECK(vec(window_merge(permuted, 4, 4)) != vec(x));
}

TEST_CASE("relative position bias") {
  CHECK(vec(relative_position_bias(Tensor::zeros({9, 2}), 2)) == std::vector<double>(32, 0.0));
  Rng rng(2);
  auto table = oracle::random_tensor({49, 1}, rng);
  auto b = vec(relative_position_bias(table, 4));
  for (std::size_t i = 1; i < 16; ++i) CHECK(b[i * 16 + i] == b[0]);
  const auto idx = relative_position_index(2);
  CHECK(std::set<std::uint32_t>(idx.begin(), idx.end()).size() == 9);
  CHECK(*std::max_element(idx.begin(), idx.end()) == 8);
}

TEST_CASE("sampling position arithmetic") {
  const std::size_t w = 2, h = 4, wd = 4;
  const Shape s{4, 1, w, w, 2};
  auto self = vec(sampling_positions(Tensor::full(s, 1.0), Tensor::zeros(s), w, h, wd));
  // window 3 (bottom right), in-window (1,0): x = 2, y = 3
  CHECK(self[((3 * 1 + 0) * 2 + 1) * 4 + 0] == 2.0);
  CHECK(self[((3 * 1 + 0) * 2 + 1) * 4 + 1] == 3.0);
  std::vector<double> bias(numel_of(s));
  for (std::size_t i = 0; i < bias.size(); i += 2) {
    bias[i] = 1.0;
    bias[i + 1] = 2.0;
  }
  for (std::size_t i = 0; i < bias.size(); ++i) {
    CHECK(sampling_positions(Tensor::zeros(s), Tensor(s, bias), w, h, wd).data()[i] == bias[i]);
  }
  auto far = vec(sampling_positions(Tensor::full({20, 1, 1, 1, 2}, 2.0), Tensor::zeros({20, 1, 1, 1, 2}), 1, 5, 4));
  // window 19 sits at (x=3, y=4)
  CHECK(far[38] == 6.0);
  CHECK(far[39] == 8.0);
}

TEST_CASE("offset learner starts at identity sampling") {
  Rng rng(3);
  auto cfg = small_config(4, 2, 2);
  auto xn = oracle::random_tensor({4, 4, 6}, rng);
  auto field = identity_field(xn, cfg, rng);
  for (double v : field.scale.data()) CHECK(v == 1.0);
  for (double v : field.bias.data()) CHECK(v == 0.0);
  const auto base = vec(sampling_positions(field.scale, field.bias, 2, 4, 6));
  const auto c = vec(field.coords);
  for (std::size_t i = 0; i < c.size(); i += 2) {
    CHECK(std::abs(c[i] - (base[i] * 2.0 / 5.0 - 1.0)) < 1e-15);
    CHECK(std::abs(c[i + 1] - (base[i + 1] * 2.0 / 3.0 - 1.0)) < 1e-15);
  }
}

TEST_CASE("offset learner: constraint scales the input linearly") {
  Rng rng(4);
  auto cfg = small_config(3, 1, 4);
  cfg.offset_activation = false;
  auto learner = OffsetLearner::make(cfg, rng);
  fill(learner.conv.weight, rng);
  fill(learner.scale_head.weight, rng);
  fill(learner.bias_head.weight, rng);
  fill(learner.bias_head.bias, rng);
  auto x = oracle::random_tensor({3, 4, 4}, rng);
  const double beta = 0.6;
  auto gated = learner.learn(x, Tensor::full({3, 4, 4}, beta), cfg);
  auto prescaled = learner.learn(scale(x, beta), Tensor::full({3, 4, 4}, 1.0), cfg);
  auto plain = learner.learn(x, Tensor::full({3, 4, 4}, 1.0), cfg);
  CHECK(oracle::max_abs_diff(gated.scale, prescaled.scale) < 1e-14);
  CHECK(oracle::max_abs_diff(gated.bias, prescaled.bias) < 1e-14);
  CHECK(oracle::max_abs_diff(gated.bias, plain.bias) > 1e-6);

  auto zero = learner.learn(Tensor::zeros({3, 4, 4}), Tensor::full({3, 4, 4}, 1.0), cfg);
  for (std::size_t i = 0; i < zero.bias.numel(); ++i) {
    CHECK(zero.bias.data()[i] == learner.bias_head.bias.data()[i]);
    CHECK(zero.scale.data()[i] == learner.scale_head.bias.data()[i]);
  }
}

TEST_CASE("SSA with identity sampling equals the window attention oracle") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 11);
    auto cfg = small_config(4, 2, 2);
    auto xn = oracle::random_tensor({4, 4, 6}, rng);
    auto weights = random_weights(cfg, rng);
    auto out = ssa_attention(xn, identity_field(xn, cfg, rng), weights, cfg);
    CHECK(oracle::max_abs_diff(out, oracle::window_attention(xn, weights, 2, 2)) < 1e-9);
  }
}

TEST_CASE("SSA degenerate cases") {
  Rng rng(5);
  auto cfg = small_config(3, 1, 1);
  auto xn = oracle::random_tensor({3, 2, 2}, rng);
  auto weights = random_weights(cfg, rng);
  auto out = vec(ssa_attention(xn, identity_field(xn, cfg, rng), weights, cfg));
  for (std::size_t p = 0; p < 4; ++p) {
    std::vector<double> tok{xn.data()[p], xn.data()[4 + p], xn.data()[8 + p]};
    const auto ref = oracle::linear(weights.proj, oracle::linear(weights.v, tok));
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(out[c * 4 + p] - ref[c]) < 1e-14);
  }

  auto cfg2 = small_config(4, 2, 2);
  auto x2 = oracle::random_tensor({4, 4, 4}, rng);
  auto w2 = random_weights(cfg2, rng);
  std::fill(w2.v.weight.data_mut().begin(), w2.v.weight.data_mut().end(), 0.0);
  auto o2 = vec(ssa_attention(x2, identity_field(x2, cfg2, rng), w2, cfg2));
  const auto ref = oracle::linear(w2.proj, std::vector<double>(w2.v.bias.data().begin(), w2.v.bias.data().end()));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t p = 0; p < 16; ++p) CHECK(std::abs(o2[c * 16 + p] - ref[c]) < 1e-14);

  SamplingField bad = identity_field(x2, cfg2, rng);
  bad.coords = reshape(bad.coords, {1, 4 * 2 * 2 * 2 * 2});
  CHECK_THROWS_AS(ssa_attention(x2, bad, w2, cfg2), ShapeError);
}

TEST_CASE("LR reductions equal the window attention oracle") {
  for (unsigned seed = 0; seed < 10; ++seed) {
    Rng rng(seed, 12);
    auto cfg = small_config(4, 2, 2);
    auto xn = oracle::random_tensor({4, 4, 6}, rng);
    auto weights = random_weights(cfg, rng);
    auto sigma = oracle::random_tensor({1, 4, 6}, rng, 0.2, 3.0);
    const auto ref = oracle::window_attention(xn, weights, 2, 2);

    auto a0 = cfg;
    a0.alpha = 0.0;
    CHECK(oracle::max_abs_diff(lr_attention(xn, sigma, weights, a0), ref) < 1e-9);
    auto k1 = cfg;
    k1.k_fraction = 1.0;
    CHECK(oracle::max_abs_diff(lr_attention(xn, sigma, weights, k1), ref) < 1e-9);
    CHECK(oracle::max_abs_diff(lr_attention(xn, Tensor::full({1, 4, 6}, 0.7), weights, cfg), ref) < 1e-9);
  }
}

TEST_CASE("LR matches the oracle with the top-k modulation") {
  Rng rng(6);
  auto cfg = small_config(4, 2, 2);
  cfg.k_fraction = 0.5;
  cfg.alpha = 0.3;
  auto xn = oracle::random_tensor({4, 2, 4}, rng);
  auto weights = random_weights(cfg, rng);
  auto sigma = oracle::random_tensor({1, 2, 4}, rng, 0.2, 3.0);
  const auto s = vec(sigma);
  // Per window, token affinities of the one-channel sigma patch, top 2 of 4.
  auto mod = [&](std::size_t win, std::size_t i, std::size_t j) {
    auto val = [&](std::size_t t) { return s[(t / 2) * 4 + win * 2 + t % 2]; };
    std::vector<double> row(4);
    for (std::size_t t = 0; t < 4; ++t) row[t] = val(i) * val(t);
    auto sorted = row;
    std::sort(sorted.rbegin(), sorted.rend());
    return row[j] >= sorted[1] ? 1.0 : 1.0 + cfg.alpha;
  };
  CHECK(oracle::max_abs_diff(lr_attention(xn, sigma, weights, cfg), oracle::window_attention(xn, weights, 2, 2, mod)) <
        1e-12);
  CHECK_THROWS_AS(lr_attention(xn, Tensor::full({1, 4, 4}, 1.0), weights, cfg), ShapeError);
}

TEST_CASE("LR is permutation equivariant without position bias") {
  Rng rng(7);
  auto cfg = small_config(4, 2, 3);
  auto weights = random_weights(cfg, rng);
  std::fill(weights.position_table.data_mut().begin(), weights.position_table.data_mut().end(), 0.0);
  auto x = oracle::random_tensor({4, 3, 3}, rng);
  auto sigma = oracle::random_tensor({1, 3, 3}, rng, 0.2, 3.0);
  std::vector<std::uint32_t> perm(9);
  std::iota(perm.begin(), perm.end(), 0u);
  for (std::size_t i = 8; i > 0; --i) std::swap(perm[i], perm[rng.integer(0, i)]);
  auto permute_tokens = [&](const Tensor& t) {
    std::vector<std::uint32_t> idx;
    for (std::size_t c = 0; c < t.dim(0); ++c)
      for (auto p : perm) idx.push_back(static_cast<std::uint32_t>(c * 9 + p));
    return gather(t, idx, t.shape());
  };
  auto a = permute_tokens(lr_attention(x, sigma, weights, cfg));
  auto b = lr_attention(permute_tokens(x), permute_tokens(sigma), weights, cfg);
  CHECK(oracle::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("IRM block contracts") {
  Rng rng(8);
  auto cfg = small_config(4, 2, 2);
  auto u = uncertainty::UncertaintyMap::from_log_sigma(oracle::random_tensor({1, 4, 4}, rng));
  auto x = oracle::random_tensor({4, 4, 4}, rng);
  for (auto kind : {BlockKind::SSA, BlockKind::LR}) {
    IrmBlock block(kind, cfg, rng);
    CHECK(block.forward(x, u).shape() == x.shape());
    nn::ParamList params;
    block.collect("b", params);
    for (auto& p : params) fill(p.tensor, rng);
    CHECK(block.forward(x, u).shape() == x.shape());
    for (auto* l : {&block.attn.proj, &block.ffn2}) {
      std::fill(l->weight.data_mut().begin(), l->weight.data_mut().end(), 0.0);
      std::fill(l->bias.data_mut().begin(), l->bias.data_mut().end(), 0.0);
    }
    CHECK(vec(block.forward(x, u)) == vec(x));
  }
  CHECK_THROWS_AS(IrmBlock(BlockKind::LR, cfg, rng).forward(oracle::random_tensor({4, 3, 4}, rng), u), ShapeError);
  CHECK(block_kind_at(0) == BlockKind::SSA);
  CHECK(block_kind_at(1) == BlockKind::LR);
  CHECK(block_kind_at(2) == BlockKind::SSA);
  CHECK(block_kind_at(5) == BlockKind::LR);
}

TEST_CASE("attention config validation") {
  auto cfg = small_config(6, 4, 2);
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  AttentionBlockConfig d;
  CHECK(d.beta == 0.6);
  CHECK(d.gamma == 0.8);
  CHECK(d.alpha == 0.2);
  CHECK(d.k_fraction == 0.8);
  CHECK(d.window_side == 8);
  CHECK(parse_global_kind("wsa") == GlobalKind::WSA);
  CHECK_THROWS_AS(parse_global_kind("nope"), ConfigError);
}

TEST_CASE("ablation baselines keep the shape") {
  Rng rng(9);
  auto cfg = small_config(4, 2, 2);
  auto xn = oracle::random_tensor({4, 4, 4}, rng);
  auto w = random_weights(cfg, rng);
  CHECK(channel_attention(xn, w, cfg).shape() == xn.shape());
  CHECK(interval_sparse_attention(xn, w, cfg).shape() == xn.shape());
  CHECK(global_attention(xn, w, 2).shape() == xn.shape());
}
