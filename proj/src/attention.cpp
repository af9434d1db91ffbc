#include "ssattn/attention.hpp"

#include <cmath>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"

namespace ssattn::attention {

namespace u = ssattn::uncertainty;

std::string to_string(GlobalKind kind) {
  switch (kind) {
    case GlobalKind::SSA: return "ssa";
    case GlobalKind::WSA: return "wsa";
    case GlobalKind::CSA: return "csa";
    case GlobalKind::SA: return "sa";
  }
  return "ssa";
}

GlobalKind parse_global_kind(const std::string& name) {
  if (name == "ssa") return GlobalKind::SSA;
  if (name == "wsa") return GlobalKind::WSA;
  if (name == "csa") return GlobalKind::CSA;
  if (name == "sa") return GlobalKind::SA;
  throw ConfigError("unknown attention kind '" + name + "' (expected ssa|wsa|csa|sa)");
}

void AttentionBlockConfig::validate() const {
  if (heads == 0 || channels == 0 || channels % heads != 0) {
    throw ConfigError("channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                      std::to_string(heads) + ")");
  }
  if (window_side == 0) throw ConfigError("window side must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0,1)");
  if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0,1]");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(k_fraction > 0.0 && k_fraction <= 1.0)) throw ConfigError("k must lie in (0,1]");
}

namespace {

void require_divisible(const Tensor& x, std::size_t w) {
  if (x.rank() != 3) throw ShapeError("expected [C,H,W], got " + ssattn::to_string(x.shape()));
  if (w == 0 || x.dim(1) % w != 0 || x.dim(2) % w != 0) {
    throw ShapeError("extents " + ssattn::to_string(x.shape()) + " not divisible by window " +
                     std::to_string(w));
  }
}

// Index map of the fixed-interval grouping: group (a, b) collects pixels
// (i*Ih + a, j*Iw + b), laid out as window (a, b) of the rearranged map.
std::vector<std::uint32_t> interval_index(std::size_t c, std::size_t h, std::size_t wd, std::size_t w,
                                          bool inverse) {
  const std::size_t ih = h / w, iw = wd / w;
  std::vector<std::uint32_t> index(c * h * wd);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t a = 0; a < ih; ++a) {
      for (std::size_t b = 0; b < iw; ++b) {
        for (std::size_t i = 0; i < w; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            const std::size_t src = (ch * h + i * ih + a) * wd + j * iw + b;
            const std::size_t dst = (ch * h + a * w + i) * wd + b * w + j;
            if (inverse) {
              index[src] = static_cast<std::uint32_t>(dst);
            } else {
              index[dst] = static_cast<std::uint32_t>(src);
            }
          }
        }
      }
    }
  }
  return index;
}

}  // namespace

Tensor window_partition(const Tensor& x, std::size_t w) {
  require_divisible(x, w);
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t mh = h / w, mw = wd / w;
  std::vector<std::uint32_t> index(c * h * wd);
  std::size_t k = 0;
  for (std::size_t my = 0; my < mh; ++my) {
    for (std::size_t mx = 0; mx < mw; ++mx) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < w; ++i) {
          for (std::size_t j = 0; j < w; ++j) {
            index[k++] = static_cast<std::uint32_t>((ch * h + my * w + i) * wd + mx * w + j);
          }
        }
      }
    }
  }
  return gather(x, std::move(index), {mh * mw, c, w, w});
}

Tensor window_merge(const Tensor& windows, std::size_t height, std::size_t width) {
  if (windows.rank() != 4 || windows.dim(2) != windows.dim(3)) {
    throw ShapeError("window_merge expects [M,C,w,w], got " + ssattn::to_string(windows.shape()));
  }
  const std::size_t m = windows.dim(0), c = windows.dim(1), w = windows.dim(2);
  if (height % w != 0 || width % w != 0 || m != (height / w) * (width / w)) {
    throw ShapeError("window_merge: " + std::to_string(m) + " windows of side " + std::to_string(w) +
                     " cannot tile " + std::to_string(height) + "x" + std::to_string(width));
  }
  const std::size_t mw = width / w;
  std::vector<std::uint32_t> index(c * height * width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const std::size_t win = (y / w) * mw + x / w;
        index[(ch * height + y) * width + x] =
            static_cast<std::uint32_t>(((win * c + ch) * w + y % w) * w + x % w);
      }
    }
  }
  return gather(windows, std::move(index), {c, height, width});
}

Tensor window_tokens(const Tensor& x, std::size_t w, std::size_t heads, bool channels_last) {
  require_divisible(x, w);
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  if (heads == 0 || c % heads != 0) throw ShapeError("window_tokens: channels not divisible by heads");
  const std::size_t d = c / heads, n = w * w, mw = wd / w, m = (h / w) * mw;
  std::vector<std::uint32_t> index(c * h * wd);
  for (std::size_t win = 0; win < m; ++win) {
    const std::size_t oy = (win / mw) * w, ox = (win % mw) * w;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t dd = 0; dd < d; ++dd) {
        const std::size_t ch = hd * d + dd;
        for (std::size_t t = 0; t < n; ++t) {
          const std::size_t src = (ch * h + oy + t / w) * wd + ox + t % w;
          const std::size_t dst = channels_last ? ((win * heads + hd) * n + t) * d + dd
                                                : ((win * heads + hd) * d + dd) * n + t;
          index[dst] = static_cast<std::uint32_t>(src);
        }
      }
    }
  }
  Shape shape = channels_last ? Shape{m, heads, n, d} : Shape{m, heads, d, n};
  return gather(x, std::move(index), std::move(shape));
}

Tensor merge_window_tokens(const Tensor& t, std::size_t height, std::size_t width, std::size_t w) {
  if (t.rank() != 4 || t.dim(3) != w * w) throw ShapeError("merge_window_tokens expects [M,heads,d,N]");
  const std::size_t m = t.dim(0), heads = t.dim(1), d = t.dim(2), n = w * w;
  const std::size_t c = heads * d, mw = width / w;
  if (m != (height / w) * mw) throw ShapeError("merge_window_tokens: window count mismatch");
  std::vector<std::uint32_t> index(c * height * width);
  for (std::size_t win = 0; win < m; ++win) {
    const std::size_t oy = (win / mw) * w, ox = (win % mw) * w;
    for (std::size_t hd = 0; hd < heads; ++hd) {
      for (std::size_t dd = 0; dd < d; ++dd) {
        const std::size_t ch = hd * d + dd;
        for (std::size_t k = 0; k < n; ++k) {
          index[(ch * height + oy + k / w) * width + ox + k % w] =
              static_cast<std::uint32_t>(((win * heads + hd) * d + dd) * n + k);
        }
      }
    }
  }
  return gather(t, std::move(index), {c, height, width});
}

std::vector<std::uint32_t> relative_position_index(std::size_t w) {
  const std::size_t n = w * w, side = 2 * w - 1;
  std::vector<std::uint32_t> index(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t dy = i / w + (w - 1) - j / w;
      const std::size_t dx = i % w + (w - 1) - j % w;
      index[i * n + j] = static_cast<std::uint32_t>(dy * side + dx);
    }
  }
  return index;
}

Tensor relative_position_bias(const Tensor& table, std::size_t w) {
  const std::size_t side = 2 * w - 1;
  if (table.rank() != 2 || table.dim(0) != side * side) {
    throw ShapeError("position table must be [(2w-1)^2, heads], got " + ssattn::to_string(table.shape()));
  }
  const std::size_t heads = table.dim(1), n = w * w;
  const auto rel = relative_position_index(w);
  std::vector<std::uint32_t> index(heads * n * n);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t k = 0; k < n * n; ++k) index[h * n * n + k] = static_cast<std::uint32_t>(rel[k] * heads + h);
  }
  return gather(table, std::move(index), {heads, n, n});
}

Tensor sampling_positions(const Tensor& scale, const Tensor& bias, std::size_t w, std::size_t height,
                          std::size_t width) {
  const auto& s = scale.shape();
  if (s.size() != 5 || s[2] != w || s[3] != w || s[4] != 2 || bias.shape() != s) {
    throw ShapeError("sampling field must be [M, heads, w, w, 2], got " + ssattn::to_string(s));
  }
  const std::size_t m = s[0], heads = s[1], mw = width / w;
  if (m != (height / w) * mw) throw ShapeError("sampling field window count does not match the map");
  std::vector<double> base(scale.numel());
  for (std::size_t win = 0; win < m; ++win) {
    const double oy = static_cast<double>((win / mw) * w), ox = static_cast<double>((win % mw) * w);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < w; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          const std::size_t k = (((win * heads + h) * w + i) * w + j) * 2;
          base[k] = ox + static_cast<double>(j);
          base[k + 1] = oy + static_cast<double>(i);
        }
      }
    }
  }
  return add(mul(Tensor(s, std::move(base)), scale), bias);
}

Tensor normalize_positions(const Tensor& positions, std::size_t height, std::size_t width) {
  const double fx = width > 1 ? 2.0 / static_cast<double>(width - 1) : 0.0;
  const double fy = height > 1 ? 2.0 / static_cast<double>(height - 1) : 0.0;
  return add_scalar(mul(positions, Tensor({2}, {fx, fy})), -1.0);
}

OffsetLearner OffsetLearner::make(const AttentionBlockConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.channels;
  const std::size_t outputs = cfg.heads * cfg.tokens() * 2;
  OffsetLearner o;
  o.conv = {nn::truncated_normal_parameter({c, c, 3, 3}, 0.02, rng), nn::parameter({c})};
  o.scale_head = nn::Linear::zeros(c, outputs);
  o.scale_head.bias = nn::parameter({outputs, 1}, 1.0);
  o.bias_head = nn::Linear::zeros(c, outputs);
  return o;
}

SamplingField OffsetLearner::learn(const Tensor& x, const Tensor& constraint,
                                   const AttentionBlockConfig& cfg) const {
  const std::size_t w = cfg.window_side;
  require_divisible(x, w);
  if (x.dim(0) != cfg.channels) throw ShapeError("offset learner: channel mismatch");
  if (constraint.defined() && (constraint.rank() != 3 || constraint.dim(1) != x.dim(1) ||
                               constraint.dim(2) != x.dim(2))) {
    throw ShapeError("offset learner: constraint " + ssattn::to_string(constraint.shape()) +
                     " does not match " + ssattn::to_string(x.shape()));
  }
  const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t n = w * w, m = (h / w) * (wd / w);
  Tensor features = conv(constraint.defined() ? mul(x, constraint) : x);
  if (cfg.offset_activation) features = gelu(features);
  auto pooled = scale(sum_axis(reshape(window_partition(features, w), {m, c, n}), 2, false),
                      1.0 / static_cast<double>(n));       // [M, C]
  auto per_channel = transpose_last2(pooled);                // [C, M]
  const Shape field_shape{m, cfg.heads, w, w, 2};
  SamplingField field;
  field.scale = reshape(transpose_last2(scale_head(per_channel)), field_shape);
  field.bias = reshape(transpose_last2(bias_head(per_channel)), field_shape);
  field.coords = normalize_positions(sampling_positions(field.scale, field.bias, w, h, wd), h, wd);
  return field;
}

void OffsetLearner::collect(const std::string& prefix, nn::ParamList& out) const {
  conv.collect(prefix + ".conv", out);
  scale_head.collect(prefix + ".scale_head", out);
  bias_head.collect(prefix + ".bias_head", out);
}

AttentionWeights AttentionWeights::make(const AttentionBlockConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.channels, side = 2 * cfg.window_side - 1;
  AttentionWeights a;
  a.q = nn::Linear::make(c, c, 0.02, rng);
  a.k = nn::Linear::make(c, c, 0.02, rng);
  a.v = nn::Linear::make(c, c, 0.02, rng);
  a.proj = nn::Linear::zeros(c, c);
  a.position_table = nn::truncated_normal_parameter({side * side, cfg.heads}, 0.02, rng);
  return a;
}

void AttentionWeights::collect(const std::string& prefix, nn::ParamList& out) const {
  q.collect(prefix + ".q", out);
  k.collect(prefix + ".k", out);
  v.collect(prefix + ".v", out);
  proj.collect(prefix + ".proj", out);
  if (position_table.defined()) out.push_back({prefix + ".position_table", position_table});
}

namespace {

// softmax(logits + bias) then aggregation of [M,h,d,N] values; back to a map.
Tensor attend(const Tensor& logits, const Tensor& values, std::size_t h, std::size_t wd, std::size_t w) {
  auto attn = softmax(logits, logits.rank() - 1);
  auto out = matmul(values, transpose_last2(attn));
  return merge_window_tokens(out, h, wd, w);
}

}  // namespace

Tensor ssa_attention(const Tensor& xn, const SamplingField& field, const AttentionWeights& weights,
                     const AttentionBlockConfig& cfg) {
  const std::size_t w = cfg.window_side;
  require_divisible(xn, w);
  const std::size_t h = xn.dim(1), wd = xn.dim(2);
  const std::size_t heads = cfg.heads, d = cfg.head_dim(), n = w * w, m = (h / w) * (wd / w);
  if (xn.dim(0) != cfg.channels) throw ShapeError("ssa_attention: channel mismatch");
  if (field.coords.shape() != Shape{m, heads, w, w, 2}) {
    throw ShapeError("ssa_attention: sampling field shape " + ssattn::to_string(field.coords.shape()));
  }
  auto q = window_tokens(weights.q.apply_map(xn), w, heads, true);  // [M,h,N,d]
  // Sampling is linear with weights summing to 1, so projecting before
  // sampling equals projecting the sampled tokens.
  auto grid = permute(field.coords, {1, 0, 2, 3, 4});  // [h, M, w, w, 2]
  auto sample = [&](const nn::Linear& proj) {
    auto map = reshape(proj.apply_map(xn), {heads, d, h, wd});
    auto s = grid_sample_grouped(map, grid);  // [h, d, M, w, w]
    return reshape(permute(s, {2, 0, 1, 3, 4}), {m, heads, d, n});
  };
  auto k = sample(weights.k);
  auto v = sample(weights.v);
  auto logits = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  logits = add(logits, relative_position_bias(weights.position_table, w));
  return weights.proj.apply_map(attend(logits, v, h, wd, w));
}

Tensor lr_modulation(const Tensor& sigma, const AttentionBlockConfig& cfg) {
  const std::size_t w = cfg.window_side;
  const auto cr = u::correlation_map(window_partition(sigma, w));  // [M,N,N]
  const std::size_t m = cr.values.dim(0), n = cr.values.dim(1);
  Tensor mod;
  if (cfg.ablation.lr_no_rs) {
    mod = add_scalar(scale(u::row_max_scaled(cr), -cfg.alpha), 1.0 + cfg.alpha);
  } else {
    mod = u::modulation_matrix(u::topk_row_mask(cr, cfg.k_fraction), cfg.alpha);
  }
  return reshape(mod, {m, 1, n, n});
}

Tensor window_attention(const Tensor& xn, const AttentionWeights& weights, const AttentionBlockConfig& cfg,
                        const Tensor& modulation) {
  const std::size_t w = cfg.window_side;
  require_divisible(xn, w);
  const std::size_t h = xn.dim(1), wd = xn.dim(2), heads = cfg.heads, d = cfg.head_dim();
  if (xn.dim(0) != cfg.channels) throw ShapeError("window_attention: channel mismatch");
  auto q = window_tokens(weights.q.apply_map(xn), w, heads, true);
  auto k = window_tokens(weights.k.apply_map(xn), w, heads, false);
  auto v = window_tokens(weights.v.apply_map(xn), w, heads, false);
  auto logits = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  if (modulation.defined()) logits = mul(logits, modulation);
  logits = add(logits, relative_position_bias(weights.position_table, w));
  return weights.proj.apply_map(attend(logits, v, h, wd, w));
}

Tensor lr_attention(const Tensor& xn, const Tensor& sigma, const AttentionWeights& weights,
                    const AttentionBlockConfig& cfg) {
  if (sigma.rank() != 3 || sigma.dim(1) != xn.dim(1) || sigma.dim(2) != xn.dim(2)) {
    throw ShapeError("lr_attention: uncertainty " + ssattn::to_string(sigma.shape()) + " does not match " +
                     ssattn::to_string(xn.shape()));
  }
  if (cfg.ablation.lr_no_ud) return window_attention(xn, weights, cfg, Tensor());
  return window_attention(xn, weights, cfg, lr_modulation(sigma, cfg));
}

Tensor channel_attention(const Tensor& xn, const AttentionWeights& weights, const AttentionBlockConfig& cfg) {
  const std::size_t c = xn.dim(0), h = xn.dim(1), wd = xn.dim(2), p = h * wd;
  const std::size_t heads = cfg.heads, d = cfg.head_dim();
  auto tokens = reshape(xn, {c, p});
  auto q = reshape(weights.q(tokens), {heads, d, p});
  auto k = reshape(weights.k(tokens), {heads, d, p});
  auto v = reshape(weights.v(tokens), {heads, d, p});
  auto logits = scale(matmul(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(p)));
  auto out = matmul(softmax(logits, 2), v);  // [heads, d, P]
  return reshape(weights.proj(reshape(out, {c, p})), {c, h, wd});
}

Tensor interval_sparse_attention(const Tensor& xn, const AttentionWeights& weights,
                                 const AttentionBlockConfig& cfg) {
  const std::size_t w = cfg.window_side;
  require_divisible(xn, w);
  const std::size_t c = xn.dim(0), h = xn.dim(1), wd = xn.dim(2);
  auto grouped = gather(xn, interval_index(c, h, wd, w, false), xn.shape());
  auto out = window_attention(grouped, weights, cfg, Tensor());
  return gather(out, interval_index(c, h, wd, w, true), xn.shape());
}

Tensor global_attention(const Tensor& xn, const AttentionWeights& weights, std::size_t heads) {
  const Shape shape = xn.shape();
  const std::size_t c = shape[0], p = xn.numel() / c;
  if (heads == 0 || c % heads != 0) throw ShapeError("global_attention: channels not divisible by heads");
  const std::size_t d = c / heads;
  auto tokens = reshape(xn, {c, p});
  auto q = transpose_last2(reshape(weights.q(tokens), {heads, d, p}));  // [h, P, d]
  auto k = reshape(weights.k(tokens), {heads, d, p});
  auto v = reshape(weights.v(tokens), {heads, d, p});
  auto logits = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(d)));
  auto out = matmul(v, transpose_last2(softmax(logits, 2)));  // [h, d, P]
  return reshape(weights.proj(reshape(out, {c, p})), shape);
}

BlockKind block_kind_at(std::size_t index) { return index % 2 == 0 ? BlockKind::SSA : BlockKind::LR; }

IrmBlock::IrmBlock(BlockKind kind, const AttentionBlockConfig& cfg, Rng& rng) : kind_(kind), cfg_(cfg) {
  cfg_.validate();
  const std::size_t c = cfg.channels;
  norm1 = nn::ChannelNorm::make(c);
  norm2 = nn::ChannelNorm::make(c);
  attn = AttentionWeights::make(cfg, rng);
  const bool global_slot = kind == BlockKind::SSA;
  if (global_slot && cfg.global_kind == GlobalKind::CSA) attn.position_table = Tensor();
  if (global_slot && cfg.global_kind == GlobalKind::SSA) offsets = OffsetLearner::make(cfg, rng);
  ffn1 = nn::Linear::make(c, 4 * c, 0.02, rng);
  ffn2 = nn::Linear::zeros(4 * c, c);
}

Tensor IrmBlock::constraint_for(const Tensor& sigma) const {
  if (cfg_.ablation.ssa_no_ud) return Tensor();
  if (cfg_.ablation.ssa_no_rs) return u::channel_max_scaled(sigma);
  return u::constraint_matrix(sigma, cfg_.gamma, cfg_.beta).values;
}

Tensor IrmBlock::forward(const Tensor& x, const u::UncertaintyMap& um, BlockTrace* trace) const {
  require_divisible(x, cfg_.window_side);
  if (x.dim(0) != cfg_.channels) throw ShapeError("irm_block: channel mismatch");
  const Tensor& sigma = um.sigma;
  if (sigma.rank() != 3 || sigma.dim(1) != x.dim(1) || sigma.dim(2) != x.dim(2)) {
    throw ShapeError("irm_block: uncertainty map " + ssattn::to_string(sigma.shape()) +
                     " does not match features " + ssattn::to_string(x.shape()));
  }
  const auto xn = norm1(x);
  Tensor a;
  if (kind_ == BlockKind::LR) {
    a = lr_attention(xn, sigma, attn, cfg_);
  } else {
    switch (cfg_.global_kind) {
      case GlobalKind::SSA: {
        auto field = offsets.learn(xn, constraint_for(sigma), cfg_);
        if (trace) trace->coords = field.coords.detach();
        a = ssa_attention(xn, field, attn, cfg_);
        break;
      }
      case GlobalKind::WSA: a = window_attention(xn, attn, cfg_, Tensor()); break;
      case GlobalKind::CSA: a = channel_attention(xn, attn, cfg_); break;
      case GlobalKind::SA: a = interval_sparse_attention(xn, attn, cfg_); break;
    }
  }
  auto x1 = add(x, a);
  const std::size_t c = x.dim(0), p = x.dim(1) * x.dim(2);
  auto hidden = gelu(ffn1(reshape(norm2(x1), {c, p})));
  return add(x1, reshape(ffn2(hidden), x.shape()));
}

void IrmBlock::collect(const std::string& prefix, nn::ParamList& out) const {
  norm1.collect(prefix + ".norm1", out);
  attn.collect(prefix + ".attn", out);
  if (offsets.conv.weight.defined()) offsets.collect(prefix + ".offsets", out);
  norm2.collect(prefix + ".norm2", out);
  ffn1.collect(prefix + ".ffn1", out);
  ffn2.collect(prefix + ".ffn2", out);
}

}  // namespace ssattn::attention
