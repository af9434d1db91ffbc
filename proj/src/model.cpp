#include "ssattn/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssattn/errors.hpp"
#include "ssattn/ops.hpp"
#include "ssattn/uncertainty.hpp"

namespace ssattn::model {

namespace att = ssattn::attention;
namespace u = ssattn::uncertainty;

void ModelConfig::validate() const {
  if (levels == 0) throw ConfigError("levels must be positive");
  if (channels.size() != levels || irm_blocks.size() != levels || heads.size() != levels) {
    throw ConfigError("channels, irm_blocks and heads need one entry per level (" + std::to_string(levels) + ")");
  }
  for (std::size_t l = 0; l < levels; ++l) {
    if (l > 0 && channels[l] <= channels[l - 1]) throw ConfigError("channels must increase with depth");
    block_config(l).validate();
  }
  if (latent_heads == 0 || channels.back() % latent_heads != 0) {
    throw ConfigError("latent channels must be divisible by latent_heads");
  }
}

att::AttentionBlockConfig ModelConfig::block_config(std::size_t level) const {
  att::AttentionBlockConfig c;
  c.channels = channels.at(level);
  c.heads = heads.at(level);
  c.window_side = window_side;
  c.beta = beta;
  c.gamma = gamma;
  c.alpha = alpha;
  c.k_fraction = k_fraction;
  c.global_kind = global_kind;
  c.ablation = ablation;
  return c;
}

std::size_t ModelConfig::size_multiple() const { return window_side << (levels - 1); }

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0 && peak_lr >= base_lr)) throw ConfigError("need 0 <= base_lr <= peak_lr");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0,1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (crop == 0) throw ConfigError("crop must be positive");
}

std::size_t TrainConfig::period() const {
  if (cycle_period > 0) return cycle_period;
  return std::max<std::size_t>(steps / 4, 1);
}

namespace {

Tensor channel_slice(const Tensor& x, std::size_t first, std::size_t count) {
  const std::size_t plane = x.dim(1) * x.dim(2);
  std::vector<std::uint32_t> index(count * plane);
  std::iota(index.begin(), index.end(), static_cast<std::uint32_t>(first * plane));
  return gather(x, std::move(index), {count, x.dim(1), x.dim(2)});
}

Tensor downsample(Tensor x, std::size_t times) {
  for (std::size_t i = 0; i < times; ++i) x = avg_pool2(x);
  return x;
}

std::size_t ceil_div_pow2(std::size_t n, std::size_t level) { return (n + (std::size_t{1} << level) - 1) >> level; }

std::size_t round_up(std::size_t n, std::size_t m) { return (n + m - 1) / m * m; }

Tensor pad_to(const Tensor& x, std::size_t multiple) {
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t ph = round_up(h, multiple) - h, pw = round_up(w, multiple) - w;
  if (ph == 0 && pw == 0) return x;
  return pad_reflect(x, 0, ph, 0, pw);
}

Tensor crop_to(const Tensor& x, std::size_t h, std::size_t w) {
  if (x.dim(1) == h && x.dim(2) == w) return x;
  return crop(x, 0, 0, h, w);
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t levels = cfg_.levels;
  stem_ = nn::Conv2d::make(3, cfg_.channels[0], 3, rng);
  encoder_.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    for (int i = 0; i < 2; ++i) {
      encoder_[l].push_back({nn::Conv2d::make(cfg_.channels[l], cfg_.channels[l], 3, rng, 0.5),
                             nn::ChannelNorm::make(cfg_.channels[l])});
    }
    if (l + 1 < levels) down_.push_back(nn::Conv2d::make(cfg_.channels[l], cfg_.channels[l + 1], 3, rng));
  }
  const std::size_t cl = cfg_.channels.back();
  att::AttentionBlockConfig lcfg = cfg_.block_config(levels - 1);
  lcfg.heads = cfg_.latent_heads;
  for (std::size_t i = 0; i < cfg_.latent_blocks; ++i) {
    LatentBlock b;
    b.norm1 = nn::ChannelNorm::make(cl);
    b.norm2 = nn::ChannelNorm::make(cl);
    b.attn = att::AttentionWeights::make(lcfg, rng);
    b.attn.position_table = Tensor();
    b.ffn1 = nn::Linear::make(cl, 4 * cl, 0.02, rng);
    b.ffn2 = nn::Linear::zeros(4 * cl, cl);
    latent_.push_back(std::move(b));
  }
  for (std::size_t s = 0; s < levels; ++s) {
    Stage st;
    st.level = levels - 1 - s;
    const std::size_t c = cfg_.channels[st.level];
    if (s > 0) st.up = nn::Conv2d::make(cfg_.channels[st.level + 1], c, 3, rng);
    st.reduce = nn::Conv2d::make(2 * c, c, 1, rng);
    const auto bcfg = cfg_.block_config(st.level);
    for (std::size_t i = 0; i < cfg_.irm_blocks[st.level]; ++i) st.blocks.emplace_back(att::block_kind_at(i), bcfg, rng);
    st.head = nn::Linear::zeros(c, 4);
    stages_.push_back(std::move(st));
  }
}

ForwardResult Model::forward(const Tensor& x, std::vector<StageTrace>* trace) const {
  if (x.rank() != 3 || x.dim(0) != 3) throw ShapeError("model expects a [3,H,W] image, got " + ssattn::to_string(x.shape()));
  const std::size_t h = x.dim(1), w = x.dim(2), levels = cfg_.levels;
  const Tensor xp = pad_to(x, cfg_.size_multiple());

  std::vector<Tensor> skips;
  Tensor f = stem_(xp);
  for (std::size_t l = 0; l < levels; ++l) {
    for (const auto& b : encoder_[l]) f = add(f, gelu(b.norm(b.conv(f))));
    skips.push_back(f);
    if (l + 1 < levels) f = down_[l](avg_pool2(f));
  }

  const std::size_t cl = f.dim(0), hl = f.dim(1), wl = f.dim(2), pl = hl * wl;
  for (const auto& b : latent_) {
    f = add(f, att::global_attention(b.norm1(f), b.attn, cfg_.latent_heads));
    auto hidden = gelu(b.ffn1(reshape(b.norm2(f), {cl, pl})));
    f = add(f, reshape(b.ffn2(hidden), {cl, hl, wl}));
  }

  ForwardResult out;
  Tensor residual;
  Tensor log_sigma;  // most recent head output, at the current stage's padded scale
  for (const auto& st : stages_) {
    const std::size_t l = st.level;
    const Tensor& skip = skips[l];
    const Tensor up = st.up.weight.defined() ? st.up(upsample_nearest2(f)) : f;
    f = st.reduce(concat({up, skip}, 0));
    const std::size_t hp = f.dim(1), wp = f.dim(2);
    auto um = log_sigma.defined() ? u::UncertaintyMap::from_log_sigma(upsample_nearest2(log_sigma).detach())
                                  : u::UncertaintyMap::neutral(1, hp, wp);
    StageTrace* stage_trace = nullptr;
    if (trace) {
      trace->push_back({l, hp, wp, {}, {}});
      stage_trace = &trace->back();
    }
    for (const auto& block : st.blocks) {
      att::BlockTrace bt;
      f = block.forward(f, um, stage_trace ? &bt : nullptr);
      auto head = st.head.apply_map(f);
      residual = channel_slice(head, 0, 3);
      log_sigma = channel_slice(head, 3, 1);
      um = u::UncertaintyMap::from_log_sigma(log_sigma.detach());
      if (stage_trace) {
        stage_trace->blocks.push_back(std::move(bt));
        stage_trace->log_sigma.push_back(crop_to(log_sigma.detach(), ceil_div_pow2(h, l), ceil_div_pow2(w, l)));
      }
    }
    if (!residual.defined() || residual.dim(1) != hp) {
      // Stage without blocks: the head reads the reduced features directly.
      auto head = st.head.apply_map(f);
      residual = channel_slice(head, 0, 3);
      log_sigma = channel_slice(head, 3, 1);
    }
    const std::size_t hs = ceil_div_pow2(h, l), ws = ceil_div_pow2(w, l);
    auto base = downsample(xp, l);
    out.stages.push_back({l, crop_to(add(base, residual), hs, ws), crop_to(log_sigma, hs, ws)});
  }
  out.final = add(x, crop_to(residual, h, w));
  return out;
}

nn::ParamList Model::parameters() const {
  nn::ParamList p;
  stem_.collect("stem", p);
  for (std::size_t l = 0; l < encoder_.size(); ++l) {
    for (std::size_t i = 0; i < encoder_[l].size(); ++i) {
      const std::string name = "encoder." + std::to_string(l) + "." + std::to_string(i);
      encoder_[l][i].conv.collect(name + ".conv", p);
      encoder_[l][i].norm.collect(name + ".norm", p);
    }
    if (l < down_.size()) down_[l].collect("down." + std::to_string(l), p);
  }
  for (std::size_t i = 0; i < latent_.size(); ++i) {
    const std::string name = "latent." + std::to_string(i);
    latent_[i].norm1.collect(name + ".norm1", p);
    latent_[i].attn.collect(name + ".attn", p);
    latent_[i].norm2.collect(name + ".norm2", p);
    latent_[i].ffn1.collect(name + ".ffn1", p);
    latent_[i].ffn2.collect(name + ".ffn2", p);
  }
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    const auto& st = stages_[s];
    const std::string name = "decoder." + std::to_string(st.level);
    if (st.up.weight.defined()) st.up.collect(name + ".up", p);
    st.reduce.collect(name + ".reduce", p);
    for (std::size_t i = 0; i < st.blocks.size(); ++i) st.blocks[i].collect(name + ".irm." + std::to_string(i), p);
    st.head.collect(name + ".head", p);
  }
  return p;
}

Tensor psnr_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) throw ShapeError("psnr_loss: shape mismatch");
  auto mse = mean(square(sub(pred, gt)));
  return scale(log(add_scalar(mse, 1e-12)), 10.0 / std::log(10.0));
}

Tensor edge_loss(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape() || pred.rank() != 3) throw ShapeError("edge_loss: shape mismatch");
  const std::size_t h = pred.dim(1), w = pred.dim(2);
  auto d = sub(pred, gt);
  Tensor total = Tensor::scalar(0.0);
  if (w > 1) total = add(total, mean(abs(sub(crop(d, 0, 1, h, w - 1), crop(d, 0, 0, h, w - 1)))));
  if (h > 1) total = add(total, mean(abs(sub(crop(d, 1, 0, h - 1, w), crop(d, 0, 0, h - 1, w)))));
  return total;
}

std::vector<Tensor> stage_targets(const Tensor& gt, const ForwardResult& out, std::size_t multiple) {
  const Tensor gp = pad_to(gt, multiple);
  std::vector<Tensor> targets;
  for (const auto& s : out.stages) {
    targets.push_back(crop_to(downsample(gp, s.level), s.derained.dim(1), s.derained.dim(2)));
  }
  return targets;
}

namespace {

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DomainError("non-finite loss term: " + what);
}

}  // namespace

LossTerms total_loss(const ForwardResult& out, const Tensor& gt, const TrainConfig& tcfg, std::size_t size_multiple) {
  LossTerms terms;
  Tensor lp, le;
  try {
    lp = psnr_loss(out.final, gt);
  } catch (const DomainError& e) {
    throw DomainError(std::string("non-finite loss term: psnr: ") + e.what());
  }
  try {
    le = edge_loss(out.final, gt);
  } catch (const DomainError& e) {
    throw DomainError(std::string("non-finite loss term: edge: ") + e.what());
  }
  terms.psnr = lp.item();
  terms.edge = le.item();
  require_finite(terms.psnr, "psnr");
  require_finite(terms.edge, "edge");
  Tensor total = add(scale(lp, tcfg.lambda_psnr), scale(le, tcfg.lambda_edge));
  const auto targets = stage_targets(gt, out, size_multiple);
  for (std::size_t s = 0; s < out.stages.size(); ++s) {
    const auto& st = out.stages[s];
    Tensor lu;
    try {
      lu = u::udl_loss(st.derained, targets[s], st.log_sigma);
    } catch (const DomainError& e) {
      throw DomainError("non-finite loss term: udl (stage at level " + std::to_string(st.level) + "): " + e.what());
    }
    const double v = lu.item();
    require_finite(v, "udl (stage at level " + std::to_string(st.level) + ")");
    terms.udl_per_stage.push_back(v);
    terms.udl += v;
    total = add(total, scale(lu, tcfg.lambda_udl));
  }
  terms.total = total;
  require_finite(total.item(), "total");
  return terms;
}

Adam::Adam(nn::ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    if (!t.has_grad()) continue;
    auto g = t.grad();
    auto data = t.data_mut();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < data.size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      data[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

double scheduled_lr(std::size_t step, const TrainConfig& tcfg) {
  const double period = static_cast<double>(tcfg.period());
  const double phase = std::fmod(static_cast<double>(step), period) / period;  // [0,1)
  const double tri = 1.0 - std::abs(2.0 * phase - 1.0);                       // 0 -> 1 -> 0
  return tcfg.base_lr + (tcfg.peak_lr - tcfg.base_lr) * tri;
}

StepStats train_step(const Model& model, const Batch& batch, Adam& opt, const TrainConfig& tcfg, std::size_t step) {
  if (batch.inputs.empty() || batch.inputs.size() != batch.targets.size()) throw ShapeError("train_step: bad batch");
  StepStats stats;
  stats.lr = scheduled_lr(step, tcfg);
  opt.zero_grad();
  const double inv = 1.0 / static_cast<double>(batch.inputs.size());
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    auto out = model.forward(batch.inputs[i]);
    auto terms = total_loss(out, batch.targets[i], tcfg, model.config().size_multiple());
    backward(scale(terms.total, inv));
    stats.total += terms.total.item() * inv;
    stats.psnr += terms.psnr * inv;
    stats.edge += terms.edge * inv;
    stats.udl += terms.udl * inv;
  }
  opt.step(stats.lr);
  return stats;
}

Tensor restore(const Model& model, const Tensor& x) {
  auto y = model.forward(x).final;
  std::vector<double> data(y.data().begin(), y.data().end());
  for (auto& v : data) v = std::clamp(v, 0.0, 1.0);
  return Tensor(y.shape(), std::move(data));
}

}  // namespace ssattn::model
