#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssattn/layers.hpp"
#include "ssattn/rng.hpp"
#include "ssattn/tensor.hpp"
#include "ssattn/uncertainty.hpp"

namespace ssattn::attention {

enum class BlockKind { SSA, LR };

// What fills the SSA slot of an IRM stage. Everything other than SSA is an
// ablation baseline: plain windows (WSA), channel attention (CSA) and
// fixed-interval sparse grouping (SA).
enum class GlobalKind { SSA, WSA, CSA, SA };

std::string to_string(GlobalKind kind);
GlobalKind parse_global_kind(const std::string& name);

struct Ablation {
  bool ssa_no_ud = false;  // constraint matrix forced to 1
  bool ssa_no_rs = false;  // sigma rescaled to (0,1] instead of ranked
  bool lr_no_ud = false;   // no modulation
  bool lr_no_rs = false;   // row-scaled correlation instead of the Top-k mask

  bool any() const { return ssa_no_ud || ssa_no_rs || lr_no_ud || lr_no_rs; }
};

struct AttentionBlockConfig {
  std::size_t channels = 8;
  std::size_t window_side = 8;
  std::size_t heads = 1;
  double beta = 0.6;
  double gamma = 0.8;
  double alpha = 0.2;
  double k_fraction = 0.8;
  GlobalKind global_kind = GlobalKind::SSA;
  Ablation ablation;
  // Activation between the offset conv and the pooling. Off only in tests
  // that need the offset path to be linear in its input.
  bool offset_activation = true;

  std::size_t head_dim() const { return channels / heads; }
  std::size_t tokens() const { return window_side * window_side; }
  void validate() const;
};

// Per-patch, per-head, per-window-position affine sampling parameters.
struct SamplingField {
  Tensor scale;   // [M, heads, w, w, 2]
  Tensor bias;    // [M, heads, w, w, 2], pixel units
  Tensor coords;  // [M, heads, w, w, 2], normalized (x, y) over the full map
};

// [C,H,W] -> [M, C, w, w], windows in row-major order.
Tensor window_partition(const Tensor& x, std::size_t w);
// Inverse of window_partition.
Tensor window_merge(const Tensor& windows, std::size_t height, std::size_t width);

// [C,H,W] -> [M, heads, N, d] (or [M, heads, d, N] when `channels_last` is false).
Tensor window_tokens(const Tensor& x, std::size_t w, std::size_t heads, bool channels_last);
// [M, heads, d, N] -> [C,H,W].
Tensor merge_window_tokens(const Tensor& t, std::size_t height, std::size_t width, std::size_t w);

// Table row for each in-window token pair (i, j), N*N entries.
std::vector<std::uint32_t> relative_position_index(std::size_t w);
// table [(2w-1)^2, heads] -> [heads, N, N]
Tensor relative_position_bias(const Tensor& table, std::size_t w);

// Absolute pixel positions: (patch-origin + in-window offset) * scale + bias.
Tensor sampling_positions(const Tensor& scale, const Tensor& bias, std::size_t w, std::size_t height,
                          std::size_t width);
// Pixel positions -> [-1, 1] over the full map (align corners).
Tensor normalize_positions(const Tensor& positions, std::size_t height, std::size_t width);

struct OffsetLearner {
  nn::Conv2d conv;        // C -> C, 3x3
  nn::Linear scale_head;  // C -> heads * N * 2; starts at weight 0, bias 1
  nn::Linear bias_head;   // C -> heads * N * 2; starts at 0

  static OffsetLearner make(const AttentionBlockConfig& cfg, Rng& rng);
  // x [C,H,W]; constraint [1 or C, H, W].
  SamplingField learn(const Tensor& x, const Tensor& constraint, const AttentionBlockConfig& cfg) const;
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

struct AttentionWeights {
  nn::Linear q, k, v, proj;
  Tensor position_table;  // [(2w-1)^2, heads]

  static AttentionWeights make(const AttentionBlockConfig& cfg, Rng& rng);
  void collect(const std::string& prefix, nn::ParamList& out) const;
};

// Multi-head attention of window queries against sampled keys/values.
// xn [C,H,W] is the (normalized) full feature map; output excludes residual.
Tensor ssa_attention(const Tensor& xn, const SamplingField& field, const AttentionWeights& weights,
                     const AttentionBlockConfig& cfg);

// The multiplicative logit modulation for every window, [M, 1, N, N], built
// from the uncertainty map according to cfg (alpha, k, ablation switches).
Tensor lr_modulation(const Tensor& sigma, const AttentionBlockConfig& cfg);

// In-window attention whose scaled logits are multiplied by `modulation`
// ([M,1,N,N]) before the position bias is added. An undefined modulation
// gives plain window attention.
Tensor window_attention(const Tensor& xn, const AttentionWeights& weights, const AttentionBlockConfig& cfg,
                        const Tensor& modulation);

Tensor lr_attention(const Tensor& xn, const Tensor& sigma, const AttentionWeights& weights,
                    const AttentionBlockConfig& cfg);

// Ablation baselines for the SSA slot.
Tensor channel_attention(const Tensor& xn, const AttentionWeights& weights, const AttentionBlockConfig& cfg);
Tensor interval_sparse_attention(const Tensor& xn, const AttentionWeights& weights,
                                 const AttentionBlockConfig& cfg);

// Plain multi-head attention over all positions (no position bias).
Tensor global_attention(const Tensor& xn, const AttentionWeights& weights, std::size_t heads);

struct BlockTrace {
  Tensor coords;  // SSA blocks only: [M, heads, w, w, 2]
};

// Pre-norm transformer block: x + Attn(norm(x)), then + FFN(norm(.)).
class IrmBlock {
 public:
  IrmBlock(BlockKind kind, const AttentionBlockConfig& cfg, Rng& rng);

  // x [C,H,W] with H, W divisible by the window side. `u` is at x's resolution.
  Tensor forward(const Tensor& x, const uncertainty::UncertaintyMap& u, BlockTrace* trace = nullptr) const;

  // Constraint applied to the offset-learner input for this config.
  Tensor constraint_for(const Tensor& sigma) const;

  BlockKind kind() const { return kind_; }
  const AttentionBlockConfig& config() const { return cfg_; }
  void collect(const std::string& prefix, nn::ParamList& out) const;

  nn::ChannelNorm norm1, norm2;
  AttentionWeights attn;
  OffsetLearner offsets;
  nn::Linear ffn1, ffn2;

 private:
  BlockKind kind_;
  AttentionBlockConfig cfg_;
};

// Alternation order within a stage: SSA, LR, SSA, LR, ...
BlockKind block_kind_at(std::size_t index);

}  // namespace ssattn::attention
