#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssattn/attention.hpp"
#include "ssattn/layers.hpp"
#include "ssattn/tensor.hpp"

namespace ssattn::model {

struct ModelConfig {
  std::size_t levels = 3;
  std::vector<std::size_t> channels{8, 16, 32};   // per level, shallow to deep
  std::vector<std::size_t> irm_blocks{2, 2, 2};   // per level
  std::vector<std::size_t> heads{1, 2, 4};        // per level
  std::size_t latent_blocks = 2;
  std::size_t latent_heads = 4;
  std::size_t window_side = 4;
  double beta = 0.6;
  double gamma = 0.8;
  double alpha = 0.2;
  double k_fraction = 0.8;
  attention::GlobalKind global_kind = attention::GlobalKind::SSA;
  attention::Ablation ablation;

  void validate() const;
  attention::AttentionBlockConfig block_config(std::size_t level) const;
  // Input extents are padded up to a multiple of this.
  std::size_t size_multiple() const;
};

struct TrainConfig {
  double base_lr = 3e-4;
  double peak_lr = 3.6e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t cycle_period = 0;  // 0: steps / 4
  std::size_t crop = 64;
  std::size_t batch_size = 1;
  std::size_t steps = 2000;
  bool augment = true;
  double lambda_psnr = 1.0;
  double lambda_edge = 0.2;
  double lambda_udl = 1.0;
  std::size_t checkpoint_every = 500;

  void validate() const;
  std::size_t period() const;
};

struct StageOutput {
  std::size_t level = 0;
  Tensor derained;   // [3, H_s, W_s]
  Tensor log_sigma;  // [1, H_s, W_s]
};

struct StageTrace {
  std::size_t level = 0;
  std::size_t height = 0, width = 0;  // padded feature extents
  std::vector<attention::BlockTrace> blocks;
  std::vector<Tensor> log_sigma;  // after every block, cropped
};

struct ForwardResult {
  Tensor final;                     // [3,H,W], not clamped
  std::vector<StageOutput> stages;  // deepest first
};

class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  ForwardResult forward(const Tensor& x, std::vector<StageTrace>* trace = nullptr) const;

  nn::ParamList parameters() const;
  const ModelConfig& config() const { return cfg_; }

 private:
  struct EncoderBlock {
    nn::Conv2d conv;
    nn::ChannelNorm norm;
  };
  struct LatentBlock {
    nn::ChannelNorm norm1, norm2;
    attention::AttentionWeights attn;
    nn::Linear ffn1, ffn2;
  };
  struct Stage {
    std::size_t level = 0;
    nn::Conv2d up;  // undefined for the deepest stage
    nn::Conv2d reduce;
    std::vector<attention::IrmBlock> blocks;
    nn::Linear head;  // C -> 3 residual channels + log sigma
  };

  ModelConfig cfg_;
  nn::Conv2d stem_;
  std::vector<std::vector<EncoderBlock>> encoder_;
  std::vector<nn::Conv2d> down_;
  std::vector<LatentBlock> latent_;
  std::vector<Stage> stages_;
};

// Losses. Lower is better for all of them.
Tensor psnr_loss(const Tensor& pred, const Tensor& gt);
Tensor edge_loss(const Tensor& pred, const Tensor& gt);
// gt area-averaged to every stage's scale, in the order of `out.stages`.
std::vector<Tensor> stage_targets(const Tensor& gt, const ForwardResult& out, std::size_t multiple);

struct LossTerms {
  Tensor total;
  double psnr = 0.0;
  double edge = 0.0;
  double udl = 0.0;
  std::vector<double> udl_per_stage;
};

// Throws DomainError naming the term (and stage) on a non-finite value.
LossTerms total_loss(const ForwardResult& out, const Tensor& gt, const TrainConfig& tcfg,
                     std::size_t size_multiple);

class Adam {
 public:
  Adam(nn::ParamList params, double beta1, double beta2, double eps);

  void zero_grad();
  void step(double lr);
  std::size_t steps() const { return t_; }
  const nn::ParamList& params() const { return params_; }

 private:
  nn::ParamList params_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Triangular cycle from base_lr up to peak_lr and back over one period.
double scheduled_lr(std::size_t step, const TrainConfig& tcfg);

struct Batch {
  std::vector<Tensor> inputs;
  std::vector<Tensor> targets;
};

struct StepStats {
  double lr = 0.0;
  double total = 0.0;
  double psnr = 0.0;
  double edge = 0.0;
  double udl = 0.0;
};

// Mean loss over the batch, one Adam update.
StepStats train_step(const Model& model, const Batch& batch, Adam& opt, const TrainConfig& tcfg,
                     std::size_t step);

// Final image clamped to [0,1].
Tensor restore(const Model& model, const Tensor& x);

}  // namespace ssattn::model
