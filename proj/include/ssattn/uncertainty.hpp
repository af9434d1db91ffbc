#pragma once

#include <cstddef>

#include "ssattn/tensor.hpp"

namespace ssattn::uncertainty {

// Per-pixel Laplace scale. The network predicts log_sigma; sigma is derived
// from it and carries no gradient (every consumer of sigma is a ranking).
struct UncertaintyMap {
  Tensor log_sigma;  // [C,H,W]
  Tensor sigma;      // exp(log_sigma), constant

  static UncertaintyMap from_log_sigma(const Tensor& log_sigma);
  // log_sigma = 0, i.e. sigma = 1 everywhere.
  static UncertaintyMap neutral(std::size_t channels, std::size_t height, std::size_t width);
};

// Entries are exactly `beta` or exactly 1.
struct ConstraintMatrix {
  Tensor values;  // [C,H,W]
  double beta = 1.0;
};

// Token affinities A * A^T of an uncertainty patch; [N,N] or batched [M,N,N].
struct CorrelationMap {
  Tensor values;
};

// ceil(fraction * n) with a small guard against representation error in the
// product (0.05 * 20 must give 1, not 2). Clamped to [1, n].
std::size_t rank_count(double fraction, std::size_t n);

// mean over pixels of ( sum_c |pred - gt| / sigma + log sigma ).
// pred, gt: [C,H,W]; log_sigma: [1,H,W] broadcast over channels.
Tensor udl_loss(const Tensor& pred, const Tensor& gt, const Tensor& log_sigma);

// Per channel: entries >= the ceil((1-gamma)*H*W)-th largest value become 1,
// the rest become beta. Ties at the threshold are all admitted.
ConstraintMatrix constraint_matrix(const Tensor& sigma, double gamma, double beta);
ConstraintMatrix constraint_matrix(const UncertaintyMap& u, double gamma, double beta);

// u_patch [C,w,w] -> [N,N], or windows [M,C,w,w] -> [M,N,N], N = w*w.
// Contracts the channel axis between token pairs.
CorrelationMap correlation_map(const Tensor& u_patch);

// Per row, the ceil(k*N) largest entries (ties at the cut included) get 1.
Tensor topk_row_mask(const CorrelationMap& cr, double k_fraction);

// -alpha * mask + (1 + alpha).
Tensor modulation_matrix(const Tensor& mask, double alpha);

// Ranking-free counterparts used by the "w/o RS" ablation arms: the raw map
// rescaled into (0, 1] instead of being thresholded.
Tensor channel_max_scaled(const Tensor& sigma);
Tensor row_max_scaled(const CorrelationMap& cr);

}  // namespace ssattn::uncertainty
