#pragma once

#include "provmark/config.hpp"
#include "provmark/perceptual.hpp"
#include "provmark/tensor.hpp"

namespace provmark {

// All reductions are means so the loss weights are resolution-independent.

// pixel MSE + per-layer mean-L1 perceptual distance, summed over layers
Tensor embed_loss(const Tensor& i_wm, const Tensor& i_ori,
                  const PerceptualExtractor& phi);

// mean BCE-with-logits on the code bits + mean squared latent error
Tensor decode_loss(const Tensor& logits, const Tensor& code_targets,
                   const Tensor& z_hat, const Tensor& z);

// 1 - (2*|intersection| + eps) / (|pred| + |truth| + eps)
Tensor dice_loss(const Tensor& mhat, const Tensor& mstar, Scalar eps);

// pixel mean-L1 + perceptual mean-L1 per layer
Tensor rec_loss(const Tensor& i_hat, const Tensor& i_ori,
                const PerceptualExtractor& phi);

// L_embed + l1*L_decode + l2*L_loc + l3*L_rec; every part must be finite
Tensor total_loss(const Tensor& l_embed, const Tensor& l_decode,
                  const Tensor& l_loc, const Tensor& l_rec,
                  const LossWeights& w);

}  // namespace provmark
