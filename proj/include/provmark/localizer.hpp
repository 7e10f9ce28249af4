#pragma once

#include <vector>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/nn.hpp"

namespace provmark {

// Per-pixel cosine similarity between two (C,H,W) feature maps -> (1,H,W),
// denominators floored at eps, output clamped to [-1,1].
Tensor similarity_map(const Tensor& f_img, const Tensor& f_wm, Scalar eps);

struct LocalizerOut {
  Tensor mhat;                    // soft mask (1,H,W)
  Tensor e_dec;                   // decoder-evidence logits (1,H,W)
  Tensor f_sim;                   // fused similarity logits (1,H,W)
  std::vector<Tensor> sim_maps;   // per-scale cosine maps (1,H_s,W_s)
};

// Dual-branch forgery localizer. The image branch is a conv U-Net whose
// decoder emits evidence logits E_dec; the watermark branch compares
// projected image features against the extractor's taps with per-pixel
// cosine similarity, fused by a small conv head. Combined as
// sigmoid(alpha * E_dec + (1-alpha) * F_sim), alpha = sigmoid(a_raw).
class Localizer {
 public:
  Localizer(const LocalizerConfig& cfg, const UrwConfig& urw, uint64_t seed);

  LocalizerOut forward(const Tensor& img,
                       const std::vector<Tensor>& wm_taps) const;

  ManipulationMask localize(const Image& img,
                            const std::vector<Tensor>& wm_features) const;

  // Eq. 2 fusion head alone (exposed for its unit contract)
  Tensor fuse_similarity(const std::vector<Tensor>& pyramid, int out_h,
                         int out_w) const;

  Scalar alpha() const;  // current sigmoid(a_raw)

  const LocalizerConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  LocalizerConfig cfg_;
  UrwConfig urw_;
  ParamStore ps_;
  Conv2d i1_, i2_, i3_, i4_, i5_;
  Conv2d u4_, u3_, u2_, u1_, ehead_;
  std::vector<Conv2d> proj_img_, proj_wm_;
  Conv2d g1_, g2_;
  InstanceNorm gnorm_;
  Tensor a_raw_;
};

}  // namespace provmark
