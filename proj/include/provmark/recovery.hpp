#pragma once

#include <vector>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/nn.hpp"

namespace provmark {

class FaceCodec;

// largest image-token grid supported (256x256 at patch 8)
inline constexpr int kMaxTokens = 1024;

struct RecoveryInput {
  Image edited_masked;       // tampered pixels zeroed
  Image proxy;               // decoded face latent
  LatentCode face_latent;    // extracted latent (watermark tokens)
  ManipulationMask mask;     // soft during training, binary at inference
};

// One token per gate value: t_x + gate * MHA(ln(t_x) -> ln(t_wm)). With a
// zero gate the watermark stream cannot influence the output at all.
Tensor gated_cross_attention(const MultiHeadAttention& mha,
                             const LayerNorm& ln_q, const LayerNorm& ln_kv,
                             const Tensor& t_x, const Tensor& t_wm,
                             const Tensor& gate);

// Downsample a (1,H,W) mask to one gate value per PxP token (area average).
// rethreshold=true re-binarizes at 0.5 (inference on binary masks).
Tensor mask_to_gate(const Tensor& mask, int patch, bool rethreshold);

// Dual-stream recovery transformer: patch-embedded [edited_masked ; proxy]
// tokens run N blocks of self-attention, mask-gated cross-attention into the
// watermark tokens, and an MLP; a patch-unembed plus two refinement convs
// produce the image. Optional compositing keeps authentic pixels verbatim.
class Recovery {
 public:
  Recovery(const RecoveryConfig& cfg, const FaceCodecConfig& face,
           uint64_t seed);

  // network output in [0,1], before compositing; mask is the soft/binary
  // gate source at (1,H,W)
  Tensor forward(const Tensor& edited_masked, const Tensor& proxy,
                 const Tensor& latent, const Tensor& mask,
                 bool rethreshold_gate) const;

  // full inference path: binarized gate, then compositing when configured
  Image recover(const RecoveryInput& input) const;

  const RecoveryConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  struct Block {
    LayerNorm ln1, ln_q, ln_kv, ln2;
    MultiHeadAttention self_attn, cross_attn;
    Dense mlp1, mlp2;
  };

  RecoveryConfig cfg_;
  FaceCodecConfig face_;
  ParamStore ps_;
  Dense patch_embed_;
  Tensor pos_x_;
  Dense wm_embed_;
  Tensor pos_wm_;
  std::vector<Block> blocks_;
  LayerNorm ln_f_;
  Dense unembed_;
  Conv2d refine1_, refine2_;
};

}  // namespace provmark
