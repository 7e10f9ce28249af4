#pragma once

#include <string>
#include <vector>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/rng.hpp"
#include "provmark/tensor.hpp"

namespace provmark {

class FaceCodec;

// each channel independently 1 with probability p; p must be in (0,1)
ChannelMask sample_channel_mask(int channels, Scalar p, Rng& rng);

// z_gen[c] = z_src[c] where m[c]=1, else z_pro[c]
LatentCode mix_latents(const LatentCode& z_pro, const LatentCode& z_src,
                       const ChannelMask& m);
Tensor mix_latents_t(const Tensor& z_pro, const Tensor& z_src,
                     const ChannelMask& m);

// procedural stand-in for landmark-driven face masks: one deformed ellipse
// (optionally unioned with a smaller ellipse centered inside it), binary,
// single connected region, area in [5%,60%], off-border, center in the
// central 2/3 of the frame
ManipulationMask generate_blend_mask(int h, int w, Rng& rng);

// --- degradations (tensor-level so training can backprop through them) ---

// 8x8 block DCT + quality-scaled quantization of the standard luminance
// table, decoded back to the 8-bit pixel grid; straight-through gradient.
// quality >= 99.5 skips coefficient quantization so the stage is an identity
// up to the final pixel rounding.
Tensor approx_jpeg(const Tensor& img, Scalar quality);

// exactly differentiable; no clamping here so noise statistics stay clean
Tensor add_gaussian_noise(const Tensor& img, Scalar sigma, Rng& rng);

// contrast about 0.5, then brightness scale; exactly differentiable
Tensor color_jitter(const Tensor& img, Scalar contrast, Scalar brightness);

// applies the enabled stages (jitter, noise, jpeg) with parameters drawn
// from the spec ranges, clamps to [0,1]; appends a tag per fired stage
Tensor degrade(const Tensor& img, const DegradeConfig& spec, Rng& rng,
               std::vector<std::string>* tags = nullptr);

struct AttackTensors {
  Tensor edited;              // stays on the autodiff graph
  Tensor gt_mask;             // (1,H,W) constant
  std::vector<std::string> stages;
};

struct AttackOutcome {
  Image edited;
  ManipulationMask ground_truth_mask;
  std::vector<std::string> stages;
};

// stage pipeline: [latent mixing] -> [poisson blend of source content] ->
// [degradations], each gated by cfg. Ground truth mask is the blend mask
// when blending fired, all-ones when mixing alone regenerated the frame,
// all-zeros otherwise. Hard stages (poisson, jpeg) pass gradients straight
// through.
AttackTensors attack_pipeline(const Tensor& protected_img,
                              const Tensor& source_img,
                              const AttackConfig& cfg, const FaceCodec* codec,
                              Rng& rng);

AttackOutcome simulate_attack(const Image& protected_img, const Image& source_img,
                              const AttackConfig& cfg, const FaceCodec* codec,
                              Rng& rng);

}  // namespace provmark
