#pragma once

#include <vector>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/nn.hpp"

namespace provmark {

// Residual-additive watermark writer. U-Net conditioned on the payload:
// the face latent joins the features at 1/4 resolution, the code bits join
// as +-1 constant planes at the 1/8-resolution bottleneck. The final conv is
// zero-initialized so training starts from an exact identity embedding.
class UrwEmbedder {
 public:
  UrwEmbedder(const UrwConfig& cfg, const FaceCodecConfig& face, uint64_t seed);

  // img (3,H,W); bits_pm1 length n in {-1,+1}; latent (C,h,w)
  Tensor embed_t(const Tensor& img, const Tensor& bits_pm1,
                 const Tensor& latent) const;

  Image embed(const Image& img, const WatermarkPayload& payload) const;

  // payload helpers shared with the trainer
  static Tensor bits_to_pm1(const OwnershipCode& code);

  const UrwConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  UrwConfig cfg_;
  FaceCodecConfig face_;
  ParamStore ps_;
  Conv2d e1_, e2_, e3_, e3b_, e4_, bott_;
  Conv2d d3_, d2_, d1_, out_;
};

// tensor-level extractor output (graph-connected, used in training)
struct ExtractorOut {
  Tensor code_logits;        // (n)
  Tensor latent;             // (C,h,w)
  std::vector<Tensor> taps;  // F_wm at 1/4, 1/8, 1/16, each (C_s, H_s, W_s)
};

// value-level result
struct ExtractionResult {
  ArrayX code_logits;
  OwnershipCode code;  // bit = 1 iff logit > 0 (strict)
  LatentCode face_latent_hat;
  std::vector<Tensor> wm_features;  // detached taps
};

class UrwExtractor {
 public:
  UrwExtractor(const UrwConfig& cfg, const FaceCodecConfig& face, uint64_t seed);

  ExtractorOut forward(const Tensor& img) const;
  ExtractionResult extract(const Image& img) const;

  const UrwConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  UrwConfig cfg_;
  FaceCodecConfig face_;
  ParamStore ps_;
  Conv2d x1_, x2_, x3_, x3r_, x4_, x5_;
  Dense code_fc1_, code_fc2_;
  Conv2d lat1_, lat2_;
};

}  // namespace provmark
