#pragma once

#include <iosfwd>
#include <vector>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/nn.hpp"

namespace provmark {

// Small convolutional VAE over face crops. One network serves both roles in
// the pipeline: producer of the recovery latent z_face and the latent space
// the attack simulator mixes in. Fully convolutional, so the same weights
// handle every encode resolution (32/48/64 -> 8/12/16 bottleneck).
class FaceCodec {
 public:
  FaceCodec(const FaceCodecConfig& cfg, uint64_t seed);

  // autodiff-aware paths (image tensors are (3,H,W) in [0,1])
  Tensor encode_mu(const Tensor& img) const;
  std::pair<Tensor, Tensor> encode_dist(const Tensor& img) const;  // mu, logvar
  Tensor decode(const Tensor& z, int out_resolution) const;        // sigmoid output

  // value-level wrappers (deterministic: posterior mean, no sampling)
  LatentCode encode_face(const Image& img) const;
  Image decode_face(const LatentCode& z, int out_resolution) const;

  const FaceCodecConfig& config() const { return cfg_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  FaceCodecConfig cfg_;
  ParamStore ps_;
  Conv2d e1_, e2_, e3_, e4_, ehead_;
  Conv2d d1_, d2_, d3_, d4_, d5_;
};

struct FaceCodecTrainStats {
  std::vector<Scalar> epoch_recon;  // validation recon MSE per epoch
  Scalar initial_recon = 0;
  Scalar final_recon = 0;
};

// Adam on MSE + kl_weight * KL. Deterministic given seed. Throws EmptyCorpus,
// Diverged. Log lines go to `log` when non-null.
FaceCodecTrainStats train_face_codec(FaceCodec& codec,
                                     const std::vector<Image>& corpus,
                                     int epochs, int batch, Scalar lr,
                                     uint64_t seed, std::ostream* log = nullptr);

}  // namespace provmark
