#pragma once

#include <string>

#include "provmark/config.hpp"
#include "provmark/datamodel.hpp"
#include "provmark/face_codec.hpp"
#include "provmark/localizer.hpp"
#include "provmark/recovery.hpp"
#include "provmark/urw_codec.hpp"

namespace provmark {

// The five networks plus their config, as one unit so checkpoints and the
// CLI deal in a single artifact. Component seeds derive from the global
// seed, so a config fully determines the initial weights.
struct Pipeline {
  RunConfig cfg;
  FaceCodec face;
  UrwEmbedder embedder;
  UrwExtractor extractor;
  Localizer localizer;
  Recovery recovery;

  explicit Pipeline(const RunConfig& cfg);

  void save(const std::string& path, uint64_t corpus_hash) const;
  static Pipeline load(const std::string& path);

  // payload construction: the face latent of the image itself
  WatermarkPayload make_payload(const Image& img, const OwnershipCode& code) const;

  Image embed(const Image& img, const WatermarkPayload& payload) const;
};

struct VerifyResult {
  OwnershipCode code;
  ArrayX code_logits;
  LatentCode latent;
  ManipulationMask mask_soft;
  ManipulationMask mask;  // binarized at 0.5
  Image recovered;
};

// extract -> localize -> recover on a suspect image
VerifyResult run_verify(const Pipeline& p, const Image& img);

}  // namespace provmark
