#pragma once

#include <cstdint>
#include <string>

#include "provmark/tensor.hpp"

namespace provmark {

struct FaceCodecConfig {
  int latent_dim = 256;  // one of 256, 576, 1024
  int latent_channels = 4;
  int base_channels = 16;
  Scalar kl_weight = 1e-4;

  // 256 -> 4x8x8, 576 -> 4x12x12, 1024 -> 4x16x16
  int latent_hw() const;
  // input is resized to this square before encoding; the encoder
  // downsamples by 4, so this is 4 * latent_hw (32/48/64)
  int encode_resolution() const;
};

struct UrwConfig {
  int n_bits = 64;
  Scalar strength = 1.0;  // residual multiplier
  int scales = 3;         // feature taps at 1/4, 1/8, 1/16
  int scale_channels = 64;
  int base_channels = 16;
};

struct LocalizerConfig {
  int base_channels = 16;
  int fusion_channels = 32;
  Scalar epsilon = 1e-8;  // cosine-similarity denominator floor
  bool use_similarity_branch = true;  // off = seg-only ablation
};

struct RecoveryConfig {
  int patch = 8;
  int dim = 256;
  int blocks = 6;
  int heads = 8;
  int mlp_ratio = 4;
  bool composite_output = true;  // paste authentic pixels back at the end
};

struct DegradeConfig {
  bool jpeg = true;
  Scalar jpeg_q_min = 30, jpeg_q_max = 95;
  bool noise = true;
  Scalar sigma_min = 0.0, sigma_max = 0.06;
  bool jitter = true;
  Scalar jitter_min = 0.8, jitter_max = 1.2;
};

struct AttackConfig {
  bool enable_latent_mixing = true;
  bool enable_blending = true;
  bool enable_degradations = true;
  DegradeConfig degrade;
  Scalar channel_mask_p = 0.5;

  void validate() const;  // throws BadConfig / BadProbability
};

struct LossWeights {
  Scalar lambda1 = 1.0;  // decode
  Scalar lambda2 = 1.0;  // localization
  Scalar lambda3 = 2.0;  // recovery
};

struct TrainConfig {
  Scalar lr = 2e-4;
  int batch = 4;  // paper uses 8; 4 is the desk default
  int epochs = 2;
  int steps_per_epoch = 0;  // 0 = derive from corpus size
  LossWeights weights;
  Scalar dice_eps = 1.0;
  int mask_warmup_epochs = 1;         // recovery sees M* for this many epochs
  std::string supervision = "mixed";  // "mixed" (50/50 composites) | "genuine"
  Scalar clean_fraction = 0.25;       // genuine samples left unattacked
  int face_epochs = 6;                // codec pretraining
  int face_batch = 16;
  Scalar face_lr = 1e-3;
};

struct RunConfig {
  std::string corpus_dir;  // empty -> procedural corpus
  std::string checkpoint_dir = "checkpoints";
  std::string out_dir = "out";
  uint64_t seed = 1;
  int resolution = 64;
  int corpus_size = 1000;  // procedural corpus only
  std::string ablation = "full";  // none | noise | blend | full
  FaceCodecConfig face;
  UrwConfig urw;
  LocalizerConfig loc;
  RecoveryConfig rec;
  AttackConfig attack;
  TrainConfig train;

  void validate() const;
};

// Attack arm presets (the four rows of the robustness ablation):
//   none  -> everything off (edited = protected)
//   noise -> degradations only
//   blend -> blending + degradations
//   full  -> blending + latent mixing + degradations
AttackConfig ablation_attack_config(const std::string& arm);

// defaults <- JSON file <- PROVMARK_* environment variables, in that order
RunConfig load_config(const std::string& path_or_empty);
void apply_env_overrides(RunConfig& cfg);
std::string config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const std::string& json_text);

}  // namespace provmark
