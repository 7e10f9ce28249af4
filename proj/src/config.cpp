#include "provmark/config.hpp"

#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace provmark {

using nlohmann::json;

int FaceCodecConfig::latent_hw() const {
  switch (latent_dim) {
    case 256:
      return 8;
    case 576:
      return 12;
    case 1024:
      return 16;
    default:
      throw Error("BadConfig", "latent_dim must be 256, 576 or 1024, got " +
                                   std::to_string(latent_dim));
  }
}

int FaceCodecConfig::encode_resolution() const { return 4 * latent_hw(); }

void AttackConfig::validate() const {
  if (!(channel_mask_p > 0.0 && channel_mask_p < 1.0))
    throw Error("BadProbability", "channel_mask_p must lie in (0,1)");
  if (degrade.jpeg_q_min > degrade.jpeg_q_max || degrade.jpeg_q_min < 1 ||
      degrade.jpeg_q_max > 100)
    throw Error("BadConfig", "jpeg quality range must be ordered within [1,100]");
  if (degrade.sigma_min > degrade.sigma_max || degrade.sigma_min < 0)
    throw Error("BadConfig", "noise sigma range must be ordered and nonnegative");
  if (degrade.jitter_min > degrade.jitter_max || degrade.jitter_min <= 0)
    throw Error("BadConfig", "jitter range must be ordered and positive");
}

void RunConfig::validate() const {
  if (resolution <= 0 || resolution % rec.patch)
    throw Error("BadConfig", "resolution must be a positive multiple of the patch size " +
                                 std::to_string(rec.patch));
  (void)face.latent_hw();
  if (face.encode_resolution() > resolution)
    throw Error("BadConfig", "encode resolution " +
                                 std::to_string(face.encode_resolution()) +
                                 " exceeds working resolution " +
                                 std::to_string(resolution));
  if (urw.n_bits <= 0) throw Error("BadConfig", "n_bits must be positive");
  if (train.batch < 1) throw Error("BadConfig", "batch must be >= 1");
  if (train.lr <= 0) throw Error("BadConfig", "learning rate must be positive");
  if (train.supervision != "mixed" && train.supervision != "genuine")
    throw Error("BadConfig", "supervision must be 'mixed' or 'genuine'");
  if (ablation != "none" && ablation != "noise" && ablation != "blend" &&
      ablation != "full")
    throw Error("BadConfig", "ablation must be one of none|noise|blend|full");
  if (rec.dim % rec.heads)
    throw Error("BadConfig", "recovery dim must be divisible by head count");
  attack.validate();
}

AttackConfig ablation_attack_config(const std::string& arm) {
  AttackConfig cfg;
  if (arm == "none") {
    cfg.enable_latent_mixing = false;
    cfg.enable_blending = false;
    cfg.enable_degradations = false;
  } else if (arm == "noise") {
    cfg.enable_latent_mixing = false;
    cfg.enable_blending = false;
    cfg.enable_degradations = true;
  } else if (arm == "blend") {
    cfg.enable_latent_mixing = false;
    cfg.enable_blending = true;
    cfg.enable_degradations = true;
  } else if (arm == "full") {
    cfg.enable_latent_mixing = true;
    cfg.enable_blending = true;
    cfg.enable_degradations = true;
  } else {
    throw Error("BadConfig", "unknown ablation arm '" + arm + "'");
  }
  return cfg;
}

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

json to_json(const RunConfig& c) {
  json j;
  j["corpus_dir"] = c.corpus_dir;
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["resolution"] = c.resolution;
  j["corpus_size"] = c.corpus_size;
  j["ablation"] = c.ablation;
  j["face"] = {{"latent_dim", c.face.latent_dim},
               {"latent_channels", c.face.latent_channels},
               {"base_channels", c.face.base_channels},
               {"kl_weight", c.face.kl_weight}};
  j["urw"] = {{"n_bits", c.urw.n_bits},
              {"strength", c.urw.strength},
              {"scales", c.urw.scales},
              {"scale_channels", c.urw.scale_channels},
              {"base_channels", c.urw.base_channels}};
  j["localizer"] = {{"base_channels", c.loc.base_channels},
                    {"fusion_channels", c.loc.fusion_channels},
                    {"epsilon", c.loc.epsilon},
                    {"use_similarity_branch", c.loc.use_similarity_branch}};
  j["recovery"] = {{"patch", c.rec.patch},
                   {"dim", c.rec.dim},
                   {"blocks", c.rec.blocks},
                   {"heads", c.rec.heads},
                   {"mlp_ratio", c.rec.mlp_ratio},
                   {"composite_output", c.rec.composite_output}};
  j["attack"] = {{"enable_latent_mixing", c.attack.enable_latent_mixing},
                 {"enable_blending", c.attack.enable_blending},
                 {"enable_degradations", c.attack.enable_degradations},
                 {"channel_mask_p", c.attack.channel_mask_p},
                 {"jpeg", c.attack.degrade.jpeg},
                 {"jpeg_q_min", c.attack.degrade.jpeg_q_min},
                 {"jpeg_q_max", c.attack.degrade.jpeg_q_max},
                 {"noise", c.attack.degrade.noise},
                 {"sigma_min", c.attack.degrade.sigma_min},
                 {"sigma_max", c.attack.degrade.sigma_max},
                 {"jitter", c.attack.degrade.jitter},
                 {"jitter_min", c.attack.degrade.jitter_min},
                 {"jitter_max", c.attack.degrade.jitter_max}};
  j["train"] = {{"lr", c.train.lr},
                {"batch", c.train.batch},
                {"epochs", c.train.epochs},
                {"steps_per_epoch", c.train.steps_per_epoch},
                {"lambda1", c.train.weights.lambda1},
                {"lambda2", c.train.weights.lambda2},
                {"lambda3", c.train.weights.lambda3},
                {"dice_eps", c.train.dice_eps},
                {"mask_warmup_epochs", c.train.mask_warmup_epochs},
                {"supervision", c.train.supervision},
                {"clean_fraction", c.train.clean_fraction},
                {"face_epochs", c.train.face_epochs},
                {"face_batch", c.train.face_batch},
                {"face_lr", c.train.face_lr}};
  return j;
}

void from_json(const json& j, RunConfig& c) {
  get_if(j, "corpus_dir", c.corpus_dir);
  get_if(j, "checkpoint_dir", c.checkpoint_dir);
  get_if(j, "out_dir", c.out_dir);
  get_if(j, "seed", c.seed);
  get_if(j, "resolution", c.resolution);
  get_if(j, "corpus_size", c.corpus_size);
  get_if(j, "ablation", c.ablation);
  if (j.contains("face")) {
    const auto& f = j.at("face");
    get_if(f, "latent_dim", c.face.latent_dim);
    get_if(f, "latent_channels", c.face.latent_channels);
    get_if(f, "base_channels", c.face.base_channels);
    get_if(f, "kl_weight", c.face.kl_weight);
  }
  if (j.contains("urw")) {
    const auto& u = j.at("urw");
    get_if(u, "n_bits", c.urw.n_bits);
    get_if(u, "strength", c.urw.strength);
    get_if(u, "scales", c.urw.scales);
    get_if(u, "scale_channels", c.urw.scale_channels);
    get_if(u, "base_channels", c.urw.base_channels);
  }
  if (j.contains("localizer")) {
    const auto& l = j.at("localizer");
    get_if(l, "base_channels", c.loc.base_channels);
    get_if(l, "fusion_channels", c.loc.fusion_channels);
    get_if(l, "epsilon", c.loc.epsilon);
    get_if(l, "use_similarity_branch", c.loc.use_similarity_branch);
  }
  if (j.contains("recovery")) {
    const auto& r = j.at("recovery");
    get_if(r, "patch", c.rec.patch);
    get_if(r, "dim", c.rec.dim);
    get_if(r, "blocks", c.rec.blocks);
    get_if(r, "heads", c.rec.heads);
    get_if(r, "mlp_ratio", c.rec.mlp_ratio);
    get_if(r, "composite_output", c.rec.composite_output);
  }
  if (j.contains("attack")) {
    const auto& a = j.at("attack");
    get_if(a, "enable_latent_mixing", c.attack.enable_latent_mixing);
    get_if(a, "enable_blending", c.attack.enable_blending);
    get_if(a, "enable_degradations", c.attack.enable_degradations);
    get_if(a, "channel_mask_p", c.attack.channel_mask_p);
    get_if(a, "jpeg", c.attack.degrade.jpeg);
    get_if(a, "jpeg_q_min", c.attack.degrade.jpeg_q_min);
    get_if(a, "jpeg_q_max", c.attack.degrade.jpeg_q_max);
    get_if(a, "noise", c.attack.degrade.noise);
    get_if(a, "sigma_min", c.attack.degrade.sigma_min);
    get_if(a, "sigma_max", c.attack.degrade.sigma_max);
    get_if(a, "jitter", c.attack.degrade.jitter);
    get_if(a, "jitter_min", c.attack.degrade.jitter_min);
    get_if(a, "jitter_max", c.attack.degrade.jitter_max);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    get_if(t, "lr", c.train.lr);
    get_if(t, "batch", c.train.batch);
    get_if(t, "epochs", c.train.epochs);
    get_if(t, "steps_per_epoch", c.train.steps_per_epoch);
    get_if(t, "lambda1", c.train.weights.lambda1);
    get_if(t, "lambda2", c.train.weights.lambda2);
    get_if(t, "lambda3", c.train.weights.lambda3);
    get_if(t, "dice_eps", c.train.dice_eps);
    get_if(t, "mask_warmup_epochs", c.train.mask_warmup_epochs);
    get_if(t, "supervision", c.train.supervision);
    get_if(t, "clean_fraction", c.train.clean_fraction);
    get_if(t, "face_epochs", c.train.face_epochs);
    get_if(t, "face_batch", c.train.face_batch);
    get_if(t, "face_lr", c.train.face_lr);
  }
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) { return to_json(cfg).dump(2); }

RunConfig config_from_json(const std::string& json_text) {
  RunConfig cfg;
  try {
    json j = json::parse(json_text);
    from_json(j, cfg);
  } catch (const json::exception& e) {
    throw Error("BadConfig", std::string("config parse failed: ") + e.what());
  }
  return cfg;
}

void apply_env_overrides(RunConfig& cfg) {
  auto env = [](const char* name) -> const char* { return std::getenv(name); };
  if (const char* v = env("PROVMARK_SEED")) cfg.seed = std::strtoull(v, nullptr, 10);
  if (const char* v = env("PROVMARK_RESOLUTION")) cfg.resolution = std::atoi(v);
  if (const char* v = env("PROVMARK_LATENT_DIM")) cfg.face.latent_dim = std::atoi(v);
  if (const char* v = env("PROVMARK_ABLATION")) cfg.ablation = v;
  if (const char* v = env("PROVMARK_CORPUS")) cfg.corpus_dir = v;
  if (const char* v = env("PROVMARK_OUT")) cfg.out_dir = v;
  if (const char* v = env("PROVMARK_CHECKPOINT_DIR")) cfg.checkpoint_dir = v;
  if (const char* v = env("PROVMARK_EPOCHS")) cfg.train.epochs = std::atoi(v);
  if (const char* v = env("PROVMARK_STEPS")) cfg.train.steps_per_epoch = std::atoi(v);
  if (const char* v = env("PROVMARK_BATCH")) cfg.train.batch = std::atoi(v);
  if (const char* v = env("PROVMARK_CORPUS_SIZE")) cfg.corpus_size = std::atoi(v);
}

RunConfig load_config(const std::string& path_or_empty) {
  RunConfig cfg;
  if (!path_or_empty.empty()) {
    std::ifstream in(path_or_empty);
    if (!in) throw Error("IoError", "cannot open config file " + path_or_empty);
    std::stringstream ss;
    ss << in.rdbuf();
    cfg = config_from_json(ss.str());
  }
  apply_env_overrides(cfg);
  return cfg;
}

}  // namespace provmark
