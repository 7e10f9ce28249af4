#include "provmark/pipeline.hpp"

#include "provmark/checkpoint.hpp"

namespace provmark {

namespace {

uint64_t component_seed(uint64_t root, uint64_t tag) {
  return Rng(root).split(tag).next_u64();
}

}  // namespace

Pipeline::Pipeline(const RunConfig& c)
    : cfg(c),
      face(c.face, component_seed(c.seed, 1)),
      embedder(c.urw, c.face, component_seed(c.seed, 2)),
      extractor(c.urw, c.face, component_seed(c.seed, 3)),
      localizer(c.loc, c.urw, component_seed(c.seed, 4)),
      recovery(c.rec, c.face, component_seed(c.seed, 5)) {
  cfg.validate();
}

void Pipeline::save(const std::string& path, uint64_t corpus_hash) const {
  CheckpointManifest m;
  m.config_json = config_to_json(cfg);
  m.seed = cfg.seed;
  m.corpus_hash = corpus_hash;
  save_checkpoint(path, m,
                  {{"face_codec", &face.params()},
                   {"embedder", &embedder.params()},
                   {"extractor", &extractor.params()},
                   {"localizer", &localizer.params()},
                   {"recovery", &recovery.params()}});
}

Pipeline Pipeline::load(const std::string& path) {
  CheckpointManifest m = read_manifest(path);
  Pipeline p(config_from_json(m.config_json));
  load_checkpoint(path, {{"face_codec", &p.face.params()},
                         {"embedder", &p.embedder.params()},
                         {"extractor", &p.extractor.params()},
                         {"localizer", &p.localizer.params()},
                         {"recovery", &p.recovery.params()}});
  return p;
}

WatermarkPayload Pipeline::make_payload(const Image& img,
                                        const OwnershipCode& code) const {
  WatermarkPayload payload;
  payload.code = code;
  payload.face_latent = face.encode_face(img);
  return payload;
}

Image Pipeline::embed(const Image& img, const WatermarkPayload& payload) const {
  return embedder.embed(img, payload);
}

VerifyResult run_verify(const Pipeline& p, const Image& img) {
  NoGradGuard ng;
  ExtractionResult ex = p.extractor.extract(img);
  VerifyResult out;
  out.code = ex.code;
  out.code_logits = ex.code_logits;
  out.latent = ex.face_latent_hat;
  out.mask_soft = p.localizer.localize(img, ex.wm_features);
  out.mask = binarize_mask(out.mask_soft, 0.5);

  Tensor img_t = image_to_tensor(img);
  Tensor mask_t = mask_to_tensor(out.mask);
  Tensor keep = sub(Tensor::constant({1, img.height, img.width}, 1.0), mask_t);
  RecoveryInput ri;
  ri.edited_masked = tensor_to_image(mul_bcast_channel(img_t, keep));
  ri.proxy = p.face.decode_face(ex.face_latent_hat, img.height);
  ri.face_latent = ex.face_latent_hat;
  ri.mask = out.mask;
  out.recovered = p.recovery.recover(ri);
  return out;
}

}  // namespace provmark
