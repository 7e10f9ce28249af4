#include "provmark/urw_codec.hpp"

namespace provmark {

UrwEmbedder::UrwEmbedder(const UrwConfig& cfg, const FaceCodecConfig& face,
                         uint64_t seed)
    : cfg_(cfg),
      face_(face),
      ps_(seed),
      e1_(ps_, "e1", 3, cfg.base_channels, 3, 1, 1),
      e2_(ps_, "e2", cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      e3_(ps_, "e3", 2 * cfg.base_channels, 4 * cfg.base_channels, 3, 2, 1),
      e3b_(ps_, "e3b", 4 * cfg.base_channels + face.latent_channels,
           4 * cfg.base_channels, 3, 1, 1),
      e4_(ps_, "e4", 4 * cfg.base_channels, 4 * cfg.base_channels, 3, 2, 1),
      bott_(ps_, "bott", 4 * cfg.base_channels + cfg.n_bits,
            4 * cfg.base_channels, 3, 1, 1),
      d3_(ps_, "d3", 8 * cfg.base_channels, 4 * cfg.base_channels, 3, 1, 1),
      d2_(ps_, "d2", 6 * cfg.base_channels, 2 * cfg.base_channels, 3, 1, 1),
      d1_(ps_, "d1", 3 * cfg.base_channels, cfg.base_channels, 3, 1, 1) {
  // zero-init output head: the untrained embedder is the identity
  out_.w = ps_.fill("out.w", {3, cfg.base_channels, 3, 3}, 0.0);
  out_.b = ps_.fill("out.b", {3}, 0.0);
  out_.stride = 1;
  out_.pad = 1;
}

Tensor UrwEmbedder::bits_to_pm1(const OwnershipCode& code) {
  ArrayX v(code.n());
  for (int i = 0; i < code.n(); ++i) v[i] = code.bits[static_cast<size_t>(i)] ? 1.0 : -1.0;
  return Tensor::from_array({code.n()}, std::move(v));
}

Tensor UrwEmbedder::embed_t(const Tensor& img, const Tensor& bits_pm1,
                            const Tensor& latent) const {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw Error("ShapeMismatch", "embed expects a (3,H,W) image tensor");
  if (bits_pm1.numel() != cfg_.n_bits)
    throw Error("ShapeMismatch", "payload has " + std::to_string(bits_pm1.numel()) +
                                     " bits, embedder expects " +
                                     std::to_string(cfg_.n_bits));
  const int lhw = face_.latent_hw();
  if (latent.ndim() != 3 || latent.dim(0) != face_.latent_channels ||
      latent.dim(1) != lhw || latent.dim(2) != lhw)
    throw Error("ShapeMismatch", "payload latent grid does not match the "
                                 "configured face codec");
  const int H = img.dim(1), W = img.dim(2);
  if (H % 8 || W % 8)
    throw Error("ShapeMismatch", "image sides must be divisible by 8");

  Tensor a1 = relu(e1_(img));                    // (c, H, W)
  Tensor a2 = relu(e2_(a1));                     // (2c, H/2, W/2)
  Tensor a3 = relu(e3_(a2));                     // (4c, H/4, W/4)
  Tensor lat = resize_bilinear(latent, H / 4, W / 4);
  Tensor a3b = relu(e3b_(concat_dim0({a3, lat})));
  Tensor a4 = relu(e4_(a3b));                    // (4c, H/8, W/8)

  // broadcast each payload bit to a constant plane
  const int bh = H / 8, bw = W / 8;
  Tensor planes = reshape(matmul(reshape(bits_pm1, {cfg_.n_bits, 1}),
                                 Tensor::constant({1, bh * bw}, 1.0)),
                          {cfg_.n_bits, bh, bw});
  Tensor bt = relu(bott_(concat_dim0({a4, planes})));

  Tensor u3 = relu(d3_(concat_dim0({upsample_nearest2(bt), a3b})));
  Tensor u2 = relu(d2_(concat_dim0({upsample_nearest2(u3), a2})));
  Tensor u1 = relu(d1_(concat_dim0({upsample_nearest2(u2), a1})));
  Tensor residual = mul_scalar(tanh_op(out_(u1)), cfg_.strength);
  return clamp01_ste(add(img, residual));
}

Image UrwEmbedder::embed(const Image& img, const WatermarkPayload& payload) const {
  NoGradGuard ng;
  if (payload.code.n() != cfg_.n_bits)
    throw Error("ShapeMismatch", "payload code length " +
                                     std::to_string(payload.code.n()) +
                                     " != configured n " +
                                     std::to_string(cfg_.n_bits));
  Tensor out = embed_t(image_to_tensor(img), bits_to_pm1(payload.code),
                       latent_to_tensor(payload.face_latent));
  return tensor_to_image(out);
}

UrwExtractor::UrwExtractor(const UrwConfig& cfg, const FaceCodecConfig& face,
                           uint64_t seed)
    : cfg_(cfg),
      face_(face),
      ps_(seed),
      x1_(ps_, "x1", 3, cfg.base_channels, 3, 1, 1),
      x2_(ps_, "x2", cfg.base_channels, 2 * cfg.base_channels, 3, 2, 1),
      x3_(ps_, "x3", 2 * cfg.base_channels, cfg.scale_channels, 3, 2, 1),
      x3r_(ps_, "x3r", cfg.scale_channels, cfg.scale_channels, 3, 1, 1),
      x4_(ps_, "x4", cfg.scale_channels, cfg.scale_channels, 3, 2, 1),
      x5_(ps_, "x5", cfg.scale_channels, cfg.scale_channels, 3, 2, 1),
      code_fc1_(ps_, "code_fc1", cfg.scale_channels, 2 * cfg.scale_channels),
      code_fc2_(ps_, "code_fc2", 2 * cfg.scale_channels, cfg.n_bits),
      lat1_(ps_, "lat1", cfg.scale_channels, 2 * cfg.base_channels, 3, 1, 1),
      lat2_(ps_, "lat2", 2 * cfg.base_channels, face.latent_channels, 3, 1, 1) {}

ExtractorOut UrwExtractor::forward(const Tensor& img) const {
  if (img.ndim() != 3 || img.dim(0) != 3)
    throw Error("ShapeMismatch", "extract expects a (3,H,W) image tensor");
  Tensor a1 = relu(x1_(img));
  Tensor a2 = relu(x2_(a1));
  Tensor f1 = relu(x3r_(relu(x3_(a2))));  // 1/4
  Tensor f2 = relu(x4_(f1));              // 1/8
  Tensor f3 = relu(x5_(f2));              // 1/16

  Tensor pooled = reshape(global_avg_pool(f3), {1, cfg_.scale_channels});
  Tensor logits = reshape(code_fc2_(relu(code_fc1_(pooled))), {cfg_.n_bits});

  const int hw = face_.latent_hw();
  Tensor lat = lat2_(relu(lat1_(f1)));
  if (lat.dim(1) != hw || lat.dim(2) != hw) lat = resize_bilinear(lat, hw, hw);

  return {logits, lat, {f1, f2, f3}};
}

ExtractionResult UrwExtractor::extract(const Image& img) const {
  NoGradGuard ng;
  ExtractorOut out = forward(image_to_tensor(img));
  ExtractionResult res;
  res.code_logits = out.code_logits.value();
  res.code.bits.resize(static_cast<size_t>(cfg_.n_bits));
  for (int i = 0; i < cfg_.n_bits; ++i)
    res.code.bits[static_cast<size_t>(i)] = res.code_logits[i] > 0.0 ? 1 : 0;
  res.face_latent_hat = tensor_to_latent(out.latent);
  res.wm_features = out.taps;
  return res;
}

}  // namespace provmark
