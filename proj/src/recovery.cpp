#include "provmark/recovery.hpp"

#include <cmath>

#include "provmark/face_codec.hpp"

namespace provmark {

Tensor gated_cross_attention(const MultiHeadAttention& mha,
                             const LayerNorm& ln_q, const LayerNorm& ln_kv,
                             const Tensor& t_x, const Tensor& t_wm,
                             const Tensor& gate) {
  if (t_x.ndim() != 2 || t_wm.ndim() != 2)
    throw Error("ShapeMismatch", "cross attention wants 2D token matrices");
  if (gate.numel() != t_x.shape()[0])
    throw Error("ShapeMismatch", "gate length != query token count");
  Tensor attended = mha(ln_q(t_x), ln_kv(t_wm));
  return add(t_x, mul_rows(attended, gate));
}

Tensor mask_to_gate(const Tensor& mask, int patch, bool rethreshold) {
  if (mask.ndim() != 3 || mask.shape()[0] != 1)
    throw Error("ShapeMismatch", "mask must be (1,H,W)");
  int h = mask.shape()[1], w = mask.shape()[2];
  if (h % patch != 0 || w % patch != 0)
    throw Error("ShapeMismatch", "mask size not divisible by patch");
  Tensor pooled = avg_pool(mask, patch);  // (1, H/P, W/P)
  int t = (h / patch) * (w / patch);
  Tensor gate = reshape(pooled, {t});
  if (rethreshold) {
    ArrayX hard = (gate.value() >= 0.5).cast<Scalar>();
    gate = ste_replace(gate, hard);
  }
  return gate;
}

Recovery::Recovery(const RecoveryConfig& cfg, const FaceCodecConfig& face,
                   uint64_t seed)
    : cfg_(cfg), face_(face), ps_(seed) {
  if (cfg.dim % cfg.heads != 0)
    throw Error("BadConfig", "recovery dim not divisible by heads");
  int p = cfg.patch, d = cfg.dim;
  patch_embed_ = Dense(ps_, "patch_embed", 6 * p * p, d);
  int lhw = face_.latent_hw();
  wm_embed_ = Dense(ps_, "wm_embed", face_.latent_channels, d);
  pos_wm_ = ps_.normal("pos_wm", {lhw * lhw, d}, 0.02);
  // image token count depends on resolution, so its positional table is
  // sized for the largest grid we train on and sliced per call
  pos_x_ = ps_.normal("pos_x", {kMaxTokens, d}, 0.02);
  int hidden = d * cfg.mlp_ratio;
  blocks_.resize(cfg.blocks);
  for (int i = 0; i < cfg.blocks; ++i) {
    std::string base = "blk" + std::to_string(i);
    Block& blk = blocks_[i];
    blk.ln1 = LayerNorm(ps_, base + ".ln1", d);
    blk.self_attn = MultiHeadAttention(ps_, base + ".self", d, cfg.heads);
    blk.ln_q = LayerNorm(ps_, base + ".lnq", d);
    blk.ln_kv = LayerNorm(ps_, base + ".lnkv", d);
    blk.cross_attn = MultiHeadAttention(ps_, base + ".cross", d, cfg.heads);
    blk.ln2 = LayerNorm(ps_, base + ".ln2", d);
    blk.mlp1 = Dense(ps_, base + ".mlp1", d, hidden);
    blk.mlp2 = Dense(ps_, base + ".mlp2", hidden, d);
  }
  ln_f_ = LayerNorm(ps_, "ln_f", d);
  unembed_ = Dense(ps_, "unembed", d, 3 * p * p);
  refine1_ = Conv2d(ps_, "refine1", 3, 16, 3, 1, 1);
  refine2_ = Conv2d(ps_, "refine2", 16, 3, 3, 1, 1);
}

Tensor Recovery::forward(const Tensor& edited_masked, const Tensor& proxy,
                         const Tensor& latent, const Tensor& mask,
                         bool rethreshold_gate) const {
  if (edited_masked.ndim() != 3 || edited_masked.shape()[0] != 3)
    throw Error("ShapeMismatch", "edited image must be (3,H,W)");
  int h = edited_masked.shape()[1], w = edited_masked.shape()[2];
  int p = cfg_.patch;
  if (h % p != 0 || w % p != 0)
    throw Error("ShapeMismatch", "image size not divisible by patch");
  if (proxy.ndim() != 3 || proxy.shape()[0] != 3 || proxy.shape()[1] != h ||
      proxy.shape()[2] != w)
    throw Error("ShapeMismatch", "proxy must match edited image shape");
  int lhw = face_.latent_hw();
  if (latent.ndim() != 3 || latent.shape()[0] != face_.latent_channels ||
      latent.shape()[1] != lhw || latent.shape()[2] != lhw)
    throw Error("ShapeMismatch", "latent grid does not match codec config");
  if (mask.ndim() != 3 || mask.shape()[0] != 1 || mask.shape()[1] != h ||
      mask.shape()[2] != w)
    throw Error("ShapeMismatch", "mask must be (1,H,W) matching the image");

  int t = (h / p) * (w / p);
  if (t > kMaxTokens)
    throw Error("BadConfig", "image produces more tokens than the positional "
                             "table covers");

  Tensor both = concat_dim0({edited_masked, proxy});       // (6,H,W)
  Tensor tx = patch_embed_(patchify(both, p));             // (T,D)
  tx = add(tx, slice_dim0(pos_x_, 0, t));

  Tensor wm_tokens = patchify(latent, 1);                  // (lhw*lhw, C)
  Tensor twm = add(wm_embed_(wm_tokens), pos_wm_);

  Tensor gate = mask_to_gate(mask, p, rethreshold_gate);

  for (const Block& blk : blocks_) {
    Tensor n1 = blk.ln1(tx);
    tx = add(tx, blk.self_attn(n1, n1));
    tx = gated_cross_attention(blk.cross_attn, blk.ln_q, blk.ln_kv, tx, twm,
                               gate);
    tx = add(tx, blk.mlp2(gelu(blk.mlp1(blk.ln2(tx)))));
  }

  Tensor img = unpatchify(unembed_(ln_f_(tx)), 3, h, w, p);
  img = refine2_(relu(refine1_(img)));
  return sigmoid(img);
}

Image Recovery::recover(const RecoveryInput& input) const {
  NoGradGuard ng;
  Tensor em = image_to_tensor(input.edited_masked);
  Tensor px = image_to_tensor(input.proxy);
  Tensor lat = latent_to_tensor(input.face_latent);
  Tensor m = mask_to_tensor(input.mask);
  Tensor out = forward(em, px, lat, m, /*rethreshold_gate=*/true);
  if (cfg_.composite_output) {
    // tampered pixels come from the network, everything else from the
    // edited-masked input (which already holds the authentic content)
    ArrayX mb = (m.value() >= 0.5).cast<Scalar>();
    ArrayX composite(out.numel());
    int hw = out.shape()[1] * out.shape()[2];
    for (int c = 0; c < 3; ++c)
      composite.segment(c * hw, hw) =
          mb * out.value().segment(c * hw, hw) +
          (1.0 - mb) * em.value().segment(c * hw, hw);
    out = Tensor::from_array(out.shape(), composite);
  }
  return tensor_to_image(out);
}

}  // namespace provmark
